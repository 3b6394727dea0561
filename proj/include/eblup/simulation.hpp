#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eblup/kron.hpp"
#include "eblup/mse.hpp"
#include "eblup/parallel.hpp"

namespace eblup {

struct DesignSpec {
  std::vector<Index> levels;
  std::vector<FactorTuple> random;
  FactorTuple fixed = 0;
};

// Everything needed to rebuild a model. X may be left empty for an
// intercept-only design.
struct ModelSpec {
  FamilyKind family = FamilyKind::FayHerriot;
  MatrixXd X;
  VectorXd phi;                 // fay-herriot
  std::vector<Index> groups;    // nested-error, 0-based group of each row
  std::optional<DesignSpec> design;  // anova
};

MixedModel build_model(const ModelSpec& spec);

// Either an area/group shorthand (1-based) or explicit coefficients.
struct TargetSpec {
  std::optional<Index> area;
  PredictionTarget explicit_target;
};

PredictionTarget resolve_target(const MixedModel& model, const TargetSpec& spec);

enum class Estimator { Naive, PrasadRao, SecondOrder, DataSpecific };

std::string_view to_string(Estimator e);
std::optional<Estimator> estimator_from_string(std::string_view name);

struct McConfig {
  ModelSpec model;
  VectorXd sigma_true;
  VectorXd beta_true;
  std::vector<TargetSpec> targets;
  std::vector<Method> methods{Method::REML};
  std::int64_t replicates = 1000;
  std::uint64_t base_seed = 1;
  std::vector<Estimator> estimators{Estimator::Naive, Estimator::PrasadRao, Estimator::SecondOrder,
                                    Estimator::DataSpecific};
};

struct EstimatorSummary {
  Estimator estimator = Estimator::Naive;
  double mean = 0.0;
  double se = 0.0;
  // mean(estimator - squared error) with its paired standard error
  double bias = 0.0;
  double bias_se = 0.0;
  double relative_bias = 0.0;
  // the same against the control-variate MSE estimate
  double bias_cv = 0.0;
  double bias_cv_se = 0.0;
};

struct TargetSummary {
  std::string target;
  Method method = Method::REML;
  double mse_eblup = 0.0;
  double mse_eblup_se = 0.0;
  double mse_blup = 0.0;
  double mse_blup_se = 0.0;
  // SE of the paired difference of the two squared errors
  double mse_gap_se = 0.0;
  // g1 + g2 at the true sigma plus the mean paired difference: unbiased for
  // the EBLUP MSE because E(t(sigma) - mu)^2 = g1 + g2 exactly
  double mse_eblup_cv = 0.0;
  double mse_eblup_cv_se = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  double g3_data_mean = 0.0;
  double g3_data_se = 0.0;
  std::vector<EstimatorSummary> estimators;
  bool ordering_ok = true;
};

struct MethodSummary {
  Method method = Method::REML;
  std::int64_t used = 0;
  std::int64_t failures = 0;
  std::int64_t nonconverged = 0;
  std::int64_t boundary_hits = 0;
  double boundary_rate = 0.0;
  // score at the true sigma against its expectation (0 or -g_M0)
  VectorXd score_mean;
  VectorXd score_se;
  VectorXd score_target;
  VectorXd score_z;
};

struct McReport {
  std::string family;
  std::int64_t replicates = 0;
  std::uint64_t base_seed = 0;
  std::vector<std::string> targets;
  std::vector<Method> methods;
  std::vector<Estimator> estimators;
  std::vector<TargetSummary> rows;
  std::vector<MethodSummary> method_summaries;
  std::vector<std::string> warnings;
};

struct Dataset {
  VectorXd y;
  VectorXd v;
};

// y = X beta + Z v + e with v ~ N(0, G), e ~ N(0, R) from a generator seeded
// with `seed`.
Dataset simulate_dataset(const MixedModel& model, const VectorXd& sigma_true, const VectorXd& beta_true,
                         std::uint64_t seed);

McReport run_study(const McConfig& config, Execution exec = Execution::Parallel);

struct ScoreMomentReport {
  Method method = Method::REML;
  std::int64_t replicates = 0;
  VectorXd mean;
  VectorXd mean_se;
  VectorXd mean_target;
  VectorXd mean_z;
  MatrixXd cov;
  MatrixXd cov_se;
  MatrixXd cov_target;
  MatrixXd cov_z;
  double max_abs_mean_z = 0.0;
  double max_abs_cov_z = 0.0;
};

ScoreMomentReport score_moment_check(const MixedModel& model, const VectorXd& sigma_true,
                                     const VectorXd& beta_true, std::int64_t replicates,
                                     std::uint64_t seed, Method method);

struct MomentComparison {
  std::string name;
  MatrixXd estimate;
  MatrixXd se;
  MatrixXd target;
  MatrixXd z;
  double max_abs_z = 0.0;
};

struct QuadraticMomentReport {
  std::int64_t replicates = 0;
  std::vector<MomentComparison> comparisons;
  double max_abs_z = 0.0;
};

// Monte Carlo check of the normal quadratic-form moment identities
//   E[u q_j u'] = 2 S A_j S,
//   E[q_1 q_2] = 2 tr(A_1 S A_2 S),
//   E[u q_1 q_2 u'] = 2 tr(A_1 S A_2 S) S + 4 S A_1 S A_2 S + 4 S A_2 S A_1 S,
// where u ~ N(0, S) and q_j = u' A_j u - tr(A_j S).
QuadraticMomentReport quadratic_moment_check(const MatrixXd& sigma, const MatrixXd& A1, const MatrixXd& A2,
                                             std::int64_t replicates, std::uint64_t seed);

// One-way random-intercept scenarios with sigma = (1, gamma) and target
// beta + v_1: "harville-jeske-balanced" (t = 9, n_i = 2),
// "harville-jeske-unbalanced" (n_1..n_8 = 1, n_9 = 10) and
// "harville-jeske-large" (t = 21, n_1..n_20 = 1, n_21 = 50).
std::vector<std::string> preset_names();
McConfig preset_config(std::string_view name, double gamma = 0.25);

// Fay-Herriot with intercept, phi cycling through {0.7, 1, 1.3}, sigma = 1,
// beta = 0 and the first `targets` areas as targets.
McConfig fay_herriot_cycle_config(Index t, std::int64_t replicates, std::uint64_t seed, Method method,
                                  Index targets = 5);

}  // namespace eblup
