#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eblup/prediction.hpp"

namespace eblup {

struct MseReport {
  Method method = Method::REML;
  double g1 = 0.0;
  double g2 = 0.0;
  // Terms that need a nonsingular information matrix are empty otherwise.
  std::optional<double> g3;
  std::optional<double> g3_data;
  std::optional<double> g10;  // ML only
  double naive = 0.0;                      // g1 + g2
  std::optional<double> prasad_rao;        // g1 + g2 + 2 g3
  std::optional<double> second_order;      // REML: prasad_rao; ML: prasad_rao - g10
  std::optional<double> data_specific;     // second_order with g3 replaced by g3_data
  std::vector<std::string> warnings;
};

struct DeltaTerms {
  double delta0 = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  VectorXd w_vec;  // w_R or w_M
  VectorXd b_vec;  // dg1/dsigma
  double sum() const { return delta0 + delta1 + delta2 + delta3; }
};

double g1(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target);
double g1(const SigmaEvaluation& eval, const PredictionTarget& target);

double g2(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target);
double g2(const SigmaEvaluation& eval, const PredictionTarget& target);

// tr{[grad s]' Sigma [grad s] (-A)^{-1}}; throws SingularInformation.
double g3(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target, Method method);
double g3(const SigmaEvaluation& eval, const PredictionTarget& target, Method method);

// (y - X beta)' [grad s] (-A)^{-1} [grad s]' (y - X beta).
double g3_data(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
               const PredictionTarget& target, Method method);
double g3_data(const SigmaEvaluation& eval, const VectorXd& y, const PredictionTarget& target, Method method);

// (dg1/dsigma)' A_M^{-1} g_M0.
double g10(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target);
double g10(const SigmaEvaluation& eval, const PredictionTarget& target);

VectorXd g1_gradient(const SigmaEvaluation& eval, const PredictionTarget& target);

MseReport mse_estimators(const MixedModel& model, const FitResult& fit, const VectorXd& y,
                         const PredictionTarget& target, bool data_specific = false);
MseReport mse_estimators(const SigmaEvaluation& eval, const FitResult& fit, const VectorXd& y,
                         const PredictionTarget& target, bool data_specific = false);

// g1 + g2 + g3 at the true sigma.
double mse_true_approx(const MixedModel& model, const SigmaVector& sigma_true,
                       const PredictionTarget& target, Method method);
double mse_true_approx(const SigmaEvaluation& eval, const PredictionTarget& target, Method method);

DeltaTerms delta_terms(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target,
                       Method method);
DeltaTerms delta_terms(const SigmaEvaluation& eval, const PredictionTarget& target, Method method);

}  // namespace eblup
