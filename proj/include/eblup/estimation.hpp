#pragma once

#include <optional>
#include <vector>

#include "eblup/likelihood.hpp"

namespace eblup {

struct GlsResult {
  VectorXd beta;
  MatrixXd cov;  // (X' Sigma^{-1} X)^{-1}
};

GlsResult gls_beta(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y);

struct FitOptions {
  std::optional<VectorXd> start;
  int max_iter = 100;
  double tol = 1e-8;
  // Lower bound used when a nonnegative component is clamped.
  double clamp_eps = 0.0;
};

struct FitResult {
  SigmaVector sigma_hat;
  Method method = Method::REML;
  VectorXd beta_hat;
  MatrixXd beta_cov;
  // Empty when the expected information at sigma_hat is singular.
  std::optional<InformationMatrix> information;
  int iterations = 0;
  // max_i |score_i| / (1 + d_i^2) over components not held at the boundary.
  double final_score_norm = 0.0;
  VectorXd score;
  bool converged = false;
  bool boundary_hit = false;
  VectorXd effective_dims;
  double loglik = 0.0;
  // Objective after the start and after every accepted step.
  std::vector<double> loglik_path;
};

// OLS residual variance (divisor n - p) split evenly over the components and
// floored at 1e-4 of the total; Fay-Herriot subtracts the mean sampling
// variance and floors at 0 instead.
VectorXd starting_values(const MixedModel& model, const VectorXd& y, Method method);

// Fisher scoring on the REML or ML score equations with step halving and
// clamp-and-flag handling of the lower boundary. Non-convergence is reported
// through FitResult::converged rather than thrown.
FitResult fit(const MixedModel& model, const VectorXd& y, Method method,
              const FitOptions& options = {});

}  // namespace eblup
