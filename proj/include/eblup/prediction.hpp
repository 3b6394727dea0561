#pragma once

#include "eblup/estimation.hpp"

namespace eblup {

struct BlupResult {
  double value = 0.0;   // t(sigma) = l' beta + s' (y - X beta)
  VectorXd s_weights;   // s(sigma) = Sigma^{-1} Z G m
  VectorXd beta_used;
  VectorXd v_tilde;     // G Z' Sigma^{-1} (y - X beta)
  bool boundary_warning = false;
};

VectorXd blup_weights(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target);
VectorXd blup_weights(const SigmaEvaluation& eval, const PredictionTarget& target);

BlupResult blup(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
                const PredictionTarget& target);
BlupResult blup(const SigmaEvaluation& eval, const VectorXd& y, const PredictionTarget& target);

// n x s matrix d s(sigma) / d sigma'.
MatrixXd grad_s(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target);
MatrixXd grad_s(const SigmaEvaluation& eval, const PredictionTarget& target);

BlupResult eblup(const MixedModel& model, const FitResult& fit, const VectorXd& y,
                 const PredictionTarget& target);

// The weight vector w with t(sigma, y) = w' y.
VectorXd blup_linear_weights(const SigmaEvaluation& eval, const PredictionTarget& target);

}  // namespace eblup
