#include "eblup/prediction.hpp"

namespace eblup {

VectorXd blup_weights(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  validate_target(model, target);
  const VectorXd gm = model.g_diag(eval.sigma_values()).cwiseProduct(target.m);
  return eval.solve_sigma(model.Z() * gm);
}

VectorXd blup_weights(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target) {
  return blup_weights(SigmaEvaluation(model, sigma), target);
}

BlupResult blup(const SigmaEvaluation& eval, const VectorXd& y, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  validate_target(model, target);
  if (y.size() != model.n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  BlupResult out;
  out.beta_used = eval.gls_beta(y);
  const VectorXd resid = y - model.X() * out.beta_used;
  out.s_weights = blup_weights(eval, target);
  out.v_tilde = model.g_diag(eval.sigma_values()).cwiseProduct(model.Z().transpose() * eval.solve_sigma(resid));
  out.value = target.l.dot(out.beta_used) + out.s_weights.dot(resid);
  return out;
}

BlupResult blup(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
                const PredictionTarget& target) {
  return blup(SigmaEvaluation(model, sigma), y, target);
}

MatrixXd grad_s(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  validate_target(model, target);
  const VectorXd s = blup_weights(eval, target);
  MatrixXd grad(model.n(), model.s());
  for (Index i = 0; i < model.s(); ++i) {
    const VectorXd dgm = model.g_derivative_diag(i).cwiseProduct(target.m);
    grad.col(i) = eval.solve_sigma(model.Z() * dgm - eval.v_times(i, s));
  }
  return grad;
}

MatrixXd grad_s(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target) {
  return grad_s(SigmaEvaluation(model, sigma), target);
}

BlupResult eblup(const MixedModel& model, const FitResult& fit, const VectorXd& y,
                 const PredictionTarget& target) {
  BlupResult out = blup(model, fit.sigma_hat, y, target);
  out.boundary_warning = fit.boundary_hit;
  return out;
}

VectorXd blup_linear_weights(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  const VectorXd s = blup_weights(eval, target);
  // beta~ = Gram^{-1} X' Sigma^{-1} y, so t = [s + Sigma^{-1} X Gram^{-1} (l - X' s)]' y.
  const VectorXd coef = eval.gram_inv() * (target.l - model.X().transpose() * s);
  return s + eval.solve_sigma(model.X() * coef);
}

}  // namespace eblup
