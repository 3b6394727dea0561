#include "eblup/mse.hpp"

namespace eblup {

namespace {

// A for the method with the singularity check; -A is then positive definite.
MatrixXd checked_information(const SigmaEvaluation& eval, Method method) {
  MatrixXd A = expected_information_matrix(eval, method);
  if (information_is_singular(eval, A)) {
    throw Error(ErrorKind::SingularInformation, "expected information is singular");
  }
  return A;
}

MatrixXd fisher_inverse(const MatrixXd& A) {
  const Index s = A.rows();
  return (-A).llt().solve(MatrixXd::Identity(s, s));
}

double g3_with(const SigmaEvaluation& eval, const MatrixXd& grad, const MatrixXd& fisher_inv) {
  const MatrixXd middle = grad.transpose() * eval.sigma() * grad;
  return trace_of_product(middle, fisher_inv);
}

double g3_data_with(const SigmaEvaluation& eval, const VectorXd& y, const MatrixXd& grad,
                    const MatrixXd& fisher_inv) {
  const VectorXd resid = y - eval.model().X() * eval.gls_beta(y);
  const VectorXd c = grad.transpose() * resid;
  return c.dot(fisher_inv * c);
}

double g10_with(const SigmaEvaluation& eval, const VectorXd& b, const MatrixXd& A_ml) {
  const VectorXd bias = ml_score_bias(eval);
  return b.dot(A_ml.partialPivLu().solve(bias));
}

}  // namespace

double g1(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  validate_target(model, target);
  const VectorXd gm = model.g_diag(eval.sigma_values()).cwiseProduct(target.m);
  const VectorXd zgm = model.Z() * gm;
  return target.m.dot(gm) - zgm.dot(eval.solve_sigma(zgm));
}

double g1(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target) {
  return g1(SigmaEvaluation(model, sigma), target);
}

double g2(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const VectorXd s = blup_weights(eval, target);
  const VectorXd d = target.l - eval.model().X().transpose() * s;
  return d.dot(eval.gram_inv() * d);
}

double g2(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target) {
  return g2(SigmaEvaluation(model, sigma), target);
}

double g3(const SigmaEvaluation& eval, const PredictionTarget& target, Method method) {
  const MatrixXd A = checked_information(eval, method);
  return g3_with(eval, grad_s(eval, target), fisher_inverse(A));
}

double g3(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target, Method method) {
  return g3(SigmaEvaluation(model, sigma), target, method);
}

double g3_data(const SigmaEvaluation& eval, const VectorXd& y, const PredictionTarget& target, Method method) {
  if (y.size() != eval.model().n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  const MatrixXd A = checked_information(eval, method);
  return g3_data_with(eval, y, grad_s(eval, target), fisher_inverse(A));
}

double g3_data(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
               const PredictionTarget& target, Method method) {
  return g3_data(SigmaEvaluation(model, sigma), y, target, method);
}

VectorXd g1_gradient(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MixedModel& model = eval.model();
  validate_target(model, target);
  const VectorXd s = blup_weights(eval, target);
  VectorXd b(model.s());
  for (Index i = 0; i < model.s(); ++i) {
    const VectorXd dgm = model.g_derivative_diag(i).cwiseProduct(target.m);
    b(i) = target.m.dot(dgm) - 2.0 * (model.Z() * dgm).dot(s) + s.dot(eval.v_times(i, s));
  }
  return b;
}

double g10(const SigmaEvaluation& eval, const PredictionTarget& target) {
  const MatrixXd A = checked_information(eval, Method::ML);
  return g10_with(eval, g1_gradient(eval, target), A);
}

double g10(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target) {
  return g10(SigmaEvaluation(model, sigma), target);
}

MseReport mse_estimators(const SigmaEvaluation& eval, const FitResult& fit, const VectorXd& y,
                         const PredictionTarget& target, bool data_specific) {
  if (y.size() != eval.model().n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  MseReport report;
  report.method = fit.method;
  report.g1 = g1(eval, target);
  report.g2 = g2(eval, target);
  report.naive = report.g1 + report.g2;
  if (fit.boundary_hit) report.warnings.emplace_back("boundary: sigma_hat lies on the boundary of the parameter space");
  if (!fit.converged) report.warnings.emplace_back("no-convergence: variance estimates did not converge");

  const MatrixXd A = expected_information_matrix(eval, fit.method);
  if (information_is_singular(eval, A)) {
    report.warnings.emplace_back("singular-information: only the naive estimator is available");
    return report;
  }
  const MatrixXd fisher_inv = fisher_inverse(A);
  const MatrixXd grad = grad_s(eval, target);
  const double g3v = g3_with(eval, grad, fisher_inv);
  report.g3 = g3v;
  report.prasad_rao = report.naive + 2.0 * g3v;
  double correction = 0.0;
  if (fit.method == Method::ML) {
    report.g10 = g10_with(eval, g1_gradient(eval, target), A);
    correction = *report.g10;
  }
  report.second_order = *report.prasad_rao - correction;
  if (data_specific) {
    report.g3_data = g3_data_with(eval, y, grad, fisher_inv);
    report.data_specific = report.naive + 2.0 * *report.g3_data - correction;
  }
  return report;
}

MseReport mse_estimators(const MixedModel& model, const FitResult& fit, const VectorXd& y,
                         const PredictionTarget& target, bool data_specific) {
  return mse_estimators(SigmaEvaluation(model, fit.sigma_hat), fit, y, target, data_specific);
}

double mse_true_approx(const SigmaEvaluation& eval, const PredictionTarget& target, Method method) {
  return g1(eval, target) + g2(eval, target) + g3(eval, target, method);
}

double mse_true_approx(const MixedModel& model, const SigmaVector& sigma_true,
                       const PredictionTarget& target, Method method) {
  return mse_true_approx(SigmaEvaluation(model, sigma_true), target, method);
}

DeltaTerms delta_terms(const SigmaEvaluation& eval, const PredictionTarget& target, Method method) {
  const MatrixXd A = checked_information(eval, method);
  const Index s = eval.model().s();
  const Eigen::PartialPivLU<MatrixXd> A_lu(A);
  const MatrixXd A_inv = A_lu.inverse();

  DeltaTerms out;
  out.b_vec = g1_gradient(eval, target);
  out.w_vec.resize(s);
  for (Index i = 0; i < s; ++i) {
    MatrixXd T(s, s);
    for (Index j = 0; j < s; ++j) {
      for (Index k = 0; k < s; ++k) T(j, k) = eval.trace3(method, i, j, k);
    }
    out.w_vec(i) = -trace_of_product(A_inv, T);
  }
  const double bw = out.b_vec.dot(A_inv * out.w_vec);
  const double g3v = g3_with(eval, grad_s(eval, target), fisher_inverse(A));
  out.delta2 = -g3v;
  out.delta3 = -bw;
  if (method == Method::REML) {
    out.delta0 = 0.0;
    out.delta1 = bw;
  } else {
    const double bg = out.b_vec.dot(A_inv * ml_score_bias(eval));
    out.delta0 = 2.0 * bg;
    out.delta1 = bw - bg;
  }
  return out;
}

DeltaTerms delta_terms(const MixedModel& model, const SigmaVector& sigma, const PredictionTarget& target,
                       Method method) {
  return delta_terms(SigmaEvaluation(model, sigma), target, method);
}

}  // namespace eblup
