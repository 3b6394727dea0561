#include "eblup/likelihood.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>

namespace eblup {

namespace {

constexpr double kSingularInformationTol = 1e-10;

void check_response(const SigmaEvaluation& eval, const VectorXd& y) {
  if (y.size() != eval.model().n()) {
    throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  }
}

template <typename Llt>
double log_det(const Llt& llt) {
  const auto& L = llt.matrixLLT();
  return 2.0 * L.diagonal().array().log().sum();
}

}  // namespace

std::string_view to_string(Method method) {
  return method == Method::REML ? "reml" : "ml";
}

double trace_of_product(const MatrixXd& A, const MatrixXd& B) {
  return (A.array() * B.transpose().array()).sum();
}

SigmaEvaluation::SigmaEvaluation(const MixedModel& model, const VectorXd& sigma)
    : model_(&model), sigma_values_(sigma) {
  if (sigma.size() != model.s()) {
    throw Error(ErrorKind::DimensionMismatch, "sigma has the wrong dimension");
  }
  sigma_ = model.sigma_matrix(sigma);
  llt_.compute(sigma_);
  if (llt_.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "Sigma(sigma) is not positive definite");
  }
  const Index n = model.n();
  sigma_inv_ = llt_.solve(MatrixXd::Identity(n, n));
  sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose()).eval();
  log_det_sigma_ = log_det(llt_);

  sinv_x_ = llt_.solve(model.X());
  MatrixXd gram = model.X().transpose() * sinv_x_;
  gram = 0.5 * (gram + gram.transpose()).eval();
  Eigen::LLT<MatrixXd> gram_llt(gram);
  if (gram_llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularGram, "X' Sigma^{-1} X is singular");
  }
  gram_inv_ = gram_llt.solve(MatrixXd::Identity(model.p(), model.p()));
  gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
  log_det_gram_ = log_det(gram_llt);

  p_ = sigma_inv_ - sinv_x_ * gram_inv_ * sinv_x_.transpose();
  p_ = 0.5 * (p_ + p_.transpose()).eval();

  p_v_.reserve(static_cast<std::size_t>(model.s()));
  sinv_v_.reserve(static_cast<std::size_t>(model.s()));
  for (Index i = 0; i < model.s(); ++i) {
    if (model.derivative_is_identity(i)) {
      p_v_.push_back(p_);
      sinv_v_.push_back(sigma_inv_);
    } else {
      p_v_.push_back(p_ * model.derivative(i));
      sinv_v_.push_back(sigma_inv_ * model.derivative(i));
    }
  }
}

VectorXd SigmaEvaluation::gls_beta(const VectorXd& y) const {
  return gram_inv_ * (sinv_x_.transpose() * y);
}

VectorXd SigmaEvaluation::p_times(const VectorXd& y) const {
  return llt_.solve(y - model_->X() * gls_beta(y));
}

VectorXd SigmaEvaluation::v_times(Index i, const VectorXd& x) const {
  if (model_->derivative_is_identity(i)) return x;
  return model_->derivative(i) * x;
}

double SigmaEvaluation::trace2(Method m, Index i, Index j) const {
  return m == Method::REML ? trace_of_product(p_v(i), p_v(j))
                           : trace_of_product(sigma_inv_v(i), sigma_inv_v(j));
}

double SigmaEvaluation::trace3(Method m, Index i, Index j, Index k) const {
  if (m == Method::REML) return trace_of_product(p_v(i) * p_v(j), p_v(k));
  return trace_of_product(sigma_inv_v(i) * sigma_inv_v(j), sigma_inv_v(k));
}

MatrixXd projection_p(const MixedModel& model, const SigmaVector& sigma) {
  return SigmaEvaluation(model, sigma).projection();
}

double loglik(const SigmaEvaluation& eval, const VectorXd& y, Method method) {
  check_response(eval, y);
  const double quad = y.dot(eval.p_times(y));
  double value = eval.log_det_sigma() + quad;
  if (method == Method::REML) value += eval.log_det_gram();
  return -0.5 * value;
}

double restricted_loglik(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y) {
  return loglik(SigmaEvaluation(model, sigma), y, Method::REML);
}

double profile_loglik(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y) {
  return loglik(SigmaEvaluation(model, sigma), y, Method::ML);
}

VectorXd score(const SigmaEvaluation& eval, const VectorXd& y, Method method) {
  check_response(eval, y);
  const Index s = eval.model().s();
  const VectorXd py = eval.p_times(y);
  VectorXd out(s);
  for (Index i = 0; i < s; ++i) {
    const double quad = py.dot(eval.v_times(i, py));
    const double tr = method == Method::REML ? eval.p_v(i).trace() : eval.sigma_inv_v(i).trace();
    out(i) = 0.5 * (quad - tr);
  }
  return out;
}

VectorXd score_reml(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y) {
  return score(SigmaEvaluation(model, sigma), y, Method::REML);
}

VectorXd score_ml(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y) {
  return score(SigmaEvaluation(model, sigma), y, Method::ML);
}

namespace {

// w_i = V_i P y and u_i = P w_i, the building blocks of every quadratic form
// in the derivative formulas (y stands in for u = y - X beta since PX = 0).
struct QuadraticPieces {
  std::vector<VectorXd> w;
  std::vector<VectorXd> u;
};

QuadraticPieces quadratic_pieces(const SigmaEvaluation& eval, const VectorXd& y) {
  const Index s = eval.model().s();
  const VectorXd py = eval.p_times(y);
  QuadraticPieces q;
  for (Index i = 0; i < s; ++i) {
    q.w.push_back(eval.v_times(i, py));
    q.u.push_back(eval.projection() * q.w.back());
  }
  return q;
}

MatrixXd hessian_from(const SigmaEvaluation& eval, const QuadraticPieces& q, Method method) {
  const Index s = eval.model().s();
  MatrixXd H(s, s);
  for (Index i = 0; i < s; ++i) {
    for (Index j = i; j < s; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      const double quad = 0.5 * (q.w[ui].dot(q.u[uj]) + q.w[uj].dot(q.u[ui]));
      H(i, j) = 0.5 * eval.trace2(method, i, j) - quad;
      H(j, i) = H(i, j);
    }
  }
  return H;
}

ThirdArray third_from(const SigmaEvaluation& eval, const QuadraticPieces& q, Method method) {
  const Index s = eval.model().s();
  ThirdArray T(s);
  auto form = [&](Index a, Index b, Index c) {
    return q.u[static_cast<std::size_t>(a)].dot(
        eval.v_times(b, q.u[static_cast<std::size_t>(c)]));
  };
  for (Index i = 0; i < s; ++i) {
    for (Index j = i; j < s; ++j) {
      for (Index k = j; k < s; ++k) {
        const double quad = form(i, j, k) + form(j, k, i) + form(k, i, j);
        const double tr = eval.trace3(method, i, j, k) + eval.trace3(method, i, k, j);
        const double value = quad - 0.5 * tr;
        const std::array<std::array<Index, 3>, 6> perms{{{i, j, k}, {i, k, j}, {j, i, k},
                                                          {j, k, i}, {k, i, j}, {k, j, i}}};
        for (const auto& p : perms) T(p[0], p[1], p[2]) = value;
      }
    }
  }
  return T;
}

}  // namespace

MatrixXd hessian(const SigmaEvaluation& eval, const VectorXd& y, Method method) {
  check_response(eval, y);
  return hessian_from(eval, quadratic_pieces(eval, y), method);
}

MatrixXd hessian(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y, Method method) {
  return hessian(SigmaEvaluation(model, sigma), y, method);
}

ThirdArray third_derivatives(const SigmaEvaluation& eval, const VectorXd& y, Method method) {
  check_response(eval, y);
  return third_from(eval, quadratic_pieces(eval, y), method);
}

ThirdArray third_derivatives(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
                             Method method) {
  return third_derivatives(SigmaEvaluation(model, sigma), y, method);
}

DerivativeBundle derivatives(const SigmaEvaluation& eval, const VectorXd& y, Method method,
                             bool with_third) {
  check_response(eval, y);
  const QuadraticPieces q = quadratic_pieces(eval, y);
  DerivativeBundle bundle;
  bundle.score = score(eval, y, method);
  bundle.hessian = hessian_from(eval, q, method);
  if (with_third) bundle.third = third_from(eval, q, method);
  return bundle;
}

MatrixXd expected_information_matrix(const SigmaEvaluation& eval, Method method) {
  const Index s = eval.model().s();
  MatrixXd A(s, s);
  for (Index i = 0; i < s; ++i) {
    for (Index j = i; j < s; ++j) {
      const double tr_p = eval.trace2(Method::REML, i, j);
      if (method == Method::REML) {
        A(i, j) = -0.5 * tr_p;
      } else {
        // E[u' P V_i P V_j P u] = tr(P V_i P V_j P Sigma) = tr(P V_i P V_j), as P Sigma P = P.
        A(i, j) = 0.5 * eval.trace2(Method::ML, i, j) - tr_p;
      }
      A(j, i) = A(i, j);
    }
  }
  return A;
}

bool information_is_singular(const SigmaEvaluation& eval, const MatrixXd& A) {
  const Index s = A.rows();
  double scale = 0.0;
  for (Index i = 0; i < s; ++i) scale = std::max(scale, 0.5 * eval.trace2(Method::ML, i, i));
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(-A, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues().minCoeff();
  return !(lambda_min > kSingularInformationTol * scale);
}

InformationMatrix expected_information(const SigmaEvaluation& eval, Method method) {
  InformationMatrix info;
  info.method = method;
  info.A = expected_information_matrix(eval, method);
  if (information_is_singular(eval, info.A)) {
    throw Error(ErrorKind::SingularInformation, "expected information is singular");
  }
  info.fisher = -info.A;
  return info;
}

InformationMatrix expected_information(const MixedModel& model, const SigmaVector& sigma,
                                       Method method) {
  return expected_information(SigmaEvaluation(model, sigma), method);
}

VectorXd ml_score_bias(const SigmaEvaluation& eval) {
  const Index s = eval.model().s();
  VectorXd g(s);
  for (Index i = 0; i < s; ++i) {
    g(i) = 0.5 * (eval.sigma_inv_v(i).trace() - eval.p_v(i).trace());
  }
  return g;
}

VectorXd ml_score_bias(const MixedModel& model, const SigmaVector& sigma) {
  return ml_score_bias(SigmaEvaluation(model, sigma));
}

VectorXd effective_dims(const SigmaEvaluation& eval) {
  const Index s = eval.model().s();
  VectorXd d(s);
  for (Index i = 0; i < s; ++i) d(i) = std::sqrt(std::max(0.0, eval.trace2(Method::REML, i, i)));
  return d;
}

VectorXd effective_dims(const MixedModel& model, const SigmaVector& sigma) {
  return effective_dims(SigmaEvaluation(model, sigma));
}

}  // namespace eblup
