#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "eblup/model.hpp"

namespace eblup {

enum class Method { REML, ML };

std::string_view to_string(Method method);

// Symmetric s x s x s array of third derivatives.
class ThirdArray {
 public:
  explicit ThirdArray(Index s = 0) : s_(s), data_(static_cast<std::size_t>(s * s * s), 0.0) {}
  Index size() const noexcept { return s_; }
  double operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }
  double& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }

 private:
  std::size_t offset(Index i, Index j, Index k) const {
    return static_cast<std::size_t>((i * s_ + j) * s_ + k);
  }
  Index s_;
  std::vector<double> data_;
};

struct DerivativeBundle {
  VectorXd score;
  MatrixXd hessian;
  std::optional<ThirdArray> third;
};

// A = E[d^2 l / d sigma^2] and the Fisher information -A.
struct InformationMatrix {
  MatrixXd A;
  MatrixXd fisher;
  Method method = Method::REML;
};

// Everything that depends on sigma alone: the Cholesky factor of Sigma,
// Sigma^{-1}, the GLS Gram matrix X' Sigma^{-1} X and the projection P, along
// with P V_i and Sigma^{-1} V_i. Built once per sigma and shared by the
// likelihood, prediction and MSE routines.
class SigmaEvaluation {
 public:
  SigmaEvaluation(const MixedModel& model, const VectorXd& sigma);
  SigmaEvaluation(const MixedModel& model, const SigmaVector& sigma)
      : SigmaEvaluation(model, sigma.values()) {}

  const MixedModel& model() const noexcept { return *model_; }
  const VectorXd& sigma_values() const noexcept { return sigma_values_; }

  const MatrixXd& sigma() const noexcept { return sigma_; }
  const MatrixXd& sigma_inv() const noexcept { return sigma_inv_; }
  const MatrixXd& projection() const noexcept { return p_; }
  const MatrixXd& gram_inv() const noexcept { return gram_inv_; }
  const MatrixXd& p_v(Index i) const { return p_v_[static_cast<std::size_t>(i)]; }
  const MatrixXd& sigma_inv_v(Index i) const { return sinv_v_[static_cast<std::size_t>(i)]; }

  double log_det_sigma() const noexcept { return log_det_sigma_; }
  double log_det_gram() const noexcept { return log_det_gram_; }

  VectorXd solve_sigma(const VectorXd& b) const { return llt_.solve(b); }
  // GLS fixed effects at this sigma.
  VectorXd gls_beta(const VectorXd& y) const;
  // P y computed with solves rather than the explicit P.
  VectorXd p_times(const VectorXd& y) const;
  // V_i x without forming V_i when V_i = I.
  VectorXd v_times(Index i, const VectorXd& x) const;

  // tr(M V_i M V_j) with M = P (REML) or Sigma^{-1} (ML).
  double trace2(Method m, Index i, Index j) const;
  // tr(M V_i M V_j M V_k).
  double trace3(Method m, Index i, Index j, Index k) const;

 private:
  const MixedModel* model_;
  VectorXd sigma_values_;
  MatrixXd sigma_;
  Eigen::LLT<MatrixXd> llt_;
  MatrixXd sigma_inv_;
  MatrixXd sinv_x_;
  MatrixXd gram_inv_;
  MatrixXd p_;
  std::vector<MatrixXd> p_v_;
  std::vector<MatrixXd> sinv_v_;
  double log_det_sigma_ = 0.0;
  double log_det_gram_ = 0.0;
};

// tr(A B) without forming the product.
double trace_of_product(const MatrixXd& A, const MatrixXd& B);

MatrixXd projection_p(const MixedModel& model, const SigmaVector& sigma);

double restricted_loglik(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y);
double profile_loglik(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y);
double loglik(const SigmaEvaluation& eval, const VectorXd& y, Method method);

VectorXd score_reml(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y);
VectorXd score_ml(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y);
VectorXd score(const SigmaEvaluation& eval, const VectorXd& y, Method method);

MatrixXd hessian(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y, Method method);
MatrixXd hessian(const SigmaEvaluation& eval, const VectorXd& y, Method method);

ThirdArray third_derivatives(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y,
                             Method method);
ThirdArray third_derivatives(const SigmaEvaluation& eval, const VectorXd& y, Method method);

DerivativeBundle derivatives(const SigmaEvaluation& eval, const VectorXd& y, Method method,
                             bool with_third);

// Throws SingularInformation when -A is not positive definite.
InformationMatrix expected_information(const MixedModel& model, const SigmaVector& sigma,
                                       Method method);
InformationMatrix expected_information(const SigmaEvaluation& eval, Method method);

// A without the singularity check, and the check itself.
MatrixXd expected_information_matrix(const SigmaEvaluation& eval, Method method);
bool information_is_singular(const SigmaEvaluation& eval, const MatrixXd& A);

// g_M0 with E(score_ml) = -g_M0.
VectorXd ml_score_bias(const MixedModel& model, const SigmaVector& sigma);
VectorXd ml_score_bias(const SigmaEvaluation& eval);

// d_i = ||Z_i' P Z_i||_F (Z_0 = I), i.e. sqrt(tr(P V_i P V_i)).
VectorXd effective_dims(const MixedModel& model, const SigmaVector& sigma);
VectorXd effective_dims(const SigmaEvaluation& eval);

}  // namespace eblup
