#pragma once

#include <cstdint>
#include <vector>

#include "eblup/model.hpp"
#include "eblup/parallel.hpp"

namespace eblup {

// Binary tuple (i_1, ..., i_{w+1}) packed with i_l in bit l-1.
using FactorTuple = std::uint32_t;

// Balanced w-factor ANOVA layout. Factor w+1 is repetition within cells and
// observations are stored in Kronecker order (factor 1 varies slowest).
// X = kron_l 1_{n_l}^{s_l}, Z_i = kron_l 1_{n_l}^{i_l} for i in S, with
// 1^0 = I and 1^1 = the ones vector.
class BalancedDesign {
 public:
  BalancedDesign(std::vector<Index> levels, std::vector<FactorTuple> random, FactorTuple fixed);

  Index factors() const noexcept { return static_cast<Index>(levels_.size()); }
  const std::vector<Index>& levels() const noexcept { return levels_; }
  const std::vector<FactorTuple>& random() const noexcept { return random_; }
  FactorTuple fixed() const noexcept { return fixed_; }
  std::size_t tuple_count() const noexcept { return std::size_t{1} << levels_.size(); }

  Index n() const noexcept { return n_; }
  Index p() const { return r(fixed_); }
  // r_i = product of n_l over factors with i_l = 0.
  Index r(FactorTuple i) const;
  // n / r_i = product of n_l over factors with i_l = 1.
  Index collapsed(FactorTuple i) const { return n_ / r(i); }

  MatrixXd z_block(FactorTuple i) const;
  MatrixXd x() const;
  // Dense AnovaVC model with sigma ordered as (sigma_0, sigma_{S[0]}, ...).
  MixedModel to_model() const;

  std::vector<int> tuple_bits(FactorTuple i) const;

 private:
  std::vector<Index> levels_;
  std::vector<FactorTuple> random_;
  FactorTuple fixed_;
  Index n_ = 1;
};

// Coefficients c_i of sum_i c_i kron_l J_{n_l}^{i_l}, indexed by tuple.
class KronCoefficients {
 public:
  explicit KronCoefficients(std::size_t tuples = 0) : coeff_(tuples, 0.0) {}
  double operator[](FactorTuple i) const { return coeff_[i]; }
  double& operator[](FactorTuple i) { return coeff_[i]; }
  std::size_t size() const noexcept { return coeff_.size(); }
  std::size_t nonzeros() const;

 private:
  std::vector<double> coeff_;
};

// lambda_i: sigma_0 at the zero tuple, sigma_k at k in S, zero elsewhere.
KronCoefficients sigma_coefficients(const BalancedDesign& design, const VectorXd& sigma);
// Closed-form coefficients of Sigma^{-1} in the same basis.
KronCoefficients tau_coefficients(const BalancedDesign& design, const VectorXd& sigma);

MatrixXd expand(const BalancedDesign& design, const KronCoefficients& coeffs);

struct IdentityCheck {
  bool ok = false;
  double residual = 0.0;
};

// Max-abs difference between P = Sigma^{-1} - Sigma^{-1} X (X' Sigma^{-1} X)^{-1} X' Sigma^{-1}
// and {I - (p/n) X X'} Sigma^{-1}; ok when below 1e-10.
IdentityCheck projection_identity_check(const BalancedDesign& design, const VectorXd& sigma);

// v~_i for random effect `effect` (position in design.random()) computed from
// the tau expansion without forming any n x n matrix.
VectorXd blup_kron(const BalancedDesign& design, const VectorXd& sigma, const VectorXd& y,
                   std::size_t effect, Execution exec = Execution::Parallel);

// Upper bound 1 + |S| 2^{w+1} on the number of linear statistics in the BLUP.
std::size_t blup_term_bound(const BalancedDesign& design);

namespace kernels {

// out = (kron_l J_{n_l}^{k_l}) x.
void apply_kron_term(const BalancedDesign& design, FactorTuple k, const VectorXd& x, VectorXd& out,
                     Execution exec);
// sum_k c_k (kron_l J^{k_l}) x.
VectorXd apply_expansion(const BalancedDesign& design, const KronCoefficients& coeffs, const VectorXd& x,
                         Execution exec);
// Z_i' x: sums over the factors with i_l = 1.
VectorXd collapse(const BalancedDesign& design, FactorTuple i, const VectorXd& x, Execution exec);

}  // namespace kernels

}  // namespace eblup
