#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eblup/error.hpp"

namespace eblup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class FamilyKind { AnovaVC, FayHerriot, NestedError };

std::string_view to_string(FamilyKind kind);

// Sigma = sigma_0 I + sum_i sigma_i Z_i Z_i'.
struct AnovaFamily {
  std::vector<MatrixXd> blocks;
};

// Sigma = sigma I + diag(phi).
struct FayHerriotFamily {
  VectorXd phi;
};

// Sigma = sigma_0 I + sigma_1 Z Z' with Z the group indicator matrix.
struct NestedErrorFamily {
  std::vector<Index> group_of_row;
  std::vector<Index> group_sizes;
};

using CovarianceFamily =
    std::variant<AnovaFamily, FayHerriotFamily, NestedErrorFamily>;

class MixedModel;

// A point of the parameter space together with its boundary flags. Only
// validate_sigma() produces one, so every instance lies in the family's Theta.
class SigmaVector {
 public:
  SigmaVector() = default;
  const VectorXd& values() const noexcept { return values_; }
  double operator[](Index i) const { return values_(i); }
  Index size() const noexcept { return values_.size(); }
  bool on_boundary(Index i) const { return boundary_[static_cast<std::size_t>(i)]; }
  const std::vector<bool>& boundary_flags() const noexcept { return boundary_; }
  bool any_on_boundary() const;

 private:
  friend SigmaVector validate_sigma(const MixedModel& model, const VectorXd& values);
  SigmaVector(VectorXd values, std::vector<bool> boundary)
      : values_(std::move(values)), boundary_(std::move(boundary)) {}

  VectorXd values_;
  std::vector<bool> boundary_;
};

// mu = l' beta + m' v
struct PredictionTarget {
  std::string name;
  VectorXd l;
  VectorXd m;
};

class MixedModel {
 public:
  MixedModel(MatrixXd X, MatrixXd Z, CovarianceFamily family);

  FamilyKind kind() const noexcept;
  const CovarianceFamily& family() const noexcept { return family_; }

  Index n() const noexcept { return X_.rows(); }
  Index p() const noexcept { return X_.cols(); }
  Index r() const noexcept { return Z_.cols(); }
  // Dimension of sigma.
  Index s() const noexcept { return static_cast<Index>(derivatives_.size()); }

  const MatrixXd& X() const noexcept { return X_; }
  const MatrixXd& Z() const noexcept { return Z_; }

  // Constant part of Sigma (Phi for Fay-Herriot, zero otherwise).
  const VectorXd& sigma_offset_diag() const noexcept { return offset_diag_; }

  // dSigma/dsigma_i; Sigma is affine in sigma for every family.
  const MatrixXd& derivative(Index i) const;
  bool derivative_is_identity(Index i) const;

  // G is diagonal for every family: diag(G(sigma)) and diag(dG/dsigma_i).
  VectorXd g_diag(const VectorXd& sigma) const;
  VectorXd g_derivative_diag(Index i) const;
  // R is diagonal for every family.
  VectorXd r_diag(const VectorXd& sigma) const;

  MatrixXd g_matrix(const VectorXd& sigma) const;
  MatrixXd r_matrix(const VectorXd& sigma) const;

  // Sum of the affine pieces, no definiteness check.
  MatrixXd sigma_matrix(const VectorXd& sigma) const;

  // Whether component i must stay strictly positive (sigma_0 of the
  // nested-error family) rather than merely nonnegative.
  bool strictly_positive(Index i) const;

  std::vector<std::string> row_labels;
  std::vector<std::string> effect_labels;

 private:
  MatrixXd X_;
  MatrixXd Z_;
  CovarianceFamily family_;
  VectorXd offset_diag_;
  std::vector<MatrixXd> derivatives_;
  std::vector<bool> identity_;
  // Owning sigma component of each random-effect column (-1: none).
  std::vector<Index> effect_component_;
};

MixedModel build_fay_herriot(const VectorXd& phi, const MatrixXd& X);
// groups[k] is the 0-based group of row k; groups must cover 0..t-1.
MixedModel build_nested_error(std::span<const Index> groups, const MatrixXd& X);
MixedModel build_anova(const MatrixXd& X, std::vector<MatrixXd> z_blocks);

MatrixXd assemble_sigma(const MixedModel& model, const SigmaVector& sigma);
const MatrixXd& sigma_derivative(const MixedModel& model, Index i);
SigmaVector validate_sigma(const MixedModel& model, const VectorXd& values);

void validate_target(const MixedModel& model, const PredictionTarget& target);

// Target for the mean of area/group i: l = x_i (or the group's mean row for
// nested-error data), m = e_i.
PredictionTarget area_target(const MixedModel& model, Index area);

// Closed-form inverse of one nested-error block sigma_0 I + sigma_1 J of size
// size, via lambda = sigma_0 + size sigma_1.
MatrixXd nested_block_inverse(Index size, double sigma0, double sigma1);

// Numerical rank with relative cutoff 1e-10 * largest singular value.
Index numerical_rank(const MatrixXd& X);

}  // namespace eblup
