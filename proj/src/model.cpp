#include "eblup/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eblup {

namespace {

constexpr double kBoundaryTol = 1e-12;
constexpr double kRankTol = 1e-10;

void check_fixed_design(const MatrixXd& X) {
  if (X.rows() <= X.cols()) {
    std::ostringstream msg;
    msg << "need more observations than fixed effects (n=" << X.rows()
        << ", p=" << X.cols() << ")";
    throw Error(ErrorKind::TooFewObservations, msg.str());
  }
  if (!X.allFinite()) throw Error(ErrorKind::InvalidInput, "X has non-finite entries");
  const Index rank = numerical_rank(X);
  if (rank < X.cols()) {
    std::ostringstream msg;
    msg << "X has rank " << rank << " < p=" << X.cols();
    throw Error(ErrorKind::RankDeficientX, msg.str());
  }
}

MatrixXd symmetric_outer(const MatrixXd& Z) {
  MatrixXd V = Z * Z.transpose();
  return 0.5 * (V + V.transpose()).eval();
}

}  // namespace

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::AnovaVC: return "anova";
    case FamilyKind::FayHerriot: return "fay-herriot";
    case FamilyKind::NestedError: return "nested-error";
  }
  return "unknown";
}

bool SigmaVector::any_on_boundary() const {
  return std::any_of(boundary_.begin(), boundary_.end(), [](bool b) { return b; });
}

Index numerical_rank(const MatrixXd& X) {
  if (X.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(X);
  const VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cutoff = kRankTol * sv(0);
  return static_cast<Index>((sv.array() > cutoff).count());
}

MixedModel::MixedModel(MatrixXd X, MatrixXd Z, CovarianceFamily family)
    : X_(std::move(X)), Z_(std::move(Z)), family_(std::move(family)) {
  const Index n = X_.rows();
  if (Z_.rows() != n) {
    throw Error(ErrorKind::DimensionMismatch, "Z and X row counts differ");
  }
  offset_diag_ = VectorXd::Zero(n);
  derivatives_.push_back(MatrixXd::Identity(n, n));
  identity_.push_back(true);
  effect_component_.assign(static_cast<std::size_t>(Z_.cols()), -1);

  if (const auto* fh = std::get_if<FayHerriotFamily>(&family_)) {
    if (fh->phi.size() != n || Z_.cols() != n) {
      throw Error(ErrorKind::DimensionMismatch, "Fay-Herriot needs t sampling variances and Z = I_t");
    }
    offset_diag_ = fh->phi;
    std::fill(effect_component_.begin(), effect_component_.end(), 0);
  } else if (const auto* ne = std::get_if<NestedErrorFamily>(&family_)) {
    if (static_cast<Index>(ne->group_sizes.size()) != Z_.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "Z column count differs from the group count");
    }
    derivatives_.push_back(symmetric_outer(Z_));
    identity_.push_back(false);
    std::fill(effect_component_.begin(), effect_component_.end(), 1);
  } else {
    const auto& anova = std::get<AnovaFamily>(family_);
    Index col = 0;
    for (std::size_t b = 0; b < anova.blocks.size(); ++b) {
      const MatrixXd& block = anova.blocks[b];
      derivatives_.push_back(symmetric_outer(block));
      identity_.push_back(false);
      for (Index c = 0; c < block.cols(); ++c) {
        effect_component_[static_cast<std::size_t>(col++)] = static_cast<Index>(b + 1);
      }
    }
    if (col != Z_.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "Z does not match the stacked blocks");
    }
  }
}

FamilyKind MixedModel::kind() const noexcept {
  if (std::holds_alternative<FayHerriotFamily>(family_)) return FamilyKind::FayHerriot;
  if (std::holds_alternative<NestedErrorFamily>(family_)) return FamilyKind::NestedError;
  return FamilyKind::AnovaVC;
}

const MatrixXd& MixedModel::derivative(Index i) const {
  if (i < 0 || i >= s()) {
    throw Error(ErrorKind::IndexOutOfRange, "sigma component out of range",
                static_cast<std::size_t>(std::max<Index>(i, 0)));
  }
  return derivatives_[static_cast<std::size_t>(i)];
}

bool MixedModel::derivative_is_identity(Index i) const {
  derivative(i);
  return identity_[static_cast<std::size_t>(i)];
}

VectorXd MixedModel::g_diag(const VectorXd& sigma) const {
  VectorXd g(r());
  for (Index c = 0; c < r(); ++c) g(c) = sigma(effect_component_[static_cast<std::size_t>(c)]);
  return g;
}

VectorXd MixedModel::g_derivative_diag(Index i) const {
  derivative(i);
  VectorXd g(r());
  for (Index c = 0; c < r(); ++c) {
    g(c) = effect_component_[static_cast<std::size_t>(c)] == i ? 1.0 : 0.0;
  }
  return g;
}

VectorXd MixedModel::r_diag(const VectorXd& sigma) const {
  if (kind() == FamilyKind::FayHerriot) return offset_diag_;
  return VectorXd::Constant(n(), sigma(0));
}

MatrixXd MixedModel::g_matrix(const VectorXd& sigma) const {
  return g_diag(sigma).asDiagonal();
}

MatrixXd MixedModel::r_matrix(const VectorXd& sigma) const {
  return r_diag(sigma).asDiagonal();
}

MatrixXd MixedModel::sigma_matrix(const VectorXd& sigma) const {
  MatrixXd S = offset_diag_.asDiagonal();
  for (Index i = 0; i < s(); ++i) {
    const double v = sigma(i);
    if (identity_[static_cast<std::size_t>(i)]) {
      S.diagonal().array() += v;
    } else if (v != 0.0) {
      S.noalias() += v * derivatives_[static_cast<std::size_t>(i)];
    }
  }
  return S;
}

bool MixedModel::strictly_positive(Index i) const {
  return kind() == FamilyKind::NestedError && i == 0;
}

MixedModel build_fay_herriot(const VectorXd& phi, const MatrixXd& X) {
  if (phi.size() != X.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "phi length differs from the number of areas");
  }
  for (Index i = 0; i < phi.size(); ++i) {
    if (!(phi(i) > 0.0) || !std::isfinite(phi(i))) {
      throw Error(ErrorKind::NonPositivePhi, "sampling variance phi must be positive",
                  static_cast<std::size_t>(i));
    }
  }
  check_fixed_design(X);
  const Index t = X.rows();
  return MixedModel(X, MatrixXd::Identity(t, t), FayHerriotFamily{phi});
}

MixedModel build_nested_error(std::span<const Index> groups, const MatrixXd& X) {
  if (static_cast<Index>(groups.size()) != X.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "group vector length differs from X rows");
  }
  if (groups.empty()) throw Error(ErrorKind::TooFewObservations, "no observations");
  Index t = 0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k] < 0) throw Error(ErrorKind::InvalidInput, "negative group index", k);
    t = std::max(t, groups[k] + 1);
  }
  NestedErrorFamily fam;
  fam.group_sizes.assign(static_cast<std::size_t>(t), 0);
  for (Index g : groups) ++fam.group_sizes[static_cast<std::size_t>(g)];
  for (std::size_t g = 0; g < fam.group_sizes.size(); ++g) {
    if (fam.group_sizes[g] == 0) throw Error(ErrorKind::EmptyGroup, "group has no rows", g);
  }
  check_fixed_design(X);
  MatrixXd Z = MatrixXd::Zero(X.rows(), t);
  for (std::size_t k = 0; k < groups.size(); ++k) Z(static_cast<Index>(k), groups[k]) = 1.0;
  fam.group_of_row.assign(groups.begin(), groups.end());
  return MixedModel(X, std::move(Z), std::move(fam));
}

MixedModel build_anova(const MatrixXd& X, std::vector<MatrixXd> z_blocks) {
  if (z_blocks.empty()) throw Error(ErrorKind::InvalidInput, "need at least one random-effect block");
  Index r = 0;
  for (std::size_t b = 0; b < z_blocks.size(); ++b) {
    if (z_blocks[b].rows() != X.rows()) {
      throw Error(ErrorKind::DimensionMismatch, "Z block row count differs from X", b + 1);
    }
    if (!z_blocks[b].allFinite()) throw Error(ErrorKind::InvalidInput, "Z block has non-finite entries", b + 1);
    if (z_blocks[b].cols() == 0 || z_blocks[b].isZero(0.0)) {
      throw Error(ErrorKind::ZeroBlock, "Z block is zero", b + 1);
    }
    r += z_blocks[b].cols();
  }
  check_fixed_design(X);
  MatrixXd Z(X.rows(), r);
  Index col = 0;
  for (const MatrixXd& block : z_blocks) {
    Z.middleCols(col, block.cols()) = block;
    col += block.cols();
  }
  return MixedModel(X, std::move(Z), AnovaFamily{std::move(z_blocks)});
}

MatrixXd assemble_sigma(const MixedModel& model, const SigmaVector& sigma) {
  MatrixXd S = model.sigma_matrix(sigma.values());
  Eigen::LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "Sigma(sigma) is not positive definite");
  }
  return S;
}

const MatrixXd& sigma_derivative(const MixedModel& model, Index i) {
  return model.derivative(i);
}

SigmaVector validate_sigma(const MixedModel& model, const VectorXd& values) {
  if (values.size() != model.s()) {
    throw Error(ErrorKind::DimensionMismatch, "sigma has the wrong dimension");
  }
  std::vector<bool> flags(static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::InvalidInput, "sigma component is not finite", static_cast<std::size_t>(i));
    }
    if (v < 0.0 || (model.strictly_positive(i) && v <= 0.0)) {
      throw Error(ErrorKind::OutsideParameterSpace, "sigma component outside Theta",
                  static_cast<std::size_t>(i));
    }
    flags[static_cast<std::size_t>(i)] = std::abs(v) <= kBoundaryTol;
  }
  return SigmaVector(values, std::move(flags));
}

void validate_target(const MixedModel& model, const PredictionTarget& target) {
  if (target.l.size() != model.p() || target.m.size() != model.r()) {
    std::ostringstream msg;
    msg << "target '" << target.name << "' needs l of length " << model.p()
        << " and m of length " << model.r();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  if (!target.l.allFinite() || !target.m.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "target coefficients must be finite");
  }
}

PredictionTarget area_target(const MixedModel& model, Index area) {
  if (area < 0 || area >= model.r()) {
    throw Error(ErrorKind::IndexOutOfRange, "area index out of range",
                static_cast<std::size_t>(std::max<Index>(area, 0)));
  }
  PredictionTarget target;
  target.name = area < static_cast<Index>(model.effect_labels.size())
                    ? model.effect_labels[static_cast<std::size_t>(area)]
                    : "area" + std::to_string(area + 1);
  target.l = VectorXd::Zero(model.p());
  double count = 0.0;
  for (Index row = 0; row < model.n(); ++row) {
    if (model.Z()(row, area) != 0.0) {
      target.l += model.X().row(row).transpose();
      count += 1.0;
    }
  }
  target.l /= count;
  target.m = VectorXd::Unit(model.r(), area);
  return target;
}

MatrixXd nested_block_inverse(Index size, double sigma0, double sigma1) {
  const double lambda = sigma0 + static_cast<double>(size) * sigma1;
  const double gamma = sigma1 / sigma0;
  const MatrixXd centering =
      MatrixXd::Identity(size, size) - MatrixXd::Constant(size, size, 1.0 / static_cast<double>(size));
  return MatrixXd::Identity(size, size) / lambda +
         (gamma * static_cast<double>(size) / lambda) * centering;
}

}  // namespace eblup
