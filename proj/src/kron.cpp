#include "eblup/kron.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "eblup/likelihood.hpp"

namespace eblup {

namespace {

constexpr double kIdentityTol = 1e-10;

FactorTuple last_bit(std::size_t factors) { return FactorTuple{1} << (factors - 1); }

void check_sigma(const BalancedDesign& design, const VectorXd& sigma) {
  if (sigma.size() != static_cast<Index>(design.random().size()) + 1) {
    throw Error(ErrorKind::DimensionMismatch, "sigma must hold sigma_0 and one entry per random effect");
  }
  if (!(sigma(0) > 0.0) || !std::isfinite(sigma(0))) {
    throw Error(ErrorKind::OutsideParameterSpace, "sigma_0 must be positive", 0);
  }
  for (Index k = 1; k < sigma.size(); ++k) {
    if (!(sigma(k) >= 0.0) || !std::isfinite(sigma(k))) {
      throw Error(ErrorKind::OutsideParameterSpace, "variance component must be nonnegative",
                  static_cast<std::size_t>(k));
    }
  }
}

// Position of each observation along every factor.
struct Strides {
  std::vector<Index> stride;  // stride of factor l in the flattened index
  explicit Strides(const std::vector<Index>& levels) : stride(levels.size()) {
    Index s = 1;
    for (std::size_t l = levels.size(); l-- > 0;) {
      stride[l] = s;
      s *= levels[l];
    }
  }
};

}  // namespace

BalancedDesign::BalancedDesign(std::vector<Index> levels, std::vector<FactorTuple> random, FactorTuple fixed)
    : levels_(std::move(levels)), random_(std::move(random)), fixed_(fixed) {
  if (levels_.size() < 2 || levels_.size() > 20) {
    throw Error(ErrorKind::InvalidInput, "balanced design needs between 1 and 19 factors plus repetition");
  }
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (levels_[l] < 1) throw Error(ErrorKind::InvalidInput, "factor levels must be positive", l);
    n_ *= levels_[l];
  }
  if (random_.empty()) throw Error(ErrorKind::InvalidInput, "random-effect set S is empty");
  const FactorTuple last = last_bit(levels_.size());
  const auto limit = static_cast<FactorTuple>(tuple_count());
  std::set<FactorTuple> seen;
  for (std::size_t k = 0; k < random_.size(); ++k) {
    const FactorTuple i = random_[k];
    if (i >= limit || (i & last) == 0) {
      throw Error(ErrorKind::InvalidInput, "random-effect tuples must be binary with last coordinate 1", k);
    }
    if (!seen.insert(i).second) throw Error(ErrorKind::InvalidInput, "duplicate random-effect tuple", k);
  }
  if (fixed_ >= limit || (fixed_ & last) == 0) {
    throw Error(ErrorKind::InvalidInput, "fixed-effect tuple must be binary with last coordinate 1");
  }
  if (n_ <= p()) throw Error(ErrorKind::TooFewObservations, "balanced design has n <= p");
}

Index BalancedDesign::r(FactorTuple i) const {
  Index out = 1;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    if (((i >> l) & 1U) == 0) out *= levels_[l];
  }
  return out;
}

std::vector<int> BalancedDesign::tuple_bits(FactorTuple i) const {
  std::vector<int> bits(levels_.size());
  for (std::size_t l = 0; l < levels_.size(); ++l) bits[l] = static_cast<int>((i >> l) & 1U);
  return bits;
}

MatrixXd BalancedDesign::z_block(FactorTuple i) const {
  const Strides st(levels_);
  MatrixXd Z = MatrixXd::Zero(n_, r(i));
  for (Index a = 0; a < n_; ++a) {
    Index col = 0;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      if (((i >> l) & 1U) == 0) col = col * levels_[l] + (a / st.stride[l]) % levels_[l];
    }
    Z(a, col) = 1.0;
  }
  return Z;
}

MatrixXd BalancedDesign::x() const { return z_block(fixed_); }

MixedModel BalancedDesign::to_model() const {
  std::vector<MatrixXd> blocks;
  blocks.reserve(random_.size());
  for (FactorTuple i : random_) blocks.push_back(z_block(i));
  return build_anova(x(), std::move(blocks));
}

std::size_t KronCoefficients::nonzeros() const {
  return static_cast<std::size_t>(std::count_if(coeff_.begin(), coeff_.end(), [](double c) { return c != 0.0; }));
}

KronCoefficients sigma_coefficients(const BalancedDesign& design, const VectorXd& sigma) {
  check_sigma(design, sigma);
  KronCoefficients lambda(design.tuple_count());
  lambda[0] = sigma(0);
  for (std::size_t k = 0; k < design.random().size(); ++k) {
    lambda[design.random()[k]] = sigma(static_cast<Index>(k) + 1);
  }
  return lambda;
}

KronCoefficients tau_coefficients(const BalancedDesign& design, const VectorXd& sigma) {
  check_sigma(design, sigma);
  const std::size_t tuples = design.tuple_count();
  const double n = static_cast<double>(design.n());

  // Eigenvalue of Sigma on the spectral block labelled j.
  std::vector<double> denom(tuples);
  for (FactorTuple j = 0; j < tuples; ++j) {
    double d = sigma(0);
    for (std::size_t k = 0; k < design.random().size(); ++k) {
      const FactorTuple rk = design.random()[k];
      if ((rk & ~j) == 0) d += sigma(static_cast<Index>(k) + 1) * static_cast<double>(design.collapsed(rk));
    }
    denom[j] = d;
  }

  KronCoefficients tau(tuples);
  for (FactorTuple i = 0; i < tuples; ++i) {
    double acc = 0.0;
    // every j <= i, i.e. every submask of i
    for (FactorTuple j = i;; j = (j - 1) & i) {
      const int flips = std::popcount(i & ~j);
      acc += (flips % 2 == 0 ? 1.0 : -1.0) / denom[j];
      if (j == 0) break;
    }
    tau[i] = static_cast<double>(design.r(i)) / n * acc;
  }
  return tau;
}

MatrixXd expand(const BalancedDesign& design, const KronCoefficients& coeffs) {
  if (coeffs.size() != design.tuple_count()) {
    throw Error(ErrorKind::DimensionMismatch, "coefficient table does not match the design");
  }
  const std::size_t factors = design.levels().size();
  // superset sums: f[D] = sum over k containing D of c_k
  std::vector<double> f(coeffs.size());
  for (FactorTuple k = 0; k < coeffs.size(); ++k) f[k] = coeffs[k];
  for (std::size_t l = 0; l < factors; ++l) {
    const FactorTuple bit = FactorTuple{1} << l;
    for (FactorTuple mask = 0; mask < coeffs.size(); ++mask) {
      if ((mask & bit) == 0) f[mask] += f[mask | bit];
    }
  }
  const Strides st(design.levels());
  const Index n = design.n();
  MatrixXd M(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      FactorTuple differ = 0;
      for (std::size_t l = 0; l < factors; ++l) {
        const Index la = (a / st.stride[l]) % design.levels()[l];
        const Index lb = (b / st.stride[l]) % design.levels()[l];
        if (la != lb) differ |= FactorTuple{1} << l;
      }
      M(a, b) = f[differ];
    }
  }
  return M;
}

IdentityCheck projection_identity_check(const BalancedDesign& design, const VectorXd& sigma) {
  const MixedModel model = design.to_model();
  const SigmaEvaluation eval(model, validate_sigma(model, sigma));
  const MatrixXd X = model.X();
  const double ratio = static_cast<double>(design.p()) / static_cast<double>(design.n());
  const MatrixXd centered = MatrixXd::Identity(design.n(), design.n()) - ratio * X * X.transpose();
  const MatrixXd rhs = centered * expand(design, tau_coefficients(design, sigma));
  IdentityCheck out;
  out.residual = (eval.projection() - rhs).cwiseAbs().maxCoeff();
  out.ok = out.residual < kIdentityTol;
  return out;
}

VectorXd blup_kron(const BalancedDesign& design, const VectorXd& sigma, const VectorXd& y,
                   std::size_t effect, Execution exec) {
  if (effect >= design.random().size()) {
    throw Error(ErrorKind::IndexOutOfRange, "random effect index out of range", effect);
  }
  if (y.size() != design.n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  const KronCoefficients tau = tau_coefficients(design, sigma);
  VectorXd u = kernels::apply_expansion(design, tau, y, exec);
  VectorXd fitted(design.n());
  kernels::apply_kron_term(design, design.fixed(), u, fitted, exec);
  u -= (static_cast<double>(design.p()) / static_cast<double>(design.n())) * fitted;
  return sigma(static_cast<Index>(effect) + 1) * kernels::collapse(design, design.random()[effect], u, exec);
}

std::size_t blup_term_bound(const BalancedDesign& design) {
  return 1 + design.random().size() * design.tuple_count();
}

}  // namespace eblup
