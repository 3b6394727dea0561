#include "eblup/estimation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace eblup {

namespace {

constexpr int kMaxHalvings = 30;
constexpr double kBoundaryTol = 1e-12;
// Relative loglikelihood change below which two iterates count as level.
constexpr double kFlatTol = 1e-13;
// Fraction of the first-order predicted increase a step must realise.
constexpr double kSufficientIncrease = 0.25;

void check_response(const MixedModel& model, const VectorXd& y) {
  if (y.size() != model.n()) throw Error(ErrorKind::DimensionMismatch, "response length differs from n");
  if (!y.allFinite()) throw Error(ErrorKind::InvalidInput, "response has non-finite entries");
}

double lower_bound(const MixedModel& model, Index i, const FitOptions& options) {
  return model.strictly_positive(i) ? 0.0 : std::max(0.0, options.clamp_eps);
}

bool held_at_boundary(const MixedModel& model, const VectorXd& sigma, const VectorXd& score, Index i,
                      const FitOptions& options) {
  if (model.strictly_positive(i)) return false;
  return sigma(i) <= lower_bound(model, i, options) + kBoundaryTol && score(i) <= 0.0;
}

// Solves info * step = score on the free components. Falls back to a
// diagonally scaled ascent direction when the free block of the information
// is singular, which happens e.g. for ML on very small Fay-Herriot data.
VectorXd scoring_direction(const SigmaEvaluation& eval, const MatrixXd& A, const VectorXd& g,
                           const std::vector<bool>& free) {
  const Index s = g.size();
  std::vector<Index> idx;
  for (Index i = 0; i < s; ++i) {
    if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
  }
  VectorXd step = VectorXd::Zero(s);
  if (idx.empty()) return step;
  const auto k = static_cast<Index>(idx.size());
  MatrixXd info(k, k);
  VectorXd rhs(k);
  VectorXd scale(k);
  for (Index a = 0; a < k; ++a) {
    rhs(a) = g(idx[static_cast<std::size_t>(a)]);
    scale(a) = 0.5 * eval.trace2(Method::ML, idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(a)]);
    for (Index b = 0; b < k; ++b) info(a, b) = -A(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(info, Eigen::EigenvaluesOnly);
  const bool regular = eig.eigenvalues().minCoeff() > 1e-10 * scale.maxCoeff();
  VectorXd free_step = regular ? VectorXd(info.llt().solve(rhs)) : VectorXd(rhs.cwiseQuotient(scale));
  for (Index a = 0; a < k; ++a) step(idx[static_cast<std::size_t>(a)]) = free_step(a);
  return step;
}

// Empty when -H is not positive definite on the free coordinates.
VectorXd newton_direction(const SigmaEvaluation& eval, const MatrixXd& H, const VectorXd& g,
                          const std::vector<bool>& free) {
  const Index s = g.size();
  std::vector<Index> idx;
  for (Index i = 0; i < s; ++i) {
    if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
  }
  VectorXd step = VectorXd::Zero(s);
  if (idx.empty()) return step;
  const auto k = static_cast<Index>(idx.size());
  MatrixXd info(k, k);
  VectorXd rhs(k);
  double scale = 0.0;
  for (Index a = 0; a < k; ++a) {
    const Index i = idx[static_cast<std::size_t>(a)];
    rhs(a) = g(i);
    scale = std::max(scale, 0.5 * eval.trace2(Method::ML, i, i));
    for (Index b = 0; b < k; ++b) info(a, b) = -H(i, idx[static_cast<std::size_t>(b)]);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(info, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 1e-8 * scale)) return {};
  const VectorXd free_step = info.llt().solve(rhs);
  for (Index a = 0; a < k; ++a) step(idx[static_cast<std::size_t>(a)]) = free_step(a);
  return step;
}

}  // namespace

GlsResult gls_beta(const MixedModel& model, const SigmaVector& sigma, const VectorXd& y) {
  check_response(model, y);
  SigmaEvaluation eval(model, sigma);
  return {eval.gls_beta(y), eval.gram_inv()};
}

VectorXd starting_values(const MixedModel& model, const VectorXd& y, Method /*method*/) {
  check_response(model, y);
  const MatrixXd& X = model.X();
  const VectorXd coef = X.colPivHouseholderQr().solve(y);
  const VectorXd resid = y - X * coef;
  const double dof = static_cast<double>(model.n() - model.p());
  const double resid_var = resid.squaredNorm() / dof;
  const Index s = model.s();

  if (model.kind() == FamilyKind::FayHerriot) {
    const double mean_phi = model.sigma_offset_diag().mean();
    return VectorXd::Constant(1, std::max(0.0, resid_var - mean_phi));
  }

  double total = resid_var;
  if (!(total > 0.0)) {
    const double mean = y.mean();
    total = (y.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(model.n() - 1));
  }
  const double floor = total > 0.0 ? 1e-4 * total : 1e-4;
  return VectorXd::Constant(s, std::max(resid_var / static_cast<double>(s), floor));
}

FitResult fit(const MixedModel& model, const VectorXd& y, Method method, const FitOptions& options) {
  check_response(model, y);
  const Index s = model.s();
  VectorXd sigma = options.start ? *options.start : starting_values(model, y, method);
  validate_sigma(model, sigma);

  auto eval = std::make_unique<SigmaEvaluation>(model, sigma);
  double ll = loglik(*eval, y, method);

  FitResult result;
  result.method = method;
  result.loglik_path.push_back(ll);

  bool converged = false;
  int iterations = 0;
  double norm = std::numeric_limits<double>::infinity();
  VectorXd g;

  while (true) {
    g = score(*eval, y, method);
    const VectorXd d = effective_dims(*eval);
    std::vector<bool> free(static_cast<std::size_t>(s));
    norm = 0.0;
    for (Index i = 0; i < s; ++i) {
      const bool held = held_at_boundary(model, sigma, g, i, options);
      free[static_cast<std::size_t>(i)] = !held;
      if (!held) norm = std::max(norm, std::abs(g(i)) / (1.0 + d(i) * d(i)));
    }
    if (norm <= options.tol) {
      converged = true;
      break;
    }
    if (iterations >= options.max_iter) break;

    // Newton when the observed curvature is usable, scoring otherwise
    VectorXd step = newton_direction(*eval, hessian(*eval, y, method), g, free);
    if (step.size() == 0) step = scoring_direction(*eval, expected_information_matrix(*eval, method), g, free);
    const double predicted = g.dot(step);

    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= kMaxHalvings && !accepted; ++h, t *= 0.5) {
      VectorXd trial = sigma + t * step;
      bool admissible = true;
      for (Index i = 0; i < s; ++i) {
        if (model.strictly_positive(i)) {
          if (!(trial(i) > 0.0)) admissible = false;
        } else {
          trial(i) = std::max(trial(i), lower_bound(model, i, options));
        }
      }
      if (!admissible) continue;
      std::unique_ptr<SigmaEvaluation> next;
      try {
        next = std::make_unique<SigmaEvaluation>(model, trial);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::NotPositiveDefinite || e.kind() == ErrorKind::SingularGram) continue;
        throw;
      }
      const double ll_new = loglik(*next, y, method);
      const bool level = ll_new >= ll && ll_new - ll <= kFlatTol * (1.0 + std::abs(ll)) &&
                         std::abs(t * predicted) <= 1e3 * kFlatTol * (1.0 + std::abs(ll));
      if (ll_new >= ll + kSufficientIncrease * t * predicted || level) {
        sigma = trial;
        eval = std::move(next);
        ll = ll_new;
        accepted = true;
      }
    }
    if (!accepted) break;
    ++iterations;
    result.loglik_path.push_back(ll);
  }

  result.sigma_hat = validate_sigma(model, sigma);
  result.iterations = iterations;
  result.final_score_norm = norm;
  result.score = g;
  result.converged = converged;
  result.loglik = ll;
  for (Index i = 0; i < s; ++i) {
    if (!model.strictly_positive(i) && sigma(i) <= lower_bound(model, i, options) + kBoundaryTol) {
      result.boundary_hit = true;
    }
  }
  result.beta_hat = eval->gls_beta(y);
  result.beta_cov = eval->gram_inv();
  result.effective_dims = effective_dims(*eval);
  const MatrixXd A = expected_information_matrix(*eval, method);
  if (!information_is_singular(*eval, A)) {
    result.information = InformationMatrix{A, -A, method};
  }
  return result;
}

}  // namespace eblup
