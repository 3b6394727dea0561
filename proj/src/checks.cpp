#include "eblup/checks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "eblup/simulation.hpp"

namespace eblup {

namespace {

double uniform(std::mt19937_64& gen, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

Index uniform_int(std::mt19937_64& gen, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(gen);
}

MatrixXd random_x(std::mt19937_64& gen, Index n, Index p) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd X(n, p);
  X.col(0).setOnes();
  for (Index j = 1; j < p; ++j) {
    for (Index i = 0; i < n; ++i) X(i, j) = normal(gen);
  }
  return X;
}

// group label for each of n rows, every label in [0, groups) used
std::vector<Index> random_grouping(std::mt19937_64& gen, Index n, Index groups) {
  std::vector<Index> g(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = i < groups ? i : uniform_int(gen, 0, groups - 1);
  std::shuffle(g.begin(), g.end(), gen);
  return g;
}

MatrixXd indicator(const std::vector<Index>& g, Index groups) {
  MatrixXd Z = MatrixXd::Zero(static_cast<Index>(g.size()), groups);
  for (std::size_t i = 0; i < g.size(); ++i) Z(static_cast<Index>(i), g[i]) = 1.0;
  return Z;
}

double max_abs(const MatrixXd& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

CheckResult make(std::string suite, std::string name, double worst, double limit, bool le = true) {
  CheckResult c;
  c.suite = std::move(suite);
  c.name = std::move(name);
  c.worst = worst;
  c.limit = limit;
  c.passed = le ? (worst < limit) : (worst > limit);
  c.detail = "worst " + fmt(worst) + (le ? " < " : " > ") + fmt(limit);
  if (!c.passed) c.detail = "FAILED: " + c.detail;
  return c;
}

std::vector<FamilyKind> families(const CheckOptions& o) {
  if (o.family) return {*o.family};
  return {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC};
}

// |fd - analytic| relative to the largest analytic entry
double rel_err(const MatrixXd& fd, const MatrixXd& an) {
  const double scale = std::max(max_abs(an), 1e-12);
  return max_abs(fd - an) / scale;
}

std::vector<CheckResult> derivative_suite(const CheckOptions& o) {
  const int count = o.instances > 0 ? o.instances : 50;
  std::vector<CheckResult> out;
  for (FamilyKind fam : families(o)) {
    for (Method method : {Method::REML, Method::ML}) {
      std::mt19937_64 gen(o.seed + static_cast<std::uint64_t>(fam) * 1000 + static_cast<std::uint64_t>(method));
      double worst1 = 0.0, worst2 = 0.0, worst3 = 0.0;
      for (int it = 0; it < count; ++it) {
        const RandomInstance inst = random_instance(fam, gen);
        const Index s = inst.model.s();
        const SigmaEvaluation base(inst.model, inst.sigma);
        const VectorXd sc = score(base, inst.y, method);
        const MatrixXd H = hessian(base, inst.y, method);
        const ThirdArray T = third_derivatives(base, inst.y, method);
        VectorXd fd1(s);
        MatrixXd fd2(s, s);
        MatrixXd an3(s, s * s), fd3(s, s * s);
        for (Index k = 0; k < s; ++k) {
          const double h = 1e-5 * std::max(1.0, std::abs(inst.sigma(k)));
          VectorXd up = inst.sigma, dn = inst.sigma;
          up(k) += h;
          dn(k) -= h;
          const SigmaEvaluation eu(inst.model, up), ed(inst.model, dn);
          fd1(k) = (loglik(eu, inst.y, method) - loglik(ed, inst.y, method)) / (2 * h);
          fd2.col(k) = (score(eu, inst.y, method) - score(ed, inst.y, method)) / (2 * h);
          const MatrixXd dH = (hessian(eu, inst.y, method) - hessian(ed, inst.y, method)) / (2 * h);
          for (Index i = 0; i < s; ++i) {
            for (Index j = 0; j < s; ++j) {
              fd3(i, j * s + k) = dH(i, j);
              an3(i, j * s + k) = T(i, j, k);
            }
          }
        }
        worst1 = std::max(worst1, rel_err(fd1, sc));
        worst2 = std::max(worst2, rel_err(fd2, H));
        worst3 = std::max(worst3, rel_err(fd3, an3));
      }
      const std::string tag = std::string(to_string(fam)) + " " + std::string(to_string(method));
      out.push_back(make("derivatives", "score vs finite differences (" + tag + ")", worst1, 1e-5));
      out.push_back(make("derivatives", "hessian vs finite differences (" + tag + ")", worst2, 1e-4));
      out.push_back(make("derivatives", "third derivatives vs finite differences (" + tag + ")", worst3, 1e-3));
    }
  }
  return out;
}

std::vector<CheckResult> kron_suite(const CheckOptions& o) {
  const int count = o.instances > 0 ? o.instances : 200;
  std::mt19937_64 gen(o.seed);
  double inv = 0.0, blup_gap = 0.0, kernel_gap = 0.0;
  for (int it = 0; it < count; ++it) {
    const BalancedDesign d = random_balanced_design(gen, o.max_factors);
    const VectorXd sigma = random_balanced_sigma(d, gen);
    const MatrixXd S = expand(d, sigma_coefficients(d, sigma));
    const MatrixXd Sinv = expand(d, tau_coefficients(d, sigma));
    inv = std::max(inv, max_abs(S * Sinv - MatrixXd::Identity(d.n(), d.n())));

    const MixedModel model = d.to_model();
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd y(d.n());
    for (Index i = 0; i < d.n(); ++i) y(i) = normal(gen);
    const SigmaEvaluation eval(model, sigma);
    PredictionTarget any{"", VectorXd::Zero(model.p()), VectorXd::Zero(model.r())};
    const VectorXd dense = blup(eval, y, any).v_tilde;
    Index offset = 0;
    for (std::size_t e = 0; e < d.random().size(); ++e) {
      const Index len = d.r(d.random()[e]);
      const VectorXd par = blup_kron(d, sigma, y, e, Execution::Parallel);
      const VectorXd ser = blup_kron(d, sigma, y, e, Execution::Serial);
      const double scale = std::max(1.0, max_abs(dense.segment(offset, len)));
      blup_gap = std::max(blup_gap, max_abs(par - dense.segment(offset, len)) / scale);
      kernel_gap = std::max(kernel_gap, max_abs(par - ser) / scale);
      offset += len;
    }
  }
  return {make("kron", "Sigma times expand(tau) equals I", inv, 1e-10),
          make("kron", "Kronecker BLUP matches dense BLUP", blup_gap, 1e-10),
          make("kron", "serial and parallel kernels agree", kernel_gap, 1e-12)};
}

// Every balanced design with w <= 2, levels in {2, 3} and |S| <= 3, plus
// random designs up to w = max_w.
std::vector<BalancedDesign> supported_designs(std::mt19937_64& gen, int max_w, int random_count) {
  std::vector<BalancedDesign> out;
  for (int w = 1; w <= std::min(2, max_w); ++w) {
    const std::size_t factors = static_cast<std::size_t>(w) + 1;
    const FactorTuple last = FactorTuple{1} << w;
    std::vector<FactorTuple> tuples;
    for (FactorTuple t = 0; t < (FactorTuple{1} << factors); ++t) {
      if (t & last) tuples.push_back(t);
    }
    const std::size_t m = tuples.size();
    for (std::uint32_t lv = 0; lv < (1U << factors); ++lv) {
      std::vector<Index> levels(factors);
      for (std::size_t l = 0; l < factors; ++l) levels[l] = ((lv >> l) & 1U) ? 3 : 2;
      for (std::uint32_t subset = 1; subset < (1U << m); ++subset) {
        if (std::popcount(subset) > 3) continue;
        std::vector<FactorTuple> S;
        for (std::size_t b = 0; b < m; ++b) {
          if ((subset >> b) & 1U) S.push_back(tuples[b]);
        }
        for (FactorTuple fixed : tuples) out.emplace_back(levels, S, fixed);
      }
    }
  }
  for (int i = 0; i < random_count; ++i) out.push_back(random_balanced_design(gen, max_w));
  return out;
}

std::vector<CheckResult> projection_suite(const CheckOptions& o) {
  const int count = o.instances > 0 ? o.instances : 50;
  std::vector<CheckResult> out;
  for (FamilyKind fam : families(o)) {
    std::mt19937_64 gen(o.seed + static_cast<std::uint64_t>(fam));
    double px = 0.0, psp = 0.0, sym = 0.0;
    for (int it = 0; it < count; ++it) {
      const RandomInstance inst = random_instance(fam, gen);
      const SigmaEvaluation eval(inst.model, inst.sigma);
      const MatrixXd& P = eval.projection();
      const double scale = max_abs(eval.sigma());
      px = std::max(px, max_abs(P * inst.model.X()) * scale);
      psp = std::max(psp, max_abs(P * eval.sigma() * P - P) * scale);
      sym = std::max(sym, max_abs(P - P.transpose()) * scale);
    }
    const std::string tag = " (" + std::string(to_string(fam)) + ")";
    out.push_back(make("projection", "PX = 0" + tag, px, 1e-12));
    out.push_back(make("projection", "P Sigma P = P" + tag, psp, 1e-12));
    out.push_back(make("projection", "P symmetric" + tag, sym, 1e-12));
  }
  if (!o.family || *o.family == FamilyKind::AnovaVC) {
    std::mt19937_64 gen(o.seed);
    double worst = 0.0;
    for (const BalancedDesign& d : supported_designs(gen, o.max_factors, 100)) {
      worst = std::max(worst, projection_identity_check(d, random_balanced_sigma(d, gen)).residual);
    }
    out.push_back(make("projection", "balanced identity P = (I - (p/n)XX') Sigma^{-1}", worst, 1e-10));
  }
  return out;
}

std::vector<CheckResult> moment_suite(const CheckOptions& o) {
  std::vector<CheckResult> out;
  std::mt19937_64 gen(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int count = o.instances > 0 ? o.instances : 5;
  double worst = 0.0;
  for (int it = 0; it < count; ++it) {
    MatrixXd B(4, 4), A1(4, 4), A2(4, 4);
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < 4; ++j) {
        B(i, j) = normal(gen);
        A1(i, j) = normal(gen);
        A2(i, j) = normal(gen);
      }
    }
    const MatrixXd sigma = B * B.transpose() + MatrixXd::Identity(4, 4);
    const MatrixXd S1 = 0.5 * (A1 + A1.transpose());
    const MatrixXd S2 = 0.5 * (A2 + A2.transpose());
    worst = std::max(worst, quadratic_moment_check(sigma, S1, S2, 10000, gen()).max_abs_z);
  }
  out.push_back(make("moments", "normal quadratic-form moment identities |z|", worst, 5.0));

  VectorXd phi(20);
  for (Index i = 0; i < 20; ++i) phi(i) = uniform(gen, 0.5, 2.0);
  const MixedModel fh = build_fay_herriot(phi, MatrixXd::Ones(20, 1));
  const VectorXd sigma = VectorXd::Ones(1);
  const VectorXd beta = VectorXd::Zero(1);
  const ScoreMomentReport reml = score_moment_check(fh, sigma, beta, 2000, o.seed, Method::REML);
  const ScoreMomentReport ml = score_moment_check(fh, sigma, beta, 2000, o.seed, Method::ML);
  out.push_back(make("moments", "REML score mean |z| against 0", reml.max_abs_mean_z, 3.0));
  out.push_back(make("moments", "ML score mean |z| against -g_M0", ml.max_abs_mean_z, 3.0));
  out.push_back(make("moments", "REML score covariance |z| against -A_R", reml.max_abs_cov_z, 5.0));
  return out;
}

std::vector<CheckResult> blup_suite(const CheckOptions& o) {
  const int count = o.instances > 0 ? o.instances : 20;
  std::mt19937_64 gen(o.seed);
  const FamilyKind fams[] = {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC};
  double wgap = 0.0, mgap = 0.0;
  for (int it = 0; it < count; ++it) {
    const RandomInstance inst = random_instance(fams[it % 3], gen, 6);
    const PredictionTarget target = random_target(inst.model, gen);
    const BlupOracle oracle = blup_oracle(inst.model, inst.sigma, target);
    const SigmaEvaluation eval(inst.model, inst.sigma);
    const VectorXd w = blup_linear_weights(eval, target);
    wgap = std::max(wgap, max_abs(w - oracle.weights) / std::max(1.0, max_abs(oracle.weights)));
    const double g12 = g1(eval, target) + g2(eval, target);
    mgap = std::max(mgap, std::abs(g12 - oracle.min_mse) / std::max(1.0, std::abs(oracle.min_mse)));
  }
  return {make("blup", "BLUP weights match constrained minimum-MSE oracle", wgap, 1e-8),
          make("blup", "g1 + g2 matches oracle minimum MSE", mgap, 1e-8)};
}

}  // namespace

std::vector<std::string> check_suite_names() { return {"derivatives", "kron", "projection", "moments", "blup"}; }

std::vector<CheckResult> run_check_suite(std::string_view suite, const CheckOptions& options) {
  if (suite == "derivatives") return derivative_suite(options);
  if (suite == "kron") return kron_suite(options);
  if (suite == "projection") return projection_suite(options);
  if (suite == "moments") return moment_suite(options);
  if (suite == "blup") return blup_suite(options);
  throw Error(ErrorKind::InvalidInput, "unknown check suite " + std::string(suite));
}

RandomInstance random_instance(FamilyKind family, std::mt19937_64& gen, Index max_n) {
  for (;;) {
    try {
      std::optional<MixedModel> model;
      VectorXd sigma;
      switch (family) {
        case FamilyKind::FayHerriot: {
          const Index t = uniform_int(gen, 3, std::max<Index>(3, max_n));
          const Index p = uniform_int(gen, 1, std::min<Index>(2, t - 1));
          VectorXd phi(t);
          for (Index i = 0; i < t; ++i) phi(i) = uniform(gen, 0.5, 2.0);
          model.emplace(build_fay_herriot(phi, random_x(gen, t, p)));
          sigma = VectorXd::Constant(1, uniform(gen, 0.5, 2.0));
          break;
        }
        case FamilyKind::NestedError: {
          const Index n = uniform_int(gen, 3, std::max<Index>(3, max_n));
          const Index t = uniform_int(gen, 1, std::max<Index>(1, n / 2));
          const Index p = uniform_int(gen, 1, std::min<Index>(2, n - 1));
          const std::vector<Index> g = random_grouping(gen, n, t);
          model.emplace(build_nested_error(g, random_x(gen, n, p)));
          sigma = VectorXd(2);
          sigma << uniform(gen, 0.5, 2.0), uniform(gen, 0.5, 2.0);
          break;
        }
        case FamilyKind::AnovaVC: {
          const Index n = uniform_int(gen, 4, std::max<Index>(4, max_n));
          const Index q = uniform_int(gen, 1, 2);
          const Index p = uniform_int(gen, 1, std::min<Index>(2, n - 1));
          std::vector<MatrixXd> blocks;
          for (Index b = 0; b < q; ++b) {
            const Index groups = uniform_int(gen, 2, std::max<Index>(2, n / 2));
            blocks.push_back(indicator(random_grouping(gen, n, groups), groups));
          }
          model.emplace(build_anova(random_x(gen, n, p), std::move(blocks)));
          sigma = VectorXd(q + 1);
          for (Index i = 0; i <= q; ++i) sigma(i) = uniform(gen, 0.5, 2.0);
          break;
        }
      }
      const VectorXd beta = VectorXd::NullaryExpr(model->p(), [&] { return uniform(gen, -1.0, 1.0); });
      const Dataset d = simulate_dataset(*model, sigma, beta, gen());
      return RandomInstance{std::move(*model), sigma, beta, d.y};
    } catch (const Error& e) {
      // random X can be rank deficient on tiny n; draw again
      if (e.kind() != ErrorKind::RankDeficientX) throw;
    }
  }
}

PredictionTarget random_target(const MixedModel& model, std::mt19937_64& gen) {
  PredictionTarget t;
  t.name = "random";
  t.l = VectorXd::NullaryExpr(model.p(), [&] { return uniform(gen, -1.0, 1.0); });
  t.m = VectorXd::NullaryExpr(model.r(), [&] { return uniform(gen, -1.0, 1.0); });
  return t;
}

BalancedDesign random_balanced_design(std::mt19937_64& gen, int max_w) {
  const int w = static_cast<int>(uniform_int(gen, 1, std::max(1, max_w)));
  const std::size_t factors = static_cast<std::size_t>(w) + 1;
  std::vector<Index> levels(factors);
  for (auto& l : levels) l = uniform_int(gen, 2, 4);
  const FactorTuple last = FactorTuple{1} << w;
  std::vector<FactorTuple> tuples;
  for (FactorTuple t = 0; t < (FactorTuple{1} << factors); ++t) {
    if (t & last) tuples.push_back(t);
  }
  std::shuffle(tuples.begin(), tuples.end(), gen);
  const auto size = static_cast<std::size_t>(uniform_int(gen, 1, std::min<Index>(3, static_cast<Index>(tuples.size()))));
  std::vector<FactorTuple> S(tuples.begin(), tuples.begin() + static_cast<std::ptrdiff_t>(size));
  const FactorTuple fixed = tuples[static_cast<std::size_t>(uniform_int(gen, 0, static_cast<Index>(tuples.size()) - 1))];
  return BalancedDesign(levels, S, fixed);
}

VectorXd random_balanced_sigma(const BalancedDesign& design, std::mt19937_64& gen) {
  VectorXd sigma(static_cast<Index>(design.random().size()) + 1);
  sigma(0) = uniform(gen, 0.5, 2.0);
  for (Index k = 1; k < sigma.size(); ++k) sigma(k) = uniform(gen, 0.0, 2.0);
  return sigma;
}

BlupOracle blup_oracle(const MixedModel& model, const VectorXd& sigma, const PredictionTarget& target) {
  const Index n = model.n();
  const Index p = model.p();
  const MatrixXd S = model.sigma_matrix(sigma);
  const MatrixXd G = model.g_matrix(sigma);
  const VectorXd cov_y_mu = model.Z() * (G * target.m);
  MatrixXd K = MatrixXd::Zero(n + p, n + p);
  K.topLeftCorner(n, n) = 2.0 * S;
  K.topRightCorner(n, p) = model.X();
  K.bottomLeftCorner(p, n) = model.X().transpose();
  VectorXd rhs(n + p);
  rhs << 2.0 * cov_y_mu, target.l;
  const VectorXd sol = K.fullPivLu().solve(rhs);
  BlupOracle out;
  out.weights = sol.head(n);
  out.min_mse = out.weights.dot(S * out.weights) - 2.0 * out.weights.dot(cov_y_mu) + target.m.dot(G * target.m);
  return out;
}

}  // namespace eblup
