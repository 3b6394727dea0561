#include "eblup/simulation.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <limits>

namespace eblup {

namespace {

constexpr double kMaxFailureRate = 0.01;

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments out;
  if (xs.empty()) return out;
  CompensatedSum sum;
  for (double x : xs) sum.add(x);
  const double n = static_cast<double>(xs.size());
  out.mean = sum.value() / n;
  if (xs.size() < 2) return out;
  CompensatedSum ss;
  for (double x : xs) ss.add((x - out.mean) * (x - out.mean));
  out.se = std::sqrt(ss.value() / (n - 1.0) / n);
  return out;
}

double z_stat(double estimate, double target, double se) {
  const double diff = estimate - target;
  if (se > 0.0) return diff / se;
  return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

// No checks: callers have validated sigma and Sigma.
Dataset draw(const MixedModel& model, const VectorXd& g_sd, const VectorXd& r_sd, const VectorXd& mean,
             std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.v.resize(model.r());
  for (Index j = 0; j < model.r(); ++j) d.v(j) = g_sd(j) * normal(gen);
  VectorXd e(model.n());
  for (Index i = 0; i < model.n(); ++i) e(i) = r_sd(i) * normal(gen);
  d.y = mean + model.Z() * d.v + e;
  return d;
}

struct Sampler {
  VectorXd g_sd;
  VectorXd r_sd;
  VectorXd mean;
};

Sampler make_sampler(const MixedModel& model, const VectorXd& sigma_true, const VectorXd& beta_true) {
  if (beta_true.size() != model.p()) throw Error(ErrorKind::DimensionMismatch, "beta length differs from p");
  const SigmaVector sigma = validate_sigma(model, sigma_true);
  assemble_sigma(model, sigma);  // definiteness check
  return {model.g_diag(sigma_true).cwiseSqrt(), model.r_diag(sigma_true).cwiseSqrt(), model.X() * beta_true};
}

std::optional<double> pick(const MseReport& rep, Estimator e) {
  switch (e) {
    case Estimator::Naive: return rep.naive;
    case Estimator::PrasadRao: return rep.prasad_rao;
    case Estimator::SecondOrder: return rep.second_order;
    case Estimator::DataSpecific: return rep.data_specific;
  }
  return std::nullopt;
}

struct MethodOutcome {
  bool failed = false;
  bool converged = false;
  bool boundary = false;
  std::vector<double> sq_err;     // per target
  std::vector<double> estimates;  // target-major, one per configured estimator
  std::vector<double> g3_data;    // per target
  VectorXd score_truth;
};

struct ReplicateOutcome {
  std::vector<double> blup_sq;
  std::vector<MethodOutcome> methods;
};

struct StudyContext {
  const McConfig& config;
  const MixedModel& model;
  const SigmaEvaluation& truth;
  const Sampler& sampler;
  const std::vector<PredictionTarget>& targets;
  const std::vector<VectorXd>& blup_w;
};

ReplicateOutcome run_replicate(const StudyContext& ctx, std::int64_t r) {
  const auto& cfg = ctx.config;
  const Dataset d = draw(ctx.model, ctx.sampler.g_sd, ctx.sampler.r_sd, ctx.sampler.mean,
                         cfg.base_seed + static_cast<std::uint64_t>(r));
  const std::size_t nt = ctx.targets.size();
  std::vector<double> mu(nt);
  ReplicateOutcome out;
  out.blup_sq.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    mu[k] = ctx.targets[k].l.dot(cfg.beta_true) + ctx.targets[k].m.dot(d.v);
    const double err = ctx.blup_w[k].dot(d.y) - mu[k];
    out.blup_sq[k] = err * err;
  }
  out.methods.resize(cfg.methods.size());
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method method = cfg.methods[mi];
    MethodOutcome& mo = out.methods[mi];
    mo.score_truth = score(ctx.truth, d.y, method);
    try {
      const FitResult f = fit(ctx.model, d.y, method);
      mo.converged = f.converged;
      mo.boundary = f.boundary_hit;
      const SigmaEvaluation eval(ctx.model, f.sigma_hat);
      for (std::size_t k = 0; k < nt; ++k) {
        const BlupResult b = blup(eval, d.y, ctx.targets[k]);
        const double err = b.value - mu[k];
        mo.sq_err.push_back(err * err);
        const MseReport rep = mse_estimators(eval, f, d.y, ctx.targets[k], true);
        if (!rep.g3_data) {
          mo.failed = true;
          break;
        }
        mo.g3_data.push_back(*rep.g3_data);
        for (Estimator e : cfg.estimators) {
          const auto value = pick(rep, e);
          if (!value) {
            mo.failed = true;
            break;
          }
          mo.estimates.push_back(*value);
        }
        if (mo.failed) break;
      }
    } catch (const Error&) {
      mo.failed = true;
    }
  }
  return out;
}

void check_config(const McConfig& cfg) {
  if (cfg.replicates < 2) throw Error(ErrorKind::InvalidInput, "replicates must be at least 2");
  if (cfg.methods.empty()) throw Error(ErrorKind::InvalidInput, "no estimation method configured");
  if (cfg.targets.empty()) throw Error(ErrorKind::InvalidInput, "no prediction target configured");
}

}  // namespace

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::Naive: return "naive";
    case Estimator::PrasadRao: return "prasad_rao";
    case Estimator::SecondOrder: return "second_order";
    case Estimator::DataSpecific: return "data_specific";
  }
  return "unknown";
}

std::optional<Estimator> estimator_from_string(std::string_view name) {
  for (Estimator e : {Estimator::Naive, Estimator::PrasadRao, Estimator::SecondOrder, Estimator::DataSpecific}) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

MixedModel build_model(const ModelSpec& spec) {
  auto design_x = [&](Index n) {
    return spec.X.size() == 0 ? MatrixXd(MatrixXd::Ones(n, 1)) : spec.X;
  };
  switch (spec.family) {
    case FamilyKind::FayHerriot:
      return build_fay_herriot(spec.phi, design_x(spec.phi.size()));
    case FamilyKind::NestedError:
      return build_nested_error(spec.groups, design_x(static_cast<Index>(spec.groups.size())));
    case FamilyKind::AnovaVC:
      if (!spec.design) throw Error(ErrorKind::InvalidInput, "anova model needs a balanced design");
      return BalancedDesign(spec.design->levels, spec.design->random, spec.design->fixed).to_model();
  }
  throw Error(ErrorKind::InvalidInput, "unknown family");
}

PredictionTarget resolve_target(const MixedModel& model, const TargetSpec& spec) {
  if (spec.area) {
    if (*spec.area < 1) throw Error(ErrorKind::IndexOutOfRange, "area numbers start at 1");
    return area_target(model, *spec.area - 1);
  }
  validate_target(model, spec.explicit_target);
  return spec.explicit_target;
}

Dataset simulate_dataset(const MixedModel& model, const VectorXd& sigma_true, const VectorXd& beta_true,
                         std::uint64_t seed) {
  const Sampler s = make_sampler(model, sigma_true, beta_true);
  return draw(model, s.g_sd, s.r_sd, s.mean, seed);
}

McReport run_study(const McConfig& config, Execution exec) {
  check_config(config);
  const MixedModel model = build_model(config.model);
  const Sampler sampler = make_sampler(model, config.sigma_true, config.beta_true);
  const SigmaVector sigma_true = validate_sigma(model, config.sigma_true);
  const SigmaEvaluation truth(model, sigma_true);

  McReport report;
  report.family = std::string(to_string(model.kind()));
  report.replicates = config.replicates;
  report.base_seed = config.base_seed;
  report.methods = config.methods;
  report.estimators = config.estimators;
  if (sigma_true.any_on_boundary()) {
    report.warnings.emplace_back("boundary: true sigma lies on the boundary of the parameter space");
  }

  std::vector<PredictionTarget> targets;
  std::vector<VectorXd> blup_w;
  for (const TargetSpec& t : config.targets) {
    targets.push_back(resolve_target(model, t));
    blup_w.push_back(blup_linear_weights(truth, targets.back()));
    report.targets.push_back(targets.back().name);
  }

  const StudyContext ctx{config, model, truth, sampler, targets, blup_w};
  const auto reps = config.replicates;
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(reps));
  if (exec == Execution::Parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(default_thread_count())
    for (std::int64_t r = 0; r < reps; ++r) {
      try {
        outcomes[static_cast<std::size_t>(r)] = run_replicate(ctx, r);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::int64_t r = 0; r < reps; ++r) outcomes[static_cast<std::size_t>(r)] = run_replicate(ctx, r);
  }

  const std::size_t nt = targets.size();
  const std::size_t ne = config.estimators.size();
  for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
    const Method method = config.methods[mi];
    MethodSummary ms;
    ms.method = method;
    std::vector<std::size_t> used;
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
      const MethodOutcome& mo = outcomes[r].methods[mi];
      if (mo.failed) {
        ++ms.failures;
        continue;
      }
      used.push_back(r);
      if (!mo.converged) ++ms.nonconverged;
      if (mo.boundary) ++ms.boundary_hits;
    }
    ms.used = static_cast<std::int64_t>(used.size());
    const double rate = static_cast<double>(ms.failures) / static_cast<double>(reps);
    if (rate > kMaxFailureRate) {
      throw Error(ErrorKind::NoConvergence, "replicate failure rate " + std::to_string(rate) + " exceeds 1% for " +
                                                std::string(to_string(method)));
    }
    if (ms.failures > 0) {
      report.warnings.push_back(std::to_string(ms.failures) + " replicate(s) failed under " +
                                std::string(to_string(method)));
    }
    ms.boundary_rate = static_cast<double>(ms.boundary_hits) / static_cast<double>(ms.used);

    // score at the truth uses every replicate
    const Index s = model.s();
    ms.score_mean.resize(s);
    ms.score_se.resize(s);
    ms.score_z.resize(s);
    ms.score_target = method == Method::REML ? VectorXd(VectorXd::Zero(s)) : VectorXd(-ml_score_bias(truth));
    for (Index i = 0; i < s; ++i) {
      std::vector<double> xs;
      xs.reserve(outcomes.size());
      for (const auto& o : outcomes) xs.push_back(o.methods[mi].score_truth(i));
      const Moments m = moments(xs);
      ms.score_mean(i) = m.mean;
      ms.score_se(i) = m.se;
      ms.score_z(i) = z_stat(m.mean, ms.score_target(i), m.se);
    }
    report.method_summaries.push_back(ms);

    for (std::size_t k = 0; k < nt; ++k) {
      TargetSummary row;
      row.target = targets[k].name;
      row.method = method;
      row.g1 = g1(truth, targets[k]);
      row.g2 = g2(truth, targets[k]);
      row.g3 = g3(truth, targets[k], method);

      std::vector<double> sq, blup_all, gap, g3d;
      for (const auto& o : outcomes) blup_all.push_back(o.blup_sq[k]);
      for (std::size_t r : used) {
        const MethodOutcome& mo = outcomes[r].methods[mi];
        sq.push_back(mo.sq_err[k]);
        gap.push_back(mo.sq_err[k] - outcomes[r].blup_sq[k]);
        g3d.push_back(mo.g3_data[k]);
      }
      const Moments m_sq = moments(sq);
      const Moments m_blup = moments(blup_all);
      const Moments m_gap = moments(gap);
      const Moments m_g3d = moments(g3d);
      row.mse_eblup = m_sq.mean;
      row.mse_eblup_se = m_sq.se;
      row.mse_blup = m_blup.mean;
      row.mse_blup_se = m_blup.se;
      row.mse_gap_se = m_gap.se;
      row.mse_eblup_cv = row.g1 + row.g2 + m_gap.mean;
      row.mse_eblup_cv_se = m_gap.se;
      row.g3_data_mean = m_g3d.mean;
      row.g3_data_se = m_g3d.se;
      row.ordering_ok = m_gap.mean >= -3.0 * m_gap.se;
      if (!row.ordering_ok) {
        report.warnings.push_back("ordering: EBLUP MSE below known-sigma MSE for " + row.target + " under " +
                                  std::string(to_string(method)));
      }

      for (std::size_t e = 0; e < ne; ++e) {
        std::vector<double> vals, diffs, diffs_cv;
        for (std::size_t r : used) {
          const MethodOutcome& mo = outcomes[r].methods[mi];
          const double v = mo.estimates[k * ne + e];
          vals.push_back(v);
          diffs.push_back(v - mo.sq_err[k]);
          diffs_cv.push_back(v - (mo.sq_err[k] - outcomes[r].blup_sq[k]));
        }
        const Moments mv = moments(vals);
        const Moments md = moments(diffs);
        const Moments mc = moments(diffs_cv);
        EstimatorSummary es;
        es.estimator = config.estimators[e];
        es.mean = mv.mean;
        es.se = mv.se;
        es.bias = md.mean;
        es.bias_se = md.se;
        es.relative_bias = row.mse_eblup != 0.0 ? md.mean / row.mse_eblup : 0.0;
        es.bias_cv = mc.mean - row.g1 - row.g2;
        es.bias_cv_se = mc.se;
        row.estimators.push_back(es);
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

ScoreMomentReport score_moment_check(const MixedModel& model, const VectorXd& sigma_true,
                                     const VectorXd& beta_true, std::int64_t replicates,
                                     std::uint64_t seed, Method method) {
  if (replicates < 2) throw Error(ErrorKind::InvalidInput, "replicates must be at least 2");
  const Sampler sampler = make_sampler(model, sigma_true, beta_true);
  const SigmaEvaluation eval(model, validate_sigma(model, sigma_true));
  const Index s = model.s();
  MatrixXd scores(s, replicates);
#pragma omp parallel for schedule(static) num_threads(default_thread_count())
  for (std::int64_t r = 0; r < replicates; ++r) {
    const Dataset d = draw(model, sampler.g_sd, sampler.r_sd, sampler.mean, seed + static_cast<std::uint64_t>(r));
    scores.col(r) = score(eval, d.y, method);
  }

  ScoreMomentReport out;
  out.method = method;
  out.replicates = replicates;
  out.mean_target = method == Method::REML ? VectorXd(VectorXd::Zero(s)) : VectorXd(-ml_score_bias(eval));
  out.cov_target = -expected_information_matrix(eval, Method::REML);
  out.mean.resize(s);
  out.mean_se.resize(s);
  out.mean_z.resize(s);
  for (Index i = 0; i < s; ++i) {
    const std::vector<double> xs(scores.row(i).begin(), scores.row(i).end());
    const Moments m = moments(xs);
    out.mean(i) = m.mean;
    out.mean_se(i) = m.se;
    out.mean_z(i) = z_stat(m.mean, out.mean_target(i), m.se);
    out.max_abs_mean_z = std::max(out.max_abs_mean_z, std::abs(out.mean_z(i)));
  }
  out.cov.resize(s, s);
  out.cov_se.resize(s, s);
  out.cov_z.resize(s, s);
  const double n = static_cast<double>(replicates);
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) {
      std::vector<double> prods(static_cast<std::size_t>(replicates));
      for (std::int64_t r = 0; r < replicates; ++r) {
        prods[static_cast<std::size_t>(r)] = (scores(i, r) - out.mean(i)) * (scores(j, r) - out.mean(j));
      }
      const Moments m = moments(prods);
      out.cov(i, j) = m.mean * n / (n - 1.0);
      out.cov_se(i, j) = m.se;
      out.cov_z(i, j) = z_stat(out.cov(i, j), out.cov_target(i, j), m.se);
      out.max_abs_cov_z = std::max(out.max_abs_cov_z, std::abs(out.cov_z(i, j)));
    }
  }
  return out;
}

QuadraticMomentReport quadratic_moment_check(const MatrixXd& sigma, const MatrixXd& A1, const MatrixXd& A2,
                                             std::int64_t replicates, std::uint64_t seed) {
  const Index k = sigma.rows();
  if (sigma.cols() != k || A1.rows() != k || A1.cols() != k || A2.rows() != k || A2.cols() != k) {
    throw Error(ErrorKind::DimensionMismatch, "sigma, A1 and A2 must share one square dimension");
  }
  if (replicates < 2) throw Error(ErrorKind::InvalidInput, "replicates must be at least 2");
  const Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "sigma is not positive definite");
  const MatrixXd L = llt.matrixL();
  const double e1 = (A1 * sigma).trace();
  const double e2 = (A2 * sigma).trace();

  // draws: columns of u, and the centred quadratic forms
  MatrixXd U(k, replicates);
  VectorXd q1(replicates), q2(replicates);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::int64_t r = 0; r < replicates; ++r) {
    VectorXd z(k);
    for (Index i = 0; i < k; ++i) z(i) = normal(gen);
    U.col(r) = L * z;
    q1(r) = U.col(r).dot(A1 * U.col(r)) - e1;
    q2(r) = U.col(r).dot(A2 * U.col(r)) - e2;
  }

  const MatrixXd S1 = sigma * A1 * sigma;
  const MatrixXd S2 = sigma * A2 * sigma;
  const double t12 = (A1 * sigma * A2 * sigma).trace();

  auto compare = [&](std::string name, Index rows, Index cols, const MatrixXd& target, auto&& sample) {
    MomentComparison c;
    c.name = std::move(name);
    c.estimate.resize(rows, cols);
    c.se.resize(rows, cols);
    c.z.resize(rows, cols);
    c.target = target;
    std::vector<double> xs(static_cast<std::size_t>(replicates));
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        for (std::int64_t r = 0; r < replicates; ++r) xs[static_cast<std::size_t>(r)] = sample(r, i, j);
        const Moments m = moments(xs);
        c.estimate(i, j) = m.mean;
        c.se(i, j) = m.se;
        c.z(i, j) = z_stat(m.mean, target(i, j), m.se);
        c.max_abs_z = std::max(c.max_abs_z, std::abs(c.z(i, j)));
      }
    }
    return c;
  };

  QuadraticMomentReport out;
  out.replicates = replicates;
  out.comparisons.push_back(compare("u q1 u'", k, k, 2.0 * S1,
                                    [&](std::int64_t r, Index i, Index j) { return U(i, r) * q1(r) * U(j, r); }));
  out.comparisons.push_back(compare("u q2 u'", k, k, 2.0 * S2,
                                    [&](std::int64_t r, Index i, Index j) { return U(i, r) * q2(r) * U(j, r); }));
  out.comparisons.push_back(compare("q1 q2", 1, 1, MatrixXd::Constant(1, 1, 2.0 * t12),
                                    [&](std::int64_t r, Index, Index) { return q1(r) * q2(r); }));
  const MatrixXd target3 = 2.0 * t12 * sigma + 4.0 * S1 * A2 * sigma + 4.0 * S2 * A1 * sigma;
  out.comparisons.push_back(compare("u q1 q2 u'", k, k, target3, [&](std::int64_t r, Index i, Index j) {
    return U(i, r) * q1(r) * q2(r) * U(j, r);
  }));
  for (const auto& c : out.comparisons) out.max_abs_z = std::max(out.max_abs_z, c.max_abs_z);
  return out;
}

std::vector<std::string> preset_names() {
  return {"harville-jeske-balanced", "harville-jeske-unbalanced", "harville-jeske-large"};
}

McConfig preset_config(std::string_view name, double gamma) {
  std::vector<Index> sizes;
  if (name == "harville-jeske-balanced") {
    sizes.assign(9, 2);
  } else if (name == "harville-jeske-unbalanced") {
    sizes.assign(8, 1);
    sizes.push_back(10);
  } else if (name == "harville-jeske-large") {
    sizes.assign(20, 1);
    sizes.push_back(50);
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown preset " + std::string(name));
  }
  if (!(gamma >= 0.0)) throw Error(ErrorKind::OutsideParameterSpace, "gamma must be nonnegative", 1);
  McConfig cfg;
  cfg.model.family = FamilyKind::NestedError;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    for (Index j = 0; j < sizes[g]; ++j) cfg.model.groups.push_back(static_cast<Index>(g));
  }
  cfg.sigma_true = (VectorXd(2) << 1.0, gamma).finished();
  cfg.beta_true = VectorXd::Zero(1);
  cfg.targets.push_back(TargetSpec{Index{1}, {}});
  cfg.methods = {Method::REML};
  cfg.replicates = 1000;
  return cfg;
}

McConfig fay_herriot_cycle_config(Index t, std::int64_t replicates, std::uint64_t seed, Method method,
                                  Index targets) {
  static constexpr double kCycle[] = {0.7, 1.0, 1.3};
  McConfig cfg;
  cfg.model.family = FamilyKind::FayHerriot;
  cfg.model.phi.resize(t);
  for (Index i = 0; i < t; ++i) cfg.model.phi(i) = kCycle[i % 3];
  cfg.sigma_true = VectorXd::Ones(1);
  cfg.beta_true = VectorXd::Zero(1);
  for (Index a = 1; a <= std::min(targets, t); ++a) cfg.targets.push_back(TargetSpec{a, {}});
  cfg.methods = {method};
  cfg.replicates = replicates;
  cfg.base_seed = seed;
  return cfg;
}

}  // namespace eblup
