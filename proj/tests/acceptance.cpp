// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "eblup/checks.hpp"
#include "eblup/io.hpp"
#include "eblup/simulation.hpp"

using namespace eblup;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

const CheckResult& find(const std::vector<CheckResult>& rs, std::string_view name) {
  for (const CheckResult& r : rs)
    if (r.name.find(name) != std::string::npos) return r;
  throw std::runtime_error("missing check " + std::string(name));
}

Outcome from_checks(const std::vector<const CheckResult*>& rs) {
  Outcome o{true, ""};
  for (const CheckResult* r : rs) {
    o.passed = o.passed && r->passed;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += fmt("%s %.3g < %.3g", r->name.c_str(), r->worst, r->limit);
  }
  return o;
}

Outcome all_of(const std::vector<CheckResult>& rs) {
  std::vector<const CheckResult*> ptrs;
  for (const CheckResult& r : rs) ptrs.push_back(&r);
  Outcome o = from_checks(ptrs);
  double worst = 0.0;
  for (const CheckResult& r : rs) worst = std::max(worst, r.worst / r.limit);
  o.detail = fmt("%zu checks, worst value/limit %.3g", rs.size(), worst);
  return o;
}

const EstimatorSummary& estimator(const TargetSummary& t, Estimator e) {
  for (const EstimatorSummary& s : t.estimators)
    if (s.estimator == e) return s;
  throw std::runtime_error("missing estimator");
}

McReport fh_study(Method method) { return run_study(fay_herriot_cycle_config(100, 5000, 12345, method, 5)); }

Outcome criterion6(const McReport& r) {
  Outcome o{true, ""};
  for (const TargetSummary& t : r.rows) {
    const double approx = t.g1 + t.g2 + t.g3;
    const double rel = std::abs(t.mse_eblup - approx) / approx;
    o.passed = o.passed && rel < 0.10;
    o.detail += fmt("%s emp %.4f (se %.4f, cv %.4f se %.4f) vs %.4f rel %.3f; ", t.target.c_str(), t.mse_eblup,
                    t.mse_eblup_se, t.mse_eblup_cv, t.mse_eblup_cv_se, approx, rel);
  }
  return o;
}

Outcome criterion7(const McReport& r) {
  Outcome o{true, ""};
  for (const TargetSummary& t : r.rows) {
    const EstimatorSummary& naive = estimator(t, Estimator::Naive);
    const EstimatorSummary& so = estimator(t, Estimator::SecondOrder);
    const bool under = naive.mean < t.mse_eblup;
    const bool closer = std::abs(so.bias_cv) < std::abs(naive.bias_cv);
    const double z3 = std::abs(t.g3_data_mean - t.g3) / t.g3_data_se;
    o.passed = o.passed && under && closer && z3 < 3.0;
    o.detail += fmt("%s naive %.4f < emp %.4f; |so-emp| %.5f vs |naive-emp| %.5f (raw %.5f vs %.5f); g3 z %.2f; ",
                    t.target.c_str(), naive.mean, t.mse_eblup, std::abs(so.bias_cv), std::abs(naive.bias_cv),
                    std::abs(so.bias), std::abs(naive.bias), z3);
  }
  return o;
}

Outcome criterion8(const McReport& r) {
  Outcome o{true, ""};
  for (const TargetSummary& t : r.rows) {
    const EstimatorSummary& pr = estimator(t, Estimator::PrasadRao);
    const EstimatorSummary& so = estimator(t, Estimator::SecondOrder);
    const double se = std::hypot(pr.bias_cv_se, so.bias_cv_se);
    const bool ok = std::abs(so.bias_cv) <= std::abs(pr.bias_cv) + 2 * se;
    o.passed = o.passed && ok;
    o.detail += fmt("%s |so-emp| %.5f <= |pr-emp| %.5f + 2*%.5f (raw %.5f vs %.5f); ", t.target.c_str(),
                    std::abs(so.bias_cv), std::abs(pr.bias_cv), se, std::abs(so.bias), std::abs(pr.bias));
  }
  return o;
}

Outcome criterion9() {
  std::mt19937_64 gen(909);
  double cancel = 0.0, reml_sum = 0.0, ml_sum = 0.0;
  int reml_checked = 0, ml_checked = 0;
  const FamilyKind fams[] = {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC};
  for (int it = 0; it < 50; ++it) {
    const RandomInstance inst = random_instance(fams[it % 3], gen);
    const PredictionTarget t = random_target(inst.model, gen);
    const SigmaEvaluation eval(inst.model, inst.sigma);
    if (information_is_singular(eval, expected_information_matrix(eval, Method::REML))) continue;
    ++reml_checked;
    const DeltaTerms r = delta_terms(eval, t, Method::REML);
    const double g3r = g3(eval, t, Method::REML);
    cancel = std::max(cancel, std::abs(r.delta1 + r.delta3) / std::max(std::abs(r.delta1), 1e-300));
    reml_sum = std::max(reml_sum, std::abs(r.sum() + g3r) / std::max(g3r, 1e-300));
    // ML terms need an invertible ML information
    if (information_is_singular(eval, expected_information_matrix(eval, Method::ML))) continue;
    ++ml_checked;
    const DeltaTerms m = delta_terms(eval, t, Method::ML);
    const double g3m = g3(eval, t, Method::ML);
    const double g10v = g10(eval, t);
    ml_sum = std::max(ml_sum, std::abs(m.sum() - (g10v - g3m)) / std::max(std::abs(g10v - g3m), 1e-300));
  }
  return {cancel < 1e-12 && reml_sum < 1e-12 && ml_sum < 1e-12 && reml_checked > 0 && ml_checked > 0,
          fmt("delta1+delta3 rel %.3g, REML sum+g3 rel %.3g, ML sum-(g10-g3) rel %.3g over %d/%d/50 REML/ML instances",
              cancel, reml_sum, ml_sum, reml_checked, ml_checked)};
}

Outcome criterion10() {
  double worst = 0.0;
  std::mt19937_64 gen(1010);
  const std::pair<Index, Index> shapes[] = {{4, 2}, {6, 3}, {9, 2}, {5, 5}};
  for (auto [t, k] : shapes) {
    const BalancedDesign design({t, k}, {0b10}, 0b11);
    const MixedModel anova = design.to_model();
    std::vector<Index> groups;
    for (Index g = 0; g < t; ++g)
      for (Index j = 0; j < k; ++j) groups.push_back(g);
    const MixedModel ne = build_nested_error(groups, MatrixXd::Ones(t * k, 1));
    for (int rep = 0; rep < 5; ++rep) {
      const Dataset d = simulate_dataset(ne, VectorXd{{1.0, 0.5}}, VectorXd{{1.0}}, gen());
      for (Method method : {Method::REML, Method::ML}) {
        const FitResult fa = fit(anova, d.y, method);
        const FitResult fn = fit(ne, d.y, method);
        const VectorXd sa = fa.sigma_hat.values(), sn = fn.sigma_hat.values();
        worst = std::max(worst, max_abs(sa - sn));
        worst = std::max(worst, max_abs(fa.beta_hat - fn.beta_hat));
        const SigmaEvaluation ea(anova, sa), en(ne, sn);
        for (Index area = 0; area < t; ++area) {
          const PredictionTarget ta = area_target(anova, area), tn = area_target(ne, area);
          worst = std::max(worst, max_abs(ta.l - tn.l) + max_abs(ta.m - tn.m));
          worst = std::max(worst, std::abs(blup(ea, d.y, ta).value - blup(en, d.y, tn).value));
          worst = std::max(worst, max_abs(blup(ea, d.y, ta).v_tilde - blup(en, d.y, tn).v_tilde));
          worst = std::max(worst, std::abs(g1(ea, ta) - g1(en, tn)));
          worst = std::max(worst, std::abs(g2(ea, ta) - g2(en, tn)));
          if (fa.information && fn.information) {
            worst = std::max(worst, std::abs(g3(ea, ta, method) - g3(en, tn, method)));
            worst = std::max(worst, std::abs(g3_data(ea, d.y, ta, method) - g3_data(en, d.y, tn, method)));
            if (method == Method::ML) worst = std::max(worst, std::abs(g10(ea, ta) - g10(en, tn)));
          }
        }
      }
    }
  }
  return {worst < 1e-10, fmt("max difference %.3g < 1e-10", worst)};
}

Outcome criterion12() {
  const auto dir = std::filesystem::temp_directory_path() / "eblup_acceptance_determinism";
  std::filesystem::create_directories(dir);
  std::vector<std::string> csv, json;
  const int threads[] = {1, 1, 2, 4};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::string prefix = (dir / ("run" + std::to_string(k))).string();
    std::ostringstream out, err;
    const int code = cli::run({"eblup", "simulate", "--preset", "harville-jeske-unbalanced", "--replicates", "300",
                               "--seed", "7", "--threads", std::to_string(threads[k]), "--output", prefix},
                              out, err);
    if (code != 0) return {false, "simulate exited " + std::to_string(code) + ": " + err.str()};
    csv.push_back(read_text(prefix + ".csv"));
    json.push_back(read_text(prefix + ".json"));
  }
  std::filesystem::remove_all(dir);
  bool same = true;
  for (std::size_t k = 1; k < csv.size(); ++k) same = same && csv[k] == csv[0] && json[k] == json[0];
  return {same, fmt("4 runs (threads 1,1,2,4): CSV %zu bytes, JSON %zu bytes, %s", csv[0].size(), json[0].size(),
                    same ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = o.passed && secs < limit_s;
    failures += ok ? 0 : 1;
    std::printf("%s %2d %s [%.1fs / %.0fs] %s\n", ok ? "PASS" : "FAIL", id, title, secs, limit_s, o.detail.c_str());
    std::fflush(stdout);
  };

  CheckOptions opts;
  report(1, "Kronecker inverse on 200 random balanced designs", 10, [&] {
    const auto rs = run_check_suite("kron", opts);
    return from_checks({&find(rs, "expand(tau)")});
  });
  report(2, "derivative stack vs finite differences", 30, [&] { return all_of(run_check_suite("derivatives", opts)); });
  report(3, "projection identities", 10, [&] { return all_of(run_check_suite("projection", opts)); });
  std::vector<CheckResult> moments;
  report(4, "score moments, fay-herriot t=20", 60, [&] {
    moments = run_check_suite("moments", opts);
    return from_checks({&find(moments, "REML score mean"), &find(moments, "ML score mean |z| against -g_M0"),
                        &find(moments, "REML score covariance")});
  });
  report(5, "BLUP optimality and g1+g2 minimum MSE", 5, [&] { return all_of(run_check_suite("blup", opts)); });

  McReport reml, ml;
  double reml_secs = 0.0;
  report(6, "second-order MSE approximation, fay-herriot t=100 REML", 300, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    reml = fh_study(Method::REML);
    reml_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return criterion6(reml);
  });
  report(7, "estimator bias ordering (shares the study of #6)", 300 - reml_secs, [&] { return criterion7(reml); });
  report(8, "ML correction, fay-herriot t=100 ML", 300, [&] {
    ml = fh_study(Method::ML);
    return criterion8(ml);
  });
  report(9, "delta cancellation identities", 5, criterion9);
  report(10, "nested-error vs one-way balanced anova", 5, criterion10);
  report(11, "quadratic-form moment identities", 30, [&] {
    if (moments.empty()) moments = run_check_suite("moments", opts);
    return from_checks({&find(moments, "quadratic-form")});
  });
  report(12, "simulate determinism across runs and thread counts", 60, criterion12);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
