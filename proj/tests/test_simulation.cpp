#include <random>

#include "eblup/simulation.hpp"
#include "support.hpp"

using namespace eblup;
using namespace eblup::test;

namespace {

const TargetSummary& row(const McReport& r, Method method, const std::string& target) {
  for (const TargetSummary& t : r.rows)
    if (t.method == method && t.target == target) return t;
  FAIL("missing row " << target);
  return r.rows.front();
}

const EstimatorSummary& est(const TargetSummary& t, Estimator e) {
  for (const EstimatorSummary& s : t.estimators)
    if (s.estimator == e) return s;
  FAIL("missing estimator");
  return t.estimators.front();
}

}  // namespace

TEST_CASE("datasets are reproducible") {
  const MixedModel m = fh({0.5, 1.0, 2.0});
  const Dataset a = simulate_dataset(m, vec({1.0}), vec({0.3}), 42);
  const Dataset b = simulate_dataset(m, vec({1.0}), vec({0.3}), 42);
  CHECK(a.y == b.y);
  CHECK(a.v == b.v);
  CHECK(a.y != simulate_dataset(m, vec({1.0}), vec({0.3}), 43).y);
}

TEST_CASE("standard normal data when G = 0 and R = I") {
  const std::vector<Index> groups{0, 1};
  const MixedModel m = build_nested_error(groups, ones(2));
  double sum = 0.0, sum2 = 0.0;
  const int draws = 10000;
  for (int r = 0; r < draws; ++r) {
    const double y = simulate_dataset(m, vec({1.0, 0.0}), vec({0.0}), static_cast<std::uint64_t>(r)).y(0);
    sum += y;
    sum2 += y * y;
  }
  const double mean = sum / draws;
  const double var = sum2 / draws - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(draws));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / draws));
}

TEST_CASE("fay-herriot data covariance") {
  const VectorXd phi = vec({0.5, 1.0, 2.0});
  const MixedModel m = build_fay_herriot(phi, ones(3));
  const int draws = 10000;
  MatrixXd Y(draws, 3);
  for (int r = 0; r < draws; ++r) Y.row(r) = simulate_dataset(m, vec({1.0}), vec({0.0}), 7000 + r).y.transpose();
  const MatrixXd C = Y.transpose() * Y / draws;
  const MatrixXd target = MatrixXd(VectorXd(phi.array() + 1.0).asDiagonal());
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      // var(y_i y_j) = S_ii S_jj + S_ij^2 for zero-mean normals
      const double se = std::sqrt((target(i, i) * target(j, j) + target(i, j) * target(i, j)) / draws);
      CHECK(std::abs(C(i, j) - target(i, j)) < 5 * se);
    }
  }
}

TEST_CASE("report shape") {
  McConfig cfg = fay_herriot_cycle_config(12, 2, 3, Method::REML, 2);
  cfg.methods = {Method::REML, Method::ML};
  cfg.estimators = {Estimator::Naive, Estimator::SecondOrder};
  const McReport r = run_study(cfg);
  CHECK(r.replicates == 2);
  CHECK(r.targets == std::vector<std::string>{"area1", "area2"});
  CHECK(r.methods == cfg.methods);
  REQUIRE(r.rows.size() == 4);
  for (const TargetSummary& t : r.rows) {
    REQUIRE(t.estimators.size() == 2);
    CHECK(t.estimators[0].estimator == Estimator::Naive);
    CHECK(t.estimators[1].estimator == Estimator::SecondOrder);
  }
  CHECK(r.method_summaries.size() == 2);
}

TEST_CASE("presets") {
  const std::vector<std::string> names = preset_names();
  REQUIRE(names.size() == 3);
  const McConfig b = preset_config("harville-jeske-balanced");
  const MixedModel m = build_model(b.model);
  CHECK(m.kind() == FamilyKind::NestedError);
  CHECK(m.n() == 18);
  CHECK(m.r() == 9);
  const MixedModel u = build_model(preset_config("harville-jeske-unbalanced").model);
  CHECK(u.n() == 18);
  CHECK(u.r() == 9);
  const MixedModel l = build_model(preset_config("harville-jeske-large").model);
  CHECK(l.n() == 70);
  CHECK(l.r() == 21);
  CHECK_THROWS_AS(preset_config("nope"), Error);
}

TEST_CASE("parallel and serial studies agree exactly") {
  McConfig cfg = preset_config("harville-jeske-unbalanced", 0.5);
  cfg.replicates = 40;
  const McReport a = run_study(cfg, Execution::Serial);
  const McReport b = run_study(cfg, Execution::Parallel);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].mse_eblup == b.rows[k].mse_eblup);
    CHECK(a.rows[k].mse_eblup_cv == b.rows[k].mse_eblup_cv);
    for (std::size_t e = 0; e < a.rows[k].estimators.size(); ++e)
      CHECK(a.rows[k].estimators[e].mean == b.rows[k].estimators[e].mean);
  }
}

TEST_CASE("fay-herriot t = 30 study") {
  const McReport r = run_study(fay_herriot_cycle_config(30, 5000, 777, Method::REML, 3));
  for (const std::string& name : r.targets) {
    const TargetSummary& t = row(r, Method::REML, name);
    CAPTURE(name);
    CHECK(t.ordering_ok);
    CHECK(std::abs(t.mse_blup - (t.g1 + t.g2)) < 3 * t.mse_blup_se);
    CHECK(est(t, Estimator::Naive).mean < t.mse_eblup);
    CHECK(std::abs(est(t, Estimator::SecondOrder).mean - t.mse_eblup_cv) <
          std::abs(est(t, Estimator::Naive).mean - t.mse_eblup_cv));
  }
}

TEST_CASE("data-specific g3 mean at t = 30") {
  const McReport r = run_study(fay_herriot_cycle_config(30, 5000, 777, Method::REML, 3));
  for (const std::string& name : r.targets) {
    const TargetSummary& t = row(r, Method::REML, name);
    CAPTURE(name);
    CHECK(std::abs(t.g3_data_mean - t.g3) < 3 * t.g3_data_se);
  }
}

TEST_CASE("score moments") {
  const McConfig cfg = fay_herriot_cycle_config(20, 2, 1, Method::REML);
  const MixedModel m = build_model(cfg.model);
  const ScoreMomentReport reml = score_moment_check(m, vec({1.0}), vec({0.0}), 2000, 99, Method::REML);
  CHECK(reml.max_abs_mean_z < 3);
  CHECK(reml.max_abs_cov_z < 5);
  const ScoreMomentReport ml = score_moment_check(m, vec({1.0}), vec({0.0}), 2000, 99, Method::ML);
  CHECK(ml.max_abs_mean_z < 3);
  CHECK(ml.mean_target(0) < 0.0);
}

TEST_CASE("quadratic moments") {
  const MatrixXd I = MatrixXd::Identity(3, 3);
  const QuadraticMomentReport r = quadratic_moment_check(I, I, I, 10000, 5);
  CHECK(r.max_abs_z < 5);
  bool found = false;
  for (const MomentComparison& c : r.comparisons) {
    if (c.target.size() == 1) {
      CHECK(c.target(0, 0) == doctest::Approx(6.0));
      found = true;
    }
  }
  CHECK(found);

  const QuadraticMomentReport z = quadratic_moment_check(I, MatrixXd::Zero(3, 3), I, 2000, 6);
  CHECK(max_abs(z.comparisons[0].target) == 0.0);
  CHECK(max_abs(z.comparisons[0].estimate) == 0.0);
}
