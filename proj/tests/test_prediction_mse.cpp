#include <cmath>
#include <random>

#include "eblup/checks.hpp"
#include "eblup/estimation.hpp"
#include "eblup/mse.hpp"
#include "eblup/prediction.hpp"
#include "eblup/simulation.hpp"
#include "support.hpp"

using namespace eblup;
using namespace eblup::test;

namespace {

SigmaVector at(const MixedModel& m, std::initializer_list<double> v) { return validate_sigma(m, vec(v)); }

PredictionTarget fixed_only(const MixedModel& m, Index j) {
  PredictionTarget t{"fixed", VectorXd::Zero(m.p()), VectorXd::Zero(m.r())};
  t.l(j) = 1.0;
  return t;
}

MixedModel fh_cycle(Index t) {
  VectorXd phi(t);
  const double cycle[3] = {0.7, 1.0, 1.3};
  for (Index i = 0; i < t; ++i) phi(i) = cycle[i % 3];
  return build_fay_herriot(phi, ones(t));
}

}  // namespace

TEST_CASE("blup weights") {
  const MixedModel m = fh({0.5, 1.0, 2.0});
  const SigmaVector s = at(m, {1.5});
  const VectorXd w = blup_weights(m, s, area_target(m, 1));
  CHECK(w(1) == doctest::Approx(1.5 / 2.5));
  CHECK(w(0) == 0.0);
  CHECK(w(2) == 0.0);
  CHECK(max_abs(blup_weights(m, s, fixed_only(m, 0))) == 0.0);

  const MatrixXd G = grad_s(m, s, area_target(m, 1));
  CHECK(G(1, 0) == doctest::Approx(1.0 / (2.5 * 2.5)));
  CHECK(std::abs(G(0, 0)) + std::abs(G(2, 0)) == 0.0);
  CHECK(max_abs(grad_s(m, s, fixed_only(m, 0))) == 0.0);

  const std::vector<Index> groups{0, 0, 0, 1, 1};
  const MixedModel ne = build_nested_error(groups, ones(5));
  PredictionTarget v0{"v1", VectorXd::Zero(1), vec({1.0, 0.0})};
  const VectorXd wn = blup_weights(ne, at(ne, {0.5, 2.0}), v0);
  const double lambda = 0.5 + 3 * 2.0;
  CHECK(max_abs(wn - vec({2.0 / lambda, 2.0 / lambda, 2.0 / lambda, 0.0, 0.0})) < 1e-14);
  CHECK(g1(ne, at(ne, {0.5, 2.0}), v0) == doctest::Approx(2.0 * 0.5 / lambda));
}

TEST_CASE("grad_s matches finite differences of the weights") {
  std::mt19937_64 gen(23);
  for (FamilyKind family : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    for (int rep = 0; rep < 5; ++rep) {
      const RandomInstance inst = random_instance(family, gen);
      const PredictionTarget t = random_target(inst.model, gen);
      const MatrixXd an = grad_s(inst.model, validate_sigma(inst.model, inst.sigma), t);
      MatrixXd fd(an.rows(), an.cols());
      for (Index i = 0; i < inst.model.s(); ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(inst.sigma(i)));
        VectorXd up = inst.sigma, dn = inst.sigma;
        up(i) += h;
        dn(i) -= h;
        fd.col(i) = (blup_weights(SigmaEvaluation(inst.model, up), t) -
                     blup_weights(SigmaEvaluation(inst.model, dn), t)) / (2 * h);
      }
      CHECK(max_abs(fd - an) / std::max(max_abs(an), 1e-12) < 1e-6);
    }
  }
}

TEST_CASE("canonical blup and eblup") {
  const MixedModel m = fh_canonical();
  const VectorXd y = y_canonical();
  const BlupResult b = blup(m, at(m, {1.0}), y, area_target(m, 0));
  CHECK(b.value == doctest::Approx(0.5));
  CHECK(b.value == doctest::Approx((b.beta_used(0) + b.s_weights.dot(y - m.X() * b.beta_used))).epsilon(1e-12));

  const BlupResult fixed = blup(m, at(m, {1.0}), vec({3.0, 1.0}), fixed_only(m, 0));
  CHECK(fixed.value == doctest::Approx(2.0));

  const BlupResult zero = blup(m, at(m, {0.0}), vec({3.0, 1.0}), area_target(m, 0));
  CHECK(zero.value == doctest::Approx(2.0));

  const FitResult r = fit(m, y, Method::REML);
  CHECK(eblup::eblup(m, r, y, area_target(m, 0)).value == doctest::Approx(0.5));
  const FitResult ml = fit(m, y, Method::ML);
  const BlupResult e = eblup::eblup(m, ml, y, area_target(m, 0));
  CHECK(std::abs(e.value) < 1e-15);
  CHECK(e.boundary_warning);
}

TEST_CASE("eblup translation invariance and evenness") {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> normal;
  for (FamilyKind family : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    for (int rep = 0; rep < 4; ++rep) {
      const RandomInstance inst = random_instance(family, gen);
      const MixedModel& m = inst.model;
      const PredictionTarget t = random_target(m, gen);
      VectorXd delta(m.p());
      for (Index j = 0; j < m.p(); ++j) delta(j) = 3.0 * normal(gen);
      const FitResult f = fit(m, inst.y, Method::REML);
      const VectorXd shifted = inst.y + m.X() * delta;
      const FitResult fs = fit(m, shifted, Method::REML);
      const FitResult fn = fit(m, -inst.y, Method::REML);
      const double scale = std::max(1.0, max_abs(f.sigma_hat.values()));
      CHECK(max_abs(fs.sigma_hat.values() - f.sigma_hat.values()) < 1e-10 * scale);
      CHECK(max_abs(fn.sigma_hat.values() - f.sigma_hat.values()) < 1e-10 * scale);
      const double base = eblup::eblup(m, f, inst.y, t).value;
      CHECK(eblup::eblup(m, fs, shifted, t).value == doctest::Approx(base + t.l.dot(delta)).epsilon(1e-10));
    }
  }
}

TEST_CASE("blup is the constrained minimum-MSE predictor") {
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 20; ++rep) {
    const FamilyKind family = static_cast<FamilyKind>(rep % 3);
    const RandomInstance inst = random_instance(family, gen, 6);
    const PredictionTarget t = random_target(inst.model, gen);
    const SigmaEvaluation eval(inst.model, inst.sigma);
    const BlupOracle oracle = blup_oracle(inst.model, inst.sigma, t);
    CHECK(max_abs(blup_linear_weights(eval, t) - oracle.weights) < 1e-8);
    CHECK(g1(eval, t) + g2(eval, t) == doctest::Approx(oracle.min_mse).epsilon(1e-8));
  }
}

TEST_CASE("eblup is unbiased in simulation") {
  const MixedModel m = fh_cycle(20);
  const PredictionTarget t = area_target(m, 0);
  double sum = 0.0, sum2 = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    const Dataset d = simulate_dataset(m, vec({1.0}), vec({0.5}), 500 + static_cast<std::uint64_t>(r));
    const double mu = 0.5 + d.v(0);
    const double err = eblup::eblup(m, fit(m, d.y, Method::REML), d.y, t).value - mu;
    sum += err;
    sum2 += err * err;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
  CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("canonical g terms and estimators") {
  const MixedModel m = fh_canonical();
  const SigmaVector s = at(m, {1.0});
  const PredictionTarget t = area_target(m, 0);
  CHECK(g1(m, s, t) == doctest::Approx(0.5));
  CHECK(g2(m, s, t) == doctest::Approx(0.25));
  CHECK(g3(m, s, t, Method::REML) == doctest::Approx(1.0));
  CHECK(g3_data(m, s, y_canonical(), t, Method::REML) == doctest::Approx(0.5));
  CHECK(mse_true_approx(m, s, t, Method::REML) == doctest::Approx(1.75));

  const FitResult f = fit(m, y_canonical(), Method::REML);
  const MseReport r = mse_estimators(m, f, y_canonical(), t, true);
  CHECK(r.naive == doctest::Approx(0.75));
  REQUIRE(r.prasad_rao.has_value());
  CHECK(*r.prasad_rao == doctest::Approx(2.75));
  CHECK(*r.second_order == *r.prasad_rao);
  CHECK(*r.g3_data == doctest::Approx(0.5));
  CHECK(*r.data_specific == doctest::Approx(1.75));
  CHECK_FALSE(r.g10.has_value());

  const MseReport ml = mse_estimators(m, fit(m, y_canonical(), Method::ML), y_canonical(), t);
  CHECK_FALSE(ml.prasad_rao.has_value());
  CHECK_FALSE(ml.warnings.empty());
  CHECK(ml.naive == doctest::Approx(0.0 + g2(m, at(m, {0.0}), t)));
}

TEST_CASE("zero m and zero residual cases") {
  const MixedModel m = fh({0.5, 1.0, 2.0, 1.5});
  const SigmaVector s = at(m, {0.8});
  const PredictionTarget t = fixed_only(m, 0);
  const SigmaEvaluation eval(m, s);
  CHECK(g1(eval, t) == 0.0);
  CHECK(g2(eval, t) == doctest::Approx(eval.gram_inv()(0, 0)));
  CHECK(g3(eval, t, Method::REML) == 0.0);
  CHECK(g10(eval, t) == 0.0);
  CHECK(mse_true_approx(eval, t, Method::REML) == doctest::Approx(g2(eval, t)));
  const VectorXd y = vec({0.3, 1.1, -0.4, 2.0});
  const MseReport r = mse_estimators(eval, fit(m, y, Method::REML), y, t, true);
  CHECK(r.naive == doctest::Approx(*r.prasad_rao));
  CHECK(r.naive == doctest::Approx(*r.second_order));
  CHECK(r.naive == doctest::Approx(*r.data_specific));

  // l = X's gives g2 = 0; y = X beta gives g3_data = 0.
  const PredictionTarget area = area_target(m, 2);
  const PredictionTarget matched{"matched", m.X().transpose() * blup_weights(eval, area), area.m};
  CHECK(std::abs(g2(eval, matched)) < 1e-15);
  CHECK(std::abs(g3_data(eval, VectorXd::Constant(4, 2.5), area, Method::REML)) < 1e-15);
}

TEST_CASE("ML correction on fay-herriot t = 3") {
  const MixedModel m = fh({1.0, 1.0, 1.0});
  const SigmaVector s = at(m, {1.0});
  const PredictionTarget t = area_target(m, 0);
  CHECK(g10(m, s, t) == doctest::Approx(-0.5));
  const SigmaEvaluation eval(m, s);
  FitResult f;
  f.sigma_hat = s;
  f.method = Method::ML;
  f.converged = true;
  const MseReport r = mse_estimators(eval, f, vec({1.0, 0.0, -1.0}), t);
  REQUIRE(r.second_order.has_value());
  CHECK(*r.second_order - *r.prasad_rao == doctest::Approx(0.5));
  CHECK(*r.second_order == doctest::Approx(r.naive + 2 * *r.g3 - *r.g10));
}

TEST_CASE("g3 large-t closed form") {
  const MixedModel m = fh(std::vector<double>(50, 1.0));
  const double closed = 1.0 / 8.0 * 2.0 / (50.0 / 4.0);
  CHECK(std::abs(g3(m, at(m, {1.0}), area_target(m, 0), Method::REML) / closed - 1.0) < 0.05);
}

TEST_CASE("g3 falls like 1/t") {
  double previous = 0.0;
  for (Index t : {10, 40, 160}) {
    const MixedModel m = fh_cycle(t);
    const double g = g3(m, at(m, {1.0}), area_target(m, 0), Method::REML);
    CHECK(g >= 0.0);
    if (previous > 0.0) {
      CHECK(previous / g > 4.0 * 0.7);
      CHECK(previous / g < 4.0 * 1.3);
    }
    previous = g;
  }
}

TEST_CASE("scale equivariance") {
  const double c = 1.7;
  const VectorXd phi = vec({0.7, 1.0, 1.3, 0.7, 1.0, 1.3});
  const MixedModel a = build_fay_herriot(phi, ones(6));
  const MixedModel b = build_fay_herriot(c * c * phi, ones(6));
  const VectorXd y = vec({0.4, -1.0, 2.2, 0.1, 1.4, -0.6});
  for (Method method : {Method::REML, Method::ML}) {
    const FitResult fa = fit(a, y, method);
    const FitResult fb = fit(b, c * y, method);
    const MseReport ra = mse_estimators(a, fa, y, area_target(a, 1), true);
    const MseReport rb = mse_estimators(b, fb, c * y, area_target(b, 1), true);
    REQUIRE(ra.prasad_rao.has_value());
    REQUIRE(rb.prasad_rao.has_value());
    CHECK(rb.g1 == doctest::Approx(c * c * ra.g1).epsilon(1e-10));
    CHECK(rb.g2 == doctest::Approx(c * c * ra.g2).epsilon(1e-10));
    CHECK(*rb.g3 == doctest::Approx(c * c * *ra.g3).epsilon(1e-10));
    CHECK(*rb.second_order == doctest::Approx(c * c * *ra.second_order).epsilon(1e-10));
    CHECK(*rb.data_specific == doctest::Approx(c * c * *ra.data_specific).epsilon(1e-10));
  }
}

TEST_CASE("delta terms") {
  std::mt19937_64 gen(59);
  for (FamilyKind family : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    for (int rep = 0; rep < 5; ++rep) {
      const RandomInstance inst = random_instance(family, gen);
      const PredictionTarget t = random_target(inst.model, gen);
      const SigmaEvaluation eval(inst.model, inst.sigma);
      if (information_is_singular(eval, expected_information_matrix(eval, Method::REML))) continue;
      const DeltaTerms r = delta_terms(eval, t, Method::REML);
      CHECK(r.delta0 == 0.0);
      CHECK(std::abs(r.delta1 + r.delta3) <= 1e-12 * std::max(std::abs(r.delta1), 1e-300));
      CHECK(r.sum() == doctest::Approx(-g3(eval, t, Method::REML)).epsilon(1e-12));
      if (information_is_singular(eval, expected_information_matrix(eval, Method::ML))) continue;
      const DeltaTerms ml = delta_terms(eval, t, Method::ML);
      CHECK(ml.sum() == doctest::Approx(g10(eval, t) - g3(eval, t, Method::ML)).epsilon(1e-12));
    }
  }
}
