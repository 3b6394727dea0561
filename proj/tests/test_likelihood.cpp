#include <cmath>
#include <random>

#include "eblup/checks.hpp"
#include "eblup/likelihood.hpp"
#include "support.hpp"

using namespace eblup;
using namespace eblup::test;

namespace {

SigmaVector at(const MixedModel& m, std::initializer_list<double> v) { return validate_sigma(m, vec(v)); }

double ll(const MixedModel& m, const VectorXd& s, const VectorXd& y, Method method) {
  const SigmaVector sv = validate_sigma(m, s);
  return method == Method::REML ? restricted_loglik(m, sv, y) : profile_loglik(m, sv, y);
}

double rel_err(const MatrixXd& fd, const MatrixXd& an) {
  return max_abs(fd - an) / std::max(max_abs(an), 1e-12);
}

}  // namespace

TEST_CASE("canonical fay-herriot values") {
  const MixedModel m = fh_canonical();
  const VectorXd y = y_canonical();
  const SigmaVector s = at(m, {1.0});

  CHECK(max_abs(projection_p(m, s) - MatrixXd{{0.25, -0.25}, {-0.25, 0.25}}) < 1e-15);
  CHECK(restricted_loglik(m, s, y) == doctest::Approx(-0.5 * (1.0 + std::log(4.0))));
  CHECK(profile_loglik(m, s, y) == doctest::Approx(-0.5 * (1.0 + std::log(4.0))));
  CHECK(std::abs(score_reml(m, s, y)(0)) < 1e-15);
  CHECK(score_ml(m, s, y)(0) == doctest::Approx(-0.25));
  CHECK(hessian(m, s, y, Method::REML)(0, 0) == doctest::Approx(-0.125));
  CHECK(third_derivatives(m, s, y, Method::REML)(0, 0, 0) == doctest::Approx(0.25));
  CHECK(expected_information(m, s, Method::REML).A(0, 0) == doctest::Approx(-0.125));
  CHECK(expected_information(m, s, Method::REML).fisher(0, 0) == doctest::Approx(0.125));
  CHECK(ml_score_bias(m, s)(0) == doctest::Approx(0.25));
  CHECK(effective_dims(m, s)(0) == doctest::Approx(0.5));

  try {
    expected_information(m, s, Method::ML);
    FAIL("t = 2 ML information should be singular");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularInformation);
  }
}

TEST_CASE("fay-herriot t = 3 ML information and score bias") {
  const MixedModel m = fh({1.0, 1.0, 1.0});
  const SigmaVector s = at(m, {1.0});
  CHECK(expected_information(m, s, Method::ML).A(0, 0) == doctest::Approx(-0.125));
  CHECK(ml_score_bias(m, s)(0) == doctest::Approx(0.25));
}

TEST_CASE("loglikelihood identities") {
  std::mt19937_64 gen(11);
  for (FamilyKind family : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    for (int rep = 0; rep < 5; ++rep) {
      const RandomInstance inst = random_instance(family, gen);
      const MixedModel& m = inst.model;
      const SigmaVector s = validate_sigma(m, inst.sigma);
      const SigmaEvaluation eval(m, s);
      const double lr = restricted_loglik(m, s, inst.y);
      const double lp = profile_loglik(m, s, inst.y);
      CHECK(lr - lp == doctest::Approx(-0.5 * eval.log_det_gram()).epsilon(1e-10));

      const VectorXd diff = score_ml(m, s, inst.y) - score_reml(m, s, inst.y);
      for (Index i = 0; i < m.s(); ++i) {
        const double expected = 0.5 * ((eval.projection() * sigma_derivative(m, i)).trace() -
                                       (eval.sigma_inv() * sigma_derivative(m, i)).trace());
        CHECK(diff(i) == doctest::Approx(expected).epsilon(1e-10));
      }

      const MatrixXd P = eval.projection();
      const double scale = std::max(1.0, max_abs(eval.sigma()));
      CHECK(max_abs(P * m.X()) < 1e-12 * scale);
      CHECK(max_abs(P * eval.sigma() * P - P) < 1e-12 * scale);
      CHECK(max_abs(P - P.transpose()) < 1e-12 * scale);
    }
  }
}

TEST_CASE("restricted loglikelihood scaling") {
  // Sigma -> 2 Sigma for fay-herriot requires phi -> 2 phi and sigma -> 2 sigma.
  const VectorXd phi = vec({0.7, 1.0, 1.3, 0.9});
  const MixedModel a = build_fay_herriot(phi, ones(4));
  const MixedModel b = build_fay_herriot(2.0 * phi, ones(4));
  const VectorXd y = vec({0.3, -1.2, 0.8, 2.0});
  const double la = restricted_loglik(a, at(a, {0.6}), y);
  const double lb = restricted_loglik(b, at(b, {1.2}), std::sqrt(2.0) * y);
  CHECK(lb - la == doctest::Approx(-0.5 * (4 - 1) * std::log(2.0)));
}

TEST_CASE("derivatives match central finite differences") {
  std::mt19937_64 gen(5);
  for (FamilyKind family : {FamilyKind::FayHerriot, FamilyKind::NestedError, FamilyKind::AnovaVC}) {
    for (Method method : {Method::REML, Method::ML}) {
      for (int rep = 0; rep < 5; ++rep) {
        const RandomInstance inst = random_instance(family, gen);
        const MixedModel& m = inst.model;
        const Index s = m.s();
        const SigmaVector sv = validate_sigma(m, inst.sigma);
        const VectorXd sc = score(SigmaEvaluation(m, sv), inst.y, method);
        const MatrixXd H = hessian(m, sv, inst.y, method);
        const ThirdArray T = third_derivatives(m, sv, inst.y, method);
        VectorXd fd_score(s);
        MatrixXd fd_h(s, s);
        MatrixXd fd_t(s * s, s), an_t(s * s, s);
        for (Index i = 0; i < s; ++i) {
          const double h = 1e-5 * std::max(1.0, std::abs(inst.sigma(i)));
          VectorXd up = inst.sigma, dn = inst.sigma;
          up(i) += h;
          dn(i) -= h;
          fd_score(i) = (ll(m, up, inst.y, method) - ll(m, dn, inst.y, method)) / (2 * h);
          const VectorXd su = score(SigmaEvaluation(m, up), inst.y, method);
          const VectorXd sd = score(SigmaEvaluation(m, dn), inst.y, method);
          fd_h.col(i) = (su - sd) / (2 * h);
          const MatrixXd hu = hessian(SigmaEvaluation(m, up), inst.y, method);
          const MatrixXd hd = hessian(SigmaEvaluation(m, dn), inst.y, method);
          for (Index j = 0; j < s; ++j) {
            for (Index k = 0; k < s; ++k) {
              fd_t(j * s + k, i) = (hu(j, k) - hd(j, k)) / (2 * h);
              an_t(j * s + k, i) = T(j, k, i);
            }
          }
        }
        CHECK(rel_err(fd_score, sc) < 1e-5);
        CHECK(rel_err(fd_h, H) < 1e-4);
        CHECK(rel_err(fd_t, an_t) < 1e-3);
        CHECK(max_abs(H - H.transpose()) <= 1e-12 * std::max(1.0, max_abs(H)));
        for (Index i = 0; i < s; ++i)
          for (Index j = 0; j < s; ++j)
            for (Index k = 0; k < s; ++k) {
              CHECK(std::abs(T(i, j, k) - T(j, k, i)) <= 1e-12 * std::max(1.0, std::abs(T(i, j, k))));
              CHECK(std::abs(T(i, j, k) - T(k, j, i)) <= 1e-12 * std::max(1.0, std::abs(T(i, j, k))));
            }
      }
    }
  }
}

TEST_CASE("effective dimension shrinks along a sigma_0 ray") {
  const std::vector<Index> groups{0, 0, 1, 1, 1, 2, 2, 3};
  const MixedModel m = build_nested_error(groups, ones(8));
  double previous = std::numeric_limits<double>::infinity();
  for (double s1 : {0.1, 0.5, 1.0, 5.0, 20.0, 100.0}) {
    const double d0 = effective_dims(m, validate_sigma(m, vec({1.0, s1})))(0);
    CHECK(d0 <= previous);
    previous = d0;
  }
}

TEST_CASE("A_M is the expected ML hessian") {
  // E[u' Q u] = tr(Q Sigma): averaging the ML hessian's quadratic term over
  // the exact second moment must reproduce A_M.
  std::mt19937_64 gen(3);
  const RandomInstance inst = random_instance(FamilyKind::NestedError, gen);
  const SigmaEvaluation eval(inst.model, inst.sigma);
  const MatrixXd A = expected_information_matrix(eval, Method::ML);
  const MatrixXd& P = eval.projection();
  for (Index i = 0; i < inst.model.s(); ++i) {
    for (Index j = 0; j < inst.model.s(); ++j) {
      const MatrixXd Q = P * sigma_derivative(inst.model, i) * P * sigma_derivative(inst.model, j) * P;
      const double expected = 0.5 * eval.trace2(Method::ML, i, j) - (Q * eval.sigma()).trace();
      CHECK(A(i, j) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}
