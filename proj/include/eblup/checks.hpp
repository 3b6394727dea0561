#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eblup/kron.hpp"
#include "eblup/mse.hpp"

namespace eblup {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  // worst observed value of the checked quantity and its limit
  double worst = 0.0;
  double limit = 0.0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 20240601;
  std::optional<FamilyKind> family;  // derivative/projection suites: restrict to one family
  int max_factors = 3;               // kron suite: largest w
  int instances = 0;                 // 0: suite default
};

std::vector<std::string> check_suite_names();
// Throws InvalidInput for an unknown suite name.
std::vector<CheckResult> run_check_suite(std::string_view suite, const CheckOptions& options);

// Random instances shared by the check suites and the tests.
struct RandomInstance {
  MixedModel model;
  VectorXd sigma;
  VectorXd beta;
  VectorXd y;
};

// Interior sigma in [0.5, 2]; n up to max_n.
RandomInstance random_instance(FamilyKind family, std::mt19937_64& gen, Index max_n = 30);
PredictionTarget random_target(const MixedModel& model, std::mt19937_64& gen);
// w in [1, max_w], n_l in [2, 4], 1 <= |S| <= 3.
BalancedDesign random_balanced_design(std::mt19937_64& gen, int max_w);
// sigma_0 in [0.5, 2], sigma_k in [0, 2].
VectorXd random_balanced_sigma(const BalancedDesign& design, std::mt19937_64& gen);

// Minimum-MSE linear unbiased predictor from the constrained quadratic
// program min E(w'y - mu)^2 s.t. X'w = l, solved densely.
struct BlupOracle {
  VectorXd weights;
  double min_mse = 0.0;
};
BlupOracle blup_oracle(const MixedModel& model, const VectorXd& sigma, const PredictionTarget& target);

}  // namespace eblup
