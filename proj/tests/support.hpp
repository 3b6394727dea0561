#pragma once

#include <cmath>
#include <vector>

#include "doctest.h"
#include "eblup/model.hpp"

namespace eblup::test {

inline MatrixXd ones(Index n) { return MatrixXd::Ones(n, 1); }

inline MixedModel fh(std::vector<double> phi) {
  const VectorXd p = Eigen::Map<const VectorXd>(phi.data(), static_cast<Index>(phi.size()));
  return build_fay_herriot(p, ones(p.size()));
}

// t = 2, phi = (1, 1), X = 1, y = (1, -1).
inline MixedModel fh_canonical() { return fh({1.0, 1.0}); }
inline VectorXd y_canonical() { return VectorXd{{1.0, -1.0}}; }

inline VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

inline double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace eblup::test
