#include "eblup/kron.hpp"

#include <omp.h>

namespace eblup::kernels {

namespace {

struct Axis {
  Index outer;
  Index length;
  Index inner;
};

Axis axis_of(const BalancedDesign& design, std::size_t l) {
  Axis a{1, design.levels()[l], 1};
  for (std::size_t m = 0; m < l; ++m) a.outer *= design.levels()[m];
  for (std::size_t m = l + 1; m < design.levels().size(); ++m) a.inner *= design.levels()[m];
  return a;
}

// Replaces x along axis l by its sum over that axis (J_{n_l} applied to axis l).
void sum_axis_serial(const Axis& ax, VectorXd& x) {
  for (Index o = 0; o < ax.outer; ++o) {
    for (Index in = 0; in < ax.inner; ++in) {
      const Index base = o * ax.length * ax.inner + in;
      double s = 0.0;
      for (Index j = 0; j < ax.length; ++j) s += x(base + j * ax.inner);
      for (Index j = 0; j < ax.length; ++j) x(base + j * ax.inner) = s;
    }
  }
}

void sum_axis_parallel(const Axis& ax, VectorXd& x) {
  const Index lines = ax.outer * ax.inner;
  double* data = x.data();
#pragma omp parallel for schedule(static) num_threads(default_thread_count())
  for (Index line = 0; line < lines; ++line) {
    const Index o = line / ax.inner;
    const Index in = line % ax.inner;
    const Index base = o * ax.length * ax.inner + in;
    double s = 0.0;
    for (Index j = 0; j < ax.length; ++j) s += data[base + j * ax.inner];
    for (Index j = 0; j < ax.length; ++j) data[base + j * ax.inner] = s;
  }
}

}  // namespace

void apply_kron_term(const BalancedDesign& design, FactorTuple k, const VectorXd& x, VectorXd& out,
                     Execution exec) {
  if (x.size() != design.n()) throw Error(ErrorKind::DimensionMismatch, "vector length differs from n");
  out = x;
  for (std::size_t l = 0; l < design.levels().size(); ++l) {
    if (((k >> l) & 1U) == 0) continue;
    const Axis ax = axis_of(design, l);
    if (exec == Execution::Parallel) {
      sum_axis_parallel(ax, out);
    } else {
      sum_axis_serial(ax, out);
    }
  }
}

VectorXd apply_expansion(const BalancedDesign& design, const KronCoefficients& coeffs, const VectorXd& x,
                         Execution exec) {
  VectorXd total = VectorXd::Zero(design.n());
  VectorXd term(design.n());
  for (FactorTuple k = 0; k < coeffs.size(); ++k) {
    if (coeffs[k] == 0.0) continue;
    apply_kron_term(design, k, x, term, exec);
    total += coeffs[k] * term;
  }
  return total;
}

VectorXd collapse(const BalancedDesign& design, FactorTuple i, const VectorXd& x, Execution exec) {
  if (x.size() != design.n()) throw Error(ErrorKind::DimensionMismatch, "vector length differs from n");
  const auto& levels = design.levels();
  const std::size_t factors = levels.size();
  std::vector<Index> stride(factors);
  Index st = 1;
  for (std::size_t l = factors; l-- > 0;) {
    stride[l] = st;
    st *= levels[l];
  }
  const Index kept = design.r(i);
  VectorXd out = VectorXd::Zero(kept);

  if (exec == Execution::Serial) {
    // scatter every observation into its cell of the kept factors
    for (Index a = 0; a < design.n(); ++a) {
      Index cell = 0;
      for (std::size_t l = 0; l < factors; ++l) {
        if (((i >> l) & 1U) == 0) cell = cell * levels[l] + (a / stride[l]) % levels[l];
      }
      out(cell) += x(a);
    }
    return out;
  }

  // gather: each output cell walks the collapsed factors
  const Index collapsed = design.n() / kept;
  double* dst = out.data();
#pragma omp parallel for schedule(static) num_threads(default_thread_count())
  for (Index cell = 0; cell < kept; ++cell) {
    Index base = 0;
    Index rem = cell;
    for (std::size_t l = factors; l-- > 0;) {
      if (((i >> l) & 1U) == 0) {
        base += (rem % levels[l]) * stride[l];
        rem /= levels[l];
      }
    }
    double s = 0.0;
    for (Index c = 0; c < collapsed; ++c) {
      Index offset = 0;
      Index r2 = c;
      for (std::size_t l = factors; l-- > 0;) {
        if (((i >> l) & 1U) != 0) {
          offset += (r2 % levels[l]) * stride[l];
          r2 /= levels[l];
        }
      }
      s += x(base + offset);
    }
    dst[cell] = s;
  }
  return out;
}

}  // namespace eblup::kernels
