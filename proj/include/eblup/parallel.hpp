#pragma once

#include <cstddef>

namespace eblup {

// Selects between the OpenMP kernels and their serial reference versions.
enum class Execution { Serial, Parallel };

// Worker count for parallel kernels: EBLUP_THREADS when set to a positive
// integer, otherwise the OpenMP default.
int default_thread_count();
// Overrides the worker count for this process; 0 restores the default.
void set_thread_count(int n);

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + correction_; }

 private:
  double sum_ = 0.0;
  double correction_ = 0.0;
};

}  // namespace eblup
