#include "eblup/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>

namespace eblup {

namespace {
std::atomic<int> thread_override{0};
}  // namespace

void set_thread_count(int n) { thread_override.store(n > 0 ? n : 0); }

int default_thread_count() {
  if (const int n = thread_override.load(); n > 0) return n;
  if (const char* env = std::getenv("EBLUP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // fall through to the OpenMP default
    }
  }
  return omp_get_max_threads();
}

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    correction_ += (sum_ - t) + x;
  } else {
    correction_ += (x - t) + sum_;
  }
  sum_ = t;
}

}  // namespace eblup
