#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eblup {

enum class ErrorKind {
  NonPositivePhi,
  RankDeficientX,
  TooFewObservations,
  EmptyGroup,
  ZeroBlock,
  NotPositiveDefinite,
  SingularGram,
  SingularInformation,
  IndexOutOfRange,
  OutsideParameterSpace,
  DimensionMismatch,
  InvalidInput,
  NoConvergence,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library. `index` carries the offending
// component or row where one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

}  // namespace eblup
