#include "eblup/error.hpp"

namespace eblup {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonPositivePhi: return "NonPositivePhi";
    case ErrorKind::RankDeficientX: return "RankDeficientX";
    case ErrorKind::TooFewObservations: return "TooFewObservations";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::ZeroBlock: return "ZeroBlock";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularGram: return "SingularGram";
    case ErrorKind::SingularInformation: return "SingularInformation";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::OutsideParameterSpace: return "OutsideParameterSpace";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::NoConvergence: return "NoConvergence";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      index_(index) {}

}  // namespace eblup
