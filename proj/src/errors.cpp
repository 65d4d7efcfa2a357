#include "ttp/errors.hpp"

namespace ttp {

std::string_view to_string(DataErrorCode code) {
  switch (code) {
    case DataErrorCode::Io: return "io";
    case DataErrorCode::BadMagic: return "bad-magic";
    case DataErrorCode::UnsupportedVersion: return "unsupported-version";
    case DataErrorCode::Truncated: return "truncated";
    case DataErrorCode::DimensionMismatch: return "dimension-mismatch";
    case DataErrorCode::InvalidValue: return "invalid-value";
    case DataErrorCode::TrailingData: return "trailing-data";
  }
  return "unknown";
}

DataError::DataError(DataErrorCode code, const std::string& message,
                     std::optional<std::size_t> record)
    : std::runtime_error(std::string(to_string(code)) + ": " + message +
                         (record ? " (record " + std::to_string(*record) + ")" : std::string())),
      code_(code),
      record_(record) {}

}  // namespace ttp
