#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ttp {

enum class DataErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  DimensionMismatch,
  InvalidValue,
  TrailingData,
};

std::string_view to_string(DataErrorCode code);

/// Malformed or unreadable data/config files.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& message,
            std::optional<std::size_t> record = std::nullopt);

  DataErrorCode code() const { return code_; }
  /// Index of the offending record, when the error is tied to one.
  std::optional<std::size_t> record() const { return record_; }

 private:
  DataErrorCode code_;
  std::optional<std::size_t> record_;
};

/// A loss or parameter went non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ttp
