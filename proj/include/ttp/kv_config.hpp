#pragma once

// Flat `key = value` text files: UTF-8, one pair per line, `#` starts a
// comment, blank lines ignored. Used for training configs, synthetic data
// specs and manifests.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Throws DataError(InvalidValue) on a line without '=' or with an empty key.
std::vector<KeyValue> parse_key_values(std::string_view text);
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

double parse_double(const KeyValue& kv);
long long parse_int(const KeyValue& kv);
bool parse_bool(const KeyValue& kv);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ttp
