#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ttp {

/// Independent generator for a named purpose ("init", "shuffle", "synth", ...)
/// derived from the run seed, so each consumer is reproducible on its own.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace ttp
