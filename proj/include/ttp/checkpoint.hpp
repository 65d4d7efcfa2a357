#pragma once

// TTPM checkpoint: "TTPM", u32 version, u32 dims (d, D, d', d_h), then every
// tensor in layout order as u32 rows, u32 cols and rows*cols little-endian
// f64 values in row-major order. Regressor checkpoints store 0x0 adaptation
// tensors.

#include "ttp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ttp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const MetaParams& meta);
/// Throws DataError on malformed input.
MetaParams decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const MetaParams& meta);
MetaParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ttp
