#pragma once

// Trajectory records and their on-disk forms.
//
// TTPE container (all integers little-endian):
//   "TTPE" | u32 version = 1 | u32 d | u32 record count
//   per record:
//     u16 len + UTF-8 id | u16 len + task_text | u16 len + dataset_tag
//     u32 T | u8 has_labels
//     goal: d x f32 | visual: T*d x f32, frame-major | labels: T x f32 if present
//
// Embeddings are stored as 32-bit floats and promoted to double on load.

#include "ttp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

inline constexpr std::uint32_t kContainerVersion = 1;

struct TrajectoryRecord {
  std::string id;
  std::string task_text;
  std::string dataset_tag;
  Vec goal;                     // d
  Mat visual;                   // T x d, one frame per row
  std::optional<Vec> labels;    // T, y_t = t / T

  Eigen::Index length() const { return visual.rows(); }
  Eigen::Index encoder_dim() const { return goal.size(); }

  friend bool operator==(const TrajectoryRecord& a, const TrajectoryRecord& b);
};

/// y_t = t / T for t = 1..T, rounded to the stored 32-bit precision.
Vec progress_labels(Eigen::Index length);

/// D x T fused inputs of a record.
Mat fused_frames(const TrajectoryRecord& record);

/// Throws DataError(InvalidValue / DimensionMismatch) when a record breaks an
/// invariant: T >= 1, finite embeddings, labels strictly increasing ending at 1.
void validate(const TrajectoryRecord& record, std::optional<std::size_t> index = std::nullopt);

std::vector<std::uint8_t> encode_container(std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> decode_container(std::span<const std::uint8_t> bytes);

void save_container(const std::filesystem::path& path, std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> load_container(const std::filesystem::path& path);

// Single-vector file for the reference-prompt embedding used by the
// direction-projection baseline: "TTPV" | u32 version = 1 | u32 d | d x f32.
void save_vector(const std::filesystem::path& path, const Vec& v);
Vec load_vector(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_vector(const Vec& v);
Vec decode_vector(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Manifest: key-value file naming the splits of a dataset bundle.
//
//   split.<name> = <relative path> <shift tag>
//   baseline_embedding = <relative path>        (optional)
//
// Shift tags: ID, ES, EM, ES&EM. Splits named "train" and "val" are used for
// fitting; every other split is an evaluation split.

enum class Shift { InDistribution, Environment, Embodiment, EnvironmentEmbodiment };

std::string_view to_string(Shift shift);
Shift parse_shift(std::string_view text);

struct ManifestSplit {
  std::string name;
  std::filesystem::path path;  // resolved against the manifest directory
  Shift shift = Shift::InDistribution;
};

struct Manifest {
  std::vector<ManifestSplit> splits;  // file order
  std::optional<std::filesystem::path> baseline_embedding;

  const ManifestSplit* find(std::string_view name) const;
  std::vector<const ManifestSplit*> evaluation_splits() const;
};

Manifest read_manifest(const std::filesystem::path& path);
/// Writes paths relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace ttp
