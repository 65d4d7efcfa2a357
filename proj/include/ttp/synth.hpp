#pragma once

// Seeded synthetic trajectories with environment and embodiment shift.
//
//   v_t = R_emb (A_env u_task(p_t) + n_t),   p_t = t / T
//   u_task(p) = (1 - w) s_task + w g_task,   w = p^gamma_task,  s_task _|_ g_task
//   A_env = I + alpha G / sqrt(d),            R_emb orthogonal (identity in training)
//   n_t = rho n_{t-1} + sqrt(1 - rho^2) e_t,  stationary AR(1), E||n_t||^2 = sigma^2
//
// With sigma = 0 and identity transforms, cos(v_t, g) grows monotonically in t.

#include "ttp/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

inline constexpr Eigen::Index kSynthMaxLength = 120;

struct SynthSpec {
  Eigen::Index dim = 32;
  int tasks = 6;
  int train_environments = 4;
  int test_environments = 2;
  int test_embodiments = 2;
  double env_strength = 0.6;  // alpha
  double gamma_min = 0.6;     // per-task curve exponent range
  double gamma_max = 1.6;
  Eigen::Index min_length = 24;
  Eigen::Index max_length = 64;
  double noise_scale = 0.5;   // sigma
  double noise_rho = 0.9;
  int train_count = 200;
  int val_count = 40;
  int test_count = 50;        // per evaluation split
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument on an invalid field.
  void validate() const;
};

/// Keys match the field names; unknown keys throw DataError.
SynthSpec parse_synth_spec(std::string_view text, SynthSpec base = {});
SynthSpec load_synth_spec(const std::filesystem::path& path, SynthSpec base = {});

struct SynthSplit {
  std::string name;  // train, val, test_id, test_es, test_em, test_es_em
  Shift shift = Shift::InDistribution;
  std::vector<TrajectoryRecord> records;
  std::vector<int> environments;  // indices into SynthBundle::environments
  std::vector<int> embodiments;   // indices into SynthBundle::embodiments
};

struct SynthBundle {
  std::vector<SynthSplit> splits;
  std::vector<Mat> environments;  // A_env; the first train_environments are seen in training
  std::vector<Mat> embodiments;   // R_emb; index 0 is the training identity
  std::vector<Vec> goals;         // per task
  Vec baseline;                   // mean goal embedding, the generic reference prompt

  const SynthSplit* find(std::string_view name) const;
};

SynthBundle generate_bundle(const SynthSpec& spec);

/// Writes one TTPE file per split, baseline.ttpv and manifest.txt into `dir`
/// (created if missing). Returns the manifest path.
std::filesystem::path write_bundle(const std::filesystem::path& dir, const SynthBundle& bundle);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
Mat random_orthogonal(Eigen::Index n, std::uint64_t seed, std::string_view stream);

}  // namespace ttp
