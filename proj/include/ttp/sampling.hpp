#pragma once

// Sub-trajectory sampling for meta-training: fixed-length sliding windows,
// then a size-b subset maximizing the summed pairwise squared distance of the
// window features.

#include "ttp/model.hpp"

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ttp {

enum class WindowFeature { Flatten, Mean };
enum class SelectionMode { Exact, Greedy };

std::string_view to_string(WindowFeature f);
std::string_view to_string(SelectionMode m);
WindowFeature parse_window_feature(std::string_view text);
SelectionMode parse_selection_mode(std::string_view text);

struct Window {
  Eigen::Index start = 0;   // 0-based first frame
  Eigen::Index length = 0;
  Vec features;
};

/// Windows of `length` frames starting at 0, stride, 2*stride, ... while they
/// fit in the first `valid_length` columns of `frames`. A trajectory shorter
/// than `length` yields a single window covering all of it.
std::vector<Window> candidate_windows(const Mat& frames, Eigen::Index valid_length,
                                      Eigen::Index length, Eigen::Index stride,
                                      WindowFeature feature = WindowFeature::Flatten);

struct Selection {
  std::vector<std::size_t> indices;  // ascending
  double objective = 0.0;
};

/// Largest number of size-b subsets searched exhaustively; beyond it the
/// exact mode falls back to greedy.
inline constexpr double kExactSubsetLimit = 100000;

/// Number of size-k subsets of n items, saturating at +inf.
double binomial(std::size_t n, std::size_t k);

/// Summed pairwise squared distance of the chosen windows.
double dispersion(std::span<const Window> candidates, std::span<const std::size_t> chosen);

/// Exact: the maximizing subset, ties to the lexicographically first index
/// set. Greedy: farthest pair, then repeatedly the candidate with the largest
/// summed squared distance to the chosen set (lowest index on ties).
Selection select_diverse(std::span<const Window> candidates, std::size_t count, SelectionMode mode);

}  // namespace ttp
