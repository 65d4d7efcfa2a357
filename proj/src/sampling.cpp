#include "ttp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ttp {
namespace {

Mat pairwise_sq_distances(std::span<const Window> candidates) {
  const auto n = static_cast<Eigen::Index>(candidates.size());
  Mat dist = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = (candidates[i].features - candidates[j].features).squaredNorm();
    }
  }
  return dist;
}

double subset_objective(const Mat& dist, const std::vector<std::size_t>& idx) {
  double total = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) total += dist(idx[a], idx[b]);
  }
  return total;
}

Selection select_exact(const Mat& dist, std::size_t n, std::size_t count) {
  // Lexicographic enumeration; strict improvement keeps the first optimum.
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  Selection best{idx, subset_objective(dist, idx)};
  while (true) {
    std::size_t pos = count;
    while (pos > 0 && idx[pos - 1] == n - count + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t k = pos; k < count; ++k) idx[k] = idx[k - 1] + 1;
    const double value = subset_objective(dist, idx);
    if (value > best.objective) best = {idx, value};
  }
  return best;
}

Selection select_greedy(const Mat& dist, std::size_t n, std::size_t count) {
  std::vector<std::size_t> chosen;
  if (count == 1) {
    chosen.push_back(0);
  } else {
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (dist(i, j) > dist(bi, bj)) bi = i, bj = j;
      }
    }
    chosen = {bi, bj};
  }
  std::vector<char> used(n, 0);
  for (auto c : chosen) used[c] = 1;
  Vec gain = Vec::Zero(static_cast<Eigen::Index>(n));
  for (auto c : chosen) gain += dist.col(static_cast<Eigen::Index>(c));
  while (chosen.size() < count) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i] && (best == n || gain(i) > gain(best))) best = i;
    }
    chosen.push_back(best);
    used[best] = 1;
    gain += dist.col(static_cast<Eigen::Index>(best));
  }
  std::sort(chosen.begin(), chosen.end());
  return {chosen, subset_objective(dist, chosen)};
}

}  // namespace

std::string_view to_string(WindowFeature f) { return f == WindowFeature::Flatten ? "flatten" : "mean"; }
std::string_view to_string(SelectionMode m) { return m == SelectionMode::Exact ? "exact" : "greedy"; }

WindowFeature parse_window_feature(std::string_view text) {
  if (text == "flatten") return WindowFeature::Flatten;
  if (text == "mean") return WindowFeature::Mean;
  throw std::invalid_argument("unknown window feature '" + std::string(text) + "'");
}

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "exact") return SelectionMode::Exact;
  if (text == "greedy") return SelectionMode::Greedy;
  throw std::invalid_argument("unknown selection mode '" + std::string(text) + "'");
}

std::vector<Window> candidate_windows(const Mat& frames, Eigen::Index valid_length,
                                      Eigen::Index length, Eigen::Index stride,
                                      WindowFeature feature) {
  if (length < 1 || stride < 1) throw std::invalid_argument("window length and stride must be >= 1");
  if (valid_length < 1 || valid_length > frames.cols()) {
    throw std::invalid_argument("valid_length out of range");
  }
  auto make = [&](Eigen::Index start, Eigen::Index len) {
    const auto block = frames.middleCols(start, len);
    Window w{start, len, {}};
    if (feature == WindowFeature::Flatten) {
      w.features = block.reshaped();
    } else {
      w.features = block.rowwise().mean();
    }
    return w;
  };
  std::vector<Window> out;
  if (valid_length < length) {
    out.push_back(make(0, valid_length));
    return out;
  }
  for (Eigen::Index start = 0; start + length <= valid_length; start += stride) {
    out.push_back(make(start, length));
  }
  return out;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
    if (!std::isfinite(result)) return std::numeric_limits<double>::infinity();
  }
  return std::round(result);
}

double dispersion(std::span<const Window> candidates, std::span<const std::size_t> chosen) {
  double total = 0.0;
  for (std::size_t a = 0; a < chosen.size(); ++a) {
    for (std::size_t b = a + 1; b < chosen.size(); ++b) {
      total += (candidates[chosen[a]].features - candidates[chosen[b]].features).squaredNorm();
    }
  }
  return total;
}

Selection select_diverse(std::span<const Window> candidates, std::size_t count, SelectionMode mode) {
  const std::size_t n = candidates.size();
  if (count == 0 || n == 0) return {};
  if (count >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return {all, dispersion(candidates, all)};
  }
  const Mat dist = pairwise_sq_distances(candidates);
  if (mode == SelectionMode::Exact && binomial(n, count) <= kExactSubsetLimit) {
    return select_exact(dist, n, count);
  }
  return select_greedy(dist, n, count);
}

}  // namespace ttp
