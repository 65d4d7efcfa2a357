#include "doctest.h"
#include "oracles.hpp"

#include "ttp/sampling.hpp"

#include <random>

using namespace ttp;

namespace {

std::vector<Window> scalar_windows(std::initializer_list<double> values) {
  std::vector<Window> out;
  Eigen::Index start = 0;
  for (double v : values) out.push_back({start++, 1, Vec::Constant(1, v)});
  return out;
}

std::vector<Window> random_windows(std::size_t n, Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Window> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec f(dim);
    for (Eigen::Index k = 0; k < dim; ++k) f(k) = normal(rng);
    out.push_back({static_cast<Eigen::Index>(i), 1, f});
  }
  return out;
}

std::vector<Eigen::Index> starts(const std::vector<Window>& ws) {
  std::vector<Eigen::Index> s;
  for (const auto& w : ws) s.push_back(w.start);
  return s;
}

}  // namespace

TEST_CASE("candidate window starts") {
  CHECK(starts(candidate_windows(Mat::Zero(2, 10), 10, 8, 1)) == std::vector<Eigen::Index>{0, 1, 2});
  CHECK(starts(candidate_windows(Mat::Zero(2, 8), 8, 8, 4)) == std::vector<Eigen::Index>{0});
  CHECK(starts(candidate_windows(Mat::Zero(2, 20), 20, 8, 4)) == std::vector<Eigen::Index>{0, 4, 8, 12});
}

TEST_CASE("short trajectories give one whole-trajectory window") {
  const auto ws = candidate_windows(Mat::Ones(2, 5), 5, 8, 4);
  REQUIRE(ws.size() == 1);
  CHECK(ws[0].length == 5);
  CHECK(ws[0].features.size() == 10);
}

TEST_CASE("padding columns never enter a window") {
  Mat frames = Mat::Zero(2, 12);
  frames.leftCols(9).setOnes();
  const auto ws = candidate_windows(frames, 9, 4, 2);
  CHECK(starts(ws) == std::vector<Eigen::Index>{0, 2, 4});
  for (const auto& w : ws) CHECK(w.features.minCoeff() == 1.0);
}

TEST_CASE("flattened features concatenate the frames in order") {
  Mat frames(2, 3);
  frames << 1, 3, 5, 2, 4, 6;
  const auto ws = candidate_windows(frames, 3, 2, 1);
  CHECK(ws[1].features == (Vec(4) << 3, 4, 5, 6).finished());
  const auto means = candidate_windows(frames, 3, 2, 1, WindowFeature::Mean);
  CHECK(means[0].features == (Vec(2) << 2, 3).finished());
}

TEST_CASE("select_diverse hand cases") {
  const auto ws = scalar_windows({0.0, 1.0, 10.0});
  const auto sel = select_diverse(ws, 2, SelectionMode::Exact);
  CHECK(sel.indices == std::vector<std::size_t>{0, 2});
  CHECK(sel.objective == 100.0);

  CHECK(select_diverse(ws, 5, SelectionMode::Exact).indices == std::vector<std::size_t>{0, 1, 2});

  const auto same = scalar_windows({2.0, 2.0, 2.0, 2.0});
  const auto tie = select_diverse(same, 2, SelectionMode::Exact);
  CHECK(tie.indices == std::vector<std::size_t>{0, 1});
  CHECK(tie.objective == 0.0);
}

TEST_CASE("exact selection equals brute-force enumeration for n <= 12, b <= 4") {
  std::mt19937_64 rng(42);
  for (std::size_t n = 1; n <= 12; ++n) {
    for (std::size_t b = 1; b <= 4; ++b) {
      for (int rep = 0; rep < 3; ++rep) {
        const auto ws = random_windows(n, 3, rng);
        std::vector<Eigen::VectorXd> feats;
        for (const auto& w : ws) feats.push_back(w.features);
        const auto expected = oracle::best_subset(feats, std::min(b, n));
        const auto got = select_diverse(ws, b, SelectionMode::Exact);
        CHECK(got.indices == expected.indices);
        CHECK(got.objective == doctest::Approx(expected.objective).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("greedy beats the average random subset") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto ws = random_windows(20, 4, rng);
    const auto greedy = select_diverse(ws, 5, SelectionMode::Greedy);
    double random_mean = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
      std::vector<std::size_t> idx(20);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(5);
      random_mean += dispersion(ws, idx) / 100.0;
    }
    CHECK(greedy.objective >= random_mean);
  }
}

TEST_CASE("exact mode falls back to greedy beyond the subset limit") {
  CHECK(binomial(12, 4) == 495.0);
  CHECK(binomial(40, 8) > kExactSubsetLimit);
  std::mt19937_64 rng(9);
  const auto ws = random_windows(40, 2, rng);
  CHECK(select_diverse(ws, 8, SelectionMode::Exact).indices == select_diverse(ws, 8, SelectionMode::Greedy).indices);
}
