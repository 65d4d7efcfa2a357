#include "doctest.h"

#include "ttp/dataset.hpp"
#include "ttp/errors.hpp"
#include "ttp/synth.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <map>
#include <set>

using namespace ttp;
namespace fs = std::filesystem;

namespace {

TrajectoryRecord float_record(Eigen::Index d, Eigen::Index length, std::uint64_t seed, bool labels = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  TrajectoryRecord r;
  r.id = "rec-" + std::to_string(seed);
  r.task_text = "open the drawer";
  r.dataset_tag = "toy";
  r.goal = Vec(d);
  for (Eigen::Index k = 0; k < d; ++k) r.goal(k) = n(rng);
  r.visual = Mat(length, d);
  for (Eigen::Index i = 0; i < r.visual.size(); ++i) r.visual.data()[i] = n(rng);
  if (labels) r.labels = progress_labels(length);
  return r;
}

DataErrorCode code_of(std::span<const std::uint8_t> bytes) {
  try {
    decode_container(bytes);
  } catch (const DataError& e) {
    return e.code();
  }
  FAIL("expected a DataError");
  return DataErrorCode::Io;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ttp-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("progress labels are t / T") {
  const Vec y = progress_labels(4);
  CHECK(y(0) == 0.25);
  CHECK(y(3) == 1.0);
  CHECK(progress_labels(3)(0) == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("containers round-trip bit-exactly") {
  std::vector<TrajectoryRecord> recs = {float_record(5, 7, 1), float_record(5, 1, 2, false), float_record(5, 30, 3)};
  const auto back = decode_container(encode_container(recs));
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) CHECK(back[i] == recs[i]);
  CHECK_FALSE(back[1].labels.has_value());

  const auto dir = scratch_dir("container");
  save_container(dir / "a.ttpe", recs);
  CHECK(load_container(dir / "a.ttpe") == recs);
  fs::remove_all(dir);
}

TEST_CASE("container header errors are typed") {
  std::vector<TrajectoryRecord> recs = {float_record(3, 4, 1)};
  const auto bytes = encode_container(recs);
  auto magic = bytes;
  magic[1] = 'Q';
  CHECK(code_of(magic) == DataErrorCode::BadMagic);
  auto version = bytes;
  version[4] = 9;
  CHECK(code_of(version) == DataErrorCode::UnsupportedVersion);
  auto extra = bytes;
  extra.push_back(1);
  CHECK(code_of(extra) == DataErrorCode::TrailingData);
  CHECK(code_of(std::span(bytes).first(6)) == DataErrorCode::Truncated);
}

TEST_CASE("truncation names the record that was cut") {
  std::vector<TrajectoryRecord> recs = {float_record(3, 4, 1), float_record(3, 6, 2), float_record(3, 5, 3)};
  const auto bytes = encode_container(recs);
  const auto one = encode_container(std::span(recs).first(2));
  try {
    decode_container(std::span(bytes).first(one.size() + 10));
    FAIL("expected truncation");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::Truncated);
    REQUIRE(e.record().has_value());
    CHECK(*e.record() == 2);
  }
}

TEST_CASE("invalid record contents are rejected") {
  auto nan = float_record(3, 4, 1);
  nan.visual(2, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(nan), DataError);
  auto labels = float_record(3, 4, 2);
  (*labels.labels)(3) = 0.9;
  CHECK_THROWS_AS(validate(labels), DataError);
  auto empty = float_record(3, 4, 3);
  empty.visual.resize(0, 3);
  CHECK_THROWS_AS(validate(empty), DataError);
  std::vector<TrajectoryRecord> mixed = {float_record(3, 4, 4), float_record(2, 4, 5)};
  CHECK_THROWS_AS(encode_container(mixed), DataError);
}

TEST_CASE("random corruption never escapes as anything but DataError") {
  std::vector<TrajectoryRecord> recs = {float_record(4, 6, 1), float_record(4, 3, 2)};
  const auto bytes = encode_container(recs);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> val(0, 255);
  for (int rep = 0; rep < 2000; ++rep) {
    auto bad = bytes;
    for (int k = 0; k < 3; ++k) bad[pos(rng)] = static_cast<std::uint8_t>(val(rng));
    try {
      decode_container(bad);
    } catch (const DataError&) {
    } catch (const std::exception& e) {
      FAIL("unexpected exception: " << e.what());
    }
  }
}

TEST_CASE("baseline vector files") {
  const Vec v = (Vec(3) << 0.5, -1.25, 2.0).finished();
  CHECK(decode_vector(encode_vector(v)) == v);
  auto bytes = encode_vector(v);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_vector(bytes), DataError);
  bytes = encode_vector(v);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_vector(bytes), DataError);
}

TEST_CASE("manifests resolve paths and shift tags") {
  const auto dir = scratch_dir("manifest");
  std::ofstream(dir / "manifest.txt") << "# bundle\nsplit.train = train.ttpe ID\nsplit.test_x = sub/x.ttpe ES&EM\n"
                                         "baseline_embedding = b.ttpv\n";
  const auto m = read_manifest(dir / "manifest.txt");
  REQUIRE(m.splits.size() == 2);
  CHECK(m.find("test_x")->shift == Shift::EnvironmentEmbodiment);
  CHECK(m.find("test_x")->path == dir / "sub/x.ttpe");
  CHECK(*m.baseline_embedding == dir / "b.ttpv");
  REQUIRE(m.evaluation_splits().size() == 1);
  CHECK(m.evaluation_splits()[0]->name == "test_x");

  write_manifest(dir / "copy.txt", m);
  const auto again = read_manifest(dir / "copy.txt");
  CHECK(again.find("test_x")->path == m.find("test_x")->path);

  std::ofstream(dir / "bad.txt") << "split.a = a.ttpe XX\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.txt"), DataError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.txt"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic goals, labels and splits") {
  SynthSpec spec;
  spec.train_count = 30;
  spec.val_count = 6;
  spec.test_count = 8;
  const auto bundle = generate_bundle(spec);
  REQUIRE(bundle.splits.size() == 6);

  for (const auto& R : bundle.embodiments) {
    CHECK((R.transpose() * R - Mat::Identity(spec.dim, spec.dim)).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(bundle.embodiments[0] == Mat::Identity(spec.dim, spec.dim));

  for (const auto& split : bundle.splits) {
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      const auto& r = split.records[i];
      validate(r, i);
      const Vec expected = progress_labels(r.length());
      CHECK(*r.labels == expected);
      CHECK(r.length() >= spec.min_length);
      CHECK(r.length() <= spec.max_length);
      CHECK(r.dataset_tag == split.name);
    }
  }

  // Same task, same goal embedding wherever it appears.
  std::map<std::string, Vec> goal_of;
  for (const auto& split : bundle.splits) {
    for (const auto& r : split.records) {
      auto [it, fresh] = goal_of.emplace(r.task_text, r.goal);
      if (!fresh) CHECK(it->second == r.goal);
    }
  }

  const auto envs = [&](const char* name) {
    const auto& e = bundle.find(name)->environments;
    return std::set<int>(e.begin(), e.end());
  };
  const auto embs = [&](const char* name) {
    const auto& e = bundle.find(name)->embodiments;
    return std::set<int>(e.begin(), e.end());
  };
  for (int e : envs("test_es")) CHECK(envs("train").count(e) == 0);
  for (int e : envs("test_es_em")) CHECK(envs("train").count(e) == 0);
  for (int e : envs("test_em")) CHECK(envs("train").count(e) == 1);
  CHECK(embs("train") == std::set<int>{0});
  CHECK(embs("test_es") == std::set<int>{0});
  for (int m : embs("test_em")) CHECK(m != 0);
  CHECK(bundle.find("test_em")->shift == Shift::Embodiment);
  CHECK(bundle.find("test_es_em")->shift == Shift::EnvironmentEmbodiment);
}

TEST_CASE("synthetic generation is a pure function of the spec") {
  SynthSpec spec;
  spec.train_count = 5;
  spec.val_count = 2;
  spec.test_count = 3;
  const auto a = generate_bundle(spec);
  const auto b = generate_bundle(spec);
  CHECK(a.find("test_em")->records == b.find("test_em")->records);
  spec.seed = 43;
  const auto c = generate_bundle(spec);
  CHECK_FALSE(a.find("train")->records == c.find("train")->records);
}

TEST_CASE("noise-free trajectories approach their goal monotonically") {
  SynthSpec spec;
  spec.noise_scale = 0.0;
  spec.env_strength = 0.0;
  spec.train_count = 10;
  spec.val_count = 1;
  spec.test_count = 1;
  const auto bundle = generate_bundle(spec);
  for (const auto& r : bundle.find("train")->records) {
    double prev = -2.0;
    for (Eigen::Index t = 0; t < r.length(); ++t) {
      const Vec v = r.visual.row(t).transpose();
      const double c = v.dot(r.goal) / (v.norm() * r.goal.norm());
      CHECK(c > prev - 1e-6);  // float storage
      prev = c;
    }
    CHECK(prev == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("synth spec parsing and bundle files") {
  const auto spec = parse_synth_spec("dim = 6\ntrain_count = 3\nval_count = 1\ntest_count = 2\nseed = 5\n");
  CHECK(spec.dim == 6);
  CHECK_THROWS_AS(parse_synth_spec("dims = 6\n"), DataError);
  CHECK_THROWS_AS(parse_synth_spec("noise_rho = 1.5\n"), DataError);

  const auto dir = scratch_dir("bundle");
  const auto bundle = generate_bundle(spec);
  const auto manifest_path = write_bundle(dir, bundle);
  const auto m = read_manifest(manifest_path);
  CHECK(m.splits.size() == 6);
  CHECK(load_container(m.find("test_es")->path) == bundle.find("test_es")->records);
  CHECK(load_vector(*m.baseline_embedding).size() == 6);
  fs::remove_all(dir);
}
