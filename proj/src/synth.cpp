#include "ttp/synth.hpp"

#include "ttp/errors.hpp"
#include "ttp/kv_config.hpp"
#include "ttp/rng.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ttp {
namespace {

Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

double to_stored(double v) { return static_cast<double>(static_cast<float>(v)); }

struct SplitPlan {
  const char* name;
  Shift shift;
  int count;
  std::vector<int> environments;
  std::vector<int> embodiments;
};

struct TaskCurve {
  Vec start;
  Vec goal;
  double gamma;
};

TrajectoryRecord make_trajectory(const SynthSpec& spec, const TaskCurve& task, const Mat& env,
                                 const Mat& emb, Eigen::Index length, std::mt19937_64& rng) {
  const Eigen::Index d = spec.dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double coord_scale = spec.noise_scale / std::sqrt(static_cast<double>(d));
  const double innovation = std::sqrt(1.0 - spec.noise_rho * spec.noise_rho);

  TrajectoryRecord rec;
  rec.goal = task.goal.unaryExpr(&to_stored);
  rec.visual.resize(length, d);
  Vec noise(d);
  for (Eigen::Index k = 0; k < d; ++k) noise(k) = coord_scale * normal(rng);
  for (Eigen::Index t = 1; t <= length; ++t) {
    if (t > 1) {
      for (Eigen::Index k = 0; k < d; ++k) noise(k) = spec.noise_rho * noise(k) + innovation * coord_scale * normal(rng);
    }
    const double p = static_cast<double>(t) / static_cast<double>(length);
    const double w = std::pow(p, task.gamma);
    const Vec u = (1.0 - w) * task.start + w * task.goal;
    rec.visual.row(t - 1) = (emb * (env * u + noise)).transpose().unaryExpr(&to_stored);
  }
  rec.labels = progress_labels(length);
  return rec;
}

}  // namespace

void SynthSpec::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(dim >= 2, "dim must be >= 2");
  require(tasks >= 1, "tasks must be >= 1");
  require(train_environments >= 1, "train_environments must be >= 1");
  require(test_environments >= 1, "test_environments must be >= 1");
  require(test_embodiments >= 1, "test_embodiments must be >= 1");
  require(std::isfinite(env_strength) && env_strength >= 0.0, "env_strength must be finite and >= 0");
  require(gamma_min > 0.0 && gamma_min <= gamma_max && std::isfinite(gamma_max), "need 0 < gamma_min <= gamma_max");
  require(min_length >= 2 && min_length <= max_length && max_length <= kSynthMaxLength,
          "length range must lie within [2, 120]");
  require(std::isfinite(noise_scale) && noise_scale >= 0.0, "noise_scale must be finite and >= 0");
  require(noise_rho >= 0.0 && noise_rho < 1.0, "noise_rho must be in [0, 1)");
  require(train_count >= 1 && val_count >= 1 && test_count >= 1, "split counts must be >= 1");
}

SynthSpec parse_synth_spec(std::string_view text, SynthSpec spec) {
  for (const auto& kv : parse_key_values(text)) {
    const auto& k = kv.key;
    try {
      if (k == "dim") spec.dim = parse_int(kv);
      else if (k == "tasks") spec.tasks = static_cast<int>(parse_int(kv));
      else if (k == "train_environments") spec.train_environments = static_cast<int>(parse_int(kv));
      else if (k == "test_environments") spec.test_environments = static_cast<int>(parse_int(kv));
      else if (k == "test_embodiments") spec.test_embodiments = static_cast<int>(parse_int(kv));
      else if (k == "env_strength") spec.env_strength = parse_double(kv);
      else if (k == "gamma_min") spec.gamma_min = parse_double(kv);
      else if (k == "gamma_max") spec.gamma_max = parse_double(kv);
      else if (k == "min_length") spec.min_length = parse_int(kv);
      else if (k == "max_length") spec.max_length = parse_int(kv);
      else if (k == "noise_scale") spec.noise_scale = parse_double(kv);
      else if (k == "noise_rho") spec.noise_rho = parse_double(kv);
      else if (k == "train_count") spec.train_count = static_cast<int>(parse_int(kv));
      else if (k == "val_count") spec.val_count = static_cast<int>(parse_int(kv));
      else if (k == "test_count") spec.test_count = static_cast<int>(parse_int(kv));
      else if (k == "seed") spec.seed = static_cast<std::uint64_t>(parse_int(kv));
      else throw DataError(DataErrorCode::InvalidValue, "line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
    } catch (const std::invalid_argument& e) {
      throw DataError(DataErrorCode::InvalidValue, "line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorCode::InvalidValue, e.what());
  }
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path, SynthSpec base) {
  return parse_synth_spec(read_text_file(path), base);
}

Mat random_orthogonal(Eigen::Index n, std::uint64_t seed, std::string_view stream) {
  auto rng = rng_stream(seed, stream);
  const Mat g = gaussian(n, n, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  }
  return q;
}

const SynthSplit* SynthBundle::find(std::string_view name) const {
  for (const auto& s : splits) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

SynthBundle generate_bundle(const SynthSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.dim;
  SynthBundle bundle;

  auto task_rng = rng_stream(spec.seed, "synth/tasks");
  const Mat codebook = gaussian(d, spec.tasks, task_rng);  // g = C * one_hot(task)
  std::uniform_real_distribution<double> gamma_dist(spec.gamma_min, spec.gamma_max);
  std::vector<TaskCurve> tasks;
  for (int k = 0; k < spec.tasks; ++k) {
    const Vec goal = codebook.col(k).normalized();
    Vec start = gaussian(d, 1, task_rng);
    start -= start.dot(goal) * goal;
    tasks.push_back({start.normalized(), goal, gamma_dist(task_rng)});
    bundle.goals.push_back(goal.unaryExpr(&to_stored));
  }
  bundle.baseline = Vec::Zero(d);
  for (const auto& g : bundle.goals) bundle.baseline += g;
  bundle.baseline = (bundle.baseline / static_cast<double>(spec.tasks)).unaryExpr(&to_stored);

  auto env_rng = rng_stream(spec.seed, "synth/environments");
  const int env_total = spec.train_environments + spec.test_environments;
  for (int e = 0; e < env_total; ++e) {
    bundle.environments.push_back(Mat::Identity(d, d) +
                                  spec.env_strength / std::sqrt(static_cast<double>(d)) * gaussian(d, d, env_rng));
  }
  bundle.embodiments.push_back(Mat::Identity(d, d));
  for (int m = 1; m <= spec.test_embodiments; ++m) {
    bundle.embodiments.push_back(random_orthogonal(d, spec.seed, "synth/embodiment/" + std::to_string(m)));
  }

  std::vector<int> seen_envs, new_envs, new_embs;
  for (int e = 0; e < spec.train_environments; ++e) seen_envs.push_back(e);
  for (int e = spec.train_environments; e < env_total; ++e) new_envs.push_back(e);
  for (int m = 1; m <= spec.test_embodiments; ++m) new_embs.push_back(m);

  const std::vector<SplitPlan> plans = {
      {"train", Shift::InDistribution, spec.train_count, seen_envs, {0}},
      {"val", Shift::InDistribution, spec.val_count, seen_envs, {0}},
      {"test_id", Shift::InDistribution, spec.test_count, seen_envs, {0}},
      {"test_es", Shift::Environment, spec.test_count, new_envs, {0}},
      {"test_em", Shift::Embodiment, spec.test_count, seen_envs, new_embs},
      {"test_es_em", Shift::EnvironmentEmbodiment, spec.test_count, new_envs, new_embs},
  };

  for (const auto& plan : plans) {
    auto rng = rng_stream(spec.seed, std::string("synth/split/") + plan.name);
    std::uniform_int_distribution<int> task_pick(0, spec.tasks - 1);
    std::uniform_int_distribution<std::size_t> env_pick(0, plan.environments.size() - 1);
    std::uniform_int_distribution<std::size_t> emb_pick(0, plan.embodiments.size() - 1);
    std::uniform_int_distribution<Eigen::Index> length_pick(spec.min_length, spec.max_length);
    SynthSplit split{plan.name, plan.shift, {}, {}, {}};
    for (int i = 0; i < plan.count; ++i) {
      const int task = task_pick(rng);
      const int env = plan.environments[env_pick(rng)];
      const int emb = plan.embodiments[emb_pick(rng)];
      const Eigen::Index length = length_pick(rng);
      auto rec = make_trajectory(spec, tasks[task], bundle.environments[env], bundle.embodiments[emb], length, rng);
      rec.id = std::string(plan.name) + "-" + std::to_string(i) + "-task" + std::to_string(task) + "-env" +
               std::to_string(env) + "-emb" + std::to_string(emb);
      rec.task_text = "synthetic task " + std::to_string(task);
      rec.dataset_tag = plan.name;
      split.records.push_back(std::move(rec));
      split.environments.push_back(env);
      split.embodiments.push_back(emb);
    }
    bundle.splits.push_back(std::move(split));
  }
  return bundle;
}

std::filesystem::path write_bundle(const std::filesystem::path& dir, const SynthBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(DataErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  Manifest manifest;
  for (const auto& split : bundle.splits) {
    const auto path = dir / (split.name + ".ttpe");
    save_container(path, split.records);
    manifest.splits.push_back({split.name, path, split.shift});
  }
  manifest.baseline_embedding = dir / "baseline.ttpv";
  save_vector(*manifest.baseline_embedding, bundle.baseline);
  const auto manifest_path = dir / "manifest.txt";
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace ttp
