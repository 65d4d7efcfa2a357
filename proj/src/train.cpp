#include "ttp/train.hpp"

#include "ttp/adaptation.hpp"
#include "ttp/errors.hpp"
#include "ttp/kv_config.hpp"
#include "ttp/optim.hpp"
#include "ttp/parallel.hpp"
#include "ttp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ttp {
namespace {

std::vector<Mat> zeros_like(const MetaParams& meta) {
  std::vector<Mat> out;
  for (const Mat* m : tensors(meta)) out.push_back(Mat::Zero(m->rows(), m->cols()));
  return out;
}

std::vector<Mat> gradient_values(const VarD& loss, const MetaParamsT<VarD>& vars) {
  std::vector<VarD> params;
  for (const VarD* v : tensors(vars)) params.push_back(*v);
  std::vector<Mat> out;
  for (const auto& g : ad::grad(loss, params)) out.push_back(g.value());
  return out;
}

std::vector<TrainingExample> prepare(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw DataError(DataErrorCode::InvalidValue, "training dataset is empty");
  std::vector<TrainingExample> examples;
  examples.reserve(dataset.size());
  const auto d = dataset.front().encoder_dim();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].encoder_dim() != d) {
      throw DataError(DataErrorCode::DimensionMismatch, "training records disagree on d", i);
    }
    examples.push_back(make_example(dataset[i], cfg.max_length, cfg.max_length));
  }
  return examples;
}

void check_finite(double value, const std::string& what) {
  if (!std::isfinite(value)) throw NumericalError("non-finite " + what);
}

struct ItemResult {
  std::vector<Mat> grads;
  double pred_loss = 0.0;
  double self_loss = 0.0;
};

// Shared epoch/batch/optimizer loop. `compute` fills one ItemResult per batch
// item; `weight` turns the summed gradient into the batch objective.
template <typename MakeItems, typename Compute>
std::vector<EpochLog> run_optimizer(MetaParams& params, std::size_t num_examples, int epochs,
                                    const TrainConfig& cfg, MakeItems&& make_items, Compute&& compute) {
  const long long steps_per_epoch =
      (static_cast<long long>(num_examples) + cfg.batch_size - 1) / cfg.batch_size;
  const long long total_steps = steps_per_epoch * epochs;
  auto shuffle_rng = rng_stream(cfg.seed, "shuffle");
  AdamWState opt;
  long long step = 0;
  std::vector<EpochLog> log;

  std::vector<std::size_t> order(num_examples);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double pred_sum = 0.0, self_sum = 0.0, weight_sum = 0.0, lr = 0.0;
    for (std::size_t begin = 0; begin < num_examples; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(num_examples, begin + static_cast<std::size_t>(cfg.batch_size));
      const auto items = make_items(std::span<const std::size_t>(order).subspan(begin, end - begin));
      std::vector<ItemResult> results(items.size());
      parallel_for(items.size(), cfg.jobs, [&](std::size_t i) { results[i] = compute(items[i]); });

      // Fixed-order reduction keeps the update independent of scheduling.
      std::vector<Mat> grads = zeros_like(params);
      double batch_weight = 0.0;
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        check_finite(r.pred_loss, "prediction loss at epoch " + std::to_string(epoch) + ", batch item " +
                                      std::to_string(i));
        check_finite(r.self_loss, "self-supervised loss at epoch " + std::to_string(epoch));
        for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += r.grads[k];
        pred_sum += r.pred_loss;
        self_sum += r.self_loss;
        batch_weight += items[i].weight;
        weight_sum += items[i].weight;
      }
      for (auto& g : grads) {
        g /= batch_weight;
        if (!g.allFinite()) throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
      }
      lr = cosine_lr(step, total_steps, cfg.warmup_frac, cfg.lr);
      auto ptrs = tensors(params);
      adamw_step(ptrs, grads, opt, lr, cfg.weight_decay);
      ++step;
    }
    log.push_back({epoch, pred_sum / weight_sum, self_sum / weight_sum, lr});
  }
  return log;
}

}  // namespace

std::string_view to_string(MetaGradMode m) { return m == MetaGradMode::Exact ? "exact" : "first-order"; }

MetaGradMode parse_meta_grad_mode(std::string_view text) {
  if (text == "exact") return MetaGradMode::Exact;
  if (text == "first-order" || text == "first_order") return MetaGradMode::FirstOrder;
  throw std::invalid_argument("unknown meta-gradient mode '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(self_weight >= 0.0, "lambda must be >= 0");
  require(window_length >= 1, "window_length must be >= 1");
  require(stride >= 1, "stride must be >= 1");
  require(windows_per_trajectory >= 1, "windows_per_trajectory must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), "lr must be finite and >= 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(warmup_frac >= 0.0 && warmup_frac <= 1.0, "warmup_frac must be in [0, 1]");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(max_length >= 1, "max_length must be >= 1");
  require(inner_lr >= 0.0 && std::isfinite(inner_lr), "inner_lr must be finite and >= 0");
  require(inner_epochs >= 1, "inner_epochs must be >= 1");
  require(proj_dim >= 1 && head_dim >= 1, "proj_dim and head_dim must be >= 1");
  require(regressor_proj_scale >= 1 && regressor_step_scale >= 1, "regressor scales must be >= 1");
  require(jobs >= 1, "jobs must be >= 1");
}

TrainConfig parse_train_config(std::string_view text, TrainConfig cfg) {
  for (const auto& kv : parse_key_values(text)) {
    const auto& k = kv.key;
    try {
      if (k == "lambda") cfg.self_weight = parse_double(kv);
      else if (k == "window_length") cfg.window_length = parse_int(kv);
      else if (k == "stride") cfg.stride = parse_int(kv);
      else if (k == "windows_per_trajectory") cfg.windows_per_trajectory = static_cast<std::size_t>(std::max(0LL, parse_int(kv)));
      else if (k == "lr") cfg.lr = parse_double(kv);
      else if (k == "weight_decay") cfg.weight_decay = parse_double(kv);
      else if (k == "warmup_frac") cfg.warmup_frac = parse_double(kv);
      else if (k == "epochs") cfg.epochs = static_cast<int>(parse_int(kv));
      else if (k == "batch_size") cfg.batch_size = static_cast<int>(parse_int(kv));
      else if (k == "max_length") cfg.max_length = parse_int(kv);
      else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(kv));
      else if (k == "meta_grad_mode") cfg.meta_grad_mode = parse_meta_grad_mode(kv.value);
      else if (k == "selection_mode") cfg.selection = parse_selection_mode(kv.value);
      else if (k == "window_feature") cfg.window_feature = parse_window_feature(kv.value);
      else if (k == "inner_lr") cfg.inner_lr = parse_double(kv);
      else if (k == "inner_epochs") cfg.inner_epochs = static_cast<int>(parse_int(kv));
      else if (k == "proj_dim") cfg.proj_dim = parse_int(kv);
      else if (k == "head_dim") cfg.head_dim = parse_int(kv);
      else if (k == "regressor_proj_scale") cfg.regressor_proj_scale = static_cast<int>(parse_int(kv));
      else if (k == "regressor_step_scale") cfg.regressor_step_scale = static_cast<int>(parse_int(kv));
      else if (k == "jobs") cfg.jobs = static_cast<int>(parse_int(kv));
      else throw DataError(DataErrorCode::InvalidValue, "line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
    } catch (const std::invalid_argument& e) {
      throw DataError(DataErrorCode::InvalidValue, "line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(DataErrorCode::InvalidValue, e.what());
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  return parse_train_config(read_text_file(path), base);
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "lambda = " << cfg.self_weight << "\n"
      << "window_length = " << cfg.window_length << "\n"
      << "stride = " << cfg.stride << "\n"
      << "windows_per_trajectory = " << cfg.windows_per_trajectory << "\n"
      << "lr = " << cfg.lr << "\n"
      << "weight_decay = " << cfg.weight_decay << "\n"
      << "warmup_frac = " << cfg.warmup_frac << "\n"
      << "epochs = " << cfg.epochs << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "max_length = " << cfg.max_length << "\n"
      << "seed = " << cfg.seed << "\n"
      << "meta_grad_mode = " << to_string(cfg.meta_grad_mode) << "\n"
      << "selection_mode = " << to_string(cfg.selection) << "\n"
      << "window_feature = " << to_string(cfg.window_feature) << "\n"
      << "inner_lr = " << cfg.inner_lr << "\n"
      << "inner_epochs = " << cfg.inner_epochs << "\n"
      << "proj_dim = " << cfg.proj_dim << "\n"
      << "head_dim = " << cfg.head_dim << "\n"
      << "regressor_proj_scale = " << cfg.regressor_proj_scale << "\n"
      << "regressor_step_scale = " << cfg.regressor_step_scale << "\n"
      << "jobs = " << cfg.jobs << "\n";
  return out.str();
}

TrainingExample make_example(const TrajectoryRecord& record, Eigen::Index max_length, Eigen::Index pad_to) {
  if (!record.labels) {
    throw DataError(DataErrorCode::InvalidValue, "trajectory '" + record.id + "' has no progress labels");
  }
  if (max_length < 1) throw std::invalid_argument("max_length must be >= 1");
  const Mat all = fused_frames(record);
  const Eigen::Index length = record.length();
  const Eigen::Index kept = std::min(length, max_length);
  const Eigen::Index width = std::max(kept, pad_to);
  TrainingExample ex{record.id, Mat::Zero(all.rows(), width), Vec::Zero(width), kept};
  for (Eigen::Index i = 0; i < kept; ++i) {
    // Uniform subsampling that always keeps the final (completion) frame.
    const Eigen::Index src = kept == length ? i : ((i + 1) * length) / kept - 1;
    ex.frames.col(i) = all.col(src);
    ex.labels(i) = (*record.labels)(src);
  }
  return ex;
}

WindowLoss window_loss(const TrainingExample& example, const Window& window,
                       const MetaParamsT<VarD>& meta, const TrainConfig& cfg) {
  if (window.start < 0 || window.length < 1 || window.start + window.length > example.frames.cols()) {
    throw std::invalid_argument("window_loss: window outside the example");
  }
  if (example.labels.size() != example.frames.cols()) {
    throw DataError(DataErrorCode::InvalidValue, "window_loss: missing labels for '" + example.id + "'");
  }
  const bool exact = cfg.meta_grad_mode == MetaGradMode::Exact;
  const Eigen::Index last = std::min(window.start + window.length, example.valid);

  AdaptParamsT<VarD> theta = meta.adapt;
  VarD pred_total, self_total;
  Eigen::Index count = 0;
  for (Eigen::Index t = window.start; t < last; ++t) {
    const VarD x = VarD::constant(example.frames.col(t));
    VarD self;
    theta = inner_update(theta, x, cfg.inner_lr, cfg.inner_epochs, meta.proj, exact, &self);
    const VarD pred = predict(x, theta, meta.proj, meta.head);
    const VarD residual = ad::add_scalar(pred, -example.labels(t));
    const VarD sq = ad::cwise_product(residual, residual);
    pred_total = count == 0 ? sq : pred_total + sq;
    self_total = count == 0 ? self : self_total + self;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("window_loss: window covers only padding");
  const double inv = 1.0 / static_cast<double>(count);
  WindowLoss out;
  out.total = pred_total * inv + self_total * (cfg.self_weight * inv);
  out.pred_loss = pred_total.item() * inv;
  out.self_loss = self_total.item() * inv;
  return out;
}

VarD regression_loss_sum(const TrainingExample& example, const MetaParamsT<VarD>& meta) {
  if (example.valid < 1) throw std::invalid_argument("regression_loss_sum: no valid frames");
  const VarD x = VarD::constant(example.frames.leftCols(example.valid));
  const VarD pred = predict(x, AdaptParamsT<VarD>{}, meta.proj, meta.head);
  const VarD residual = pred - VarD::constant(example.labels.head(example.valid).transpose());
  return ad::squared_norm(residual);
}

TrainResult train(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError(DataErrorCode::InvalidValue, "training dataset is empty");
  const auto dims = ModelDims::make(dataset.front().encoder_dim(), cfg.proj_dim, cfg.head_dim);
  return train(dataset, cfg, init_meta_params(dims, cfg.seed));
}

TrainResult train(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg, MetaParams initial) {
  cfg.validate();
  validate(initial);
  if (!has_adaptation(initial)) throw std::invalid_argument("train: model has no adaptation module");
  const auto examples = prepare(dataset, cfg);
  if (examples.front().frames.rows() != dims_of(initial).fused_dim) {
    throw DataError(DataErrorCode::DimensionMismatch, "dataset dimension does not match the model");
  }

  struct Item {
    const TrainingExample* example;
    Window window;
    double weight = 1.0;  // one unit per window: the batch objective is the window mean
  };

  TrainResult result{std::move(initial), {}};
  MetaParams& params = result.params;
  auto make_items = [&](std::span<const std::size_t> batch) {
    std::vector<Item> items;
    for (std::size_t idx : batch) {
      const auto& ex = examples[idx];
      auto candidates = candidate_windows(ex.frames, ex.valid, cfg.window_length, cfg.stride, cfg.window_feature);
      const auto chosen = select_diverse(candidates, cfg.windows_per_trajectory, cfg.selection);
      for (std::size_t c : chosen.indices) {
        Window w = std::move(candidates[c]);
        w.features.resize(0);
        items.push_back({&ex, std::move(w)});
      }
    }
    return items;
  };
  auto compute = [&](const Item& item) {
    const auto vars = as_params(params);
    const WindowLoss loss = window_loss(*item.example, item.window, vars, cfg);
    return ItemResult{gradient_values(loss.total, vars), loss.pred_loss, loss.self_loss};
  };
  result.log = run_optimizer(params, examples.size(), cfg.epochs, cfg, make_items, compute);
  return result;
}

TrainResult train_regressor(std::span<const TrajectoryRecord> dataset, const TrainConfig& cfg) {
  cfg.validate();
  const auto examples = prepare(dataset, cfg);
  const auto dims = ModelDims::make(dataset.front().encoder_dim(), cfg.proj_dim * cfg.regressor_proj_scale,
                                    cfg.head_dim);
  TrainResult result{init_regressor_params(dims, cfg.seed), {}};
  MetaParams& params = result.params;

  struct Item {
    const TrainingExample* example;
    double weight = 0.0;  // frame count: the batch objective is the frame mean
  };
  auto make_items = [&](std::span<const std::size_t> batch) {
    std::vector<Item> items;
    for (std::size_t idx : batch) {
      items.push_back({&examples[idx], static_cast<double>(examples[idx].valid)});
    }
    return items;
  };
  auto compute = [&](const Item& item) {
    const auto vars = as_params(params);
    const VarD loss = regression_loss_sum(*item.example, vars);
    return ItemResult{gradient_values(loss, vars), loss.item(), 0.0};
  };
  result.log = run_optimizer(params, examples.size(), cfg.epochs * cfg.regressor_step_scale, cfg,
                             make_items, compute);
  return result;
}

std::string format_training_log(std::span<const EpochLog> log) {
  std::string out = "epoch,pred_loss,self_loss,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.pred_loss, e.self_loss, e.lr);
    out += buf;
  }
  return out;
}

}  // namespace ttp
