// Command-line entry point: synth, train, eval, baseline, gradcheck, report, sweep.
//
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.

#include "ttp/adaptation.hpp"
#include "ttp/checkpoint.hpp"
#include "ttp/dataset.hpp"
#include "ttp/errors.hpp"
#include "ttp/evaluation.hpp"
#include "ttp/gradcheck.hpp"
#include "ttp/kv_config.hpp"
#include "ttp/synth.hpp"
#include "ttp/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ttp;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) throw DataError(DataErrorCode::Io, "cannot write " + path.string());
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
}

std::vector<TrajectoryRecord> load_split(const Manifest& manifest, const std::string& name) {
  const ManifestSplit* split = manifest.find(name);
  if (!split) throw DataError(DataErrorCode::InvalidValue, "manifest has no '" + name + "' split");
  return load_container(split->path);
}

std::vector<const ManifestSplit*> selected_splits(const Manifest& manifest, const std::vector<std::string>& names) {
  if (names.empty()) return manifest.evaluation_splits();
  std::vector<const ManifestSplit*> out;
  for (const auto& n : names) {
    const ManifestSplit* s = manifest.find(n);
    if (!s) throw DataError(DataErrorCode::InvalidValue, "manifest has no '" + n + "' split");
    out.push_back(s);
  }
  return out;
}

std::vector<EvalReport> evaluate_splits(const std::vector<const ManifestSplit*>& splits, const Estimator& est,
                                        int jobs) {
  std::vector<EvalReport> reports;
  for (const ManifestSplit* s : splits) {
    const auto records = load_container(s->path);
    reports.push_back(evaluate(records, est, {s->name, s->shift, jobs}));
  }
  return reports;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int run_synth(const SynthArgs& a) {
  SynthSpec spec = a.spec.empty() ? SynthSpec{} : load_synth_spec(a.spec);
  if (a.seed) spec.seed = *a.seed;
  const fs::path out(a.out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)) && !a.force) {
    throw UsageError("output directory " + out.string() + " exists and is not empty (use --force)");
  }
  const auto manifest = write_bundle(out, generate_bundle(spec));
  std::cout << "wrote " << manifest.string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data, config, out, log, meta_grad;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool regressor = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (!a.meta_grad.empty()) cfg.meta_grad_mode = parse_meta_grad_mode(a.meta_grad);
  if (a.seed) cfg.seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  cfg.validate();
  const auto manifest = read_manifest(a.data);
  const auto records = load_split(manifest, "train");
  const TrainResult result = a.regressor ? train_regressor(records, cfg) : train(records, cfg);
  save_checkpoint(a.out, result.params);
  const std::string log_path = a.log.empty() ? a.out + ".log.csv" : a.log;
  write_text(log_path, format_training_log(result.log));
  for (const auto& e : result.log) {
    std::fprintf(stderr, "epoch %d  pred %.6f  self %.6f  lr %.3g\n", e.epoch, e.pred_loss, e.self_loss, e.lr);
  }
  return kOk;
}

struct EvalArgs {
  std::string model, data, variant = "ttt-im", format = "tsv", out, predictions;
  std::optional<double> eta;
  std::optional<long> k;
  std::optional<int> epochs;
  std::vector<std::string> splits;
  bool carry = false;
  int jobs = 1;
};

AdaptConfig adapt_config(const EvalArgs& a) {
  AdaptConfig cfg = AdaptConfig::defaults(parse_variant(a.variant));
  if (a.eta) cfg.eta = *a.eta;
  if (a.k) cfg.window = *a.k;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.carry_across_episodes = a.carry;
  cfg.validate();
  return cfg;
}

int run_eval(const EvalArgs& a) {
  const AdaptConfig cfg = adapt_config(a);
  const auto format = parse_report_format(a.format);
  const MetaParams model = load_checkpoint(a.model);
  const auto manifest = read_manifest(a.data);
  const Estimator est = make_estimator(estimator_for(cfg.variant), {model, cfg, std::nullopt});
  const auto reports = evaluate_splits(selected_splits(manifest, a.splits), est, a.jobs);
  emit(a.out, render_reports(reports, format));
  if (!a.predictions.empty()) write_text(a.predictions, format_predictions_csv(reports));
  return kOk;
}

struct BaselineArgs {
  std::string method, data, model, baseline_embedding, format = "tsv", out, predictions;
  std::vector<std::string> splits;
  int jobs = 1;
};

int run_baseline(const BaselineArgs& a) {
  const auto format = parse_report_format(a.format);
  const EstimatorKind kind = parse_estimator(a.method);
  EstimatorInputs inputs;
  if (kind == EstimatorKind::VlmRm) {
    if (a.baseline_embedding.empty()) throw UsageError("--method vlmrm requires --baseline-embedding");
    inputs.baseline_goal = load_vector(a.baseline_embedding);
  } else if (kind == EstimatorKind::ClipFt) {
    if (a.model.empty()) throw UsageError("--method clipft requires --model <regressor checkpoint>");
    inputs.model = load_checkpoint(a.model);
  } else if (kind != EstimatorKind::Clip) {
    throw UsageError("unknown baseline method '" + a.method + "'");
  }
  const auto manifest = read_manifest(a.data);
  const Estimator est = make_estimator(kind, inputs);
  const auto reports = evaluate_splits(selected_splits(manifest, a.splits), est, a.jobs);
  emit(a.out, render_reports(reports, format));
  if (!a.predictions.empty()) write_text(a.predictions, format_predictions_csv(reports));
  return kOk;
}

int run_gradcheck(bool second_order, std::uint64_t seed) {
  GradCheckOptions options;
  options.seed = seed;
  auto results = check_first_order(options);
  if (second_order) {
    const auto more = check_second_order(options);
    results.insert(results.end(), more.begin(), more.end());
  }
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-22s max rel err %.3e  (tol %.0e)  %s\n", r.name.c_str(), r.max_relative_error, r.tolerance,
                r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? kOk : kNumerical;
}

int run_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out) {
  std::vector<EvalReport> all;
  for (const auto& path : inputs) {
    auto reports = parse_reports_json(read_text_file(path));
    all.insert(all.end(), std::make_move_iterator(reports.begin()), std::make_move_iterator(reports.end()));
  }
  emit(out, render_reports(all, parse_report_format(format)));
  return kOk;
}

struct SweepArgs {
  std::string model, data, variant = "ttt-im", split = "val", out;
  std::vector<double> etas = {5.0, 1.0, 0.1, 0.01};
  std::vector<int> epochs = {1, 5, 10};
  std::optional<long> k;
  int jobs = 1;
};

int run_sweep(const SweepArgs& a) {
  const MetaParams model = load_checkpoint(a.model);
  const auto manifest = read_manifest(a.data);
  const auto records = load_split(manifest, a.split);
  const Variant variant = parse_variant(a.variant);
  AdaptConfig base = AdaptConfig::defaults(variant);
  if (a.k) base.window = *a.k;
  const auto cells =
      sweep_adaptation(records, model, base, a.etas, a.epochs, {a.split, manifest.find(a.split)->shift, a.jobs});
  std::string out = "eta\tt_ep\tmean_voc\tdegenerate\n";
  for (const auto& c : cells) {
    char row[96];
    if (c.mean_voc) {
      std::snprintf(row, sizeof row, "%g\t%d\t%.4f\t%zu\n", c.eta, c.epochs, *c.mean_voc, c.degenerate);
    } else {
      std::snprintf(row, sizeof row, "%g\t%d\tnan\t-\n", c.eta, c.epochs);
    }
    out += row;
  }
  emit(a.out, out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation for task-progress estimation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset bundle");
  synth_cmd->add_option("--spec", synth.spec, "Synthetic spec file (key = value)")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Overrides the spec seed");
  synth_cmd->add_flag("--force", synth.force, "Write into a non-empty directory");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Meta-train a model (or the frozen-feature regressor)");
  train_cmd->add_option("--data", train_args.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", train_args.config, "Training config (key = value)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "Checkpoint path")->required();
  train_cmd->add_option("--log", train_args.log, "Loss log CSV (default <out>.log.csv)");
  train_cmd->add_option("--meta-grad", train_args.meta_grad, "exact | first-order")
      ->check(CLI::IsMember({"exact", "first-order"}));
  train_cmd->add_option("--seed", train_args.seed, "Overrides the config seed");
  train_cmd->add_option("--jobs", train_args.jobs, "Worker threads for window losses");
  train_cmd->add_flag("--regressor", train_args.regressor, "Train the CLIP-FT regressor instead");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a test-time adaptation variant");
  eval_cmd->add_option("--model", eval.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--variant", eval.variant, "ttt-im | ttt-ex | ttt-tr | ttt-rs")
      ->check(CLI::IsMember({"ttt-im", "ttt-ex", "ttt-tr", "ttt-rs"}));
  eval_cmd->add_option("--eta", eval.eta, "Inner learning rate");
  eval_cmd->add_option("--k", eval.k, "Context frames before t (ttt-ex)");
  eval_cmd->add_option("--epochs", eval.epochs, "Inner epochs t_ep");
  eval_cmd->add_flag("--carry-across-episodes", eval.carry, "Keep ttt-im state between trajectories");
  eval_cmd->add_option("--split", eval.splits, "Splits to evaluate (default: all evaluation splits)");
  eval_cmd->add_option("--format", eval.format, "tsv | md | json")->check(CLI::IsMember({"tsv", "md", "json"}));
  eval_cmd->add_option("--out", eval.out, "Report path (default stdout)");
  eval_cmd->add_option("--predictions", eval.predictions, "Per-trajectory predictions CSV");
  eval_cmd->add_option("--jobs", eval.jobs, "Trajectory-parallel workers")->check(CLI::PositiveNumber);

  BaselineArgs base;
  auto* base_cmd = app.add_subcommand("baseline", "Evaluate a non-adaptive baseline");
  base_cmd->add_option("--method", base.method, "clip | vlmrm | clipft")
      ->required()
      ->check(CLI::IsMember({"clip", "vlmrm", "clipft"}));
  base_cmd->add_option("--data", base.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  base_cmd->add_option("--model", base.model, "Regressor checkpoint (clipft)")->check(CLI::ExistingFile);
  base_cmd->add_option("--baseline-embedding", base.baseline_embedding, "Reference-prompt vector (vlmrm)")
      ->check(CLI::ExistingFile);
  base_cmd->add_option("--split", base.splits, "Splits to evaluate (default: all evaluation splits)");
  base_cmd->add_option("--format", base.format, "tsv | md | json")->check(CLI::IsMember({"tsv", "md", "json"}));
  base_cmd->add_option("--out", base.out, "Report path (default stdout)");
  base_cmd->add_option("--predictions", base.predictions, "Per-trajectory predictions CSV");
  base_cmd->add_option("--jobs", base.jobs, "Trajectory-parallel workers")->check(CLI::PositiveNumber);

  bool second_order = false;
  std::uint64_t gradcheck_seed = 7;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_cmd->add_flag("--second-order", second_order, "Also check gradients through the inner update");
  grad_cmd->add_option("--seed", gradcheck_seed, "Seed for the random toy models");

  std::vector<std::string> report_inputs;
  std::string report_format = "md", report_out;
  auto* report_cmd = app.add_subcommand("report", "Merge JSON reports into one table");
  report_cmd->add_option("inputs", report_inputs, "JSON reports")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--format", report_format, "tsv | md | json")->check(CLI::IsMember({"tsv", "md", "json"}));
  report_cmd->add_option("--out", report_out, "Output path (default stdout)");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over eta and t_ep on one split");
  sweep_cmd->add_option("--model", sweep.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", sweep.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--variant", sweep.variant, "ttt-im | ttt-ex | ttt-tr | ttt-rs")
      ->check(CLI::IsMember({"ttt-im", "ttt-ex", "ttt-tr", "ttt-rs"}));
  sweep_cmd->add_option("--split", sweep.split, "Split to sweep on");
  sweep_cmd->add_option("--etas", sweep.etas, "Inner learning rates");
  sweep_cmd->add_option("--epochs", sweep.epochs, "Inner epoch counts");
  sweep_cmd->add_option("--k", sweep.k, "Context frames (ttt-ex)");
  sweep_cmd->add_option("--out", sweep.out, "Output path (default stdout)");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Trajectory-parallel workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval);
    if (*base_cmd) return run_baseline(base);
    if (*grad_cmd) return run_gradcheck(second_order, gradcheck_seed);
    if (*report_cmd) return run_report(report_inputs, report_format, report_out);
    if (*sweep_cmd) return run_sweep(sweep);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
