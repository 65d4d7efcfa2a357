#include "ttp/evaluation.hpp"

#include "ttp/errors.hpp"
#include "ttp/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace ttp {
namespace {

using nlohmann::json;

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Tied block occupies positions i..j-1, i.e. ranks i+1..j.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double norm_checked(const Eigen::Ref<const Vec>& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument(std::string(what) + " has zero or non-finite norm");
  }
  return n;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct TableRow {
  std::string dataset;
  Shift shift;
  std::vector<std::optional<double>> cells;
};

struct Table {
  std::vector<std::string> estimators;
  std::vector<TableRow> rows;
};

Table tabulate(std::span<const EvalReport> reports) {
  Table table;
  for (const auto& r : reports) {
    if (std::find(table.estimators.begin(), table.estimators.end(), r.estimator) == table.estimators.end()) {
      table.estimators.push_back(r.estimator);
    }
  }
  for (const auto& r : reports) {
    auto row = std::find_if(table.rows.begin(), table.rows.end(),
                            [&](const TableRow& t) { return t.dataset == r.dataset && t.shift == r.shift; });
    if (row == table.rows.end()) {
      table.rows.push_back({r.dataset, r.shift, std::vector<std::optional<double>>(table.estimators.size())});
      row = std::prev(table.rows.end());
    }
    const auto col = std::find(table.estimators.begin(), table.estimators.end(), r.estimator) -
                     table.estimators.begin();
    row->cells[static_cast<std::size_t>(col)] = r.mean_voc();
  }
  return table;
}

json report_to_json(const EvalReport& r) {
  json trajectories = json::array();
  for (const auto& t : r.trajectories) {
    trajectories.push_back({{"id", t.id}, {"voc", t.voc.value}, {"degenerate", t.voc.degenerate}});
  }
  return {{"dataset", r.dataset},
          {"shift", std::string(to_string(r.shift))},
          {"estimator", r.estimator},
          {"mean_voc", r.mean_voc()},
          {"degenerate", r.degenerate_count()},
          {"trajectories", std::move(trajectories)}};
}

}  // namespace

VocScore spearman_voc(std::span<const double> preds) {
  const std::size_t n = preds.size();
  if (n < 2) throw std::invalid_argument("spearman_voc needs at least 2 predictions");
  for (double p : preds) {
    if (!std::isfinite(p)) throw NumericalError("spearman_voc: non-finite prediction");
  }
  const auto ranks = average_ranks(preds);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ranks[i] - mean;
    cov += r * (static_cast<double>(i + 1) - mean);
    var += r * r;
  }
  if (var == 0.0) return {0.0, true};
  const double nd = static_cast<double>(n);
  const double time_var = nd * (nd * nd - 1.0) / 12.0;
  return {std::clamp(cov / std::sqrt(var * time_var), -1.0, 1.0), false};
}

std::vector<double> clip_similarity(const TrajectoryRecord& traj) {
  const double goal_norm = norm_checked(traj.goal, "goal embedding");
  std::vector<double> out(static_cast<std::size_t>(traj.length()));
  for (Eigen::Index t = 0; t < traj.length(); ++t) {
    const Vec v = traj.visual.row(t).transpose();
    out[t] = v.dot(traj.goal) / (norm_checked(v, "frame embedding") * goal_norm);
  }
  return out;
}

std::vector<double> vlmrm_projection(const TrajectoryRecord& traj, const Vec& baseline_goal) {
  if (baseline_goal.size() != traj.encoder_dim()) {
    throw std::invalid_argument("baseline embedding dimension does not match the trajectory");
  }
  const Vec direction_raw = traj.goal / norm_checked(traj.goal, "goal embedding") -
                            baseline_goal / norm_checked(baseline_goal, "baseline embedding");
  const Vec direction = direction_raw / norm_checked(direction_raw, "goal - baseline direction");
  std::vector<double> out(static_cast<std::size_t>(traj.length()));
  for (Eigen::Index t = 0; t < traj.length(); ++t) {
    const Vec v = traj.visual.row(t).transpose();
    out[t] = v.dot(direction) / norm_checked(v, "frame embedding");
  }
  return out;
}

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::TttIm: return "TTT-IM";
    case EstimatorKind::TttEx: return "TTT-EX";
    case EstimatorKind::TttTr: return "TTT-TR";
    case EstimatorKind::TttRs: return "TTT-RS";
    case EstimatorKind::Clip: return "CLIP";
    case EstimatorKind::VlmRm: return "VLM-RM";
    case EstimatorKind::ClipFt: return "CLIP-FT";
  }
  return "?";
}

EstimatorKind parse_estimator(std::string_view text) {
  for (auto k : {EstimatorKind::TttIm, EstimatorKind::TttEx, EstimatorKind::TttTr, EstimatorKind::TttRs,
                 EstimatorKind::Clip, EstimatorKind::VlmRm, EstimatorKind::ClipFt}) {
    if (text == to_string(k)) return k;
  }
  if (text == "clip") return EstimatorKind::Clip;
  if (text == "vlmrm") return EstimatorKind::VlmRm;
  if (text == "clipft") return EstimatorKind::ClipFt;
  return estimator_for(parse_variant(text));
}

EstimatorKind estimator_for(Variant v) {
  switch (v) {
    case Variant::Implicit: return EstimatorKind::TttIm;
    case Variant::Explicit: return EstimatorKind::TttEx;
    case Variant::Reset: return EstimatorKind::TttRs;
    case Variant::Trajectory: return EstimatorKind::TttTr;
  }
  return EstimatorKind::TttIm;
}

Estimator make_estimator(EstimatorKind kind, const EstimatorInputs& inputs) {
  Estimator est;
  est.name = std::string(to_string(kind));
  switch (kind) {
    case EstimatorKind::Clip:
      est.predict = [](const TrajectoryRecord& t) { return clip_similarity(t); };
      return est;
    case EstimatorKind::VlmRm: {
      if (!inputs.baseline_goal) throw std::invalid_argument("VLM-RM needs a baseline embedding");
      est.predict = [b = *inputs.baseline_goal](const TrajectoryRecord& t) { return vlmrm_projection(t, b); };
      return est;
    }
    case EstimatorKind::ClipFt: {
      if (!inputs.model) throw std::invalid_argument("CLIP-FT needs a trained regressor checkpoint");
      if (has_adaptation(*inputs.model)) {
        throw std::invalid_argument("CLIP-FT expects a regressor checkpoint without an adaptation module");
      }
      est.predict = [m = *inputs.model](const TrajectoryRecord& t) { return frozen_forward(fused_frames(t), m); };
      return est;
    }
    case EstimatorKind::TttIm:
    case EstimatorKind::TttEx:
    case EstimatorKind::TttTr:
    case EstimatorKind::TttRs: break;
  }
  if (!inputs.model) throw std::invalid_argument(est.name + " needs a meta-trained checkpoint");
  if (!has_adaptation(*inputs.model)) {
    throw std::invalid_argument(est.name + " needs a checkpoint with an adaptation module");
  }
  const Variant variant = kind == EstimatorKind::TttIm   ? Variant::Implicit
                          : kind == EstimatorKind::TttEx ? Variant::Explicit
                          : kind == EstimatorKind::TttRs ? Variant::Reset
                                                         : Variant::Trajectory;
  AdaptConfig cfg = inputs.adapt.value_or(AdaptConfig::defaults(variant));
  cfg.variant = variant;
  cfg.validate();
  if (cfg.carry_across_episodes) {
    auto state = std::make_shared<AdaptState>(initial_state(*inputs.model));
    est.predict = [m = *inputs.model, cfg, state](const TrajectoryRecord& t) {
      return run_ttt(t, m, cfg, state.get());
    };
    est.sequential = true;
  } else {
    est.predict = [m = *inputs.model, cfg](const TrajectoryRecord& t) { return run_ttt(t, m, cfg); };
  }
  return est;
}

double EvalReport::mean_voc() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : trajectories) {
    if (t.voc.degenerate) continue;
    sum += t.voc.value;
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::size_t EvalReport::degenerate_count() const {
  return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                [](const TrajectoryScore& t) { return t.voc.degenerate; }));
}

EvalReport evaluate(std::span<const TrajectoryRecord> dataset, const Estimator& estimator,
                    const EvalOptions& options) {
  if (!estimator.predict) throw std::invalid_argument("evaluate: empty estimator");
  EvalReport report{options.dataset, options.shift, estimator.name, {}};
  report.trajectories.resize(dataset.size());
  const int jobs = estimator.sequential ? 1 : options.jobs;
  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    auto& slot = report.trajectories[i];
    slot.id = dataset[i].id;
    slot.predictions = estimator.predict(dataset[i]);
    if (slot.predictions.size() != static_cast<std::size_t>(dataset[i].length())) {
      throw std::logic_error("estimator returned the wrong number of predictions");
    }
    // A single frame has no order to score; count it as degenerate.
    slot.voc = slot.predictions.size() < 2 ? VocScore{0.0, true} : spearman_voc(slot.predictions);
  });
  return report;
}

std::vector<SweepCell> sweep_adaptation(std::span<const TrajectoryRecord> dataset, const MetaParams& model,
                                        const AdaptConfig& base, std::span<const double> etas,
                                        std::span<const int> epochs, const EvalOptions& options) {
  std::vector<SweepCell> cells;
  for (double eta : etas) {
    for (int ep : epochs) {
      AdaptConfig cfg = base;
      cfg.eta = eta;
      cfg.epochs = ep;
      cfg.validate();
      const auto est = make_estimator(estimator_for(cfg.variant), {model, cfg, std::nullopt});
      SweepCell cell{eta, ep, std::nullopt, 0};
      try {
        const auto report = evaluate(dataset, est, options);
        cell.mean_voc = report.mean_voc();
        cell.degenerate = report.degenerate_count();
      } catch (const NumericalError&) {
        // Large inner steps can diverge; keep the cell and move on.
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

const SweepCell* best_cell(std::span<const SweepCell> cells) {
  const SweepCell* best = nullptr;
  for (const auto& c : cells) {
    if (c.mean_voc && (!best || *c.mean_voc > *best->mean_voc)) best = &c;
  }
  return best;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "tsv") return ReportFormat::Tsv;
  if (text == "md" || text == "markdown") return ReportFormat::Markdown;
  if (text == "json") return ReportFormat::Json;
  throw std::invalid_argument("unknown report format '" + std::string(text) + "'");
}

std::string render_reports(std::span<const EvalReport> reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    json out = json::array();
    for (const auto& r : reports) out.push_back(report_to_json(r));
    return out.dump(2) + "\n";
  }
  const Table table = tabulate(reports);
  std::string out;
  if (format == ReportFormat::Tsv) {
    out += "dataset\tshift";
    for (const auto& e : table.estimators) out += "\t" + e;
    out += "\n";
    for (const auto& row : table.rows) {
      out += row.dataset + "\t" + std::string(to_string(row.shift));
      for (const auto& c : row.cells) out += "\t" + (c ? fixed4(*c) : std::string("-"));
      out += "\n";
    }
    return out;
  }
  out += "| Dataset | Shift |";
  for (const auto& e : table.estimators) out += " " + e + " |";
  out += "\n|---|---|";
  for (std::size_t i = 0; i < table.estimators.size(); ++i) out += "---:|";
  out += "\n";
  for (const auto& row : table.rows) {
    out += "| " + row.dataset + " | " + std::string(to_string(row.shift)) + " |";
    for (const auto& c : row.cells) out += " " + (c ? fixed4(*c) : std::string("-")) + " |";
    out += "\n";
  }
  return out;
}

std::vector<EvalReport> parse_reports_json(std::string_view text) {
  std::vector<EvalReport> reports;
  try {
    const json doc = json::parse(text);
    const json& items = doc.is_array() ? doc : json::array({doc});
    for (const auto& item : items) {
      EvalReport r;
      r.dataset = item.at("dataset").get<std::string>();
      r.shift = parse_shift(item.at("shift").get<std::string>());
      r.estimator = item.at("estimator").get<std::string>();
      for (const auto& t : item.at("trajectories")) {
        TrajectoryScore s;
        s.id = t.at("id").get<std::string>();
        s.voc = {t.at("voc").get<double>(), t.at("degenerate").get<bool>()};
        if (!(s.voc.value >= -1.0 && s.voc.value <= 1.0)) {
          throw DataError(DataErrorCode::InvalidValue, "VOC outside [-1, 1] for '" + s.id + "'");
        }
        r.trajectories.push_back(std::move(s));
      }
      reports.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::InvalidValue, std::string("malformed report JSON: ") + e.what());
  }
  return reports;
}

std::string format_predictions_csv(std::span<const EvalReport> reports) {
  std::string out = "dataset,estimator,trajectory,t,prediction\n";
  char buf[64];
  for (const auto& r : reports) {
    for (const auto& t : r.trajectories) {
      for (std::size_t i = 0; i < t.predictions.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%zu,%.17g\n", i + 1, t.predictions[i]);
        out += r.dataset + "," + r.estimator + "," + t.id + buf;
      }
    }
  }
  return out;
}

}  // namespace ttp
