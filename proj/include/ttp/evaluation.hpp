#pragma once

// Value-order correlation (VOC), the embedding-similarity baselines, and
// report aggregation across datasets and shift categories.

#include "ttp/adaptation.hpp"
#include "ttp/dataset.hpp"
#include "ttp/model.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttp {

struct VocScore {
  double value = 0.0;
  bool degenerate = false;  // constant predictions: rank variance zero
};

/// Average-rank Spearman correlation between `preds` and 1..T. Throws
/// std::invalid_argument for T < 2 and NumericalError on non-finite input.
VocScore spearman_voc(std::span<const double> preds);

/// Per-frame cosine similarity between visual and goal embeddings.
std::vector<double> clip_similarity(const TrajectoryRecord& traj);

/// Per-frame <v_hat_t, d_hat>, d_hat = normalize(g_hat - b_hat).
std::vector<double> vlmrm_projection(const TrajectoryRecord& traj, const Vec& baseline_goal);

enum class EstimatorKind { TttIm, TttEx, TttTr, TttRs, Clip, VlmRm, ClipFt };

std::string_view to_string(EstimatorKind kind);  // "TTT-IM", "CLIP", ...
EstimatorKind parse_estimator(std::string_view text);
EstimatorKind estimator_for(Variant v);

struct EstimatorInputs {
  std::optional<MetaParams> model;  // TTT variants and CLIP-FT
  std::optional<AdaptConfig> adapt;  // TTT variants; defaults per variant when empty
  std::optional<Vec> baseline_goal;  // VLM-RM
};

struct Estimator {
  std::string name;
  std::function<std::vector<double>(const TrajectoryRecord&)> predict;
  /// Carries state from one trajectory to the next, so it must see the
  /// dataset in order on a single thread.
  bool sequential = false;
};

/// Throws std::invalid_argument when a required input is missing or the
/// model kind does not fit the estimator.
Estimator make_estimator(EstimatorKind kind, const EstimatorInputs& inputs);

struct TrajectoryScore {
  std::string id;
  VocScore voc;
  std::vector<double> predictions;
};

struct EvalReport {
  std::string dataset;
  Shift shift = Shift::InDistribution;
  std::string estimator;
  std::vector<TrajectoryScore> trajectories;  // dataset order

  /// Plain mean over non-degenerate trajectories (0 when there are none).
  double mean_voc() const;
  std::size_t degenerate_count() const;
};

struct EvalOptions {
  std::string dataset;
  Shift shift = Shift::InDistribution;
  int jobs = 1;
};

/// Scores every trajectory; results keep dataset order whatever `jobs` is.
EvalReport evaluate(std::span<const TrajectoryRecord> dataset, const Estimator& estimator,
                    const EvalOptions& options);

/// One cell of an (eta, t_ep) grid; mean_voc is empty when adaptation diverged.
struct SweepCell {
  double eta = 0.0;
  int epochs = 1;
  std::optional<double> mean_voc;
  std::size_t degenerate = 0;
};

/// Evaluates `base` with every eta x t_ep combination, eta-major.
std::vector<SweepCell> sweep_adaptation(std::span<const TrajectoryRecord> dataset, const MetaParams& model,
                                        const AdaptConfig& base, std::span<const double> etas,
                                        std::span<const int> epochs, const EvalOptions& options);

/// Highest mean VOC, earliest cell on ties; nullptr when every cell diverged.
const SweepCell* best_cell(std::span<const SweepCell> cells);

enum class ReportFormat { Tsv, Markdown, Json };

ReportFormat parse_report_format(std::string_view text);

/// Table with one row per (dataset, shift) and one column per estimator, in
/// first-seen order. JSON carries the per-trajectory scores as well.
std::string render_reports(std::span<const EvalReport> reports, ReportFormat format);

/// Inverse of the JSON rendering. Throws DataError on malformed input.
std::vector<EvalReport> parse_reports_json(std::string_view text);

/// CSV "dataset,estimator,trajectory,t,prediction" with t starting at 1.
std::string format_predictions_csv(std::span<const EvalReport> reports);

}  // namespace ttp
