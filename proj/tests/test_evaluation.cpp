#include "doctest.h"
#include "oracles.hpp"

#include "ttp/errors.hpp"
#include "ttp/evaluation.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace ttp;

namespace {

TrajectoryRecord record_from(const Mat& visual, const Vec& goal, std::string id = "t") {
  TrajectoryRecord r;
  r.id = std::move(id);
  r.goal = goal;
  r.visual = visual;
  r.labels = progress_labels(visual.rows());
  return r;
}

Estimator fixed(std::function<std::vector<double>(const TrajectoryRecord&)> f) {
  return Estimator{"fixed", std::move(f), false};
}

}  // namespace

TEST_CASE("VOC hand cases") {
  const std::vector<double> a = {0.2, 0.1, 0.3};
  CHECK(spearman_voc(a).value == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<double> inc = {1, 2, 3, 4};
  CHECK(spearman_voc(inc).value == 1.0);
  const std::vector<double> dec = {4, 3, 2, 1};
  CHECK(spearman_voc(dec).value == -1.0);
  const std::vector<double> flat = {0.4, 0.4, 0.4};
  CHECK(spearman_voc(flat).degenerate);
  CHECK(spearman_voc(flat).value == 0.0);
  const std::vector<double> one = {0.1};
  CHECK_THROWS_AS(spearman_voc(one), std::invalid_argument);
  const std::vector<double> bad = {0.1, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(spearman_voc(bad), NumericalError);
}

TEST_CASE("VOC equals Pearson on average ranks, ties included") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> len(2, 40);
  std::uniform_int_distribution<int> level(0, 5);  // few levels, many ties
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> p(static_cast<std::size_t>(len(rng)));
    for (double& x : p) x = 0.1 * level(rng);
    const auto got = spearman_voc(p);
    const double first = p.front();
    if (std::all_of(p.begin(), p.end(), [&](double x) { return x == first; })) {
      CHECK(got.degenerate);
      continue;
    }
    CHECK(got.value == doctest::Approx(oracle::spearman_time(p)).epsilon(1e-12));
    CHECK(std::abs(got.value) <= 1.0);
  }
}

TEST_CASE("VOC is invariant to monotone transforms and flips under reversal") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> p(15);
    for (double& x : p) x = n(rng);
    std::vector<double> q(p.size()), rev(p.rbegin(), p.rend());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = std::exp(3.0 * p[i]) + 7.0;
    const double base = spearman_voc(p).value;
    CHECK(spearman_voc(q).value == doctest::Approx(base).epsilon(1e-12));
    CHECK(spearman_voc(rev).value == doctest::Approx(-base).epsilon(1e-12));
  }
}

TEST_CASE("cosine-similarity baseline") {
  Mat visual(3, 2);
  visual << 1, 0, 1, 1, 0, 2;
  const auto rec = record_from(visual, (Vec(2) << 0, 1).finished());
  const auto sims = clip_similarity(rec);
  CHECK(sims[0] == doctest::Approx(0.0));
  CHECK(sims[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(sims[2] == doctest::Approx(1.0));

  auto scaled = rec;
  scaled.visual *= 4.0;
  scaled.goal *= 0.5;
  const auto s2 = clip_similarity(scaled);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s2[i] == doctest::Approx(sims[i]).epsilon(1e-14));

  auto zero = rec;
  zero.visual.row(1).setZero();
  CHECK_THROWS_AS(clip_similarity(zero), std::invalid_argument);
}

TEST_CASE("direction-projection baseline") {
  Mat visual(2, 2);
  visual << 1, 0, 0, 3;
  const auto rec = record_from(visual, (Vec(2) << 0, 1).finished());
  const Vec baseline = (Vec(2) << 1, 0).finished();
  const auto proj = vlmrm_projection(rec, baseline);
  // d = normalize((0,1) - (1,0)) = (-1, 1)/sqrt(2)
  CHECK(proj[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(proj[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(vlmrm_projection(rec, rec.goal), std::invalid_argument);
  CHECK_THROWS_AS(vlmrm_projection(rec, Vec::Ones(3)), std::invalid_argument);
}

TEST_CASE("estimator names and required inputs") {
  CHECK(to_string(EstimatorKind::TttIm) == "TTT-IM");
  CHECK(to_string(EstimatorKind::ClipFt) == "CLIP-FT");
  CHECK(parse_estimator("vlmrm") == EstimatorKind::VlmRm);
  CHECK(parse_estimator("TTT-EX") == EstimatorKind::TttEx);
  CHECK_THROWS_AS(parse_estimator("nope"), std::invalid_argument);
  CHECK_THROWS_AS(make_estimator(EstimatorKind::VlmRm, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_estimator(EstimatorKind::TttIm, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_estimator(EstimatorKind::ClipFt, {}), std::invalid_argument);
  EstimatorInputs reg;
  reg.model = init_regressor_params(ModelDims::make(2, 4, 3), 1);
  CHECK_THROWS_AS(make_estimator(EstimatorKind::TttIm, reg), std::invalid_argument);
}

TEST_CASE("evaluate with a perfect and a constant predictor") {
  std::vector<TrajectoryRecord> data;
  for (int i = 0; i < 4; ++i) data.push_back(record_from(Mat::Ones(5 + i, 2), Vec::Ones(2), "t" + std::to_string(i)));
  data.push_back(record_from(Mat::Ones(1, 2), Vec::Ones(2), "single"));

  const auto perfect = fixed([](const TrajectoryRecord& r) {
    const Vec& y = *r.labels;
    return std::vector<double>(y.data(), y.data() + y.size());
  });
  EvalOptions opts{"toy", Shift::Environment, 2};
  const auto rep = evaluate(data, perfect, opts);
  CHECK(rep.trajectories.size() == 5);
  CHECK(rep.trajectories[2].id == "t2");
  CHECK(rep.mean_voc() == 1.0);
  CHECK(rep.degenerate_count() == 1);  // the single-frame trajectory

  const auto flat = fixed([](const TrajectoryRecord& r) { return std::vector<double>(r.length(), 0.5); });
  const auto frep = evaluate(data, flat, opts);
  CHECK(frep.mean_voc() == 0.0);
  CHECK(frep.degenerate_count() == 5);
}

TEST_CASE("reports render and round-trip through JSON") {
  EvalReport a{"syn", Shift::Embodiment, "TTT-IM", {{"x", {0.25, false}, {}}, {"y", {0.75, false}, {}}}};
  EvalReport b{"syn", Shift::Embodiment, "CLIP", {{"x", {0.0, true}, {}}, {"y", {-0.5, false}, {}}}};
  const std::vector<EvalReport> reps = {a, b};

  const auto md = render_reports(reps, ReportFormat::Markdown);
  CHECK(md.find("| TTT-IM | CLIP |") != std::string::npos);
  CHECK(md.find("0.5000") != std::string::npos);
  CHECK(md.find("-0.5000") != std::string::npos);
  const auto tsv = render_reports(reps, ReportFormat::Tsv);
  CHECK(tsv.find("syn\tEM\t0.5000\t-0.5000") != std::string::npos);

  const auto back = parse_reports_json(render_reports(reps, ReportFormat::Json));
  REQUIRE(back.size() == 2);
  CHECK(back[0].estimator == "TTT-IM");
  CHECK(back[0].shift == Shift::Embodiment);
  CHECK(back[0].mean_voc() == 0.5);
  CHECK(back[1].degenerate_count() == 1);
  CHECK(render_reports(back, ReportFormat::Markdown) == md);

  CHECK_THROWS_AS(parse_reports_json("{not json"), DataError);
  CHECK_THROWS_AS(parse_reports_json(R"([{"dataset":"s","shift":"ID","estimator":"E","trajectories":[{"id":"a","voc":1.5,"degenerate":false}]}])"),
                  DataError);
  CHECK_THROWS_AS(parse_report_format("xml"), std::invalid_argument);
}

TEST_CASE("prediction CSV numbers frames from 1") {
  EvalReport a{"syn", Shift::InDistribution, "CLIP", {{"x", {1.0, false}, {0.125, 0.5}}}};
  const std::vector<EvalReport> reps = {a};
  CHECK(format_predictions_csv(reps) == "dataset,estimator,trajectory,t,prediction\nsyn,CLIP,x,1,0.125\nsyn,CLIP,x,2,0.5\n");
}
