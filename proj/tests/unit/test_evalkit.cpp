#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "pimoe/analysis.hpp"
#include "pimoe/baselines.hpp"
#include "pimoe/error.hpp"
#include "pimoe/evaluation.hpp"
#include "pimoe/metrics.hpp"
#include "pimoe/synthgen.hpp"
#include "pimoe/tsne.hpp"
#include "support/test_support.hpp"

using namespace pimoe;

namespace {

MetricTriple metric_oracle(const std::vector<double>& p, const std::vector<double>& t) {
  const double n = static_cast<double>(t.size());
  double se = 0.0, ape = 0.0, ae = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    se += (p[i] - t[i]) * (p[i] - t[i]);
    ape += std::abs((p[i] - t[i]) / t[i]);
    ae += std::abs(p[i] - t[i]);
    mean += t[i];
  }
  mean /= n;
  double ss = 0.0;
  for (double v : t) ss += (v - mean) * (v - mean);
  MetricTriple m;
  m.rmse = std::sqrt(se / n);
  m.mape_percent = 100.0 * ape / n;
  m.mae = ae / n;
  m.r2 = 1.0 - se / ss;
  return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("metrics hand case and oracles") {
  const std::vector<double> truth = {100.0, 90.0}, pred = {99.0, 91.0};
  const MetricTriple m = compute_metrics(pred, truth);
  CHECK(m.rmse == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.mape_percent == doctest::Approx(50.0 * (1.0 / 100.0 + 1.0 / 90.0)).epsilon(1e-14));
  CHECK(m.mape_percent == doctest::Approx(1.0556).epsilon(1e-4));
  CHECK(m.r2 == doctest::Approx(0.96).epsilon(1e-14));

  const MetricTriple perfect = compute_metrics(truth, truth);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mape_percent == 0.0);
  CHECK(perfect.r2 == 1.0);

  const std::vector<double> flat = {5.0, 5.0, 5.0}, near = {5.1, 4.9, 5.0};
  const MetricTriple undefined = compute_metrics(near, flat);
  CHECK_FALSE(undefined.r2_defined);
  CHECK(std::isnan(undefined.r2));

  CHECK_THROWS_AS(compute_metrics(pred, flat), Error);
  const std::vector<double> zero = {0.0, 1.0};
  CHECK_THROWS_AS(compute_metrics(pred, zero), Error);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(100);
    std::vector<double> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.uniform(70.0, 100.0);
      p[i] = t[i] + rng.normal(0.0, 2.0);
    }
    const MetricTriple a = compute_metrics(p, t);
    const MetricTriple b = metric_oracle(p, t);
    CHECK(rel(a.rmse, b.rmse) < 1e-12);
    CHECK(rel(a.mape_percent, b.mape_percent) < 1e-12);
    CHECK(rel(a.mae, b.mae) < 1e-12);
    CHECK(rel(a.r2, b.r2) < 1e-12);
    CHECK(a.rmse >= 0.0);
    CHECK(a.r2 <= 1.0);
  }
}

TEST_CASE("polynomial baseline") {
  auto cubic = [](double x) { return 0.98 - 0.01 * x + 0.003 * x * x - 0.0004 * x * x * x; };
  std::vector<double> window;
  for (int i = 1; i <= 50; ++i) window.push_back(cubic(i / 50.0));
  const auto forecast = poly_baseline(window, 3, 50);
  REQUIRE(forecast.size() == 50);
  for (int k = 1; k <= 50; ++k) CHECK(std::abs(forecast[k - 1] - cubic((50 + k) / 50.0)) < 1e-8);

  const std::vector<double> constant(50, 0.9);
  for (double v : poly_baseline(constant)) CHECK(std::abs(v - 0.9) < 1e-10);

  const std::vector<double> three = {1.0, 0.9, 0.8};
  try {
    poly_baseline(three, 3, 5);
    FAIL("expected Underdetermined");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Underdetermined);
  }

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + rng.index(40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      y[i] = rng.normal();
    }
    const auto c = poly_fit(x, y, 3);
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 4; ++d) a(i, d) = std::pow(x[i], d);
      b(i) = y[i];
    }
    const Eigen::VectorXd normal = (a.transpose() * a).ldlt().solve(a.transpose() * b);
    for (int d = 0; d < 4; ++d) CHECK(std::abs(c[d] - normal(d)) < 1e-8);
  }
}

TEST_CASE("MLP baseline pairs and forward") {
  std::vector<double> series(100);
  for (std::size_t i = 0; i < 100; ++i) series[i] = 1.0 - 0.001 * static_cast<double>(i);
  const auto pairs = build_mlp_pairs(series, 10, 50, 1);
  std::size_t enumerated = 0;
  for (std::size_t k = 0; k + 10 + 50 <= 100; ++k) {
    REQUIRE(enumerated < pairs.size());
    CHECK(pairs[enumerated].input == std::vector<double>(series.begin() + k, series.begin() + k + 10));
    CHECK(pairs[enumerated].target ==
          std::vector<double>(series.begin() + k + 10, series.begin() + k + 60));
    ++enumerated;
  }
  CHECK(enumerated == 41);
  CHECK(pairs.size() == 41);
  CHECK(build_mlp_pairs(series, 10, 50, 4).size() == 11);
  const std::vector<double> short_series(59, 1.0);
  CHECK_THROWS_AS(build_mlp_pairs(short_series, 10, 50), Error);

  MlpBaseline mlp(MlpConfig{}, 1);
  mlp.params().get("mlp.l3.w").value.fill(0.0);
  Tensor& bias = mlp.params().get("mlp.l3.b").value;
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = 0.01 * static_cast<double>(i);
  CHECK(mlp.forecast(series) == bias.values());
  const std::vector<double> nine(9, 1.0);
  CHECK_THROWS_AS(mlp.forecast(nine), Error);

  MlpConfig quick;
  quick.epochs = 3;
  const std::vector<std::vector<double>> fleet = {series, std::vector<double>(30, 1.0)};
  const MlpBaseline trained = train_mlp_baseline(fleet, quick);
  CHECK(trained.forecast(series).size() == 50);
}

TEST_CASE("stage calibration and classification") {
  const std::vector<std::vector<double>> gates = {
      {0.8, 0.2, 0.0}, {0.7, 0.3, 0.0}, {0.1, 0.9, 0.0}, {0.2, 0.6, 0.2}, {0.0, 0.1, 0.9}};
  const std::vector<Stage> stages = {Stage::Early, Stage::Early, Stage::Mid, Stage::Mid, Stage::Late};
  const StageMap map = calibrate_expert_stage_map(gates, stages);
  CHECK(map.early == 0);
  CHECK(map.mid == 1);
  CHECK(map.late == 2);
  CHECK_FALSE(map.ambiguous);

  const std::vector<std::vector<double>> rev_gates(gates.rbegin(), gates.rend());
  const std::vector<Stage> rev_stages(stages.rbegin(), stages.rend());
  const StageMap rev = calibrate_expert_stage_map(rev_gates, rev_stages);
  CHECK(rev.early == map.early);
  CHECK(rev.mid == map.mid);
  CHECK(rev.late == map.late);

  const std::vector<std::vector<double>> one(3, std::vector<double>{1.0});
  const std::vector<Stage> three = {Stage::Early, Stage::Mid, Stage::Late};
  const StageMap single = calibrate_expert_stage_map(one, three);
  CHECK(single.ambiguous);
  CHECK(single.late == 0);
  try {
    calibrate_expert_stage_map(one, three, true);
    FAIL("expected CalibrationAmbiguous");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CalibrationAmbiguous);
  }
  const std::vector<Stage> no_late = {Stage::Early, Stage::Mid, Stage::Mid};
  CHECK_THROWS_AS(calibrate_expert_stage_map(one, no_late), Error);

  const StageMap five{1, 2, 4, false};
  const std::vector<double> g1 = {0.1, 0.7, 0.1, 0.05, 0.05};
  CHECK(classify_battery(g1, five).label == HealthLabel::Excellent);
  const std::vector<double> g2 = {0.0, 0.2, 0.0, 0.0, 0.8};
  CHECK(classify_battery(g2, five).label == HealthLabel::Scrap);
  const std::vector<double> g3 = {0.0, 0.2, 0.0, 0.8, 0.0};
  CHECK(classify_battery(g3, five).label == HealthLabel::Qualified);
  const std::vector<double> uniform(5, 0.2);
  const ClassLabel tie = classify_battery(uniform, StageMap{0, 2, 4, false});
  CHECK(tie.dominant_expert == 0);
  CHECK(tie.label == HealthLabel::Excellent);

  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> g(5), squashed(5);
    for (std::size_t j = 0; j < 5; ++j) {
      g[j] = rng.uniform();
      squashed[j] = std::exp(3.0 * g[j]) - 7.0;
    }
    CHECK(classify_battery(g, five).label == classify_battery(squashed, five).label);
  }
}

TEST_CASE("confidence table") {
  std::vector<HealthLabel> labels(27, HealthLabel::Excellent);
  labels.push_back(HealthLabel::Qualified);
  std::vector<int> buckets(28, 95);
  for (int i = 0; i < 4; ++i) {
    labels.push_back(i < 3 ? HealthLabel::Scrap : HealthLabel::Qualified);
    buckets.push_back(75);
  }
  labels.push_back(HealthLabel::Qualified);
  buckets.push_back(85);
  const auto rows = confidence_table(labels, buckets);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].soh_bucket_percent == 95);
  CHECK(rows[0].n_batteries == 28);
  CHECK(rows[0].excellent == 27);
  CHECK(rows[0].qualified == 1);
  CHECK(rows[0].scrap == 0);
  REQUIRE(rows[0].confidence);
  CHECK(*rows[0].confidence == doctest::Approx(27.0 / 28.0).epsilon(1e-15));
  CHECK(std::round(*rows[0].confidence * 1000.0) / 10.0 == 96.4);
  CHECK(rows[1].soh_bucket_percent == 85);
  CHECK_FALSE(rows[1].confidence);
  CHECK(rows[2].soh_bucket_percent == 75);
  CHECK(*rows[2].confidence == doctest::Approx(0.75));

  const std::vector<HealthLabel> right(5, HealthLabel::Excellent);
  const std::vector<int> b95(5, 95);
  CHECK(*confidence_table(right, b95)[0].confidence == 1.0);
}

TEST_CASE("t-SNE affinities and embedding") {
  const Tensor two({2, 3}, {0.0, 0.0, 0.0, 1.0, 2.0, 3.0});
  const Tensor p2 = conditional_probabilities(two, 30.0);
  CHECK(p2.at(0, 1) == doctest::Approx(1.0));
  CHECK(p2.at(0, 0) == 0.0);

  Rng rng(6);
  Tensor pts = Tensor::matrix(60, 5);
  std::vector<int> labels;
  for (std::size_t i = 0; i < 60; ++i) {
    const int c = i < 30 ? 0 : 1;
    labels.push_back(c);
    for (std::size_t d = 0; d < 5; ++d) pts.at(i, d) = (c == 0 ? 0.0 : 4.0) + rng.normal(0.0, 0.3);
  }
  const Tensor p = conditional_probabilities(pts, 15.0);
  for (std::size_t i = 0; i < 60; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 60; ++j) s += p.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  const Tensor joint = joint_probabilities(pts, 15.0);
  double total = 0.0;
  for (double v : joint.values()) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  TsneOptions opt;
  opt.perplexity = 15.0;
  opt.seed = 1;
  const TsneResult r = tsne_embed(pts, opt);
  CHECK(r.embedding.rows() == 60);
  CHECK(r.embedding.cols() == 2);
  for (double kl : r.kl_trace) CHECK(kl >= 0.0);
  CHECK(r.final_kl < r.kl_trace.front());
  CHECK(silhouette_score(r.embedding, labels) > 0.5);

  TsneOptions big = opt;
  big.perplexity = 30.0;
  const TsneResult capped = tsne_embed(Tensor(std::vector<std::size_t>{10, 5}, std::vector<double>(
                                                  pts.values().begin(), pts.values().begin() + 50)),
                                       big);
  CHECK(capped.perplexity_capped);
  CHECK(capped.perplexity_used == doctest::Approx(3.0));
  CHECK_THROWS_AS(tsne_embed(Tensor::matrix(4, 2), opt), Error);
}

TEST_CASE("shared evaluation harness") {
  SynthConfig cfg;
  cfg.n_batteries = 4;
  cfg.seed = 4;
  cfg.schedule.conditions = {{1.0, 1.0, 25.0}, {0.5, 1.0, 35.0}};
  const Dataset ds = gen_fleet(cfg).dataset;
  std::set<std::string> ids;
  for (const auto& b : ds.batteries) ids.insert(b.battery_id);
  SampleOptions options;
  options.horizon = 10;
  options.start = FixedStart{3.6};

  EvalReport poly = evaluate_forecaster("poly3", poly_forecaster(50, 3), ds, ids, options);
  CHECK(poly.batteries.size() == 4);
  CHECK(poly.conditions.size() == 2);
  for (const auto& b : poly.batteries) {
    CHECK(b.n_samples > 0);
    CHECK(std::isfinite(b.metrics.mape_percent));
  }

  std::vector<std::vector<double>> series;
  for (const auto& b : ds.batteries) series.push_back(soh_history(b, b.cycles.back().cycle_index));
  MlpConfig quick;
  quick.horizon = 10;
  quick.epochs = 2;
  const MlpBaseline mlp = train_mlp_baseline(series, quick);
  const EvalReport mr = evaluate_forecaster("mlp", mlp_forecaster(mlp), ds, ids, options);
  CHECK(mr.batteries.size() == 4);

  // Aggregates equal a recomputation from the battery rows.
  for (const auto& c : poly.conditions) {
    double mape = 0.0;
    std::size_t n = 0;
    for (const auto& b : poly.batteries) {
      if (b.condition_tag != c.condition_tag) continue;
      mape += b.metrics.mape_percent;
      ++n;
    }
    CHECK(c.n_batteries == n);
    CHECK(c.metrics.mape_percent == doctest::Approx(mape / static_cast<double>(n)).epsilon(1e-14));
  }
  EvalReport scrambled = poly;
  scrambled.conditions.clear();
  scrambled.overall = MetricTriple{};
  aggregate_report(scrambled);
  CHECK(to_json(scrambled) == to_json(poly));
}
