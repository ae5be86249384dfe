#pragma once

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimoe/analysis.hpp"
#include "pimoe/baselines.hpp"
#include "pimoe/core_data.hpp"
#include "pimoe/metrics.hpp"
#include "pimoe/model.hpp"
#include "pimoe/preprocess.hpp"

namespace pimoe {

struct BatteryReport {
  std::string battery_id;
  std::string condition_tag;
  MetricTriple metrics;
  std::size_t n_samples = 0;
};

struct ConditionReport {
  std::string condition_tag;
  std::size_t n_batteries = 0;
  /// Means of the per-battery rows; r2 averages the defined values only.
  MetricTriple metrics;
};

struct LatencyStats {
  std::size_t runs = 0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
};

struct ClassificationRow {
  std::string battery_id;
  int anchor_cycle = 0;
  double soh = 0.0;
  ClassLabel label;
};

/// Metrics are computed on SOH in percent (capacity / nominal * 100), pooled
/// over each battery's samples.
struct EvalReport {
  std::string model_name;
  std::string units = "SOH percent";
  std::vector<BatteryReport> batteries;
  std::vector<ConditionReport> conditions;
  MetricTriple overall;
  std::optional<LatencyStats> latency;
  std::vector<ClassificationRow> classification;
  std::vector<ConfidenceRow> confidence;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Forecast in SOH fraction for one sample; nullopt skips the sample (for
/// example when a baseline lacks history).
using Forecaster =
    std::function<std::optional<std::vector<double>>(const Sample&, const BatterySeries&)>;

/// Shared harness: builds samples for the selected batteries with `options`,
/// forecasts each and aggregates per battery and per condition.
EvalReport evaluate_forecaster(const std::string& name, const Forecaster& forecaster,
                               const Dataset& dataset, const std::set<std::string>& ids,
                               const SampleOptions& options);

/// Batched evaluation of a trained model (sample options follow its config
/// and `start`).
EvalReport evaluate_model(const ModelState& model, const Dataset& dataset,
                          const std::set<std::string>& ids, const StartPolicy& start,
                          const std::string& name = "pimoe");

/// Recomputes the per-condition rows and the overall row from the battery rows.
void aggregate_report(EvalReport& report);

Forecaster poly_forecaster(std::size_t window = 50, std::size_t degree = 3);
Forecaster mlp_forecaster(const MlpBaseline& mlp);

/// SOH series (capacity / nominal) of a battery up to and including `cycle_index`.
std::vector<double> soh_history(const BatterySeries& battery, int cycle_index);

/// Median and tail latency of predict_trajectory on one sample.
LatencyStats measure_latency(const ModelState& model, const Sample& sample, std::size_t runs = 100);

nlohmann::json to_json(const MetricTriple& m);
nlohmann::json to_json(const EvalReport& report);
/// Flat CSV: one row per battery, then one per condition (scope column).
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace pimoe
