#include "pimoe/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "pimoe/csv_io.hpp"
#include "pimoe/error.hpp"
#include "pimoe/fornn.hpp"

namespace pimoe {

namespace {

struct Pooled {
  std::vector<double> pred;
  std::vector<double> truth;
  std::size_t n = 0;
};

void add_forecast(Pooled& pool, std::span<const double> soh_pred, const Sample& s) {
  require(soh_pred.size() == s.target_mAh.size(), ErrorCode::ShapeError,
          "forecast length " + std::to_string(soh_pred.size()) + " vs horizon " +
              std::to_string(s.target_mAh.size()));
  for (std::size_t t = 0; t < soh_pred.size(); ++t) {
    pool.pred.push_back(100.0 * soh_pred[t]);
    pool.truth.push_back(100.0 * s.target_mAh[t] / s.nominal_capacity_mAh);
  }
  ++pool.n;
}

void finish(EvalReport& report, const Dataset& dataset, const std::map<std::string, Pooled>& pools) {
  for (const auto& b : dataset.batteries) {
    auto it = pools.find(b.battery_id);
    if (it == pools.end() || it->second.n == 0) continue;
    BatteryReport row;
    row.battery_id = b.battery_id;
    row.condition_tag = b.condition_tag;
    row.metrics = compute_metrics(it->second.pred, it->second.truth);
    row.n_samples = it->second.n;
    report.batteries.push_back(std::move(row));
  }
  aggregate_report(report);
}

MetricTriple mean_of(std::span<const MetricTriple> rows) {
  MetricTriple m;
  std::size_t defined = 0;
  m.r2 = 0.0;
  for (const auto& r : rows) {
    m.rmse += r.rmse;
    m.mape_percent += r.mape_percent;
    m.mae += r.mae;
    if (r.r2_defined) {
      m.r2 += r.r2;
      ++defined;
    }
  }
  const double n = static_cast<double>(rows.size());
  m.rmse /= n;
  m.mape_percent /= n;
  m.mae /= n;
  if (defined > 0) {
    m.r2 /= static_cast<double>(defined);
  } else {
    m.r2 = std::nan("");
    m.r2_defined = false;
  }
  return m;
}

}  // namespace

void aggregate_report(EvalReport& report) {
  report.conditions.clear();
  std::map<std::string, std::vector<MetricTriple>> groups;
  std::vector<MetricTriple> all;
  for (const auto& b : report.batteries) {
    groups[b.condition_tag].push_back(b.metrics);
    all.push_back(b.metrics);
  }
  for (const auto& [tag, rows] : groups) {
    report.conditions.push_back({tag, rows.size(), mean_of(rows)});
  }
  if (!all.empty()) report.overall = mean_of(all);
}

EvalReport evaluate_forecaster(const std::string& name, const Forecaster& forecaster,
                               const Dataset& dataset, const std::set<std::string>& ids,
                               const SampleOptions& options) {
  EvalReport report;
  report.model_name = name;
  std::map<std::string, Pooled> pools;
  for (const auto& b : dataset.batteries) {
    if (!ids.contains(b.battery_id) || b.cycles.size() <= options.horizon) continue;
    Pooled& pool = pools[b.battery_id];
    for (const Sample& s : build_samples(b, options)) {
      if (auto forecast = forecaster(s, b)) add_forecast(pool, *forecast, s);
    }
  }
  finish(report, dataset, pools);
  return report;
}

EvalReport evaluate_model(const ModelState& model, const Dataset& dataset,
                          const std::set<std::string>& ids, const StartPolicy& start,
                          const std::string& name) {
  SampleOptions options;
  options.horizon = model.config.horizon;
  options.mode = model.config.feature_mode;
  options.charge_points = model.config.charge_dim;
  options.history_window = model.config.history_window;
  options.start = start;
  EvalReport report;
  report.model_name = name;
  std::map<std::string, Pooled> pools;
  for (const auto& b : dataset.batteries) {
    if (!ids.contains(b.battery_id) || b.cycles.size() <= options.horizon) continue;
    std::vector<Sample> samples = build_samples(b, options);
    if (model.config.variant == Variant::HistoryMode) {
      std::erase_if(samples, [&](const Sample& s) {
        return s.history_mAh.size() < model.config.history_window;
      });
    }
    if (samples.empty()) continue;
    const auto predictions = predict_batch(samples, model);
    Pooled& pool = pools[b.battery_id];
    for (std::size_t i = 0; i < samples.size(); ++i) {
      add_forecast(pool, predictions[i].soh, samples[i]);
    }
  }
  finish(report, dataset, pools);
  return report;
}

std::vector<double> soh_history(const BatterySeries& battery, int cycle_index) {
  std::vector<double> out;
  for (const auto& c : battery.cycles) {
    if (c.cycle_index > cycle_index) break;
    out.push_back(c.max_discharge_capacity_mAh / battery.nominal_capacity_mAh);
  }
  return out;
}

Forecaster poly_forecaster(std::size_t window, std::size_t degree) {
  return [window, degree](const Sample& s,
                          const BatterySeries& b) -> std::optional<std::vector<double>> {
    const std::vector<double> history = soh_history(b, s.anchor_cycle);
    if (history.size() < window) return std::nullopt;
    return poly_baseline(std::span<const double>(history).subspan(history.size() - window), degree,
                         s.target_mAh.size());
  };
}

Forecaster mlp_forecaster(const MlpBaseline& mlp) {
  return [&mlp](const Sample& s, const BatterySeries& b) -> std::optional<std::vector<double>> {
    const std::vector<double> history = soh_history(b, s.anchor_cycle);
    if (history.size() < mlp.config().window) return std::nullopt;
    if (s.target_mAh.size() != mlp.config().horizon) return std::nullopt;
    return mlp.forecast(history);
  };
}

LatencyStats measure_latency(const ModelState& model, const Sample& sample, std::size_t runs) {
  require(runs >= 1, ErrorCode::InvalidArgument, "latency needs at least one run");
  std::vector<double> ms;
  ms.reserve(runs);
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Prediction p = predict_trajectory(sample, model);
    const auto stop = std::chrono::steady_clock::now();
    sink = sink + p.soh.back();
    ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  LatencyStats stats;
  stats.runs = runs;
  double sum = 0.0;
  for (double v : ms) sum += v;
  stats.mean_ms = sum / static_cast<double>(runs);
  std::sort(ms.begin(), ms.end());
  stats.median_ms = runs % 2 == 1 ? ms[runs / 2] : 0.5 * (ms[runs / 2 - 1] + ms[runs / 2]);
  stats.p95_ms = ms[std::min(runs - 1, static_cast<std::size_t>(std::ceil(0.95 * runs)) - 1)];
  return stats;
}

nlohmann::json to_json(const MetricTriple& m) {
  return {{"rmse", m.rmse},
          {"mape_percent", m.mape_percent},
          {"r2", m.r2_defined ? nlohmann::json(m.r2) : nlohmann::json(nullptr)},
          {"mae", m.mae}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["model"] = r.model_name;
  j["units"] = r.units;
  j["overall"] = to_json(r.overall);
  j["batteries"] = nlohmann::json::array();
  for (const auto& b : r.batteries) {
    j["batteries"].push_back({{"battery_id", b.battery_id},
                              {"condition_tag", b.condition_tag},
                              {"n_samples", b.n_samples},
                              {"metrics", to_json(b.metrics)}});
  }
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : r.conditions) {
    j["conditions"].push_back({{"condition_tag", c.condition_tag},
                               {"n_batteries", c.n_batteries},
                               {"metrics", to_json(c.metrics)}});
  }
  if (!r.classification.empty()) {
    j["classification"] = nlohmann::json::array();
    for (const auto& c : r.classification) {
      j["classification"].push_back({{"battery_id", c.battery_id},
                                     {"anchor_cycle", c.anchor_cycle},
                                     {"soh", c.soh},
                                     {"label", to_string(c.label.label)},
                                     {"dominant_expert", c.label.dominant_expert},
                                     {"weights", c.label.weights}});
    }
  }
  if (!r.confidence.empty()) {
    j["confidence"] = nlohmann::json::array();
    for (const auto& c : r.confidence) {
      j["confidence"].push_back(
          {{"soh_bucket_percent", c.soh_bucket_percent},
           {"n_batteries", c.n_batteries},
           {"excellent", c.excellent},
           {"qualified", c.qualified},
           {"scrap", c.scrap},
           {"confidence", c.confidence ? nlohmann::json(*c.confidence) : nlohmann::json(nullptr)}});
    }
  }
  if (r.latency) {
    j["latency"] = {{"runs", r.latency->runs},
                    {"median_ms", r.latency->median_ms},
                    {"mean_ms", r.latency->mean_ms},
                    {"p95_ms", r.latency->p95_ms}};
  }
  j["metadata"] = r.metadata;
  return j;
}

void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "scope,id,condition_tag,n,rmse,mape_percent,r2,mae\n";
  auto metrics = [](const MetricTriple& m) {
    return format_double(m.rmse) + "," + format_double(m.mape_percent) + "," +
           (m.r2_defined ? format_double(m.r2) : std::string("nan")) + "," + format_double(m.mae);
  };
  for (const auto& b : r.batteries) {
    out << "battery," << b.battery_id << ',' << b.condition_tag << ',' << b.n_samples << ','
        << metrics(b.metrics) << '\n';
  }
  for (const auto& c : r.conditions) {
    out << "condition," << c.condition_tag << ',' << c.condition_tag << ',' << c.n_batteries << ','
        << metrics(c.metrics) << '\n';
  }
  out << "overall,all,," << r.batteries.size() << ',' << metrics(r.overall) << '\n';
}

}  // namespace pimoe
