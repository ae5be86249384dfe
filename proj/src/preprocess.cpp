#include "pimoe/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pimoe/error.hpp"
#include "pimoe/features.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

std::string to_string(FeatureMode mode) {
  return mode == FeatureMode::Full12 ? "full12" : "charge_only6";
}

FeatureMode feature_mode_from_string(const std::string& text) {
  if (text == "full12") return FeatureMode::Full12;
  if (text == "charge_only6") return FeatureMode::ChargeOnly6;
  fail(ErrorCode::InvalidArgument, "unknown feature mode '" + text + "'");
}

std::size_t feature_count(FeatureMode mode) { return mode == FeatureMode::Full12 ? 12 : 6; }

// ---------------------------------------------------------------------------
// ChargeCurve

ChargeCurve::ChargeCurve(const CycleRecord& cycle) {
  for (const auto& point : cycle.charge_points) {
    if (voltages_.empty() || point.voltage_v > voltages_.back()) {
      voltages_.push_back(point.voltage_v);
      charges_.push_back(point.cumulative_mAh);
    } else if (point.voltage_v < voltages_.back()) {
      fail(ErrorCode::MalformedCycle, "charge voltage decreases at cycle " +
                                          std::to_string(cycle.cycle_index));
    }
  }
  require(voltages_.size() >= 2, ErrorCode::MalformedCycle,
          "charge segment spans fewer than two voltages at cycle " +
              std::to_string(cycle.cycle_index));
  const double origin = charges_.front();
  for (double& q : charges_) q -= origin;
}

double ChargeCurve::charge_at(double voltage) const {
  require(voltage >= voltages_.front() && voltage <= voltages_.back(), ErrorCode::OutOfRange,
          "voltage " + std::to_string(voltage) + " outside charge curve [" +
              std::to_string(voltages_.front()) + ", " + std::to_string(voltages_.back()) + "]");
  auto it = std::lower_bound(voltages_.begin(), voltages_.end(), voltage);
  const auto hi = static_cast<std::size_t>(it - voltages_.begin());
  if (voltages_[hi] == voltage) return charges_[hi];
  const std::size_t lo = hi - 1;
  const double w = (voltage - voltages_[lo]) / (voltages_[hi] - voltages_[lo]);
  return charges_[lo] + w * (charges_[hi] - charges_[lo]);
}

double ChargeCurve::voltage_at(double charge) const {
  require(charge >= 0.0 && charge <= charges_.back(), ErrorCode::OutOfRange,
          "charge " + std::to_string(charge) + " mAh outside charge curve [0, " +
              std::to_string(charges_.back()) + "]");
  auto it = std::lower_bound(charges_.begin(), charges_.end(), charge);
  const auto hi = static_cast<std::size_t>(it - charges_.begin());
  if (charges_[hi] == charge || hi == 0) return voltages_[hi];
  const std::size_t lo = hi - 1;
  const double w = (charge - charges_[lo]) / (charges_[hi] - charges_[lo]);
  return voltages_[lo] + w * (voltages_[hi] - voltages_[lo]);
}

// ---------------------------------------------------------------------------
// Cleaning

void monotone_cleanup(CycleRecord& cycle) {
  std::vector<ChargePoint> kept;
  kept.reserve(cycle.charge_points.size());
  double running_max = -INFINITY;
  for (const auto& point : cycle.charge_points) {
    if (point.voltage_v >= running_max) {
      kept.push_back(point);
      running_max = point.voltage_v;
    }
  }
  cycle.charge_points = std::move(kept);
}

namespace {

bool zero_charge_change(const CycleRecord& cycle) {
  if (cycle.charge_points.size() < 2) return true;
  return cycle.charge_points.back().cumulative_mAh - cycle.charge_points.front().cumulative_mAh <=
         0.0;
}

bool current_fluctuates(const CycleRecord& cycle, double upper_cutoff,
                        const CleaningOptions& options) {
  std::vector<double> currents;
  for (const auto& point : cycle.charge_points) {
    if (point.voltage_v < upper_cutoff - options.cv_margin_v) {
      currents.push_back(std::abs(point.current_a));
    }
  }
  if (currents.size() < 3) return false;
  const double n = static_cast<double>(currents.size());
  const double mean = std::accumulate(currents.begin(), currents.end(), 0.0) / n;
  if (mean <= 0.0) return true;
  double ss = 0.0;
  for (double c : currents) ss += (c - mean) * (c - mean);
  return std::sqrt(ss / n) / mean > options.current_rel_std;
}

}  // namespace

CleaningResult clean_cycles(const BatterySeries& series, const CleaningOptions& options) {
  require(series.cycles.size() >= 3, ErrorCode::InsufficientData,
          series.battery_id + ": cleaning needs at least 3 cycles");

  CleaningResult result;
  std::vector<CycleRecord> kept;
  for (CycleRecord cycle : series.cycles) {
    monotone_cleanup(cycle);
    double upper = series.cutoff_voltage_v.max_v;
    if (upper <= 0.0) {
      for (const auto& p : cycle.charge_points) upper = std::max(upper, p.voltage_v);
    }
    if (zero_charge_change(cycle)) {
      result.removed.push_back({series.battery_id, cycle.cycle_index, "zero charge capacity change"});
    } else if (current_fluctuates(cycle, upper, options)) {
      result.removed.push_back(
          {series.battery_id, cycle.cycle_index, "constant-current fluctuation"});
    } else {
      kept.push_back(std::move(cycle));
    }
  }

  // Removing an outlier makes its neighbours adjacent, which can expose a new
  // outlier; repeat until stable so the operation is idempotent.
  for (bool changed = true; changed && kept.size() >= 3;) {
    changed = false;
    std::vector<bool> drop(kept.size(), false);
    for (std::size_t i = 1; i + 1 < kept.size(); ++i) {
      const double c = kept[i].max_discharge_capacity_mAh;
      if (std::abs(c - kept[i - 1].max_discharge_capacity_mAh) > options.capacity_jump_mAh &&
          std::abs(c - kept[i + 1].max_discharge_capacity_mAh) > options.capacity_jump_mAh) {
        drop[i] = true;
        changed = true;
      }
    }
    std::vector<CycleRecord> next;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (drop[i]) {
        result.removed.push_back(
            {series.battery_id, kept[i].cycle_index, "capacity jump vs both neighbours"});
      } else {
        next.push_back(std::move(kept[i]));
      }
    }
    kept = std::move(next);
  }

  result.series = series;
  result.series.cycles = std::move(kept);
  for (std::size_t i = 0; i < result.series.cycles.size(); ++i) {
    result.series.cycles[i].cycle_index = static_cast<int>(i + 1);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Vectors

ChargeVector build_charge_vector(const ChargeCurve& curve, double v_start, double v_end,
                                 std::size_t n) {
  require(n >= 1, ErrorCode::InvalidArgument, "charge vector needs at least one segment");
  require(v_start >= curve.min_voltage() && v_start < v_end && v_end <= curve.max_voltage(),
          ErrorCode::OutOfRange,
          "start voltage " + std::to_string(v_start) + " outside charge curve");
  ChargeVector vector;
  vector.v_start_v = v_start;
  vector.v_end_v = v_end;
  vector.values_mAh.resize(n + 1);
  const double base = curve.charge_at(v_start);
  const double step = (v_end - v_start) / static_cast<double>(n);
  vector.values_mAh[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double v = i == n ? v_end : v_start + static_cast<double>(i) * step;
    vector.values_mAh[i] = curve.charge_at(v) - base;
  }
  return vector;
}

ChargeVector build_charge_vector(const CycleRecord& cycle, double v_start, std::size_t n) {
  const ChargeCurve curve(cycle);
  return build_charge_vector(curve, v_start, curve.max_voltage(), n);
}

RelaxVector sample_relaxation(const CycleRecord& cycle, double window_min, std::size_t m) {
  require(m >= 2, ErrorCode::InvalidArgument, "relaxation sampling needs m >= 2");
  require(window_min > 0.0, ErrorCode::InvalidArgument, "relaxation window must be positive");
  const auto& points = cycle.relax_points;
  const double window_s = window_min * 60.0;
  require(points.size() >= 2 && points.back().time_s - points.front().time_s >= window_s - 1e-9,
          ErrorCode::InsufficientRelaxation,
          "relaxation at cycle " + std::to_string(cycle.cycle_index) + " is shorter than " +
              std::to_string(window_min) + " min");
  const double t0 = points.front().time_s;

  RelaxVector relax;
  relax.window_min = window_min;
  relax.values_v.resize(m);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double t = t0 + window_s * static_cast<double>(k) / static_cast<double>(m - 1);
    while (seg + 2 < points.size() && points[seg + 1].time_s < t) ++seg;
    const RelaxPoint& a = points[seg];
    const RelaxPoint& b = points[seg + 1];
    if (t == b.time_s) {
      relax.values_v[k] = b.voltage_v;
    } else if (t == a.time_s || b.time_s == a.time_s) {
      relax.values_v[k] = a.voltage_v;
    } else {
      const double w = (t - a.time_s) / (b.time_s - a.time_s);
      relax.values_v[k] = a.voltage_v + w * (b.voltage_v - a.voltage_v);
    }
  }
  relax.rising_warning = relax.values_v.front() < relax.values_v.back();
  return relax;
}

double select_start_voltage(const StartPolicy& policy, const ChargeCurve& curve,
                            const std::string& battery_id, int cycle_index) {
  if (const auto* fixed = std::get_if<FixedStart>(&policy)) return fixed->voltage_v;
  const auto& soc = std::get<RandomSocStart>(policy);
  require(soc.soc_lo >= 0.0 && soc.soc_lo <= soc.soc_hi && soc.soc_hi < 1.0,
          ErrorCode::InvalidArgument, "SOC range must satisfy 0 <= lo <= hi < 1");
  Rng rng = derive_stream(hash_combine(soc.seed, hash_string(battery_id)), "v_start",
                          static_cast<std::uint64_t>(cycle_index));
  const double fraction = rng.uniform(soc.soc_lo, soc.soc_hi);
  return curve.voltage_at(fraction * curve.total_charge());
}

Sample build_sample_at(const BatterySeries& series, std::size_t t, const SampleOptions& options,
                       std::span<const ConditionTriple> conditions) {
  require(t < series.cycles.size(), ErrorCode::InvalidArgument,
          series.battery_id + ": anchor position " + std::to_string(t) + " out of range");
  require(!conditions.empty(), ErrorCode::InvalidArgument, "a sample needs future conditions");
  const CycleRecord& anchor = series.cycles[t];
  const ChargeCurve curve(anchor);
  const double v_start =
      select_start_voltage(options.start, curve, series.battery_id, anchor.cycle_index);

  Sample sample;
  sample.q = build_charge_vector(curve, v_start, curve.max_voltage(), options.charge_points);
  std::optional<RelaxVector> relax;
  if (options.mode == FeatureMode::Full12) {
    relax = sample_relaxation(anchor, options.relax_window_min, options.relax_points);
  }
  sample.features = assemble_features(sample.q, curve, relax ? &*relax : nullptr, options.mode,
                                      options.q_window_v, options.dv_window_mAh);
  sample.conditions.assign(conditions.begin(), conditions.end());
  if (t + conditions.size() < series.cycles.size()) {
    sample.target_mAh.reserve(conditions.size());
    for (std::size_t k = 1; k <= conditions.size(); ++k) {
      sample.target_mAh.push_back(series.cycles[t + k].max_discharge_capacity_mAh);
    }
  }
  const std::size_t first = t + 1 >= options.history_window ? t + 1 - options.history_window : 0;
  for (std::size_t k = first; k <= t; ++k) {
    sample.history_mAh.push_back(series.cycles[k].max_discharge_capacity_mAh);
  }
  sample.battery_id = series.battery_id;
  sample.anchor_cycle = anchor.cycle_index;
  sample.anchor_capacity_mAh = anchor.max_discharge_capacity_mAh;
  sample.nominal_capacity_mAh = series.nominal_capacity_mAh;
  return sample;
}

std::vector<Sample> build_samples(const BatterySeries& series, const SampleOptions& options) {
  const std::size_t horizon = options.horizon;
  require(horizon >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  const std::size_t n_cycles = series.cycles.size();
  require(n_cycles > horizon, ErrorCode::HorizonTooLong,
          series.battery_id + ": " + std::to_string(n_cycles) + " cycles cannot support horizon " +
              std::to_string(horizon));

  std::vector<Sample> samples;
  samples.reserve(n_cycles - horizon);
  std::vector<ConditionTriple> future(horizon);
  for (std::size_t t = 0; t + horizon < n_cycles; ++t) {
    for (std::size_t k = 1; k <= horizon; ++k) future[k - 1] = series.cycles[t + k].condition;
    samples.push_back(build_sample_at(series, t, options, future));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Normalisation

NormStats::NormStats(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  require(min_.size() == max_.size(), ErrorCode::ShapeError, "NormStats min/max size mismatch");
  for (std::size_t i = 0; i < min_.size(); ++i) {
    require(max_[i] >= min_[i], ErrorCode::InvalidArgument, "NormStats requires max >= min");
  }
}

NormStats NormStats::fit(std::span<const std::vector<double>> rows) {
  require(!rows.empty(), ErrorCode::InsufficientData, "cannot fit normalisation on zero rows");
  std::vector<double> lo = rows.front();
  std::vector<double> hi = rows.front();
  for (const auto& row : rows) {
    require(row.size() == lo.size(), ErrorCode::ShapeError, "ragged feature rows");
    for (std::size_t j = 0; j < row.size(); ++j) {
      lo[j] = std::min(lo[j], row[j]);
      hi[j] = std::max(hi[j], row[j]);
    }
  }
  return NormStats(std::move(lo), std::move(hi));
}

double NormStats::apply(std::size_t column, double value) const {
  require(fitted(), ErrorCode::NotFitted, "normalisation applied before fit");
  const double range = max_[column] - min_[column];
  if (range <= 0.0) return 0.5;
  return std::clamp((value - min_[column]) / range, 0.0, 1.0);
}

std::vector<double> NormStats::apply(std::span<const double> row) const {
  require(fitted(), ErrorCode::NotFitted, "normalisation applied before fit");
  require(row.size() == min_.size(), ErrorCode::ShapeError,
          "row has " + std::to_string(row.size()) + " columns, stats have " +
              std::to_string(min_.size()));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = apply(j, row[j]);
  return out;
}

NormStats fit_norm(std::span<const Sample> samples) {
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(s.features);
  return NormStats::fit(rows);
}

std::vector<Sample> apply_norm(std::span<const Sample> samples, const NormStats& stats) {
  std::vector<Sample> out(samples.begin(), samples.end());
  for (auto& s : out) s.features = stats.apply(s.features);
  return out;
}

}  // namespace pimoe
