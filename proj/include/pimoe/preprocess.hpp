#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pimoe/core_data.hpp"

namespace pimoe {

/// Cumulative charge as a function of voltage over a cycle's charge segment.
/// Only the first arrival at each voltage is kept, so constant-voltage tails
/// collapse onto the cutoff knot.
class ChargeCurve {
 public:
  /// Throws MalformedCycle if voltage decreases anywhere in the segment, or
  /// if fewer than two distinct voltages are present.
  explicit ChargeCurve(const CycleRecord& cycle);

  double min_voltage() const { return voltages_.front(); }
  double max_voltage() const { return voltages_.back(); }
  double total_charge() const { return charges_.back(); }

  /// Linear interpolation in voltage; throws OutOfRange outside the curve.
  double charge_at(double voltage) const;
  /// Inverse map: first voltage at which the cumulative charge reaches `charge`.
  double voltage_at(double charge) const;

 private:
  std::vector<double> voltages_;
  std::vector<double> charges_;
};

struct ChargeVector {
  /// n + 1 cumulative values for n equal voltage segments; values_mAh[0] == 0.
  std::vector<double> values_mAh;
  double v_start_v = 0.0;
  double v_end_v = 0.0;

  /// The n informative values q_1..q_n (q_0 is identically zero); this is the
  /// vector the experts consume.
  std::span<const double> segment_values() const {
    return std::span<const double>(values_mAh).subspan(1);
  }
};

struct RelaxVector {
  std::vector<double> values_v;
  double window_min = 30.0;
  /// Set when the final reading is above the first, which is unusual right
  /// after a full charge. Informational only.
  bool rising_warning = false;
};

struct FixedStart {
  double voltage_v = 0.0;
};

/// v_start drawn per sample from SOC in [soc_lo, soc_hi], mapped to voltage
/// through the cycle's own charge curve.
struct RandomSocStart {
  std::uint64_t seed = 0;
  double soc_lo = 0.10;
  double soc_hi = 0.50;
};

using StartPolicy = std::variant<FixedStart, RandomSocStart>;

enum class FeatureMode { Full12, ChargeOnly6 };

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& text);
std::size_t feature_count(FeatureMode mode);

struct Sample {
  ChargeVector q;
  std::vector<double> features;
  std::vector<ConditionTriple> conditions;
  std::vector<double> target_mAh;
  /// Capacities of the anchor cycle and up to `history_window - 1` cycles
  /// before it, oldest first. Used only by the history-driven router.
  std::vector<double> history_mAh;
  std::string battery_id;
  int anchor_cycle = 0;
  double anchor_capacity_mAh = 0.0;
  double nominal_capacity_mAh = 0.0;
};

struct SampleOptions {
  std::size_t horizon = 50;
  StartPolicy start = RandomSocStart{};
  std::size_t charge_points = 50;
  double relax_window_min = 30.0;
  std::size_t relax_points = 30;
  FeatureMode mode = FeatureMode::Full12;
  double q_window_v = 0.05;
  double dv_window_mAh = 200.0;
  std::size_t history_window = 10;
};

struct CleaningOptions {
  double capacity_jump_mAh = 200.0;
  /// Relative standard deviation of |I| inside the constant-current segment.
  double current_rel_std = 0.05;
  /// Points within this margin of the upper cutoff belong to the CV tail.
  double cv_margin_v = 0.01;
};

struct RemovedCycle {
  std::string battery_id;
  int cycle_index = 0;
  std::string reason;
};

struct CleaningResult {
  BatterySeries series;
  std::vector<RemovedCycle> removed;
};

/// Drops charge points whose voltage falls below the running maximum.
void monotone_cleanup(CycleRecord& cycle);

/// Runs monotone_cleanup on every cycle, applies the three anomaly rules
/// until no further cycle is removed, then renumbers the surviving cycles
/// 1..n. The first and last cycles have only
/// one neighbour and are never flagged by the capacity-jump rule.
CleaningResult clean_cycles(const BatterySeries& series, const CleaningOptions& options = {});

ChargeVector build_charge_vector(const CycleRecord& cycle, double v_start, std::size_t n);
ChargeVector build_charge_vector(const ChargeCurve& curve, double v_start, double v_end,
                                 std::size_t n);

RelaxVector sample_relaxation(const CycleRecord& cycle, double window_min, std::size_t m);

/// Start voltage that a policy selects for one anchor cycle.
double select_start_voltage(const StartPolicy& policy, const ChargeCurve& curve,
                            const std::string& battery_id, int cycle_index);

/// Sample at cycle position t with explicitly given future conditions; the
/// targets are filled only when the series holds all of those cycles.
Sample build_sample_at(const BatterySeries& series, std::size_t t, const SampleOptions& options,
                       std::span<const ConditionTriple> conditions);

/// One sample per anchor position t in [1, N - L] of the (cleaned) series.
std::vector<Sample> build_samples(const BatterySeries& series, const SampleOptions& options);

class NormStats {
 public:
  NormStats() = default;
  NormStats(std::vector<double> min, std::vector<double> max);

  static NormStats fit(std::span<const std::vector<double>> rows);

  bool fitted() const { return !min_.empty(); }
  std::size_t size() const { return min_.size(); }
  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }

  /// (x - min) / (max - min) clamped to [0, 1]; constant columns map to 0.5.
  std::vector<double> apply(std::span<const double> row) const;
  double apply(std::size_t column, double value) const;

 private:
  std::vector<double> min_;
  std::vector<double> max_;
};

NormStats fit_norm(std::span<const Sample> samples);
std::vector<Sample> apply_norm(std::span<const Sample> samples, const NormStats& stats);

}  // namespace pimoe
