#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pimoe {

struct ConditionTriple {
  double charge_c_rate = 0.5;
  double discharge_c_rate = 1.0;
  double temperature_c = 25.0;

  bool operator==(const ConditionTriple&) const = default;
};

/// Throws InvalidArgument unless c-rates are positive and the temperature finite.
void validate(const ConditionTriple& condition);

struct ChargePoint {
  double time_s = 0.0;
  double voltage_v = 0.0;
  double current_a = 0.0;
  double cumulative_mAh = 0.0;

  bool operator==(const ChargePoint&) const = default;
};

struct RelaxPoint {
  double time_s = 0.0;
  double voltage_v = 0.0;

  bool operator==(const RelaxPoint&) const = default;
};

struct CycleRecord {
  int cycle_index = 1;
  std::vector<ChargePoint> charge_points;
  std::vector<RelaxPoint> relax_points;
  double max_discharge_capacity_mAh = 0.0;
  ConditionTriple condition;

  bool operator==(const CycleRecord&) const = default;
};

/// Fills cumulative_mAh by trapezoidal integration of |I| dt, starting at 0.
void integrate_charge(std::vector<ChargePoint>& points);

enum class Chemistry { NCA, NCM, NCMNCA, OTHER };

std::string to_string(Chemistry chemistry);
Chemistry chemistry_from_string(const std::string& text);

struct VoltageWindow {
  double min_v = 0.0;
  double max_v = 0.0;

  bool operator==(const VoltageWindow&) const = default;
};

struct BatterySeries {
  std::string battery_id;
  Chemistry chemistry = Chemistry::OTHER;
  double nominal_capacity_mAh = 0.0;
  VoltageWindow cutoff_voltage_v;
  /// Group key for per-condition operations; see condition_tag_for().
  std::string condition_tag;
  std::vector<CycleRecord> cycles;

  bool operator==(const BatterySeries&) const = default;
};

/// Tag in the "NCA-45-05-1" convention: chemistry, temperature, charge rate
/// with the decimal point dropped, discharge rate.
std::string condition_tag_for(Chemistry chemistry, const ConditionTriple& condition);

/// Throws InvalidDataset when a series breaks its invariants.
void validate(const BatterySeries& series);

struct Dataset {
  std::string name;
  std::vector<BatterySeries> batteries;
  std::string condition_tag;

  const BatterySeries& battery(const std::string& id) const;
  bool operator==(const Dataset&) const = default;
};

void validate(const Dataset& dataset);

struct SplitSpec {
  std::set<std::string> train_ids;
  std::set<std::string> val_ids;
  std::set<std::string> test_ids;
  double train_fraction = 1.0;
};

struct PartitionOptions {
  double test_ratio = 0.25;
  double val_ratio = 0.1;
};

/// Splits by battery within each condition group. Test and validation sets
/// depend only on the seed; the training set is the first
/// ceil(fraction * pool) batteries of a seeded per-group ordering, so smaller
/// fractions yield nested subsets.
SplitSpec partition_dataset(const Dataset& dataset, double fraction, std::uint64_t seed,
                            const PartitionOptions& options = {});

struct ConditionSummary {
  std::string condition_tag;
  std::size_t n_batteries = 0;
  std::size_t min_cycles = 0;
  std::size_t max_cycles = 0;
  double mean_cycles = 0.0;
  double min_capacity_mAh = 0.0;
  double max_capacity_mAh = 0.0;
};

std::vector<ConditionSummary> dataset_summary(const Dataset& dataset);

/// Convenience: subset of a dataset restricted to the given battery ids,
/// preserving the original order.
Dataset select_batteries(const Dataset& dataset, const std::set<std::string>& ids);

}  // namespace pimoe
