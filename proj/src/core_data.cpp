#include "pimoe/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pimoe/error.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

void validate(const ConditionTriple& condition) {
  require(condition.charge_c_rate > 0.0 && condition.discharge_c_rate > 0.0,
          ErrorCode::InvalidArgument, "c-rates must be positive");
  require(std::isfinite(condition.temperature_c), ErrorCode::InvalidArgument,
          "temperature must be finite");
}

void integrate_charge(std::vector<ChargePoint>& points) {
  if (points.empty()) return;
  points.front().cumulative_mAh = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dt = points[i].time_s - points[i - 1].time_s;
    const double mean_current =
        0.5 * (std::abs(points[i].current_a) + std::abs(points[i - 1].current_a));
    // A*s -> mAh
    points[i].cumulative_mAh = points[i - 1].cumulative_mAh + mean_current * dt / 3.6;
  }
}

std::string to_string(Chemistry chemistry) {
  switch (chemistry) {
    case Chemistry::NCA: return "NCA";
    case Chemistry::NCM: return "NCM";
    case Chemistry::NCMNCA: return "NCMNCA";
    case Chemistry::OTHER: return "OTHER";
  }
  return "OTHER";
}

Chemistry chemistry_from_string(const std::string& text) {
  if (text == "NCA") return Chemistry::NCA;
  if (text == "NCM") return Chemistry::NCM;
  if (text == "NCMNCA" || text == "NCM+NCA") return Chemistry::NCMNCA;
  if (text == "OTHER" || text.empty()) return Chemistry::OTHER;
  fail(ErrorCode::InvalidArgument, "unknown chemistry '" + text + "'");
}

namespace {

std::string compact_number(double value) {
  std::ostringstream out;
  out << value;
  std::string text = out.str();
  text.erase(std::remove(text.begin(), text.end(), '.'), text.end());
  return text;
}

}  // namespace

std::string condition_tag_for(Chemistry chemistry, const ConditionTriple& condition) {
  return to_string(chemistry) + "-" + compact_number(condition.temperature_c) + "-" +
         compact_number(condition.charge_c_rate) + "-" +
         compact_number(condition.discharge_c_rate);
}

void validate(const BatterySeries& series) {
  require(!series.battery_id.empty(), ErrorCode::InvalidDataset, "battery id is empty");
  for (std::size_t i = 0; i < series.cycles.size(); ++i) {
    const CycleRecord& cycle = series.cycles[i];
    require(cycle.cycle_index >= 1, ErrorCode::InvalidDataset,
            series.battery_id + ": cycle index must be >= 1");
    if (i > 0) {
      require(cycle.cycle_index > series.cycles[i - 1].cycle_index, ErrorCode::InvalidDataset,
              series.battery_id + ": cycle indices must be strictly increasing");
    }
    require(cycle.max_discharge_capacity_mAh > 0.0, ErrorCode::InvalidDataset,
            series.battery_id + ": capacity must be positive at cycle " +
                std::to_string(cycle.cycle_index));
    for (std::size_t k = 1; k < cycle.charge_points.size(); ++k) {
      require(cycle.charge_points[k].cumulative_mAh >= cycle.charge_points[k - 1].cumulative_mAh,
              ErrorCode::InvalidDataset,
              series.battery_id + ": cumulative charge decreases at cycle " +
                  std::to_string(cycle.cycle_index));
    }
  }
}

const BatterySeries& Dataset::battery(const std::string& id) const {
  auto it = std::find_if(batteries.begin(), batteries.end(),
                         [&](const BatterySeries& b) { return b.battery_id == id; });
  require(it != batteries.end(), ErrorCode::InvalidArgument, "unknown battery '" + id + "'");
  return *it;
}

void validate(const Dataset& dataset) {
  std::set<std::string> seen;
  for (const auto& battery : dataset.batteries) {
    validate(battery);
    require(seen.insert(battery.battery_id).second, ErrorCode::InvalidDataset,
            "duplicate battery id '" + battery.battery_id + "'");
  }
}

namespace {

std::map<std::string, std::vector<std::string>> group_by_condition(const Dataset& dataset) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& battery : dataset.batteries) {
    const std::string tag =
        battery.condition_tag.empty() ? dataset.condition_tag : battery.condition_tag;
    groups[tag].push_back(battery.battery_id);
  }
  return groups;
}

std::size_t rounded_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5));
}

}  // namespace

SplitSpec partition_dataset(const Dataset& dataset, double fraction, std::uint64_t seed,
                            const PartitionOptions& options) {
  require(!dataset.batteries.empty(), ErrorCode::InvalidDataset, "dataset has no batteries");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument,
          "train fraction must lie in (0, 1]");
  require(options.test_ratio >= 0.0 && options.val_ratio >= 0.0 &&
              options.test_ratio + options.val_ratio < 1.0,
          ErrorCode::InvalidArgument, "test/val ratios must be non-negative and sum below 1");
  validate(dataset);

  SplitSpec split;
  split.train_fraction = fraction;
  for (auto& [tag, ids] : group_by_condition(dataset)) {
    std::sort(ids.begin(), ids.end());
    Rng rng = derive_stream(seed, "partition:" + tag);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);

    const std::size_t n = ids.size();
    const std::size_t n_test = n < 2 ? 0 : std::min(n - 1, rounded_count(n, options.test_ratio));
    const std::size_t remaining = n - n_test;
    const std::size_t n_val =
        remaining < 2 ? 0 : std::min(remaining - 1, rounded_count(n, options.val_ratio));
    const std::size_t pool = remaining - n_val;
    // Tolerance keeps e.g. 0.7 * 10 from ceiling to 8.
    const auto n_train = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(pool) - 1e-9));

    for (std::size_t i = 0; i < n_test; ++i) split.test_ids.insert(ids[i]);
    for (std::size_t i = n_test; i < n_test + n_val; ++i) split.val_ids.insert(ids[i]);
    for (std::size_t i = 0; i < n_train; ++i) split.train_ids.insert(ids[n_test + n_val + i]);
  }
  return split;
}

std::vector<ConditionSummary> dataset_summary(const Dataset& dataset) {
  std::map<std::string, ConditionSummary> rows;
  for (const auto& battery : dataset.batteries) {
    const std::string tag =
        battery.condition_tag.empty() ? dataset.condition_tag : battery.condition_tag;
    auto [it, inserted] = rows.try_emplace(tag);
    ConditionSummary& row = it->second;
    const std::size_t n_cycles = battery.cycles.size();
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& cycle : battery.cycles) {
      lo = std::min(lo, cycle.max_discharge_capacity_mAh);
      hi = std::max(hi, cycle.max_discharge_capacity_mAh);
    }
    if (inserted) {
      row.condition_tag = tag;
      row.min_cycles = n_cycles;
      row.max_cycles = n_cycles;
      row.min_capacity_mAh = lo;
      row.max_capacity_mAh = hi;
    } else {
      row.min_cycles = std::min(row.min_cycles, n_cycles);
      row.max_cycles = std::max(row.max_cycles, n_cycles);
      row.min_capacity_mAh = std::min(row.min_capacity_mAh, lo);
      row.max_capacity_mAh = std::max(row.max_capacity_mAh, hi);
    }
    row.mean_cycles = (row.mean_cycles * static_cast<double>(row.n_batteries) +
                       static_cast<double>(n_cycles)) /
                      static_cast<double>(row.n_batteries + 1);
    row.n_batteries += 1;
  }
  std::vector<ConditionSummary> table;
  table.reserve(rows.size());
  for (auto& [tag, row] : rows) table.push_back(row);
  return table;
}

Dataset select_batteries(const Dataset& dataset, const std::set<std::string>& ids) {
  Dataset subset;
  subset.name = dataset.name;
  subset.condition_tag = dataset.condition_tag;
  for (const auto& battery : dataset.batteries) {
    if (ids.contains(battery.battery_id)) subset.batteries.push_back(battery);
  }
  return subset;
}

}  // namespace pimoe
