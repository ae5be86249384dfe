#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pimoe/analysis.hpp"
#include "pimoe/core_data.hpp"
#include "pimoe/preprocess.hpp"

namespace pimoe {

/// cycles.csv: battery_id,cycle,phase,t_s,voltage_v,current_a (phase is
/// "charge" or "relax"); summary.csv: battery_id,cycle,
/// max_discharge_capacity_mAh,charge_c,discharge_c,temp_c. Numbers are
/// written in shortest round-trip form, so reading back gives identical
/// doubles.
void write_cycles_csv(const std::filesystem::path& path, const Dataset& dataset);
void write_summary_csv(const std::filesystem::path& path, const Dataset& dataset);
/// battery_id,chemistry,nominal_capacity_mAh,v_min,v_max,condition_tag
void write_batteries_csv(const std::filesystem::path& path, const Dataset& dataset);
/// battery_id,cycle,stage
void write_stages_csv(const std::filesystem::path& path,
                      const std::map<std::string, std::vector<Stage>>& stages);

/// Reads the two mandatory tables (and the optional battery table) into a
/// dataset. Batteries without metadata get chemistry OTHER, the first
/// cycle's capacity as nominal, the observed voltage range as cutoff window
/// and a tag derived from the first cycle's conditions. Schema violations
/// raise IngestError naming the file and row.
Dataset read_dataset_csv(const std::filesystem::path& cycles_csv,
                         const std::filesystem::path& summary_csv,
                         const std::optional<std::filesystem::path>& batteries_csv = std::nullopt);

std::map<std::string, std::vector<Stage>> read_stages_csv(const std::filesystem::path& path);

/// Directory holding the three tables, optional stage labels and a
/// manifest.json with the dataset name and cleaning log.
struct Archive {
  Dataset dataset;
  std::map<std::string, std::vector<Stage>> stages;
  std::vector<RemovedCycle> removed;
};

void write_archive(const std::filesystem::path& dir, const Archive& archive);
Archive read_archive(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace pimoe
