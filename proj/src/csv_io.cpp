#include "pimoe/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pimoe/error.hpp"

namespace pimoe {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

class CsvReader {
 public:
  CsvReader(const fs::path& path, const std::vector<std::string>& header) : path_(path) {
    in_.open(path);
    require(static_cast<bool>(in_), ErrorCode::IngestError, "cannot open " + path.string());
    std::string line;
    require(next_line(line), ErrorCode::IngestError, path.string() + " is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto got = split(line);
    require(got == header, ErrorCode::IngestError,
            path.string() + " row 1: header must be " + join(header));
    width_ = header.size();
  }

  /// False at end of file; skips blank lines.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (next_line(line)) {
      if (line.empty()) continue;
      fields = split(line);
      if (fields.size() != width_) {
        error("expected " + std::to_string(width_) + " fields, got " +
              std::to_string(fields.size()));
      }
      return true;
    }
    return false;
  }

  double number(const std::string& text, const char* column) const {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
      error(std::string("column ") + column + ": '" + text + "' is not a finite number");
    }
    return v;
  }

  int integer(const std::string& text, const char* column) const {
    int v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      error(std::string("column ") + column + ": '" + text + "' is not an integer");
    }
    return v;
  }

  [[noreturn]] void error(const std::string& message) const {
    fail(ErrorCode::IngestError, path_.string() + " row " + std::to_string(row_) + ": " + message);
  }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++row_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  }

  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& f : v) s += (s.empty() ? "" : ",") + f;
    return s;
  }

  fs::path path_;
  std::ifstream in_;
  std::size_t row_ = 0;
  std::size_t width_ = 0;
};

const std::vector<std::string> kCyclesHeader = {"battery_id", "cycle",     "phase",
                                                "t_s",        "voltage_v", "current_a"};
const std::vector<std::string> kSummaryHeader = {
    "battery_id", "cycle", "max_discharge_capacity_mAh", "charge_c", "discharge_c", "temp_c"};
const std::vector<std::string> kBatteriesHeader = {
    "battery_id", "chemistry", "nominal_capacity_mAh", "v_min", "v_max", "condition_tag"};
const std::vector<std::string> kStagesHeader = {"battery_id", "cycle", "stage"};

}  // namespace

void write_cycles_csv(const fs::path& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  out << "battery_id,cycle,phase,t_s,voltage_v,current_a\n";
  for (const auto& b : dataset.batteries) {
    for (const auto& c : b.cycles) {
      const std::string prefix = b.battery_id + "," + std::to_string(c.cycle_index);
      for (const auto& p : c.charge_points) {
        out << prefix << ",charge," << format_double(p.time_s) << ','
            << format_double(p.voltage_v) << ',' << format_double(p.current_a) << '\n';
      }
      for (const auto& p : c.relax_points) {
        out << prefix << ",relax," << format_double(p.time_s) << ','
            << format_double(p.voltage_v) << ",0\n";
      }
    }
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

void write_summary_csv(const fs::path& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  out << "battery_id,cycle,max_discharge_capacity_mAh,charge_c,discharge_c,temp_c\n";
  for (const auto& b : dataset.batteries) {
    for (const auto& c : b.cycles) {
      out << b.battery_id << ',' << c.cycle_index << ','
          << format_double(c.max_discharge_capacity_mAh) << ','
          << format_double(c.condition.charge_c_rate) << ','
          << format_double(c.condition.discharge_c_rate) << ','
          << format_double(c.condition.temperature_c) << '\n';
    }
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

void write_batteries_csv(const fs::path& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  out << "battery_id,chemistry,nominal_capacity_mAh,v_min,v_max,condition_tag\n";
  for (const auto& b : dataset.batteries) {
    out << b.battery_id << ',' << to_string(b.chemistry) << ','
        << format_double(b.nominal_capacity_mAh) << ',' << format_double(b.cutoff_voltage_v.min_v)
        << ',' << format_double(b.cutoff_voltage_v.max_v) << ',' << b.condition_tag << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

void write_stages_csv(const fs::path& path,
                      const std::map<std::string, std::vector<Stage>>& stages) {
  std::ofstream out = open_out(path);
  out << "battery_id,cycle,stage\n";
  for (const auto& [id, labels] : stages) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out << id << ',' << (i + 1) << ',' << to_string(labels[i]) << '\n';
    }
  }
}

Dataset read_dataset_csv(const fs::path& cycles_csv, const fs::path& summary_csv,
                         const std::optional<fs::path>& batteries_csv) {
  Dataset ds;
  std::map<std::string, std::size_t> index;
  std::vector<std::string> fields;

  // Summary first: it fixes the set and order of batteries and cycles.
  {
    CsvReader reader(summary_csv, kSummaryHeader);
    bool any = false;
    while (reader.next(fields)) {
      any = true;
      const std::string& id = fields[0];
      if (id.empty()) reader.error("empty battery_id");
      auto [it, inserted] = index.emplace(id, ds.batteries.size());
      if (inserted) {
        ds.batteries.emplace_back();
        ds.batteries.back().battery_id = id;
      }
      BatterySeries& b = ds.batteries[it->second];
      CycleRecord c;
      c.cycle_index = reader.integer(fields[1], "cycle");
      if (c.cycle_index < 1) reader.error("cycle must be >= 1");
      if (!b.cycles.empty() && c.cycle_index <= b.cycles.back().cycle_index) {
        reader.error("cycles of " + id + " must be strictly increasing");
      }
      c.max_discharge_capacity_mAh = reader.number(fields[2], "max_discharge_capacity_mAh");
      if (c.max_discharge_capacity_mAh <= 0.0) reader.error("capacity must be positive");
      c.condition.charge_c_rate = reader.number(fields[3], "charge_c");
      c.condition.discharge_c_rate = reader.number(fields[4], "discharge_c");
      c.condition.temperature_c = reader.number(fields[5], "temp_c");
      if (c.condition.charge_c_rate <= 0.0 || c.condition.discharge_c_rate <= 0.0) {
        reader.error("c-rates must be positive");
      }
      b.cycles.push_back(std::move(c));
    }
    if (!any) reader.error("no data rows");
  }

  {
    CsvReader reader(cycles_csv, kCyclesHeader);
    bool any = false;
    BatterySeries* battery = nullptr;
    std::string current_id;
    while (reader.next(fields)) {
      any = true;
      if (battery == nullptr || fields[0] != current_id) {
        auto it = index.find(fields[0]);
        if (it == index.end()) reader.error("battery '" + fields[0] + "' missing from summary");
        battery = &ds.batteries[it->second];
        current_id = fields[0];
      }
      const int cycle_index = reader.integer(fields[1], "cycle");
      auto cit = std::lower_bound(
          battery->cycles.begin(), battery->cycles.end(), cycle_index,
          [](const CycleRecord& c, int k) { return c.cycle_index < k; });
      if (cit == battery->cycles.end() || cit->cycle_index != cycle_index) {
        reader.error("cycle " + std::to_string(cycle_index) + " of " + current_id +
                     " missing from summary");
      }
      const double t = reader.number(fields[3], "t_s");
      const double v = reader.number(fields[4], "voltage_v");
      const double i = reader.number(fields[5], "current_a");
      if (fields[2] == "charge") {
        if (!cit->charge_points.empty() && t < cit->charge_points.back().time_s) {
          reader.error("charge time decreases");
        }
        cit->charge_points.push_back({t, v, i, 0.0});
      } else if (fields[2] == "relax") {
        if (!cit->relax_points.empty() && t < cit->relax_points.back().time_s) {
          reader.error("relaxation time decreases");
        }
        cit->relax_points.push_back({t, v});
      } else {
        reader.error("phase must be 'charge' or 'relax', got '" + fields[2] + "'");
      }
    }
    if (!any) reader.error("no data rows");
  }

  std::set<std::string> described;
  if (batteries_csv) {
    CsvReader reader(*batteries_csv, kBatteriesHeader);
    while (reader.next(fields)) {
      auto it = index.find(fields[0]);
      if (it == index.end()) reader.error("battery '" + fields[0] + "' has no cycles");
      BatterySeries& b = ds.batteries[it->second];
      try {
        b.chemistry = chemistry_from_string(fields[1]);
      } catch (const Error&) {
        reader.error("unknown chemistry '" + fields[1] + "'");
      }
      b.nominal_capacity_mAh = reader.number(fields[2], "nominal_capacity_mAh");
      if (b.nominal_capacity_mAh <= 0.0) reader.error("nominal capacity must be positive");
      b.cutoff_voltage_v = {reader.number(fields[3], "v_min"), reader.number(fields[4], "v_max")};
      b.condition_tag = fields[5];
      described.insert(b.battery_id);
    }
  }

  for (auto& b : ds.batteries) {
    for (auto& c : b.cycles) {
      require(!c.charge_points.empty(), ErrorCode::IngestError,
              summary_csv.string() + ": " + b.battery_id + " cycle " +
                  std::to_string(c.cycle_index) + " has no charge rows in " + cycles_csv.string());
      integrate_charge(c.charge_points);
    }
    if (!described.contains(b.battery_id)) {
      b.nominal_capacity_mAh = b.cycles.front().max_discharge_capacity_mAh;
      double lo = b.cycles.front().charge_points.front().voltage_v, hi = lo;
      for (const auto& c : b.cycles) {
        for (const auto& p : c.charge_points) {
          lo = std::min(lo, p.voltage_v);
          hi = std::max(hi, p.voltage_v);
        }
      }
      b.cutoff_voltage_v = {lo, hi};
      b.condition_tag = condition_tag_for(b.chemistry, b.cycles.front().condition);
    }
  }
  try {
    validate(ds);
  } catch (const Error& e) {
    fail(ErrorCode::IngestError, e.what());
  }
  return ds;
}

std::map<std::string, std::vector<Stage>> read_stages_csv(const fs::path& path) {
  CsvReader reader(path, kStagesHeader);
  std::map<std::string, std::vector<Stage>> out;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    auto& labels = out[fields[0]];
    const int cycle = reader.integer(fields[1], "cycle");
    if (cycle != static_cast<int>(labels.size()) + 1) reader.error("stage rows must be contiguous");
    try {
      labels.push_back(stage_from_string(fields[2]));
    } catch (const Error&) {
      reader.error("unknown stage '" + fields[2] + "'");
    }
  }
  return out;
}

void write_archive(const fs::path& dir, const Archive& archive) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_cycles_csv(dir / "cycles.csv", archive.dataset);
  write_summary_csv(dir / "summary.csv", archive.dataset);
  write_batteries_csv(dir / "batteries.csv", archive.dataset);
  if (!archive.stages.empty()) {
    write_stages_csv(dir / "stages.csv", archive.stages);
  } else {
    fs::remove(dir / "stages.csv", ec);
  }
  nlohmann::json manifest;
  manifest["name"] = archive.dataset.name;
  manifest["condition_tag"] = archive.dataset.condition_tag;
  manifest["batteries"] = archive.dataset.batteries.size();
  manifest["removed_cycles"] = nlohmann::json::array();
  for (const auto& r : archive.removed) {
    manifest["removed_cycles"].push_back(
        {{"battery_id", r.battery_id}, {"cycle", r.cycle_index}, {"reason", r.reason}});
  }
  std::ofstream out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

Archive read_archive(const fs::path& dir) {
  Archive archive;
  const fs::path batteries = dir / "batteries.csv";
  archive.dataset =
      read_dataset_csv(dir / "cycles.csv", dir / "summary.csv",
                       fs::exists(batteries) ? std::optional<fs::path>(batteries) : std::nullopt);
  if (fs::exists(dir / "stages.csv")) archive.stages = read_stages_csv(dir / "stages.csv");
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::IngestError, (dir / "manifest.json").string() + ": " + e.what());
    }
    archive.dataset.name = manifest.value("name", std::string());
    archive.dataset.condition_tag = manifest.value("condition_tag", std::string());
    for (const auto& r : manifest.value("removed_cycles", nlohmann::json::array())) {
      archive.removed.push_back({r.at("battery_id").get<std::string>(), r.at("cycle").get<int>(),
                                 r.at("reason").get<std::string>()});
    }
  }
  return archive;
}

}  // namespace pimoe
