#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pimoe/analysis.hpp"
#include "pimoe/checkpoint.hpp"
#include "pimoe/csv_io.hpp"
#include "pimoe/evaluation.hpp"
#include "pimoe/json_util.hpp"
#include "pimoe/synthgen.hpp"
#include "pimoe/trainer.hpp"
#include "pimoe/tsne.hpp"

namespace pimoe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return kConfigError;
    case ErrorCode::TrainingDiverged:
      return kTrainingDiverged;
    default:
      return kDataError;
  }
}

std::optional<std::uint64_t> seed_from_env() {
  const char* text = std::getenv("PIMOE_SEED");
  if (text == nullptr || *text == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  require(end != nullptr && *end == '\0' && text[0] != '-', ErrorCode::ConfigError,
          std::string("PIMOE_SEED is not an unsigned integer: '") + text + "'");
  return static_cast<std::uint64_t>(v);
}

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

json ids_json(const std::set<std::string>& ids) { return json(std::vector<std::string>(ids.begin(), ids.end())); }

std::set<std::string> ids_from(const json& j) {
  std::set<std::string> out;
  for (const auto& id : j) out.insert(id.get<std::string>());
  return out;
}

struct SplitRun {
  double fraction = 1.0;
  PartitionOptions options;
  std::uint64_t seed = 0;
};

SplitRun split_from_json(const json& j) {
  const std::string where = "split";
  check_keys(j, {"fraction", "test_ratio", "val_ratio", "seed"}, where);
  SplitRun s;
  read_key(j, "fraction", s.fraction, where);
  read_key(j, "test_ratio", s.options.test_ratio, where);
  read_key(j, "val_ratio", s.options.val_ratio, where);
  read_key(j, "seed", s.seed, where);
  return s;
}

// Chemistry groups of a dataset's batteries, or a single "pooled" group.
std::map<std::string, std::set<std::string>> training_groups(const Dataset& ds,
                                                             const std::set<std::string>& ids,
                                                             bool pooled) {
  std::map<std::string, std::set<std::string>> groups;
  for (const auto& b : ds.batteries) {
    if (!ids.contains(b.battery_id)) continue;
    groups[pooled ? std::string("pooled") : to_string(b.chemistry)].insert(b.battery_id);
  }
  return groups;
}

std::vector<Stage> stages_for(const Archive& archive, std::span<const Sample> samples) {
  std::vector<Stage> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto it = archive.stages.find(s.battery_id);
    require(it != archive.stages.end(), ErrorCode::InvalidDataset,
            "no stage labels for battery " + s.battery_id);
    const auto& cycles = archive.dataset.battery(s.battery_id).cycles;
    const auto pos = std::find_if(cycles.begin(), cycles.end(), [&](const CycleRecord& c) {
      return c.cycle_index == s.anchor_cycle;
    });
    const auto k = static_cast<std::size_t>(pos - cycles.begin());
    require(pos != cycles.end() && k < it->second.size(), ErrorCode::InvalidDataset,
            "no stage label for " + s.battery_id + " cycle " + std::to_string(s.anchor_cycle));
    out.push_back(it->second[k]);
  }
  return out;
}

// Batteries picked by --split/--set, restricted to the chemistries the model
// was trained on.
std::set<std::string> select_ids(const SelectionArgs& sel, const Dataset& ds,
                                 const ModelState& model) {
  std::set<std::string> ids;
  if (sel.split.empty() || sel.set == "all") {
    for (const auto& b : ds.batteries) ids.insert(b.battery_id);
  } else {
    const json split = load_json(sel.split);
    require(split.contains(sel.set), ErrorCode::ConfigError,
            sel.split + " has no '" + sel.set + "' list");
    ids = ids_from(split.at(sel.set));
  }
  std::set<std::string> chemistries;
  if (model.metadata.contains("chemistries")) {
    for (const auto& c : model.metadata.at("chemistries")) chemistries.insert(c.get<std::string>());
  }
  std::set<std::string> out;
  for (const auto& id : ids) {
    const auto it = std::find_if(ds.batteries.begin(), ds.batteries.end(),
                                 [&](const BatterySeries& b) { return b.battery_id == id; });
    require(it != ds.batteries.end(), ErrorCode::InvalidDataset, "unknown battery " + id);
    if (chemistries.empty() || chemistries.contains(to_string(it->chemistry))) out.insert(id);
  }
  require(!out.empty(), ErrorCode::InvalidDataset, "no batteries selected");
  return out;
}

// Empty when the archive carries no stage labels for the sample's battery.
std::string stage_label(const Archive& archive, const Sample& s) {
  const auto it = archive.stages.find(s.battery_id);
  if (it == archive.stages.end()) return "";
  const auto& cycles = archive.dataset.battery(s.battery_id).cycles;
  for (std::size_t t = 0; t < cycles.size() && t < it->second.size(); ++t) {
    if (cycles[t].cycle_index == s.anchor_cycle) return to_string(it->second[t]);
  }
  return "";
}

SampleOptions sample_options(const ModelState& model) {
  TrainConfig cfg;
  if (model.metadata.contains("train_config")) {
    cfg = train_config_from_json(model.metadata.at("train_config"));
  }
  SampleOptions options = cfg.sampling;
  options.horizon = model.config.horizon;
  options.mode = model.config.feature_mode;
  options.history_window = model.config.history_window;
  return options;
}

std::vector<Sample> selected_samples(const ModelState& model, const Dataset& ds,
                                     const std::set<std::string>& ids) {
  const SampleOptions options = sample_options(model);
  std::vector<Sample> samples;
  for (const auto& b : ds.batteries) {
    if (!ids.contains(b.battery_id) || b.cycles.size() <= options.horizon) continue;
    for (auto& s : build_samples(b, options)) {
      if (model.config.variant == Variant::HistoryMode &&
          s.history_mAh.size() < model.config.history_window) {
        continue;
      }
      samples.push_back(std::move(s));
    }
  }
  require(!samples.empty(), ErrorCode::InsufficientData,
          "selected batteries are too short for horizon " + std::to_string(options.horizon));
  return samples;
}

std::vector<ConditionTriple> read_conditions_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::IngestError, path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "charge_c,discharge_c,temp_c", ErrorCode::IngestError,
          path + " row 1: header must be charge_c,discharge_c,temp_c");
  std::vector<ConditionTriple> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ConditionTriple c;
    char comma1 = 0, comma2 = 0;
    std::istringstream fields(line);
    fields >> c.charge_c_rate >> comma1 >> c.discharge_c_rate >> comma2 >> c.temperature_c;
    require(fields && comma1 == ',' && comma2 == ',' && (fields >> std::ws).eof(),
            ErrorCode::IngestError, path + " row " + std::to_string(row) + ": malformed");
    try {
      validate(c);
    } catch (const Error& e) {
      fail(ErrorCode::IngestError, path + " row " + std::to_string(row) + ": " + e.what());
    }
    out.push_back(c);
  }
  require(!out.empty(), ErrorCode::IngestError, path + " has no condition rows");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_synth(const SynthArgs& args) {
  SynthConfig config;
  if (!args.config.empty()) config = synth_config_from_json(load_json(args.config));
  if (args.seed) config.seed = *args.seed;
  SynthFleet fleet = gen_fleet(config);
  Archive archive{std::move(fleet.dataset), std::move(fleet.stages), {}};
  write_archive(args.out, archive);
  std::ofstream truth = open_out(fs::path(args.out) / "true_soh.csv");
  truth << "battery_id,cycle,true_soh\n";
  for (const auto& b : archive.dataset.batteries) {
    const auto& soh = fleet.true_soh.at(b.battery_id);
    for (std::size_t k = 0; k < b.cycles.size(); ++k) {
      truth << b.battery_id << ',' << b.cycles[k].cycle_index << ',' << format_double(soh[k])
            << '\n';
    }
  }
}

void cmd_ingest(const IngestArgs& args) {
  Archive archive;
  archive.dataset = read_dataset_csv(
      args.cycles, args.summary,
      args.batteries.empty() ? std::nullopt : std::optional<fs::path>(args.batteries));
  archive.dataset.name = args.name;
  if (args.clean) {
    for (auto& b : archive.dataset.batteries) {
      CleaningResult r = clean_cycles(b);
      b = std::move(r.series);
      archive.removed.insert(archive.removed.end(), r.removed.begin(), r.removed.end());
    }
  }
  validate(archive.dataset);
  write_archive(args.out, archive);
}

void cmd_train(const TrainArgs& args) {
  // Parse and validate everything before touching the output directory.
  TrainConfig cfg;
  SplitRun split_run;
  if (!args.config.empty()) {
    const json run = load_json(args.config);
    check_keys(run, {"train", "split"}, "run");
    if (run.contains("train")) cfg = train_config_from_json(run.at("train"));
    if (run.contains("split")) split_run = split_from_json(run.at("split"));
  }
  if (args.fraction) split_run.fraction = *args.fraction;
  if (args.variant) {
    try {
      cfg.model.variant = variant_from_string(*args.variant);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.what());
    }
  }
  if (args.horizon) cfg.model.horizon = *args.horizon;
  if (args.epochs) cfg.epochs = *args.epochs;
  if (args.seed) {
    cfg.seed = *args.seed;
    split_run.seed = *args.seed;
  }
  require(split_run.fraction > 0.0 && split_run.fraction <= 1.0, ErrorCode::ConfigError,
          "fraction must lie in (0, 1]");
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }

  const Archive archive = read_archive(args.data);
  const Dataset& ds = archive.dataset;
  const SplitSpec split = partition_dataset(ds, split_run.fraction, split_run.seed, split_run.options);

  const fs::path out(args.out);
  make_dir(out);
  write_json(out / "split.json", {{"fraction", split.train_fraction},
                                  {"seed", split_run.seed},
                                  {"train", ids_json(split.train_ids)},
                                  {"val", ids_json(split.val_ids)},
                                  {"test", ids_json(split.test_ids)}});

  json timing = json::object();
  const auto train_groups = training_groups(ds, split.train_ids, cfg.pooled);
  const auto val_groups = training_groups(ds, split.val_ids, cfg.pooled);
  for (const auto& [group, train_ids] : train_groups) {
    const auto val_it = val_groups.find(group);
    const std::set<std::string> val_ids = val_it == val_groups.end() ? std::set<std::string>{}
                                                                      : val_it->second;
    const std::vector<Sample> train = samples_for(ds, train_ids, cfg);
    const std::vector<Sample> val = samples_for(ds, val_ids, cfg);
    if (train.empty()) {
      std::cerr << "skipping " << group << ": no training samples for horizon "
                << cfg.model.horizon << '\n';
      continue;
    }
    std::ofstream log = open_out(out / (group + ".train.jsonl"));
    json epoch_seconds = json::array();
    FitResult result = fit(train, val, cfg, [&](const EpochStats& s) {
      log << to_json(s, false).dump() << '\n';
      epoch_seconds.push_back(s.seconds);
      if (!args.quiet) {
        std::cerr << group << " epoch " << s.epoch << " loss " << s.loss << '\n';
      }
    });
    ModelState& model = result.model;
    json chems = json::array();
    std::set<std::string> seen;
    for (const auto& id : train_ids) seen.insert(to_string(ds.battery(id).chemistry));
    for (const auto& c : seen) chems.push_back(c);
    model.metadata["chemistries"] = chems;
    model.metadata["dataset"] = ds.name;
    if (!archive.stages.empty() && model.config.uses_gate()) {
      model.stage_map = calibrate_expert_stage_map(model, train, stages_for(archive, train));
    }
    Rng rng = derive_stream(cfg.seed, "train");
    save_checkpoint((out / (group + ".ckpt")).string(), model, &result.adam, &rng);
    timing[group] = {{"epoch_seconds", epoch_seconds}};
  }
  require(!timing.empty(), ErrorCode::InsufficientData, "no group had training samples");
  write_json(out / "timing.json", timing);
}

void cmd_predict(const PredictArgs& args) {
  const Checkpoint ck = load_checkpoint(args.model);
  const ModelState& model = ck.model;
  const std::size_t L = model.config.horizon;
  const std::size_t horizon = args.horizon.value_or(L);
  require(horizon >= 1 && horizon <= L, ErrorCode::ConfigError,
          "horizon " + std::to_string(horizon) + " exceeds the model horizon " +
              std::to_string(L) + "; train with --horizon " + std::to_string(horizon));
  std::vector<ConditionTriple> file_conditions;
  if (!args.conditions.empty()) file_conditions = read_conditions_csv(args.conditions);

  const Archive archive = read_archive(args.data);
  const BatterySeries& b = archive.dataset.battery(args.battery);
  std::size_t t = 0;
  if (args.cycle) {
    const auto it = std::find_if(b.cycles.begin(), b.cycles.end(),
                                 [&](const CycleRecord& c) { return c.cycle_index == *args.cycle; });
    require(it != b.cycles.end(), ErrorCode::InvalidDataset,
            b.battery_id + " has no cycle " + std::to_string(*args.cycle));
    t = static_cast<std::size_t>(it - b.cycles.begin());
  }
  std::vector<ConditionTriple> conditions;
  if (!file_conditions.empty()) {
    require(file_conditions.size() >= horizon, ErrorCode::ConfigError,
            args.conditions + " has " + std::to_string(file_conditions.size()) +
                " rows, fewer than the horizon " + std::to_string(horizon));
    conditions = file_conditions;
    conditions.resize(L, file_conditions.back());
  } else {
    require(t + L < b.cycles.size(), ErrorCode::InsufficientData,
            b.battery_id + " has no recorded conditions for " + std::to_string(L) +
                " cycles after the anchor; pass --conditions");
    for (std::size_t k = 1; k <= L; ++k) conditions.push_back(b.cycles[t + k].condition);
  }
  const Sample sample = build_sample_at(b, t, sample_options(model), conditions);
  const Prediction p = predict_trajectory(sample, model);

  std::ofstream out = open_out(args.out);
  const bool has_target = sample.target_mAh.size() == L;
  out << "battery_id,anchor_cycle,step,cycle,charge_c,discharge_c,temp_c,soh,capacity_mAh"
      << (has_target ? ",target_mAh" : "") << '\n';
  for (std::size_t k = 0; k < horizon; ++k) {
    const auto& c = conditions[k];
    out << b.battery_id << ',' << sample.anchor_cycle << ',' << k + 1 << ','
        << sample.anchor_cycle + static_cast<int>(k) + 1 << ','
        << format_double(c.charge_c_rate) << ',' << format_double(c.discharge_c_rate) << ','
        << format_double(c.temperature_c) << ',' << format_double(p.soh[k]) << ','
        << format_double(p.capacity_mAh[k]);
    if (has_target) out << ',' << format_double(sample.target_mAh[k]);
    out << '\n';
  }
  if (!args.timing.empty()) {
    const LatencyStats lat = measure_latency(model, sample, args.runs);
    write_json(args.timing, {{"battery_id", b.battery_id},
                             {"anchor_cycle", sample.anchor_cycle},
                             {"horizon", horizon},
                             {"runs", lat.runs},
                             {"median_ms", lat.median_ms},
                             {"mean_ms", lat.mean_ms},
                             {"p95_ms", lat.p95_ms}});
  }
}

void cmd_evaluate(const EvaluateArgs& args) {
  const Checkpoint ck = load_checkpoint(args.sel.model);
  const Archive archive = read_archive(args.sel.data);
  const std::set<std::string> ids = select_ids(args.sel, archive.dataset, ck.model);
  const SampleOptions options = sample_options(ck.model);
  EvalReport report = evaluate_model(ck.model, archive.dataset, ids, options.start);
  const fs::path out(args.sel.out);
  make_dir(out);
  write_json(out / "report.json", to_json(report));
  write_report_csv((out / "report.csv").string(), report);
  if (args.poly_baseline) {
    EvalReport poly = evaluate_forecaster("poly3", poly_forecaster(), archive.dataset, ids, options);
    write_json(out / "poly3.json", to_json(poly));
    write_report_csv((out / "poly3.csv").string(), poly);
  }
}

void cmd_classify(const SelectionArgs& args) {
  const Checkpoint ck = load_checkpoint(args.model);
  const ModelState& model = ck.model;
  require(model.config.uses_gate(), ErrorCode::ConfigError, "model variant has no router");
  const Archive archive = read_archive(args.data);
  const std::set<std::string> ids = select_ids(args, archive.dataset, model);
  const std::vector<Sample> samples = selected_samples(model, archive.dataset, ids);
  StageMap map;
  if (model.stage_map) {
    map = *model.stage_map;
  } else {
    require(!archive.stages.empty(), ErrorCode::InvalidDataset,
            "checkpoint has no stage map and the dataset has no stage labels");
    map = calibrate_expert_stage_map(model, samples, stages_for(archive, samples));
  }
  const auto gates = gate_weight_matrix(model, samples);

  // For every battery and SOH bucket, the anchor whose SOH is nearest to the
  // bucket centre (within 2.5 points).
  static constexpr int kBuckets[] = {95, 90, 85, 80, 75};
  std::map<std::pair<std::string, int>, std::size_t> pick;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double soh = 100.0 * samples[i].anchor_capacity_mAh / samples[i].nominal_capacity_mAh;
    for (int bucket : kBuckets) {
      if (std::abs(soh - bucket) > 2.5) continue;
      const auto key = std::make_pair(samples[i].battery_id, bucket);
      const auto it = pick.find(key);
      if (it == pick.end()) {
        pick[key] = i;
      } else {
        const auto& best = samples[it->second];
        const double best_soh = 100.0 * best.anchor_capacity_mAh / best.nominal_capacity_mAh;
        if (std::abs(soh - bucket) < std::abs(best_soh - bucket)) it->second = i;
      }
    }
  }
  const fs::path out(args.out);
  make_dir(out);
  std::ofstream labels = open_out(out / "labels.csv");
  labels << "battery_id,anchor_cycle,soh_percent,soh_bucket,label,dominant_expert\n";
  std::vector<HealthLabel> all_labels;
  std::vector<int> buckets;
  for (const auto& [key, i] : pick) {
    const ClassLabel label = classify_battery(gates[i], map);
    const double soh = 100.0 * samples[i].anchor_capacity_mAh / samples[i].nominal_capacity_mAh;
    labels << key.first << ',' << samples[i].anchor_cycle << ',' << format_double(soh) << ','
           << key.second << ',' << to_string(label.label) << ',' << label.dominant_expert << '\n';
    all_labels.push_back(label.label);
    buckets.push_back(key.second);
  }
  std::ofstream conf = open_out(out / "confidence.csv");
  conf << "soh_bucket,n_batteries,excellent,qualified,scrap,confidence\n";
  for (const auto& row : confidence_table(all_labels, buckets)) {
    conf << row.soh_bucket_percent << ',' << row.n_batteries << ',' << row.excellent << ','
         << row.qualified << ',' << row.scrap << ','
         << (row.confidence ? format_double(*row.confidence) : std::string()) << '\n';
  }
  write_json(out / "stage_map.json",
             {{"early", map.early}, {"mid", map.mid}, {"late", map.late},
              {"ambiguous", map.ambiguous}});
}

void cmd_analyze(const AnalyzeArgs& args) {
  const Checkpoint ck = load_checkpoint(args.sel.model);
  const ModelState& model = ck.model;
  require(model.config.uses_gate(), ErrorCode::ConfigError, "model variant has no router");
  const Archive archive = read_archive(args.sel.data);
  const std::set<std::string> ids = select_ids(args.sel, archive.dataset, model);
  std::vector<Sample> samples = selected_samples(model, archive.dataset, ids);
  if (samples.size() > args.max_samples) {
    // Even thinning keeps every battery represented and stays deterministic.
    std::vector<Sample> thinned;
    const double step = static_cast<double>(samples.size()) / static_cast<double>(args.max_samples);
    for (std::size_t i = 0; i < args.max_samples; ++i) {
      thinned.push_back(samples[static_cast<std::size_t>(std::floor(i * step))]);
    }
    samples = std::move(thinned);
  }
  const auto gates = gate_weight_matrix(model, samples);
  const fs::path out(args.sel.out);
  make_dir(out);

  std::ofstream gw = open_out(out / "gate_weights.csv");
  gw << "battery_id,anchor_cycle,soh_percent";
  for (std::size_t j = 0; j < model.config.experts; ++j) gw << ",w" << j;
  gw << '\n';
  Tensor points = Tensor::matrix(samples.size(), model.config.experts);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    gw << samples[i].battery_id << ',' << samples[i].anchor_cycle << ','
       << format_double(100.0 * samples[i].anchor_capacity_mAh / samples[i].nominal_capacity_mAh);
    for (std::size_t j = 0; j < gates[i].size(); ++j) {
      gw << ',' << format_double(gates[i][j]);
      points.at(i, j) = gates[i][j];
    }
    gw << '\n';
  }

  const Tensor trend = export_trend_embeddings(model, samples);
  std::ofstream te = open_out(out / "trend_embeddings.csv");
  te << "battery_id,anchor_cycle";
  for (std::size_t k = 0; k < trend.cols(); ++k) te << ",t" << k + 1;
  te << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    te << samples[i].battery_id << ',' << samples[i].anchor_cycle;
    for (std::size_t k = 0; k < trend.cols(); ++k) te << ',' << format_double(trend.at(i, k));
    te << '\n';
  }

  if (samples.size() >= 5) {
    TsneOptions opt;
    opt.perplexity = args.perplexity;
    opt.iterations = args.iterations;
    opt.seed = args.seed.value_or(0);
    const TsneResult r = tsne_embed(points, opt);
    std::ofstream ts = open_out(out / "tsne.csv");
    ts << "battery_id,anchor_cycle,x,y,stage\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ts << samples[i].battery_id << ',' << samples[i].anchor_cycle << ','
         << format_double(r.embedding.at(i, 0)) << ',' << format_double(r.embedding.at(i, 1))
         << ',' << stage_label(archive, samples[i]) << '\n';
    }
    std::ofstream kl = open_out(out / "tsne_kl.csv");
    kl << "iteration,kl\n";
    for (std::size_t k = 0; k < r.kl_trace.size(); ++k) {
      kl << k << ',' << format_double(r.kl_trace[k]) << '\n';
    }
    write_json(out / "tsne.json", {{"perplexity_used", r.perplexity_used},
                                   {"perplexity_capped", r.perplexity_capped},
                                   {"final_kl", r.final_kl}});
  } else {
    std::cerr << "t-SNE skipped: needs at least 5 samples\n";
  }
}

}  // namespace pimoe::cli
