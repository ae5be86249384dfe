#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pimoe/error.hpp"

namespace pimoe::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kTrainingDiverged = 4 };

int exit_code_for(ErrorCode code);

/// Seed from PIMOE_SEED, if set. A malformed value is a ConfigError.
std::optional<std::uint64_t> seed_from_env();

struct SynthArgs {
  std::string config;  // optional SynthConfig JSON; defaults otherwise
  std::string out;
  std::optional<std::uint64_t> seed;
};
void cmd_synth(const SynthArgs& args);

struct IngestArgs {
  std::string cycles;
  std::string summary;
  std::string batteries;  // optional
  std::string name = "ingested";
  bool clean = true;
  std::string out;
};
void cmd_ingest(const IngestArgs& args);

struct TrainArgs {
  std::string config;  // optional run config {"train": ..., "split": ...}
  std::string data;
  std::string out;
  std::optional<double> fraction;
  std::optional<std::string> variant;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};
void cmd_train(const TrainArgs& args);

struct PredictArgs {
  std::string model;
  std::string data;
  std::string battery;
  std::optional<int> cycle;
  std::optional<std::size_t> horizon;
  std::string conditions;  // optional CSV charge_c,discharge_c,temp_c
  std::string out;
  std::string timing;  // optional latency JSON
  std::size_t runs = 100;
};
void cmd_predict(const PredictArgs& args);

/// Shared by evaluate, classify and analyze.
struct SelectionArgs {
  std::string model;
  std::string data;
  std::string split;  // optional split.json from train
  std::string set = "test";
  std::string out;
};

struct EvaluateArgs {
  SelectionArgs sel;
  bool poly_baseline = false;
};
void cmd_evaluate(const EvaluateArgs& args);

void cmd_classify(const SelectionArgs& args);

struct AnalyzeArgs {
  SelectionArgs sel;
  std::size_t max_samples = 500;
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::optional<std::uint64_t> seed;
};
void cmd_analyze(const AnalyzeArgs& args);

}  // namespace pimoe::cli
