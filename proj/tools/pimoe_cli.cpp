#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace pimoe::cli;

namespace {

void add_selection(CLI::App* cmd, SelectionArgs& sel) {
  cmd->add_option("--model", sel.model, "Checkpoint file")->required();
  cmd->add_option("--data", sel.data, "Dataset archive directory")->required();
  cmd->add_option("--split", sel.split, "split.json written by train");
  cmd->add_option("--set", sel.set, "Split member to use")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  cmd->add_option("--out", sel.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery degradation trajectory forecasting"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fleet archive");
  synth_cmd->add_option("--config", synth.config, "Synthetic fleet JSON");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Override the config seed");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate, clean and archive CSV data");
  ingest_cmd->add_option("--cycles", ingest.cycles, "cycles.csv")->required();
  ingest_cmd->add_option("--summary", ingest.summary, "summary.csv")->required();
  ingest_cmd->add_option("--batteries", ingest.batteries, "Optional batteries.csv");
  ingest_cmd->add_option("--name", ingest.name, "Dataset name");
  ingest_cmd->add_flag("!--no-clean", ingest.clean, "Skip anomaly cleaning");
  ingest_cmd->add_option("--out", ingest.out, "Archive directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one model per chemistry (or pooled)");
  train_cmd->add_option("--config", train.config, "Run config JSON");
  train_cmd->add_option("--data", train.data, "Dataset archive directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--fraction", train.fraction, "Fraction of training batteries kept");
  train_cmd->add_option("--variant", train.variant,
                        "pimoe | pimoe-history | pimoe-linear | pimoe-wofo");
  train_cmd->add_option("--horizon", train.horizon, "Forecast horizon L");
  train_cmd->add_option("--epochs", train.epochs, "Epoch budget");
  train_cmd->add_option("--seed", train.seed, "Override training and split seeds");
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Forecast one battery's trajectory");
  predict_cmd->add_option("--model", predict.model, "Checkpoint file")->required();
  predict_cmd->add_option("--data", predict.data, "Dataset archive directory")->required();
  predict_cmd->add_option("--battery", predict.battery, "Battery id")->required();
  predict_cmd->add_option("--cycle", predict.cycle, "Anchor cycle (default: first)");
  predict_cmd->add_option("--horizon", predict.horizon, "Cycles to report (<= model horizon)");
  predict_cmd->add_option("--conditions", predict.conditions,
                          "Future conditions CSV (charge_c,discharge_c,temp_c)");
  predict_cmd->add_option("--out", predict.out, "Trajectory CSV")->required();
  predict_cmd->add_option("--timing", predict.timing, "Latency JSON");
  predict_cmd->add_option("--runs", predict.runs, "Timed inference runs");

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-battery and per-condition metrics");
  add_selection(evaluate_cmd, evaluate.sel);
  evaluate_cmd->add_flag("--poly-baseline", evaluate.poly_baseline,
                         "Also score the cubic extrapolation baseline");

  SelectionArgs classify;
  auto* classify_cmd = app.add_subcommand("classify", "Expert-weight health classification");
  add_selection(classify_cmd, classify);

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Gate weights, trend embeddings and t-SNE");
  add_selection(analyze_cmd, analyze.sel);
  analyze_cmd->add_option("--max-samples", analyze.max_samples, "Sample cap for t-SNE");
  analyze_cmd->add_option("--perplexity", analyze.perplexity, "t-SNE perplexity");
  analyze_cmd->add_option("--iterations", analyze.iterations, "t-SNE iterations");
  analyze_cmd->add_option("--seed", analyze.seed, "t-SNE seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    const auto env_seed = seed_from_env();
    if (*synth_cmd) {
      if (env_seed) synth.seed = env_seed;
      cmd_synth(synth);
    } else if (*ingest_cmd) {
      cmd_ingest(ingest);
    } else if (*train_cmd) {
      if (env_seed) train.seed = env_seed;
      cmd_train(train);
    } else if (*predict_cmd) {
      cmd_predict(predict);
    } else if (*evaluate_cmd) {
      cmd_evaluate(evaluate);
    } else if (*classify_cmd) {
      cmd_classify(classify);
    } else if (*analyze_cmd) {
      if (env_seed) analyze.seed = env_seed;
      cmd_analyze(analyze);
    }
  } catch (const pimoe::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
