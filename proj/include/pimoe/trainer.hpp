#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimoe/core_data.hpp"
#include "pimoe/fornn.hpp"
#include "pimoe/model.hpp"
#include "pimoe/params.hpp"
#include "pimoe/preprocess.hpp"

namespace pimoe {

struct TrainConfig {
  ModelConfig model;
  SampleOptions sampling;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  double alpha = 0.75;
  double beta = 0.25;
  double cv_eps = 10.0;
  std::size_t epochs = 200;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  /// Train one model across all chemistries instead of one per chemistry.
  bool pooled = false;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossParts {
  double trajectory = 0.0;
  double cv = 0.0;
  double total = 0.0;
};

/// alpha * (1/B) sum_i ||pred_i - target_i||^2 + beta * CV(gates). `gates`
/// may be null (no router), in which case the CV term is zero.
LossParts total_loss(const Tensor& prediction, const Tensor& target, const Tensor* gates,
                     double alpha, double beta, double eps);

/// Graph form of total_loss; returns the scalar loss node.
ad::Var total_loss(ad::Graph& graph, ad::Var prediction, ad::Var target, const ad::Var* gates,
                   double alpha, double beta, double eps);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double trajectory_loss = 0.0;
  double cv_loss = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  /// Validation trajectory loss in eval mode; NaN when not computed.
  double val_loss = 0.0;
  /// Coefficient of variation of the epoch-summed expert importances.
  double importance_cv = 0.0;
  double seconds = 0.0;
};

nlohmann::json to_json(const EpochStats& stats, bool with_timing);

/// One pass over `samples` in seeded shuffled mini-batches. Throws
/// TrainingDiverged on a non-finite loss or gradient.
EpochStats train_epoch(ModelState& model, AdamState& adam, std::span<const Sample> samples,
                       const TrainConfig& config, Rng& rng);

/// Mean loss components over `samples` in eval mode (no noise, no dropout).
LossParts evaluate_loss(const ModelState& model, std::span<const Sample> samples,
                        const TrainConfig& config);

using EpochCallback = std::function<void(const EpochStats&)>;

struct FitResult {
  ModelState model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  AdamState adam;
};

/// Fits the scalers on `train`, initialises the model from the config seed
/// and keeps the parameters with the lowest validation trajectory loss
/// (the epoch's training trajectory loss when `val` is empty). Throws InvalidDataset on an empty
/// training set.
FitResult fit(std::span<const Sample> train, std::span<const Sample> val,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Builds samples for the split's train and validation batteries and fits.
FitResult fit(const Dataset& dataset, const SplitSpec& split, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Samples for the given batteries, with horizon, feature mode and history
/// window taken from the model config. Batteries too short for the horizon
/// are skipped; history-mode samples without a full history are dropped.
std::vector<Sample> samples_for(const Dataset& dataset, const std::set<std::string>& ids,
                                const TrainConfig& config);

/// AMDP trend per sample ([n x L]), each column min-max scaled to [0, 1]
/// across the samples (constant columns map to 0.5).
Tensor export_trend_embeddings(const ModelState& model, std::span<const Sample> samples);

}  // namespace pimoe
