#pragma once

#include <span>
#include <vector>

#include "pimoe/amdp.hpp"
#include "pimoe/autodiff.hpp"
#include "pimoe/model.hpp"

namespace pimoe {

/// [L x 4] decoder input: per step the trend value followed by the scaled
/// charge C-rate, discharge C-rate and temperature.
Tensor build_fornn_input(std::span<const double> trend, std::span<const ConditionTriple> conditions,
                         const NormStats& condition_norm);

/// Runs the decoder over an [L x d] input from zero state; one output per step.
std::vector<double> rollout(const Tensor& input, const ParamSet& params);

/// Batched decoder: `trend` is [B x L], `conditions[t]` is [B x 3] (already
/// scaled). Returns [B x L].
ad::Var decoder_forward(ad::Graph& graph, const ModelState& model, ad::Var trend,
                        std::span<const Tensor> conditions, bool training, Rng* rng);

/// Tensors fed to the model for a batch of raw samples.
struct ModelInputs {
  Tensor router_input;
  Tensor expert_input;
  std::vector<Tensor> conditions;
  /// Target trajectory as fraction of nominal capacity; empty rows when a
  /// sample carries no target.
  Tensor target_soh;
  std::vector<double> nominal_mAh;
};

/// Applies the model's feature and condition scalers. Throws
/// ModelContractError on dimension mismatch and InsufficientData when a
/// history-mode sample lacks enough history.
ModelInputs make_inputs(const ModelState& model, std::span<const Sample* const> samples);
ModelInputs make_inputs(const ModelState& model, std::span<const Sample> samples);

struct ForwardPass {
  ad::Var prediction;
  ad::Var trend;
  /// Invalid for the linear-trend ablation.
  std::optional<GateVars> gate;
};

ForwardPass model_forward(ad::Graph& graph, const ModelState& model, const ModelInputs& inputs,
                          bool training, Rng* rng);

struct Prediction {
  std::vector<double> soh;
  std::vector<double> capacity_mAh;
  std::vector<double> trend;
  std::optional<GateOutput> gate;
};

/// Full deterministic pipeline for one raw sample.
Prediction predict_trajectory(const Sample& sample, const ModelState& model);
std::vector<Prediction> predict_batch(std::span<const Sample> samples, const ModelState& model);

}  // namespace pimoe
