#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimoe/params.hpp"
#include "pimoe/preprocess.hpp"

namespace pimoe {

enum class Variant {
  Standard,
  /// Router and experts driven by the last `history_window` capacities.
  HistoryMode,
  /// The mixture of experts replaced by one affine map from the charge vector.
  AblateAmdpLinear,
  /// Decoder sees only the trend; no future-condition channels.
  AblateFornnPlainRnn,
};

std::string to_string(Variant variant);
Variant variant_from_string(const std::string& text);

struct ModelConfig {
  FeatureMode feature_mode = FeatureMode::Full12;
  std::size_t charge_dim = 50;
  std::size_t horizon = 50;
  std::size_t experts = 5;
  std::size_t top_k = 2;
  std::size_t expert_hidden = 64;
  std::size_t lstm_hidden = 64;
  double dropout = 0.05;
  bool router_noise = true;
  bool literal_double_softmax = false;
  Variant variant = Variant::Standard;
  std::size_t history_window = 10;

  std::size_t feature_dim() const { return feature_count(feature_mode); }
  std::size_t router_input_dim() const;
  std::size_t expert_input_dim() const;
  std::size_t decoder_input_dim() const;
  bool uses_gate() const { return variant != Variant::AblateAmdpLinear; }

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Degradation stage -> expert index, calibrated from labelled samples.
struct StageMap {
  std::size_t early = 0;
  std::size_t mid = 0;
  std::size_t late = 0;
  bool ambiguous = false;
};

struct ModelState {
  ModelConfig config;
  ParamSet params;
  NormStats feature_norm;
  /// Per-channel min/max of (charge C-rate, discharge C-rate, temperature).
  NormStats condition_norm;
  std::optional<StageMap> stage_map;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Fresh parameters for `config`; normalisation statistics are left unfitted.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

/// Parameter names used by the model, for callers that need to reach into
/// a specific block.
namespace param_names {
inline constexpr const char* kRouterGate = "router.w_gate";
inline constexpr const char* kRouterNoise = "router.w_noise";
inline constexpr const char* kLinearTrend = "trend_linear";
inline constexpr const char* kLstm = "fornn.lstm";
inline constexpr const char* kHead = "fornn.head";
std::string expert(std::size_t j, int layer);
}  // namespace param_names

}  // namespace pimoe
