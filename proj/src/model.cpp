#include "pimoe/model.hpp"

#include "pimoe/error.hpp"
#include "pimoe/json_util.hpp"
#include "pimoe/nn.hpp"

namespace pimoe {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Standard: return "standard";
    case Variant::HistoryMode: return "history_mode";
    case Variant::AblateAmdpLinear: return "ablate_amdp_linear";
    case Variant::AblateFornnPlainRnn: return "ablate_fornn_plain_rnn";
  }
  return "standard";
}

Variant variant_from_string(const std::string& text) {
  if (text == "standard" || text == "pimoe") return Variant::Standard;
  if (text == "history_mode" || text == "pimoe-history") return Variant::HistoryMode;
  if (text == "ablate_amdp_linear" || text == "pimoe-linear") return Variant::AblateAmdpLinear;
  if (text == "ablate_fornn_plain_rnn" || text == "pimoe-wofo") return Variant::AblateFornnPlainRnn;
  fail(ErrorCode::InvalidArgument, "unknown variant '" + text + "'");
}

std::size_t ModelConfig::router_input_dim() const {
  return variant == Variant::HistoryMode ? history_window : feature_dim();
}

std::size_t ModelConfig::expert_input_dim() const {
  return variant == Variant::HistoryMode ? history_window : charge_dim;
}

std::size_t ModelConfig::decoder_input_dim() const {
  return variant == Variant::AblateFornnPlainRnn ? 1 : 4;
}

void ModelConfig::validate() const {
  require(horizon >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  require(experts >= 1, ErrorCode::InvalidArgument, "expert count must be >= 1");
  require(top_k >= 1 && top_k <= experts, ErrorCode::InvalidArgument,
          "top_k must lie in [1, experts]");
  require(charge_dim >= 2 && expert_hidden >= 1 && lstm_hidden >= 1, ErrorCode::InvalidArgument,
          "layer sizes must be positive");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
  require(history_window >= 1, ErrorCode::InvalidArgument, "history window must be >= 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_mode", to_string(c.feature_mode)},
          {"charge_dim", c.charge_dim},
          {"horizon", c.horizon},
          {"experts", c.experts},
          {"top_k", c.top_k},
          {"expert_hidden", c.expert_hidden},
          {"lstm_hidden", c.lstm_hidden},
          {"dropout", c.dropout},
          {"router_noise", c.router_noise},
          {"literal_double_softmax", c.literal_double_softmax},
          {"variant", to_string(c.variant)},
          {"history_window", c.history_window}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  const std::string where = "model";
  check_keys(j,
             {"feature_mode", "charge_dim", "horizon", "experts", "top_k", "expert_hidden",
              "lstm_hidden", "dropout", "router_noise", "literal_double_softmax", "variant",
              "history_window"},
             where);
  ModelConfig c;
  std::string mode = to_string(c.feature_mode);
  std::string variant = to_string(c.variant);
  read_key(j, "feature_mode", mode, where);
  read_key(j, "charge_dim", c.charge_dim, where);
  read_key(j, "horizon", c.horizon, where);
  read_key(j, "experts", c.experts, where);
  read_key(j, "top_k", c.top_k, where);
  read_key(j, "expert_hidden", c.expert_hidden, where);
  read_key(j, "lstm_hidden", c.lstm_hidden, where);
  read_key(j, "dropout", c.dropout, where);
  read_key(j, "router_noise", c.router_noise, where);
  read_key(j, "literal_double_softmax", c.literal_double_softmax, where);
  read_key(j, "variant", variant, where);
  read_key(j, "history_window", c.history_window, where);
  try {
    c.feature_mode = feature_mode_from_string(mode);
    c.variant = variant_from_string(variant);
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return c;
}

std::string param_names::expert(std::size_t j, int layer) {
  return "expert" + std::to_string(j) + ".l" + std::to_string(layer);
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState model;
  model.config = config;
  Rng rng(seed);
  ParamSet& p = model.params;
  if (config.uses_gate()) {
    init_xavier(p.add(param_names::kRouterGate, {config.router_input_dim(), config.experts}).value,
                rng);
    init_xavier(p.add(param_names::kRouterNoise, {config.router_input_dim(), config.experts}).value,
                rng);
    for (std::size_t j = 0; j < config.experts; ++j) {
      nn::add_affine(p, param_names::expert(j, 1), config.expert_input_dim(), config.expert_hidden,
                     rng);
      nn::add_affine(p, param_names::expert(j, 2), config.expert_hidden, config.horizon, rng);
    }
  } else {
    nn::add_affine(p, param_names::kLinearTrend, config.expert_input_dim(), config.horizon, rng);
  }
  nn::add_lstm(p, param_names::kLstm, config.decoder_input_dim(), config.lstm_hidden, rng);
  nn::add_affine(p, param_names::kHead, config.lstm_hidden, 1, rng);
  return model;
}

}  // namespace pimoe
