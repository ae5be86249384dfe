#include "pimoe/fornn.hpp"

#include <chrono>

#include "pimoe/error.hpp"
#include "pimoe/nn.hpp"

namespace pimoe {

Tensor build_fornn_input(std::span<const double> trend, std::span<const ConditionTriple> conditions,
                         const NormStats& condition_norm) {
  require(trend.size() == conditions.size(), ErrorCode::ShapeError,
          "trend length " + std::to_string(trend.size()) + " vs " +
              std::to_string(conditions.size()) + " condition rows");
  require(condition_norm.size() == 3, ErrorCode::NotFitted,
          "condition scaler must be fitted on three channels");
  Tensor input = Tensor::matrix(trend.size(), 4);
  for (std::size_t t = 0; t < trend.size(); ++t) {
    input.at(t, 0) = trend[t];
    input.at(t, 1) = condition_norm.apply(0, conditions[t].charge_c_rate);
    input.at(t, 2) = condition_norm.apply(1, conditions[t].discharge_c_rate);
    input.at(t, 3) = condition_norm.apply(2, conditions[t].temperature_c);
  }
  return input;
}

std::vector<double> rollout(const Tensor& input, const ParamSet& params) {
  const std::string lstm = param_names::kLstm;
  const std::size_t hidden = params.get(lstm + ".w_hh").value.rows();
  ad::Graph graph(false);
  nn::LstmState state = nn::lstm_zero_state(graph, 1, hidden);
  std::vector<double> out;
  out.reserve(input.rows());
  for (std::size_t t = 0; t < input.rows(); ++t) {
    ad::Var x = graph.constant(
        Tensor::row(std::span<const double>(input.data() + t * input.cols(), input.cols())));
    state = nn::lstm_step(graph, params, lstm, x, state);
    out.push_back(nn::affine(graph, params, param_names::kHead, state.h).value()[0]);
  }
  return out;
}

ad::Var decoder_forward(ad::Graph& graph, const ModelState& model, ad::Var trend,
                        std::span<const Tensor> conditions, bool training, Rng* rng) {
  const ModelConfig& config = model.config;
  const std::size_t batch = trend.rows();
  const std::size_t steps = trend.cols();
  const bool with_conditions = config.variant != Variant::AblateFornnPlainRnn;
  if (with_conditions) {
    require(conditions.size() == steps, ErrorCode::ShapeError,
            "decoder got " + std::to_string(conditions.size()) + " condition steps for horizon " +
                std::to_string(steps));
  }
  if (training && config.dropout > 0.0) {
    require(rng != nullptr, ErrorCode::InvalidArgument, "training dropout needs an Rng");
  }
  nn::LstmState state = nn::lstm_zero_state(graph, batch, config.lstm_hidden);
  std::vector<ad::Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    ad::Var x = ad::slice_cols(trend, t, 1);
    if (with_conditions) {
      const ad::Var parts[] = {x, graph.constant(conditions[t])};
      x = ad::concat_cols(parts);
    }
    state = nn::lstm_step(graph, model.params, param_names::kLstm, x, state);
    ad::Var h = training ? ad::dropout(state.h, config.dropout, *rng, true) : state.h;
    outputs.push_back(nn::affine(graph, model.params, param_names::kHead, h));
  }
  return ad::concat_cols(outputs);
}

ModelInputs make_inputs(const ModelState& model, std::span<const Sample* const> samples) {
  const ModelConfig& config = model.config;
  const std::size_t batch = samples.size();
  require(batch > 0, ErrorCode::InvalidArgument, "empty batch");
  const bool history = config.variant == Variant::HistoryMode;
  if (!history) {
    require(model.feature_norm.fitted(), ErrorCode::NotFitted, "feature scaler is not fitted");
  }
  require(model.condition_norm.fitted(), ErrorCode::NotFitted, "condition scaler is not fitted");

  ModelInputs in;
  in.router_input = Tensor::matrix(batch, config.router_input_dim());
  in.expert_input = Tensor::matrix(batch, config.expert_input_dim());
  in.conditions.assign(config.horizon, Tensor::matrix(batch, 3));
  bool all_targets = true;
  for (const Sample* s : samples) all_targets = all_targets && s->target_mAh.size() == config.horizon;
  if (all_targets) in.target_soh = Tensor::matrix(batch, config.horizon);
  in.nominal_mAh.resize(batch);

  for (std::size_t b = 0; b < batch; ++b) {
    const Sample& s = *samples[b];
    require(s.nominal_capacity_mAh > 0.0, ErrorCode::ModelContractError,
            "sample has no nominal capacity");
    const double nominal = s.nominal_capacity_mAh;
    in.nominal_mAh[b] = nominal;
    require(s.conditions.size() == config.horizon, ErrorCode::ModelContractError,
            "sample carries " + std::to_string(s.conditions.size()) +
                " future conditions, model horizon is " + std::to_string(config.horizon));
    if (history) {
      const std::size_t window = config.history_window;
      require(s.history_mAh.size() >= window, ErrorCode::InsufficientData,
              "sample " + s.battery_id + "@" + std::to_string(s.anchor_cycle) + " has " +
                  std::to_string(s.history_mAh.size()) + " history points, need " +
                  std::to_string(window));
      const std::size_t first = s.history_mAh.size() - window;
      for (std::size_t j = 0; j < window; ++j) {
        const double soh = s.history_mAh[first + j] / nominal;
        in.router_input.at(b, j) = soh;
        in.expert_input.at(b, j) = soh;
      }
    } else {
      require(s.features.size() == config.feature_dim(), ErrorCode::ModelContractError,
              "sample has " + std::to_string(s.features.size()) + " features, model expects " +
                  std::to_string(config.feature_dim()));
      const auto q = s.q.segment_values();
      require(q.size() == config.charge_dim, ErrorCode::ModelContractError,
              "charge vector has " + std::to_string(q.size()) + " segments, model expects " +
                  std::to_string(config.charge_dim));
      const std::vector<double> f = model.feature_norm.apply(s.features);
      for (std::size_t j = 0; j < f.size(); ++j) in.router_input.at(b, j) = f[j];
      for (std::size_t j = 0; j < q.size(); ++j) in.expert_input.at(b, j) = q[j] / nominal;
    }
    for (std::size_t t = 0; t < config.horizon; ++t) {
      const ConditionTriple& c = s.conditions[t];
      in.conditions[t].at(b, 0) = model.condition_norm.apply(0, c.charge_c_rate);
      in.conditions[t].at(b, 1) = model.condition_norm.apply(1, c.discharge_c_rate);
      in.conditions[t].at(b, 2) = model.condition_norm.apply(2, c.temperature_c);
      if (all_targets) in.target_soh.at(b, t) = s.target_mAh[t] / nominal;
    }
  }
  return in;
}

ModelInputs make_inputs(const ModelState& model, std::span<const Sample> samples) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_inputs(model, ptrs);
}

ForwardPass model_forward(ad::Graph& graph, const ModelState& model, const ModelInputs& inputs,
                          bool training, Rng* rng) {
  ForwardPass pass;
  ad::Var expert_input = graph.constant(inputs.expert_input);
  if (model.config.uses_gate()) {
    pass.gate = router_forward(graph, model, graph.constant(inputs.router_input), training, rng);
    pass.trend = mixture_trend(graph, model, expert_input, pass.gate->weights);
  } else {
    require(expert_input.cols() == model.config.expert_input_dim(), ErrorCode::ModelContractError,
            "trend input width does not match the model");
    pass.trend = nn::affine(graph, model.params, param_names::kLinearTrend, expert_input);
  }
  pass.prediction = decoder_forward(graph, model, pass.trend, inputs.conditions, training, rng);
  return pass;
}

std::vector<Prediction> predict_batch(std::span<const Sample> samples, const ModelState& model) {
  const ModelInputs inputs = make_inputs(model, samples);
  ad::Graph graph(false);
  const ForwardPass pass = model_forward(graph, model, inputs, false, nullptr);
  const Tensor& pred = pass.prediction.value();
  const Tensor& trend = pass.trend.value();
  const std::size_t horizon = model.config.horizon;
  std::vector<Prediction> out(samples.size());
  for (std::size_t b = 0; b < samples.size(); ++b) {
    Prediction& p = out[b];
    p.soh.assign(pred.data() + b * horizon, pred.data() + (b + 1) * horizon);
    p.trend.assign(trend.data() + b * horizon, trend.data() + (b + 1) * horizon);
    p.capacity_mAh.resize(horizon);
    for (std::size_t t = 0; t < horizon; ++t) p.capacity_mAh[t] = p.soh[t] * inputs.nominal_mAh[b];
    if (pass.gate) {
      const std::size_t e = model.config.experts;
      GateOutput gate;
      const Tensor& logits = pass.gate->logits.value();
      const Tensor& weights = pass.gate->weights.value();
      gate.logits.assign(logits.data() + b * e, logits.data() + (b + 1) * e);
      gate.weights.assign(weights.data() + b * e, weights.data() + (b + 1) * e);
      gate.noise_draw.assign(e, 0.0);
      gate.selected = top_k_indices(gate.logits, model.config.top_k);
      p.gate = std::move(gate);
    }
  }
  return out;
}

Prediction predict_trajectory(const Sample& sample, const ModelState& model) {
  return std::move(predict_batch(std::span<const Sample>(&sample, 1), model).front());
}

}  // namespace pimoe
