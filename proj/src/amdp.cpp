#include "pimoe/amdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pimoe/error.hpp"
#include "pimoe/nn.hpp"

namespace pimoe {

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  require(k >= 1, ErrorCode::InvalidArgument, "top-k requires k >= 1");
  require(k <= values.size(), ErrorCode::InvalidArgument,
          "top-k with k=" + std::to_string(k) + " over " + std::to_string(values.size()) +
              " entries");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  order.resize(k);
  return order;
}

namespace {

std::vector<unsigned char> top_k_mask(const Tensor& logits, std::size_t k) {
  const std::size_t rows = logits.rows();
  const std::size_t n = logits.cols();
  std::vector<unsigned char> mask(rows * n, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> row(logits.data() + r * n, n);
    for (std::size_t j : top_k_indices(row, k)) mask[r * n + j] = 1;
  }
  return mask;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  const std::size_t n = t.cols();
  return std::vector<double>(t.data() + r * n, t.data() + (r + 1) * n);
}

GateVars gate_from_input(ad::Graph& graph, ad::Var input, ad::Var w_gate, ad::Var w_noise,
                         std::size_t k, bool literal, bool use_noise, Rng* rng) {
  GateVars out;
  ad::Var logits = ad::matmul(input, w_gate);
  const std::size_t rows = logits.rows();
  const std::size_t experts = logits.cols();
  out.noise_draw = Tensor::matrix(rows, experts);
  if (use_noise) {
    require(rng != nullptr, ErrorCode::InvalidArgument, "noisy routing needs an Rng");
    for (double& psi : out.noise_draw.values()) psi = rng->normal();
    ad::Var spread = ad::softplus(ad::matmul(input, w_noise));
    logits = ad::add(logits, ad::mul(graph.constant(out.noise_draw), spread));
  }
  out.logits = logits;
  out.mask = top_k_mask(logits.value(), k);
  out.weights = ad::masked_softmax(logits, out.mask);
  if (literal) out.weights = ad::masked_softmax(out.weights, out.mask);
  return out;
}

}  // namespace

RouterLogits router_logits(std::span<const double> features, const Tensor& w_gate,
                           const Tensor& w_noise, Rng* rng, bool training, bool noise_enabled) {
  require(w_gate.rank() == 2 && w_gate.rows() == features.size() && w_noise.same_shape(w_gate),
          ErrorCode::ShapeError,
          "router expects " + std::to_string(w_gate.rank() == 2 ? w_gate.rows() : 0) +
              " inputs, got " + std::to_string(features.size()));
  ad::Graph graph(false);
  ad::Var input = graph.constant(Tensor::row(features));
  const bool use_noise = training && noise_enabled;
  GateVars gate = gate_from_input(graph, input, graph.constant(w_gate), graph.constant(w_noise),
                                  1, false, use_noise, rng);
  return {row_of(gate.logits.value(), 0), row_of(gate.noise_draw, 0)};
}

GateOutput gate_weights(std::span<const double> logits, std::size_t k, bool literal_double_softmax) {
  GateOutput out;
  out.logits.assign(logits.begin(), logits.end());
  out.noise_draw.assign(logits.size(), 0.0);
  out.selected = top_k_indices(logits, k);
  ad::Graph graph(false);
  std::vector<unsigned char> mask(logits.size(), 0);
  for (std::size_t j : out.selected) mask[j] = 1;
  ad::Var weights = ad::masked_softmax(graph.constant(Tensor::row(logits)), mask);
  if (literal_double_softmax) weights = ad::masked_softmax(weights, mask);
  out.weights = weights.value().values();
  return out;
}

double importance_cv_loss(std::span<const GateOutput> gates, double eps) {
  require(!gates.empty(), ErrorCode::InvalidArgument, "CV loss needs a non-empty batch");
  const std::size_t experts = gates.front().weights.size();
  std::vector<double> importance(experts, 0.0);
  for (const auto& gate : gates) {
    require(gate.weights.size() == experts, ErrorCode::ShapeError, "ragged gate weights");
    for (std::size_t j = 0; j < experts; ++j) importance[j] += gate.weights[j];
  }
  const double n = static_cast<double>(experts);
  const double mean = std::accumulate(importance.begin(), importance.end(), 0.0) / n;
  double var = 0.0;
  for (double a : importance) var += (a - mean) * (a - mean);
  var /= n;
  return var / (mean * mean + eps);
}

RouterLogits history_mode_logits(std::span<const double> history, std::size_t window,
                                 const Tensor& w_gate, const Tensor& w_noise, Rng* rng,
                                 bool training, bool noise_enabled) {
  require(history.size() >= window, ErrorCode::InsufficientData,
          "history router needs " + std::to_string(window) + " capacities, got " +
              std::to_string(history.size()));
  return router_logits(history.subspan(history.size() - window), w_gate, w_noise, rng, training,
                       noise_enabled);
}

// ---------------------------------------------------------------------------

GateVars router_forward(ad::Graph& graph, const ModelState& model, ad::Var router_input,
                        bool training, Rng* rng) {
  const ModelConfig& config = model.config;
  require(router_input.cols() == config.router_input_dim(), ErrorCode::ModelContractError,
          "router input has " + std::to_string(router_input.cols()) + " columns, model expects " +
              std::to_string(config.router_input_dim()));
  return gate_from_input(graph, router_input, graph.param(model.params, param_names::kRouterGate),
                         graph.param(model.params, param_names::kRouterNoise), config.top_k,
                         config.literal_double_softmax, training && config.router_noise, rng);
}

ad::Var expert_forward(ad::Graph& graph, const ModelState& model, std::size_t expert,
                       ad::Var expert_input) {
  ad::Var hidden =
      ad::relu(nn::affine(graph, model.params, param_names::expert(expert, 1), expert_input));
  return nn::affine(graph, model.params, param_names::expert(expert, 2), hidden);
}

ad::Var mixture_trend(ad::Graph& graph, const ModelState& model, ad::Var expert_input,
                      ad::Var gate_weights) {
  const ModelConfig& config = model.config;
  require(expert_input.cols() == config.expert_input_dim(), ErrorCode::ModelContractError,
          "expert input has " + std::to_string(expert_input.cols()) + " columns, model expects " +
              std::to_string(config.expert_input_dim()));
  const Tensor g = gate_weights.value();
  ad::Var trend;
  for (std::size_t j = 0; j < config.experts; ++j) {
    bool used = false;
    for (std::size_t r = 0; r < g.rows() && !used; ++r) used = g.at(r, j) > 0.0;
    if (!used) continue;
    ad::Var term = ad::mul_col(expert_forward(graph, model, j, expert_input),
                               ad::slice_cols(gate_weights, j, 1));
    trend = trend.valid() ? ad::add(trend, term) : term;
  }
  return trend;
}

ad::Var cv_loss(ad::Graph& graph, ad::Var gate_weights, double eps) {
  const std::size_t experts = gate_weights.cols();
  const double inv = 1.0 / static_cast<double>(experts);
  ad::Var importance = ad::sum_rows(gate_weights);
  ad::Var ones_col = graph.constant(Tensor::matrix(experts, 1, 1.0));
  ad::Var ones_row = graph.constant(Tensor::matrix(1, experts, 1.0));
  ad::Var mean = ad::scale(ad::matmul(importance, ones_col), inv);
  ad::Var deviation = ad::sub(importance, ad::matmul(mean, ones_row));
  ad::Var variance = ad::scale(ad::matmul(ad::square(deviation), ones_col), inv);
  return ad::div(variance, ad::add_scalar(ad::square(mean), eps));
}

TrendResult amdp_trend(const ModelState& model, std::span<const double> expert_input,
                       std::span<const double> router_input) {
  const ModelConfig& config = model.config;
  require(config.uses_gate(), ErrorCode::ModelContractError,
          "amdp_trend needs a mixture-of-experts model");
  ad::Graph graph(false);
  GateVars gate =
      router_forward(graph, model, graph.constant(Tensor::row(router_input)), false, nullptr);
  ad::Var trend = mixture_trend(graph, model, graph.constant(Tensor::row(expert_input)),
                                gate.weights);
  TrendResult result;
  result.trend = trend.value().values();
  result.gate.logits = row_of(gate.logits.value(), 0);
  result.gate.noise_draw = row_of(gate.noise_draw, 0);
  result.gate.weights = row_of(gate.weights.value(), 0);
  result.gate.selected = top_k_indices(result.gate.logits, config.top_k);
  return result;
}

}  // namespace pimoe
