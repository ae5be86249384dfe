#include "pimoe/nn.hpp"

#include "pimoe/error.hpp"

namespace pimoe::nn {

void add_affine(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  init_xavier(params.add(prefix + ".w", {in, out}).value, rng);
  params.add(prefix + ".b", {1, out});
}

ad::Var affine(ad::Graph& graph, const ParamSet& params, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, graph.param(params, prefix + ".w")),
                     graph.param(params, prefix + ".b"));
}

void add_lstm(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden,
              Rng& rng) {
  init_xavier(params.add(prefix + ".w_ih", {in, 4 * hidden}).value, rng);
  init_xavier(params.add(prefix + ".w_hh", {hidden, 4 * hidden}).value, rng);
  Tensor& bias = params.add(prefix + ".b", {1, 4 * hidden}).value;
  for (std::size_t i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;
}

LstmState lstm_zero_state(ad::Graph& graph, std::size_t batch, std::size_t hidden) {
  return {graph.constant(Tensor::matrix(batch, hidden)),
          graph.constant(Tensor::matrix(batch, hidden))};
}

LstmState lstm_step(ad::Graph& graph, const ParamSet& params, const std::string& prefix, ad::Var x,
                    const LstmState& state) {
  const std::size_t hidden = state.h.cols();
  ad::Var w_ih = graph.param(params, prefix + ".w_ih");
  ad::Var w_hh = graph.param(params, prefix + ".w_hh");
  require(w_hh.rows() == hidden && w_ih.rows() == x.cols(), ErrorCode::ShapeError,
          "lstm_step: input " + shape_string(x.value().shape()) + " / hidden " +
              std::to_string(hidden) + " do not match '" + prefix + "'");
  ad::Var gates = ad::add_row(ad::add(ad::matmul(x, w_ih), ad::matmul(state.h, w_hh)),
                              graph.param(params, prefix + ".b"));
  ad::Var input_gate = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  ad::Var forget_gate = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  ad::Var candidate = ad::tanh(ad::slice_cols(gates, 2 * hidden, hidden));
  ad::Var output_gate = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  ad::Var c = ad::add(ad::mul(forget_gate, state.c), ad::mul(input_gate, candidate));
  ad::Var h = ad::mul(output_gate, ad::tanh(c));
  return {h, c};
}

}  // namespace pimoe::nn
