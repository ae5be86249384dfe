#pragma once

#include <string>

#include "pimoe/autodiff.hpp"
#include "pimoe/params.hpp"
#include "pimoe/rng.hpp"

namespace pimoe::nn {

/// Registers `<prefix>.w` [in x out] (Xavier uniform) and `<prefix>.b` [1 x out] (zero).
void add_affine(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng);
ad::Var affine(ad::Graph& graph, const ParamSet& params, const std::string& prefix, ad::Var x);

/// Registers `<prefix>.w_ih` [in x 4H], `<prefix>.w_hh` [H x 4H] and
/// `<prefix>.b` [1 x 4H]. Gate blocks are ordered input, forget, cell,
/// output; the forget block of the bias starts at +1.
void add_lstm(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden,
              Rng& rng);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

LstmState lstm_zero_state(ad::Graph& graph, std::size_t batch, std::size_t hidden);
LstmState lstm_step(ad::Graph& graph, const ParamSet& params, const std::string& prefix, ad::Var x,
                    const LstmState& state);

}  // namespace pimoe::nn
