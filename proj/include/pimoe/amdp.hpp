#pragma once

#include <span>
#include <vector>

#include "pimoe/autodiff.hpp"
#include "pimoe/model.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

/// Router result for one sample.
struct GateOutput {
  std::vector<double> logits;
  /// Standard-normal draws that scaled the noise branch; zeros when noise was off.
  std::vector<double> noise_draw;
  /// Exactly k positive entries summing to one.
  std::vector<double> weights;
  /// Selected expert indices, highest logit first.
  std::vector<std::size_t> selected;
};

struct RouterLogits {
  std::vector<double> logits;
  std::vector<double> noise_draw;
};

/// Indices of the k largest values, largest first; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

/// H = F W_g + psi * softplus(F W_noise) with psi ~ N(0, 1) per expert when
/// training with noise enabled; H = F W_g otherwise.
RouterLogits router_logits(std::span<const double> features, const Tensor& w_gate,
                           const Tensor& w_noise, Rng* rng, bool training,
                           bool noise_enabled = true);

/// Default: softmax over the k surviving logits. Literal mode applies the
/// softmax a second time over the same k entries.
GateOutput gate_weights(std::span<const double> logits, std::size_t k,
                        bool literal_double_softmax = false);

/// Population variance of the batch-summed expert importances divided by
/// (mean^2 + eps).
double importance_cv_loss(std::span<const GateOutput> gates, double eps = 10.0);

/// Router over the most recent `window` capacities (oldest first). Throws
/// InsufficientData when fewer values are supplied.
RouterLogits history_mode_logits(std::span<const double> history, std::size_t window,
                                 const Tensor& w_gate, const Tensor& w_noise, Rng* rng,
                                 bool training, bool noise_enabled = true);

// ---------------------------------------------------------------------------
// Batched graph form used for training and inference.

struct GateVars {
  ad::Var logits;
  ad::Var weights;
  Tensor noise_draw;
  std::vector<unsigned char> mask;
};

/// `router_input` is [B x d]; returns gates [B x E].
GateVars router_forward(ad::Graph& graph, const ModelState& model, ad::Var router_input,
                        bool training, Rng* rng);

/// Output of one expert for a [B x d] input: [B x L].
ad::Var expert_forward(ad::Graph& graph, const ModelState& model, std::size_t expert,
                       ad::Var expert_input);

/// sum_j g_j * Expert_j(x). Experts with zero weight for every row are skipped.
ad::Var mixture_trend(ad::Graph& graph, const ModelState& model, ad::Var expert_input,
                      ad::Var gate_weights);

ad::Var cv_loss(ad::Graph& graph, ad::Var gate_weights, double eps);

struct TrendResult {
  std::vector<double> trend;
  GateOutput gate;
};

/// Deterministic (noise-free) trend for one sample. `expert_input` is the
/// charge vector scaled by nominal capacity (or the SOH history in history
/// mode); `router_input` the normalised features (or the same history).
TrendResult amdp_trend(const ModelState& model, std::span<const double> expert_input,
                       std::span<const double> router_input);

}  // namespace pimoe
