#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pimoe/tensor.hpp"

namespace pimoe {

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
};

struct TsneResult {
  Tensor embedding;  // n x 2
  /// KL(P || Q) against the unexaggerated P, before the first update and
  /// after each iteration.
  std::vector<double> kl_trace;
  double final_kl = 0.0;
  double perplexity_used = 0.0;
  bool perplexity_capped = false;
};

/// Row-conditional p_{j|i} ([n x n], zero diagonal) with each Gaussian
/// bandwidth bisected to match the perplexity (natural-log entropy).
Tensor conditional_probabilities(const Tensor& points, double perplexity);

/// Symmetrised p_ij = (p_{j|i} + p_{i|j}) / 2n.
Tensor joint_probabilities(const Tensor& points, double perplexity);

/// Exact O(n^2) t-SNE into two dimensions. Needs n >= 5; a perplexity above
/// (n - 1) / 3 is lowered to that value and flagged in the result.
TsneResult tsne_embed(const Tensor& points, const TsneOptions& options = {});

/// Mean silhouette coefficient with Euclidean distances; points in singleton
/// clusters score 0.
double silhouette_score(const Tensor& points, std::span<const int> labels);

}  // namespace pimoe
