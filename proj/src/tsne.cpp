#include "pimoe/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "pimoe/error.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

namespace {

Tensor squared_distances(const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x.at(i, k) - x.at(j, k);
        s += diff * diff;
      }
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  }
  return out;
}

double kl_divergence(const Tensor& p, const Tensor& y) {
  const std::size_t n = y.rows();
  Tensor num = Tensor::matrix(n, n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y.at(i, 0) - y.at(j, 0);
      const double dy = y.at(i, 1) - y.at(j, 1);
      num.at(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
      z += num.at(i, j);
    }
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || p.at(i, j) <= 0.0) continue;
      const double q = std::max(num.at(i, j) / z, 1e-300);
      kl += p.at(i, j) * std::log(p.at(i, j) / q);
    }
  }
  return kl;
}

}  // namespace

Tensor conditional_probabilities(const Tensor& points, double perplexity) {
  const std::size_t n = points.rows();
  require(n >= 2, ErrorCode::InvalidArgument, "t-SNE needs at least two points");
  require(perplexity > 0.0, ErrorCode::InvalidArgument, "perplexity must be positive");
  const Tensor dist = squared_distances(points);
  const double target = std::log(perplexity);
  Tensor p = Tensor::matrix(n, n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, dist.at(i, j));
    }
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        // Shifting by the nearest distance keeps exp() away from underflow;
        // the shift cancels on normalisation.
        row[j] = j == i ? 0.0 : std::exp(-beta * (dist.at(i, j) - dmin));
        sum += row[j];
        weighted += row[j] * (dist.at(i, j) - dmin);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (std::size_t j = 0; j < n; ++j) p.at(i, j) = row[j] / sum;
      const double gap = entropy - target;
      if (std::abs(gap) < 1e-10) break;
      if (gap > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

Tensor joint_probabilities(const Tensor& points, double perplexity) {
  const Tensor cond = conditional_probabilities(points, perplexity);
  const std::size_t n = cond.rows();
  Tensor p = Tensor::matrix(n, n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) p.at(i, j) = std::max((cond.at(i, j) + cond.at(j, i)) / denom, 1e-300);
    }
  }
  return p;
}

TsneResult tsne_embed(const Tensor& points, const TsneOptions& options) {
  const std::size_t n = points.rows();
  require(n >= 5, ErrorCode::InvalidArgument,
          "t-SNE needs at least 5 points, got " + std::to_string(n));
  require(n <= 5000, ErrorCode::InvalidArgument, "exact t-SNE is limited to 5000 points");
  TsneResult result;
  result.perplexity_used = options.perplexity;
  const double cap = static_cast<double>(n - 1) / 3.0;
  if (options.perplexity > cap) {
    result.perplexity_used = cap;
    result.perplexity_capped = true;
  }
  const Tensor p = joint_probabilities(points, result.perplexity_used);

  Rng rng = derive_stream(options.seed, "tsne");
  Tensor y = Tensor::matrix(n, 2);
  for (double& v : y.values()) v = 1e-2 * rng.normal();
  Tensor velocity = Tensor::matrix(n, 2);
  Tensor gains = Tensor::matrix(n, 2, 1.0);
  Tensor grad = Tensor::matrix(n, 2);
  Tensor num = Tensor::matrix(n, n);
  result.kl_trace.push_back(kl_divergence(p, y));

  for (std::size_t iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration =
        iter < options.exaggeration_iterations ? options.exaggeration : 1.0;
    const double momentum =
        iter < options.exaggeration_iterations ? options.initial_momentum : options.final_momentum;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y.at(i, 0) - y.at(j, 0);
        const double dy = y.at(i, 1) - y.at(j, 1);
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num.at(i, j) = v;
        num.at(j, i) = v;
        z += 2.0 * v;
      }
    }
    grad.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff = 4.0 * (exaggeration * p.at(i, j) - num.at(i, j) / z) * num.at(i, j);
        grad.at(i, 0) += coeff * (y.at(i, 0) - y.at(j, 0));
        grad.at(i, 1) += coeff * (y.at(i, 1) - y.at(j, 1));
      }
    }
    for (std::size_t k = 0; k < y.size(); ++k) {
      const bool same_sign = (grad[k] > 0.0) == (velocity[k] > 0.0);
      gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
      velocity[k] = momentum * velocity[k] - options.learning_rate * gains[k] * grad[k];
      y[k] += velocity[k];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y.at(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y.at(i, c) -= mean;
    }
    result.kl_trace.push_back(kl_divergence(p, y));
  }
  result.final_kl = result.kl_trace.back();
  result.embedding = std::move(y);
  return result;
}

double silhouette_score(const Tensor& points, std::span<const int> labels) {
  const std::size_t n = points.rows();
  require(labels.size() == n, ErrorCode::ShapeError, "one label per point required");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  require(sizes.size() >= 2, ErrorCode::InvalidArgument, "silhouette needs two or more clusters");
  const Tensor dist = squared_distances(points);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[labels[j]] += std::sqrt(dist.at(i, j));
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, s] : sum) {
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace pimoe
