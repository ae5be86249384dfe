#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pimoe/params.hpp"

namespace pimoe {

/// Least-squares polynomial coefficients c_0..c_d (lowest order first).
/// Throws Underdetermined when fewer than d + 1 points are given.
std::vector<double> poly_fit(std::span<const double> x, std::span<const double> y,
                             std::size_t degree);
double poly_eval(std::span<const double> coeffs, double x);

/// Fits a degree-d polynomial to the window (cycle positions 1..w, scaled by
/// 1/w) and extrapolates the next `horizon` cycles.
std::vector<double> poly_baseline(std::span<const double> history, std::size_t degree = 3,
                                  std::size_t horizon = 50);

struct MlpPair {
  std::vector<double> input;
  std::vector<double> target;
};

/// Pairs (y[k..k+w), y[k+w..k+w+s)) for k = 0, stride, 2*stride, ...; there
/// are floor((T - w - s) / stride) + 1 of them. Throws InsufficientData when
/// T < w + s.
std::vector<MlpPair> build_mlp_pairs(std::span<const double> series, std::size_t window = 10,
                                     std::size_t horizon = 50, std::size_t stride = 1);

struct MlpConfig {
  std::size_t window = 10;
  std::size_t horizon = 50;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 64;
  std::size_t stride = 1;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Three-layer ReLU network w -> 128 -> 64 -> s on capacity windows.
class MlpBaseline {
 public:
  MlpBaseline() = default;
  MlpBaseline(const MlpConfig& config, std::uint64_t init_seed);

  const MlpConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Uses the last `window` values of `history`; throws InsufficientData if
  /// fewer are given.
  std::vector<double> forecast(std::span<const double> history) const;

 private:
  MlpConfig config_;
  ParamSet params_;
};

/// Builds pairs from every series (series shorter than w + s contribute
/// nothing) and trains with Adam on the mean squared error. Throws
/// InsufficientData when no pair can be formed.
MlpBaseline train_mlp_baseline(std::span<const std::vector<double>> series,
                               const MlpConfig& config);

}  // namespace pimoe
