#include "pimoe/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "pimoe/autodiff.hpp"
#include "pimoe/error.hpp"
#include "pimoe/nn.hpp"

namespace pimoe {

std::vector<double> poly_fit(std::span<const double> x, std::span<const double> y,
                             std::size_t degree) {
  require(x.size() == y.size(), ErrorCode::ShapeError, "x and y lengths differ");
  require(x.size() >= degree + 1, ErrorCode::Underdetermined,
          "degree " + std::to_string(degree) + " needs at least " + std::to_string(degree + 1) +
              " points, got " + std::to_string(x.size()));
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto m = static_cast<Eigen::Index>(degree + 1);
  Eigen::MatrixXd design(n, m);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      design(i, j) = p;
      p *= x[static_cast<std::size_t>(i)];
    }
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  require(qr.rank() == m, ErrorCode::Underdetermined, "polynomial design matrix is rank deficient");
  const Eigen::VectorXd c = qr.solve(rhs);
  return std::vector<double>(c.data(), c.data() + c.size());
}

double poly_eval(std::span<const double> coeffs, double x) {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

std::vector<double> poly_baseline(std::span<const double> history, std::size_t degree,
                                  std::size_t horizon) {
  const std::size_t w = history.size();
  require(w >= degree + 1, ErrorCode::Underdetermined,
          "window of " + std::to_string(w) + " cannot fit degree " + std::to_string(degree));
  std::vector<double> x(w);
  for (std::size_t i = 0; i < w; ++i) x[i] = static_cast<double>(i + 1) / static_cast<double>(w);
  const std::vector<double> c = poly_fit(x, history, degree);
  std::vector<double> out(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    out[k] = poly_eval(c, static_cast<double>(w + k + 1) / static_cast<double>(w));
  }
  return out;
}

std::vector<MlpPair> build_mlp_pairs(std::span<const double> series, std::size_t window,
                                     std::size_t horizon, std::size_t stride) {
  require(stride >= 1 && window >= 1 && horizon >= 1, ErrorCode::InvalidArgument,
          "window, horizon and stride must be >= 1");
  require(series.size() >= window + horizon, ErrorCode::InsufficientData,
          "series of " + std::to_string(series.size()) + " cycles is shorter than window + horizon");
  std::vector<MlpPair> pairs;
  for (std::size_t k = 0; k + window + horizon <= series.size(); k += stride) {
    pairs.push_back({std::vector<double>(series.begin() + k, series.begin() + k + window),
                     std::vector<double>(series.begin() + k + window,
                                         series.begin() + k + window + horizon)});
  }
  return pairs;
}

namespace {

ad::Var mlp_forward(ad::Graph& graph, const ParamSet& params, ad::Var x) {
  ad::Var h = ad::relu(nn::affine(graph, params, "mlp.l1", x));
  h = ad::relu(nn::affine(graph, params, "mlp.l2", h));
  return nn::affine(graph, params, "mlp.l3", h);
}

}  // namespace

MlpBaseline::MlpBaseline(const MlpConfig& config, std::uint64_t init_seed) : config_(config) {
  Rng rng(init_seed);
  nn::add_affine(params_, "mlp.l1", config.window, config.hidden1, rng);
  nn::add_affine(params_, "mlp.l2", config.hidden1, config.hidden2, rng);
  nn::add_affine(params_, "mlp.l3", config.hidden2, config.horizon, rng);
}

std::vector<double> MlpBaseline::forecast(std::span<const double> history) const {
  require(history.size() >= config_.window, ErrorCode::InsufficientData,
          "MLP baseline needs " + std::to_string(config_.window) + " history values, got " +
              std::to_string(history.size()));
  ad::Graph graph(false);
  ad::Var x = graph.constant(Tensor::row(history.subspan(history.size() - config_.window)));
  return mlp_forward(graph, params_, x).value().values();
}

MlpBaseline train_mlp_baseline(std::span<const std::vector<double>> series,
                               const MlpConfig& config) {
  std::vector<MlpPair> pairs;
  for (const auto& s : series) {
    if (s.size() < config.window + config.horizon) continue;
    for (auto& p : build_mlp_pairs(s, config.window, config.horizon, config.stride)) {
      pairs.push_back(std::move(p));
    }
  }
  require(!pairs.empty(), ErrorCode::InsufficientData, "no series long enough for MLP pairs");
  MlpBaseline model(config, derive_stream(config.seed, "mlp.init").next_u64());
  Rng rng = derive_stream(config.seed, "mlp.train");
  AdamState adam;
  adam.lr = config.lr;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      const std::size_t b = last - first;
      Tensor x = Tensor::matrix(b, config.window);
      Tensor y = Tensor::matrix(b, config.horizon);
      for (std::size_t r = 0; r < b; ++r) {
        const MlpPair& p = pairs[order[first + r]];
        std::copy(p.input.begin(), p.input.end(), x.data() + r * config.window);
        std::copy(p.target.begin(), p.target.end(), y.data() + r * config.horizon);
      }
      ad::Graph graph(true);
      ad::Var pred = mlp_forward(graph, model.params(), graph.constant(std::move(x)));
      ad::Var loss = ad::mean_all(ad::square(ad::sub(pred, graph.constant(std::move(y)))));
      model.params().zero_grad();
      graph.backward(loss, model.params());
      adam_step(model.params(), adam);
    }
  }
  model.params().zero_grad();
  return model;
}

}  // namespace pimoe
