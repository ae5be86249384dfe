#include "pimoe/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "pimoe/error.hpp"

namespace pimoe::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix as_matrix(const Tensor& t) {
  return ConstMapMatrix(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MapMatrix as_matrix(Tensor& t) {
  return MapMatrix(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.same_shape(b), ErrorCode::ShapeError,
          std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  require(a.rank() == 2, ErrorCode::ShapeError,
          std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

template <typename Forward, typename Derivative>
Var unary(Var a, Forward forward, Derivative derivative) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [a, derivative](Graph& g, std::size_t self) {
    const Tensor& x = g.node_value(a.id);
    const Tensor& y = g.node_value(self);
    const Tensor& gy = g.grad_mut(self);
    Tensor& gx = g.grad_mut(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * derivative(x[i], y[i]);
  });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const {
  require(graph != nullptr, ErrorCode::GraphError, "use of an unbound Var");
  return graph->value(*this);
}

Var Graph::push(Node node) {
  if (check_finite_) {
    require(node.value.all_finite(), ErrorCode::ShapeError,
            "non-finite value produced at node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Graph::check(Var v) const {
  require(v.graph == this && v.id < nodes_.size(), ErrorCode::GraphError,
          "Var does not belong to this graph");
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Graph::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Graph::param(const ParamSet& params, const std::string& name) {
  const Parameter& p = params.get(name);
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.value = p.value;
  node.requires_grad = track_params_;
  if (track_params_) node.param_name = name;
  Var v = push(std::move(node));
  param_nodes_[&p] = v.id;
  return v;
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

Tensor& Graph::grad_mut(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

const Tensor& Graph::grad(Var v) {
  check(v);
  return grad_mut(v.id);
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    check(p);
    node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

void Graph::backward(Var loss) {
  require(!nodes_.empty(), ErrorCode::GraphError, "backward called before any forward pass");
  check(loss);
  require(nodes_[loss.id].value.size() == 1, ErrorCode::GraphError,
          "backward requires a scalar loss, got " + shape_string(nodes_[loss.id].value.shape()));
  for (auto& node : nodes_) node.grad = Tensor();
  grad_mut(loss.id).fill(1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, id);
  }
  backward_done_ = true;
}

void Graph::backward(Var loss, ParamSet& params) {
  backward(loss);
  accumulate_param_grads(params);
}

void Graph::accumulate_param_grads(ParamSet& params) {
  require(backward_done_, ErrorCode::GraphError, "parameter gradients requested before backward");
  for (auto& node : nodes_) {
    if (node.param_name.empty() || node.grad.size() == 0) continue;
    Tensor& target = params.get(node.param_name).grad;
    require(target.same_shape(node.grad), ErrorCode::ShapeError,
            "gradient shape mismatch for '" + node.param_name + "'");
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += node.grad[i];
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require_matrix(x, "matmul");
  require_matrix(w, "matmul");
  require(x.cols() == w.rows(), ErrorCode::ShapeError,
          "matmul: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  Tensor y = Tensor::matrix(x.rows(), w.cols());
  as_matrix(y).noalias() = as_matrix(x) * as_matrix(w);
  const Var parents[] = {a, b};
  return a.graph->record(std::move(y), parents, [a, b](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_mut(self);
    if (g.needs_grad(a.id)) {
      as_matrix(g.grad_mut(a.id)).noalias() += as_matrix(gy) * as_matrix(g.node_value(b.id)).transpose();
    }
    if (g.needs_grad(b.id)) {
      as_matrix(g.grad_mut(b.id)).noalias() += as_matrix(g.node_value(a.id)).transpose() * as_matrix(gy);
    }
  });
}

namespace {

template <typename Op, typename Back>
Var binary_same_shape(Var a, Var b, const char* name, Op op, Back back) {
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  require_same_shape(x, z, name);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = op(x[i], z[i]);
  const Var parents[] = {a, b};
  return a.graph->record(std::move(y), parents, [a, b, back](Graph& g, std::size_t self) {
    const Tensor& x = g.node_value(a.id);
    const Tensor& z = g.node_value(b.id);
    const Tensor& gy = g.grad_mut(self);
    const bool ga = g.needs_grad(a.id);
    const bool gb = g.needs_grad(b.id);
    Tensor* gx = ga ? &g.grad_mut(a.id) : nullptr;
    Tensor* gz = gb ? &g.grad_mut(b.id) : nullptr;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto [da, db] = back(x[i], z[i], gy[i]);
      if (gx) (*gx)[i] += da;
      if (gz) (*gz)[i] += db;
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(
      a, b, "add", [](double x, double z) { return x + z; },
      [](double, double, double gy) { return std::pair{gy, gy}; });
}

Var sub(Var a, Var b) {
  return binary_same_shape(
      a, b, "sub", [](double x, double z) { return x - z; },
      [](double, double, double gy) { return std::pair{gy, -gy}; });
}

Var mul(Var a, Var b) {
  return binary_same_shape(
      a, b, "mul", [](double x, double z) { return x * z; },
      [](double x, double z, double gy) { return std::pair{gy * z, gy * x}; });
}

Var div(Var a, Var b) {
  return binary_same_shape(
      a, b, "div", [](double x, double z) { return x / z; },
      [](double x, double z, double gy) { return std::pair{gy / z, -gy * x / (z * z)}; });
}

Var add_row(Var a, Var bias) {
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  require_matrix(x, "add_row");
  require(b.rank() == 2 && b.rows() == 1 && b.cols() == x.cols(), ErrorCode::ShapeError,
          "add_row: bias " + shape_string(b.shape()) + " for " + shape_string(x.shape()));
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += b[c];
  }
  const Var parents[] = {a, bias};
  return a.graph->record(std::move(y), parents, [a, bias](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_mut(self);
    if (g.needs_grad(a.id)) {
      Tensor& gx = g.grad_mut(a.id);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (g.needs_grad(bias.id)) {
      Tensor& gb = g.grad_mut(bias.id);
      const std::size_t n = gb.size();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % n] += gy[i];
    }
  });
}

Var mul_col(Var a, Var c) {
  const Tensor& x = a.value();
  const Tensor& s = c.value();
  require_matrix(x, "mul_col");
  require(s.rank() == 2 && s.cols() == 1 && s.rows() == x.rows(), ErrorCode::ShapeError,
          "mul_col: column " + shape_string(s.shape()) + " for " + shape_string(x.shape()));
  Tensor y = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < n; ++k) y[r * n + k] *= s[r];
  }
  const Var parents[] = {a, c};
  return a.graph->record(std::move(y), parents, [a, c](Graph& g, std::size_t self) {
    const Tensor& x = g.node_value(a.id);
    const Tensor& s = g.node_value(c.id);
    const Tensor& gy = g.grad_mut(self);
    const std::size_t n = x.cols();
    if (g.needs_grad(a.id)) {
      Tensor& gx = g.grad_mut(a.id);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < n; ++k) gx[r * n + k] += gy[r * n + k] * s[r];
      }
    }
    if (g.needs_grad(c.id)) {
      Tensor& gs = g.grad_mut(c.id);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += gy[r * n + k] * x[r * n + k];
        gs[r] += acc;
      }
    }
  });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var masked_softmax(Var a, const std::vector<unsigned char>& mask) {
  const Tensor& x = a.value();
  require_matrix(x, "softmax");
  require(mask.size() == x.size(), ErrorCode::ShapeError, "softmax: mask size mismatch");
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < n; ++c) {
      if (mask[r * n + c]) peak = std::max(peak, x[r * n + c]);
    }
    require(std::isfinite(peak), ErrorCode::InvalidArgument,
            "softmax row " + std::to_string(r) + " has no finite unmasked entry");
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double e = mask[r * n + c] ? std::exp(x[r * n + c] - peak) : 0.0;
      y[r * n + c] = e;
      total += e;
    }
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] /= total;
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [a](Graph& g, std::size_t self) {
    const Tensor& y = g.node_value(self);
    const Tensor& gy = g.grad_mut(self);
    Tensor& gx = g.grad_mut(a.id);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * gy[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += y[r * n + c] * (gy[r * n + c] - dot);
    }
  });
}

Var dropout(Var a, double p, Rng& rng, bool training) {
  require(p >= 0.0 && p < 1.0, ErrorCode::InvalidArgument, "dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return a;
  Tensor mask(a.value().shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.values()) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mul(a, a.graph->constant(std::move(mask)));
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  require(begin + count <= x.cols(), ErrorCode::ShapeError, "slice_cols: range out of bounds");
  const std::size_t n = x.cols();
  Tensor y = Tensor::matrix(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.data() + r * n + begin, count, y.data() + r * count);
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [a, begin, count](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_mut(self);
    Tensor& gx = g.grad_mut(a.id);
    const std::size_t n = gx.cols();
    for (std::size_t r = 0; r < gy.rows(); ++r) {
      for (std::size_t c = 0; c < count; ++c) gx[r * n + begin + c] += gy[r * count + c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::ShapeError, "concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.value().rows() == rows, ErrorCode::ShapeError, "concat_cols: row count mismatch");
    total += p.value().cols();
  }
  Tensor y = Tensor::matrix(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    const std::size_t n = x.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.data() + r * n, n, y.data() + r * total + offset);
    }
    offset += n;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().graph->record(std::move(y), parts, [inputs](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_mut(self);
    const std::size_t total = gy.cols();
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t n = g.node_value(p.id).cols();
      if (g.needs_grad(p.id)) {
        Tensor& gx = g.grad_mut(p.id);
        for (std::size_t r = 0; r < gy.rows(); ++r) {
          for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += gy[r * total + offset + c];
        }
      }
      offset += n;
    }
  });
}

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "sum_rows");
  const std::size_t n = x.cols();
  Tensor y = Tensor::matrix(1, n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) y[c] += x[r * n + c];
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(y), parents, [a](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad_mut(self);
    Tensor& gx = g.grad_mut(a.id);
    const std::size_t n = gy.size();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i % n];
  });
}

Var sum_all(Var a) {
  const Tensor& x = a.value();
  double total = 0.0;
  for (double v : x.values()) total += v;
  const Var parents[] = {a};
  return a.graph->record(Tensor::scalar(total), parents, [a](Graph& g, std::size_t self) {
    const double gy = g.grad_mut(self)[0];
    Tensor& gx = g.grad_mut(a.id);
    for (double& v : gx.values()) v += gy;
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

}  // namespace pimoe::ad
