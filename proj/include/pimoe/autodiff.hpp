#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pimoe/params.hpp"
#include "pimoe/tensor.hpp"

namespace pimoe::ad {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  bool valid() const { return graph != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Tape for reverse-mode differentiation over a small op vocabulary. One
/// graph per forward pass; nodes are appended in evaluation order, so a
/// reverse sweep visits every node after all of its consumers.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// When `track_params` is false, parameters enter as constants and no
  /// gradient bookkeeping is done for them (inference graphs).
  explicit Graph(bool track_params = true) : track_params_(track_params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is kept (for input-gradient checks).
  Var variable(Tensor value);
  /// Leaf bound to a named parameter; requesting the same parameter again
  /// returns the same node.
  Var param(const ParamSet& params, const std::string& name);

  const Tensor& value(Var v) const;
  /// Gradient after backward(); an all-zero tensor if the node was unreached.
  const Tensor& grad(Var v);
  Tensor& grad_mut(std::size_t id);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape. The loss must be a
  /// single-element node of this graph.
  void backward(Var loss);
  /// backward() followed by adding every parameter leaf's gradient into the
  /// matching entry of `params`.
  void backward(Var loss, ParamSet& params);
  void accumulate_param_grads(ParamSet& params);

  /// Throw ShapeError on any non-finite op output when enabled.
  void set_check_finite(bool enabled) { check_finite_ = enabled; }
  std::size_t size() const { return nodes_.size(); }

  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  Var push(Node node);
  void check(Var v) const;

  // Deque so that references to node values survive later appends.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool track_params_ = true;
  bool backward_done_ = false;
  bool check_finite_ = false;
};

// Matrix ops. Shapes are [rows x cols]; rows index the batch.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// a[m x n] + bias[1 x n] broadcast over rows.
Var add_row(Var a, Var bias);
/// a[m x n] scaled row-wise by c[m x 1].
Var mul_col(Var a, Var c);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var square(Var a);

/// Row-wise softmax over entries where mask != 0; masked entries are exactly
/// zero. An all-ones mask gives the plain max-shifted softmax.
Var masked_softmax(Var a, const std::vector<unsigned char>& mask);
inline Var softmax(Var a) {
  return masked_softmax(a, std::vector<unsigned char>(a.value().size(), 1));
}
/// Inverted dropout: kept units are scaled by 1/(1-p); identity when not training.
Var dropout(Var a, double p, Rng& rng, bool training);

Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Column sums, [m x n] -> [1 x n].
Var sum_rows(Var a);
Var sum_all(Var a);
Var mean_all(Var a);

}  // namespace pimoe::ad
