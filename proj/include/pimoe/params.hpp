#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimoe/rng.hpp"
#include "pimoe/tensor.hpp"

namespace pimoe {

struct Parameter {
  Tensor value;
  Tensor grad;
};

/// Named parameters iterated in name order.
class ParamSet {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  void zero_grad();
  std::size_t scalar_count() const;
  double grad_norm() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  /// Values only; gradients are not compared.
  bool same_values(const ParamSet& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) for a [fan_in x fan_out] weight.
void init_xavier(Tensor& weight, Rng& rng);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) decay applied as w -= lr * weight_decay * w.
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update from the gradients stored in `params`.
void adam_step(ParamSet& params, AdamState& state);

/// Parameter blob layout: a JSON manifest of {name, shape, offset} entries
/// (offsets in doubles) plus a little-endian float64 blob in manifest order.
struct SerializedParams {
  nlohmann::json manifest;
  std::string blob;
};

inline constexpr int kParamFormatVersion = 1;

SerializedParams serialize_params(const ParamSet& params);
ParamSet deserialize_params(const nlohmann::json& manifest, std::string_view blob);

}  // namespace pimoe
