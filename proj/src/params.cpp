#include "pimoe/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "pimoe/error.hpp"

namespace pimoe {

Parameter& ParamSet::add(const std::string& name, std::vector<std::size_t> shape) {
  require(!params_.contains(name), ErrorCode::InvalidArgument,
          "duplicate parameter '" + name + "'");
  Parameter& p = params_[name];
  p.value = Tensor(shape);
  p.grad = Tensor(std::move(shape));
  return p;
}

Parameter& ParamSet::get(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::ModelContractError, "missing parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamSet::get(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::ModelContractError, "missing parameter '" + name + "'");
  return it->second;
}

void ParamSet::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

double ParamSet::grad_norm() const {
  double ss = 0.0;
  for (const auto& [name, p] : params_) {
    for (double g : p.grad.values()) ss += g * g;
  }
  return std::sqrt(ss);
}

bool ParamSet::same_values(const ParamSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.value != b->second.value) return false;
  }
  return true;
}

void init_xavier(Tensor& weight, Rng& rng) {
  const double fan_in = static_cast<double>(weight.rows());
  const double fan_out = static_cast<double>(weight.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& w : weight.values()) w = rng.uniform(-limit, limit);
}

void adam_step(ParamSet& params, AdamState& state) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor(p.value.shape()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor(p.value.shape()));
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    require(m.same_shape(p.value) && p.grad.same_shape(p.value), ErrorCode::ShapeError,
            "Adam state shape mismatch for '" + name + "'");
    double* w = p.value.data();
    const double* g = p.grad.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      if (state.weight_decay != 0.0) w[i] -= state.lr * state.weight_decay * w[i];
      w[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

namespace {

void append_le(std::string& blob, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  blob.append(bytes, 8);
}

double read_le(std::string_view blob, std::size_t index) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[index * 8 + i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

SerializedParams serialize_params(const ParamSet& params) {
  SerializedParams out;
  out.manifest["version"] = kParamFormatVersion;
  out.manifest["params"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, p] : params) {
    out.manifest["params"].push_back({{"name", name}, {"shape", p.value.shape()}, {"offset", offset}});
    for (double v : p.value.values()) append_le(out.blob, v);
    offset += p.value.size();
  }
  return out;
}

ParamSet deserialize_params(const nlohmann::json& manifest, std::string_view blob) {
  require(manifest.contains("version"), ErrorCode::IncompatibleCheckpoint,
          "parameter manifest has no version");
  require(manifest["version"].get<int>() == kParamFormatVersion,
          ErrorCode::IncompatibleCheckpoint,
          "parameter format version " + manifest["version"].dump() + " is not supported");
  require(blob.size() % 8 == 0, ErrorCode::ChecksumError, "parameter blob is truncated");
  const std::size_t n_values = blob.size() / 8;
  ParamSet params;
  for (const auto& entry : manifest.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    Parameter& p = params.add(name, shape);
    require(offset + p.value.size() <= n_values, ErrorCode::ChecksumError,
            "parameter blob is too short for '" + name + "'");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = read_le(blob, offset + i);
  }
  return params;
}

}  // namespace pimoe
