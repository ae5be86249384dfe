#include "pimoe/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "pimoe/error.hpp"

namespace pimoe {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'M', 'O', 'E', 'C', 'K', '1'};
constexpr const char* kNormFeatureMin = "~norm.feature.min";
constexpr const char* kNormFeatureMax = "~norm.feature.max";
constexpr const char* kNormConditionMin = "~norm.condition.min";
constexpr const char* kNormConditionMax = "~norm.condition.max";
constexpr const char* kAdamFirst = "~adam.m.";
constexpr const char* kAdamSecond = "~adam.v.";

std::string fnv_hex(std::string_view bytes) {
  std::ostringstream os;
  os << std::hex << hash_string(bytes);
  return os.str();
}

void put_vector(ParamSet& set, const char* name, const std::vector<double>& values) {
  Parameter& p = set.add(name, {1, values.size()});
  p.value.values() = values;
}

std::vector<double> take_vector(const ParamSet& set, const char* name) {
  if (!set.contains(name)) return {};
  return set.get(name).value.values();
}

NormStats take_norm(const ParamSet& set, const char* lo, const char* hi) {
  auto min = take_vector(set, lo);
  auto max = take_vector(set, hi);
  if (min.empty()) return {};
  return NormStats(std::move(min), std::move(max));
}

}  // namespace

std::string encode_checkpoint(const ModelState& model, const AdamState* adam, const Rng* rng) {
  ParamSet all;
  for (const auto& [name, p] : model.params) all.add(name, p.value.shape()).value = p.value;
  if (model.feature_norm.fitted()) {
    put_vector(all, kNormFeatureMin, model.feature_norm.min());
    put_vector(all, kNormFeatureMax, model.feature_norm.max());
  }
  if (model.condition_norm.fitted()) {
    put_vector(all, kNormConditionMin, model.condition_norm.min());
    put_vector(all, kNormConditionMax, model.condition_norm.max());
  }
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["config"] = to_json(model.config);
  header["metadata"] = model.metadata;
  if (model.stage_map) {
    header["stage_map"] = {{"early", model.stage_map->early},
                           {"mid", model.stage_map->mid},
                           {"late", model.stage_map->late},
                           {"ambiguous", model.stage_map->ambiguous}};
  }
  if (adam != nullptr) {
    header["adam"] = {{"lr", adam->lr},
                      {"beta1", adam->beta1},
                      {"beta2", adam->beta2},
                      {"eps", adam->eps},
                      {"weight_decay", adam->weight_decay},
                      {"step", adam->step}};
    for (const auto& [name, m] : adam->first_moment) {
      all.add(kAdamFirst + name, m.shape()).value = m;
    }
    for (const auto& [name, v] : adam->second_moment) {
      all.add(kAdamSecond + name, v.shape()).value = v;
    }
  }
  if (rng != nullptr) header["rng_state"] = rng->serialize();
  SerializedParams ser = serialize_params(all);
  header["params"] = ser.manifest;
  header["blob_bytes"] = ser.blob.size();
  header["blob_fnv1a"] = fnv_hex(ser.blob);

  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  out += ser.blob;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  require(bytes.size() >= 16, ErrorCode::ChecksumError, "checkpoint is truncated");
  require(std::memcmp(bytes.data(), kMagic, 7) == 0, ErrorCode::IncompatibleCheckpoint,
          "not a checkpoint file");
  require(bytes[7] == kMagic[7], ErrorCode::IncompatibleCheckpoint,
          "checkpoint container version is not supported");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  }
  require(len <= bytes.size() - 16, ErrorCode::ChecksumError, "checkpoint header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ChecksumError, std::string("checkpoint header is corrupt: ") + e.what());
  }
  require(header.value("version", -1) == kCheckpointVersion, ErrorCode::IncompatibleCheckpoint,
          "checkpoint version " + header.value("version", nlohmann::json()).dump() +
              " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::string_view blob = bytes.substr(16 + len);
  require(blob.size() == header.at("blob_bytes").get<std::size_t>(), ErrorCode::ChecksumError,
          "checkpoint blob has " + std::to_string(blob.size()) + " bytes, header says " +
              header.at("blob_bytes").dump());
  require(fnv_hex(blob) == header.at("blob_fnv1a").get<std::string>(), ErrorCode::ChecksumError,
          "checkpoint blob hash mismatch");

  const ParamSet all = deserialize_params(header.at("params"), blob);
  Checkpoint ck;
  ModelState& model = ck.model;
  try {
    model.config = model_config_from_json(header.at("config"));
  } catch (const Error& e) {
    fail(ErrorCode::IncompatibleCheckpoint, e.what());
  }
  model.metadata = header.value("metadata", nlohmann::json::object());
  if (header.contains("stage_map")) {
    const auto& s = header.at("stage_map");
    model.stage_map = StageMap{s.at("early").get<std::size_t>(), s.at("mid").get<std::size_t>(),
                               s.at("late").get<std::size_t>(), s.at("ambiguous").get<bool>()};
  }
  model.feature_norm = take_norm(all, kNormFeatureMin, kNormFeatureMax);
  model.condition_norm = take_norm(all, kNormConditionMin, kNormConditionMax);
  if (header.contains("adam")) {
    const auto& a = header.at("adam");
    AdamState adam;
    adam.lr = a.at("lr").get<double>();
    adam.beta1 = a.at("beta1").get<double>();
    adam.beta2 = a.at("beta2").get<double>();
    adam.eps = a.at("eps").get<double>();
    adam.weight_decay = a.at("weight_decay").get<double>();
    adam.step = a.at("step").get<std::uint64_t>();
    ck.adam = std::move(adam);
  }
  const std::string first_prefix = kAdamFirst;
  const std::string second_prefix = kAdamSecond;
  for (const auto& [name, p] : all) {
    if (name.starts_with(first_prefix)) {
      if (ck.adam) ck.adam->first_moment[name.substr(first_prefix.size())] = p.value;
    } else if (name.starts_with(second_prefix)) {
      if (ck.adam) ck.adam->second_moment[name.substr(second_prefix.size())] = p.value;
    } else if (!name.starts_with("~")) {
      model.params.add(name, p.value.shape()).value = p.value;
    }
  }
  // Shapes must agree with a freshly initialised model of the same config.
  const ModelState reference = init_model(model.config, 0);
  require(reference.params.size() == model.params.size(), ErrorCode::IncompatibleCheckpoint,
          "checkpoint parameter set does not match its config");
  for (const auto& [name, p] : reference.params) {
    require(model.params.contains(name) && model.params.get(name).value.same_shape(p.value),
            ErrorCode::IncompatibleCheckpoint, "checkpoint parameter '" + name + "' mismatch");
  }
  if (header.contains("rng_state")) ck.rng_state = header.at("rng_state").get<std::string>();
  return ck;
}

void save_checkpoint(const std::string& path, const ModelState& model, const AdamState* adam,
                     const Rng* rng) {
  const std::string bytes = encode_checkpoint(model, adam, rng);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace pimoe
