#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "pimoe/model.hpp"
#include "pimoe/params.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelState model;
  std::optional<AdamState> adam;
  std::optional<std::string> rng_state;
};

/// Layout: 8-byte magic "PIMOECK1", u64 little-endian header length, JSON
/// header (version, config, metadata, stage map, optimiser scalars, RNG
/// state, parameter manifest, blob checksum), then the float64 blob holding
/// parameters, scaler bounds and Adam moments.
std::string encode_checkpoint(const ModelState& model, const AdamState* adam = nullptr,
                              const Rng* rng = nullptr);
/// Throws ChecksumError on truncation or a hash mismatch and
/// IncompatibleCheckpoint on an unknown version or a foreign file.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const ModelState& model,
                     const AdamState* adam = nullptr, const Rng* rng = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pimoe
