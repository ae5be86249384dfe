#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pimoe/amdp.hpp"
#include "pimoe/model.hpp"

namespace pimoe {

enum class Stage { Early, Mid, Late };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& text);

/// Stage -> expert with the highest mean gate weight over that stage's
/// samples. Two stages sharing an expert set `ambiguous`; with `strict` that
/// raises CalibrationAmbiguous instead. Every stage needs at least one
/// sample (InvalidArgument otherwise).
StageMap calibrate_expert_stage_map(std::span<const std::vector<double>> gate_weights,
                                    std::span<const Stage> stages, bool strict = false);

/// Same, with deterministic gate weights computed from the model for each sample.
StageMap calibrate_expert_stage_map(const ModelState& model, std::span<const Sample> samples,
                                    std::span<const Stage> stages, bool strict = false);

/// Deterministic gate weights per sample, [n x E] row-major rows.
std::vector<std::vector<double>> gate_weight_matrix(const ModelState& model,
                                                    std::span<const Sample> samples);

enum class HealthLabel { Excellent, Qualified, Scrap };

std::string to_string(HealthLabel label);

struct ClassLabel {
  HealthLabel label = HealthLabel::Qualified;
  std::size_t dominant_expert = 0;
  std::vector<double> weights;
};

/// Argmax expert (lowest index on ties): the early-stage expert gives
/// Excellent, the late-stage expert Scrap, anything else Qualified.
ClassLabel classify_battery(std::span<const double> gate_weights, const StageMap& stage_map);
ClassLabel classify_battery(const GateOutput& gate, const StageMap& stage_map);

struct ConfidenceRow {
  int soh_bucket_percent = 0;
  std::size_t n_batteries = 0;
  std::size_t excellent = 0;
  std::size_t qualified = 0;
  std::size_t scrap = 0;
  /// Fraction with the bucket's expected label; unset for buckets without one.
  std::optional<double> confidence;
};

/// Label expected for a ground-truth SOH bucket: 95 -> Excellent,
/// 75 -> Scrap; other buckets have none.
std::optional<HealthLabel> expected_label(int soh_bucket_percent);

/// Rows ordered by descending bucket; empty buckets are omitted.
std::vector<ConfidenceRow> confidence_table(std::span<const HealthLabel> labels,
                                            std::span<const int> soh_buckets);

}  // namespace pimoe
