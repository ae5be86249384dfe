#include "pimoe/analysis.hpp"

#include <algorithm>
#include <map>

#include "pimoe/error.hpp"
#include "pimoe/fornn.hpp"

namespace pimoe {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Early: return "early";
    case Stage::Mid: return "mid";
    case Stage::Late: return "late";
  }
  return "early";
}

Stage stage_from_string(const std::string& text) {
  if (text == "early") return Stage::Early;
  if (text == "mid") return Stage::Mid;
  if (text == "late") return Stage::Late;
  fail(ErrorCode::InvalidArgument, "unknown stage '" + text + "'");
}

std::string to_string(HealthLabel label) {
  switch (label) {
    case HealthLabel::Excellent: return "Excellent";
    case HealthLabel::Qualified: return "Qualified";
    case HealthLabel::Scrap: return "Scrap";
  }
  return "Qualified";
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

StageMap calibrate_expert_stage_map(std::span<const std::vector<double>> gate_weights,
                                    std::span<const Stage> stages, bool strict) {
  require(gate_weights.size() == stages.size(), ErrorCode::ShapeError,
          "gate rows and stage labels differ in count");
  require(!gate_weights.empty(), ErrorCode::InvalidArgument, "no calibration samples");
  const std::size_t experts = gate_weights.front().size();
  require(experts >= 1, ErrorCode::InvalidArgument, "gate rows are empty");
  std::vector<std::vector<double>> sums(3, std::vector<double>(experts, 0.0));
  std::vector<std::size_t> counts(3, 0);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    require(gate_weights[i].size() == experts, ErrorCode::ShapeError, "ragged gate rows");
    const auto s = static_cast<std::size_t>(stages[i]);
    for (std::size_t j = 0; j < experts; ++j) sums[s][j] += gate_weights[i][j];
    ++counts[s];
  }
  std::size_t picked[3] = {0, 0, 0};
  for (std::size_t s = 0; s < 3; ++s) {
    require(counts[s] > 0, ErrorCode::InvalidArgument,
            "no calibration samples for stage " + to_string(static_cast<Stage>(s)));
    // Means share the divisor within a stage, so the argmax of the sums is the
    // argmax of the means.
    picked[s] = argmax(sums[s]);
  }
  StageMap map{picked[0], picked[1], picked[2], false};
  map.ambiguous = map.early == map.mid || map.mid == map.late || map.early == map.late;
  if (strict && map.ambiguous) {
    fail(ErrorCode::CalibrationAmbiguous,
         "stages map to experts early=" + std::to_string(map.early) +
             " mid=" + std::to_string(map.mid) + " late=" + std::to_string(map.late));
  }
  return map;
}

std::vector<std::vector<double>> gate_weight_matrix(const ModelState& model,
                                                    std::span<const Sample> samples) {
  require(model.config.uses_gate(), ErrorCode::ModelContractError,
          "model variant has no router");
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  const std::size_t chunk = 256;
  for (std::size_t first = 0; first < samples.size(); first += chunk) {
    const auto part = samples.subspan(first, std::min(chunk, samples.size() - first));
    const ModelInputs inputs = make_inputs(model, part);
    ad::Graph graph(false);
    const GateVars gate =
        router_forward(graph, model, graph.constant(inputs.router_input), false, nullptr);
    const Tensor& w = gate.weights.value();
    for (std::size_t r = 0; r < w.rows(); ++r) {
      rows.emplace_back(w.data() + r * w.cols(), w.data() + (r + 1) * w.cols());
    }
  }
  return rows;
}

StageMap calibrate_expert_stage_map(const ModelState& model, std::span<const Sample> samples,
                                    std::span<const Stage> stages, bool strict) {
  const auto rows = gate_weight_matrix(model, samples);
  return calibrate_expert_stage_map(rows, stages, strict);
}

ClassLabel classify_battery(std::span<const double> gate_weights, const StageMap& stage_map) {
  require(!gate_weights.empty(), ErrorCode::InvalidArgument, "empty gate vector");
  ClassLabel out;
  out.weights.assign(gate_weights.begin(), gate_weights.end());
  out.dominant_expert = argmax(gate_weights);
  if (out.dominant_expert == stage_map.early) {
    out.label = HealthLabel::Excellent;
  } else if (out.dominant_expert == stage_map.late) {
    out.label = HealthLabel::Scrap;
  } else {
    out.label = HealthLabel::Qualified;
  }
  return out;
}

ClassLabel classify_battery(const GateOutput& gate, const StageMap& stage_map) {
  return classify_battery(gate.weights, stage_map);
}

std::optional<HealthLabel> expected_label(int soh_bucket_percent) {
  if (soh_bucket_percent == 95) return HealthLabel::Excellent;
  if (soh_bucket_percent == 75) return HealthLabel::Scrap;
  return std::nullopt;
}

std::vector<ConfidenceRow> confidence_table(std::span<const HealthLabel> labels,
                                            std::span<const int> soh_buckets) {
  require(labels.size() == soh_buckets.size(), ErrorCode::ShapeError,
          "labels and buckets differ in count");
  std::map<int, ConfidenceRow, std::greater<>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ConfidenceRow& row = rows[soh_buckets[i]];
    row.soh_bucket_percent = soh_buckets[i];
    ++row.n_batteries;
    switch (labels[i]) {
      case HealthLabel::Excellent: ++row.excellent; break;
      case HealthLabel::Qualified: ++row.qualified; break;
      case HealthLabel::Scrap: ++row.scrap; break;
    }
  }
  std::vector<ConfidenceRow> out;
  for (auto& [bucket, row] : rows) {
    if (const auto expected = expected_label(bucket)) {
      const std::size_t hits = *expected == HealthLabel::Excellent ? row.excellent : row.scrap;
      row.confidence = static_cast<double>(hits) / static_cast<double>(row.n_batteries);
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace pimoe
