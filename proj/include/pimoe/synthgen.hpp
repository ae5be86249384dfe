#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pimoe/analysis.hpp"
#include "pimoe/core_data.hpp"

namespace pimoe {

struct ChemistryProfile {
  Chemistry chemistry = Chemistry::NCA;
  double nominal_capacity_mAh = 3500.0;
  VoltageWindow cutoff{2.65, 4.2};
  /// Ohmic resistance of a fresh cell.
  double resistance_ohm = 0.025;
};

/// Capacity follows a latent aging variable theta:
///   SOH(theta) = soh0 - a (1 - exp(-theta / tau)) - b theta
///                - k max(0, theta - knee)^2
/// covering a fast SEI-formation drop, a slow linear phase and an
/// accelerating plating-like phase after the knee.
struct DegradationParams {
  double soh0 = 1.0;
  double sei_drop = 0.04;
  double sei_tau = 15.0;
  double linear_rate = 6e-4;
  double knee_theta = 100.0;
  double knee_coeff = 1.2e-5;
  /// theta below this is the early stage; from here to the knee is mid.
  double early_theta = 30.0;
  /// theta increment per cycle at 1C charge, 1C discharge, 25 C.
  double base_rate = 1.5;
  double charge_rate_gain = 0.8;
  double discharge_rate_gain = 0.2;
  double temperature_gain = 0.03;
  /// Measured capacity shrinks by these fractions per C above 1C.
  double charge_capacity_penalty = 0.02;
  double discharge_capacity_penalty = 0.04;
};

enum class ScheduleMode { Fixed, TwoPhase };

struct ScheduleConfig {
  ScheduleMode mode = ScheduleMode::Fixed;
  /// Fixed mode: battery i runs conditions[i % size] for its whole life.
  std::vector<ConditionTriple> conditions{ConditionTriple{1.0, 1.0, 25.0}};
  /// Two-phase mode.
  std::size_t phase1_cycles = 20;
  ConditionTriple phase1{0.5, 2.0, 25.0};
  std::size_t switch_every = 5;
  std::vector<double> phase2_charge_rates{1.0, 2.0, 3.0};
  std::vector<double> phase2_discharge_rates{1.0, 2.0, 3.0};
  double phase2_temperature_c = 25.0;
};

struct SynthConfig {
  std::string name = "synthetic";
  std::size_t n_batteries = 12;
  ChemistryProfile chemistry;
  DegradationParams degradation;
  ScheduleConfig schedule;
  /// Log-normal spread of the per-cell aging rate.
  double cell_sigma = 0.03;
  double capacity_noise_mAh = 0.0;
  double voltage_noise_v = 0.0;
  /// Generation stops after the first cycle whose true SOH is at or below this.
  double end_of_life_soh = 0.8;
  std::size_t max_cycles = 400;
  /// Charge samples per hour of constant-current charging.
  double charge_samples_per_hour = 120.0;
  double relax_minutes = 35.0;
  double relax_step_s = 30.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
/// Unknown keys raise ConfigError; missing keys keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);

double synth_soh(const DegradationParams& params, double theta);
/// Aging increment per cycle for a condition before the per-cell factor.
double synth_aging_rate(const DegradationParams& params, const ConditionTriple& condition);
Stage synth_stage(const DegradationParams& params, double theta);

struct SynthBattery {
  BatterySeries series;
  std::vector<Stage> stages;  // one per cycle
  std::vector<double> true_soh;
};

SynthBattery gen_battery(const SynthConfig& config, std::size_t index);

struct SynthFleet {
  Dataset dataset;
  /// battery_id -> per-cycle stage labels.
  std::map<std::string, std::vector<Stage>> stages;
  std::map<std::string, std::vector<double>> true_soh;
};

SynthFleet gen_fleet(const SynthConfig& config);

}  // namespace pimoe
