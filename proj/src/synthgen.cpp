#include "pimoe/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pimoe/error.hpp"
#include "pimoe/json_util.hpp"
#include "pimoe/rng.hpp"

namespace pimoe {

void SynthConfig::validate() const {
  require(n_batteries >= 1, ErrorCode::InvalidArgument, "n_batteries must be >= 1");
  require(chemistry.nominal_capacity_mAh > 0.0 && chemistry.resistance_ohm >= 0.0,
          ErrorCode::InvalidArgument, "chemistry profile needs positive capacity");
  require(chemistry.cutoff.min_v < chemistry.cutoff.max_v, ErrorCode::InvalidArgument,
          "cutoff window is empty");
  const DegradationParams& d = degradation;
  require(d.sei_drop >= 0.0 && d.sei_tau > 0.0 && d.linear_rate >= 0.0 && d.knee_coeff >= 0.0 &&
              d.base_rate > 0.0 && d.charge_rate_gain >= 0.0 && d.discharge_rate_gain >= 0.0,
          ErrorCode::InvalidArgument, "degradation rates must be non-negative");
  require(0.0 < d.early_theta && d.early_theta < d.knee_theta, ErrorCode::InvalidArgument,
          "stage thresholds must satisfy 0 < early_theta < knee_theta");
  require(synth_soh(d, d.knee_theta) > end_of_life_soh, ErrorCode::InvalidArgument,
          "knee must fall within the cell's life");
  require(cell_sigma >= 0.0 && capacity_noise_mAh >= 0.0 && voltage_noise_v >= 0.0,
          ErrorCode::InvalidArgument, "noise levels must be non-negative");
  require(max_cycles >= 3, ErrorCode::InvalidArgument, "max_cycles must be >= 3");
  require(charge_samples_per_hour > 0.0 && relax_step_s > 0.0 && relax_minutes > 0.0,
          ErrorCode::InvalidArgument, "sampling rates must be positive");
  if (schedule.mode == ScheduleMode::Fixed) {
    require(!schedule.conditions.empty(), ErrorCode::InvalidArgument,
            "fixed schedule needs at least one condition");
    for (const auto& c : schedule.conditions) pimoe::validate(c);
  } else {
    pimoe::validate(schedule.phase1);
    require(schedule.switch_every >= 1 && !schedule.phase2_charge_rates.empty() &&
                !schedule.phase2_discharge_rates.empty(),
            ErrorCode::InvalidArgument, "two-phase schedule needs rates and a switch period");
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json condition_json(const ConditionTriple& c) {
  return {{"charge_c", c.charge_c_rate}, {"discharge_c", c.discharge_c_rate},
          {"temp_c", c.temperature_c}};
}

ConditionTriple condition_from(const nlohmann::json& j, const std::string& where) {
  check_keys(j, {"charge_c", "discharge_c", "temp_c"}, where);
  ConditionTriple c;
  read_key(j, "charge_c", c.charge_c_rate, where);
  read_key(j, "discharge_c", c.discharge_c_rate, where);
  read_key(j, "temp_c", c.temperature_c, where);
  return c;
}

}  // namespace

nlohmann::json to_json(const SynthConfig& c) {
  const DegradationParams& d = c.degradation;
  nlohmann::json conditions = nlohmann::json::array();
  for (const auto& cond : c.schedule.conditions) conditions.push_back(condition_json(cond));
  return {
      {"name", c.name},
      {"n_batteries", c.n_batteries},
      {"chemistry",
       {{"chemistry", to_string(c.chemistry.chemistry)},
        {"nominal_capacity_mAh", c.chemistry.nominal_capacity_mAh},
        {"v_min", c.chemistry.cutoff.min_v},
        {"v_max", c.chemistry.cutoff.max_v},
        {"resistance_ohm", c.chemistry.resistance_ohm}}},
      {"degradation",
       {{"soh0", d.soh0},
        {"sei_drop", d.sei_drop},
        {"sei_tau", d.sei_tau},
        {"linear_rate", d.linear_rate},
        {"knee_theta", d.knee_theta},
        {"knee_coeff", d.knee_coeff},
        {"early_theta", d.early_theta},
        {"base_rate", d.base_rate},
        {"charge_rate_gain", d.charge_rate_gain},
        {"discharge_rate_gain", d.discharge_rate_gain},
        {"temperature_gain", d.temperature_gain},
        {"charge_capacity_penalty", d.charge_capacity_penalty},
        {"discharge_capacity_penalty", d.discharge_capacity_penalty}}},
      {"schedule",
       {{"mode", c.schedule.mode == ScheduleMode::Fixed ? "fixed" : "two_phase"},
        {"conditions", conditions},
        {"phase1_cycles", c.schedule.phase1_cycles},
        {"phase1", condition_json(c.schedule.phase1)},
        {"switch_every", c.schedule.switch_every},
        {"phase2_charge_rates", c.schedule.phase2_charge_rates},
        {"phase2_discharge_rates", c.schedule.phase2_discharge_rates},
        {"phase2_temperature_c", c.schedule.phase2_temperature_c}}},
      {"cell_sigma", c.cell_sigma},
      {"capacity_noise_mAh", c.capacity_noise_mAh},
      {"voltage_noise_v", c.voltage_noise_v},
      {"end_of_life_soh", c.end_of_life_soh},
      {"max_cycles", c.max_cycles},
      {"charge_samples_per_hour", c.charge_samples_per_hour},
      {"relax_minutes", c.relax_minutes},
      {"relax_step_s", c.relax_step_s},
      {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  const std::string where = "synth";
  check_keys(j,
             {"name", "n_batteries", "chemistry", "degradation", "schedule", "cell_sigma",
              "capacity_noise_mAh", "voltage_noise_v", "end_of_life_soh", "max_cycles",
              "charge_samples_per_hour", "relax_minutes", "relax_step_s", "seed"},
             where);
  SynthConfig c;
  read_key(j, "name", c.name, where);
  read_key(j, "n_batteries", c.n_batteries, where);
  if (j.contains("chemistry")) {
    const auto& s = j.at("chemistry");
    const std::string w = "synth.chemistry";
    check_keys(s, {"chemistry", "nominal_capacity_mAh", "v_min", "v_max", "resistance_ohm"}, w);
    std::string chem = to_string(c.chemistry.chemistry);
    read_key(s, "chemistry", chem, w);
    try {
      c.chemistry.chemistry = chemistry_from_string(chem);
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.what());
    }
    read_key(s, "nominal_capacity_mAh", c.chemistry.nominal_capacity_mAh, w);
    read_key(s, "v_min", c.chemistry.cutoff.min_v, w);
    read_key(s, "v_max", c.chemistry.cutoff.max_v, w);
    read_key(s, "resistance_ohm", c.chemistry.resistance_ohm, w);
  }
  if (j.contains("degradation")) {
    const auto& s = j.at("degradation");
    const std::string w = "synth.degradation";
    DegradationParams& d = c.degradation;
    check_keys(s,
               {"soh0", "sei_drop", "sei_tau", "linear_rate", "knee_theta", "knee_coeff",
                "early_theta", "base_rate", "charge_rate_gain", "discharge_rate_gain",
                "temperature_gain", "charge_capacity_penalty", "discharge_capacity_penalty"},
               w);
    read_key(s, "soh0", d.soh0, w);
    read_key(s, "sei_drop", d.sei_drop, w);
    read_key(s, "sei_tau", d.sei_tau, w);
    read_key(s, "linear_rate", d.linear_rate, w);
    read_key(s, "knee_theta", d.knee_theta, w);
    read_key(s, "knee_coeff", d.knee_coeff, w);
    read_key(s, "early_theta", d.early_theta, w);
    read_key(s, "base_rate", d.base_rate, w);
    read_key(s, "charge_rate_gain", d.charge_rate_gain, w);
    read_key(s, "discharge_rate_gain", d.discharge_rate_gain, w);
    read_key(s, "temperature_gain", d.temperature_gain, w);
    read_key(s, "charge_capacity_penalty", d.charge_capacity_penalty, w);
    read_key(s, "discharge_capacity_penalty", d.discharge_capacity_penalty, w);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    const std::string w = "synth.schedule";
    check_keys(s,
               {"mode", "conditions", "phase1_cycles", "phase1", "switch_every",
                "phase2_charge_rates", "phase2_discharge_rates", "phase2_temperature_c"},
               w);
    std::string mode = "fixed";
    read_key(s, "mode", mode, w);
    require(mode == "fixed" || mode == "two_phase", ErrorCode::ConfigError,
            "schedule mode must be fixed or two_phase");
    c.schedule.mode = mode == "fixed" ? ScheduleMode::Fixed : ScheduleMode::TwoPhase;
    if (s.contains("conditions")) {
      require(s.at("conditions").is_array(), ErrorCode::ConfigError,
              "schedule.conditions must be an array");
      c.schedule.conditions.clear();
      for (const auto& item : s.at("conditions")) {
        c.schedule.conditions.push_back(condition_from(item, w + ".conditions"));
      }
    }
    read_key(s, "phase1_cycles", c.schedule.phase1_cycles, w);
    if (s.contains("phase1")) c.schedule.phase1 = condition_from(s.at("phase1"), w + ".phase1");
    read_key(s, "switch_every", c.schedule.switch_every, w);
    read_key(s, "phase2_charge_rates", c.schedule.phase2_charge_rates, w);
    read_key(s, "phase2_discharge_rates", c.schedule.phase2_discharge_rates, w);
    read_key(s, "phase2_temperature_c", c.schedule.phase2_temperature_c, w);
  }
  read_key(j, "cell_sigma", c.cell_sigma, where);
  read_key(j, "capacity_noise_mAh", c.capacity_noise_mAh, where);
  read_key(j, "voltage_noise_v", c.voltage_noise_v, where);
  read_key(j, "end_of_life_soh", c.end_of_life_soh, where);
  read_key(j, "max_cycles", c.max_cycles, where);
  read_key(j, "charge_samples_per_hour", c.charge_samples_per_hour, where);
  read_key(j, "relax_minutes", c.relax_minutes, where);
  read_key(j, "relax_step_s", c.relax_step_s, where);
  read_key(j, "seed", c.seed, where);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Model

double synth_soh(const DegradationParams& d, double theta) {
  const double over = std::max(0.0, theta - d.knee_theta);
  return d.soh0 - d.sei_drop * (1.0 - std::exp(-theta / d.sei_tau)) - d.linear_rate * theta -
         d.knee_coeff * over * over;
}

double synth_aging_rate(const DegradationParams& d, const ConditionTriple& c) {
  const double charge = (1.0 - d.charge_rate_gain) + d.charge_rate_gain * c.charge_c_rate;
  const double discharge =
      (1.0 - d.discharge_rate_gain) + d.discharge_rate_gain * c.discharge_c_rate;
  return d.base_rate * charge * discharge * std::exp(d.temperature_gain * (c.temperature_c - 25.0));
}

Stage synth_stage(const DegradationParams& d, double theta) {
  if (theta < d.early_theta) return Stage::Early;
  if (theta < d.knee_theta) return Stage::Mid;
  return Stage::Late;
}

namespace {

// Open-circuit voltage template over SOC in [0, 1].
double ocv(double soc) { return 3.05 + 0.95 * soc + 0.15 * (1.0 - std::exp(-10.0 * soc)); }

struct CellState {
  double capacity_mAh;  // true capacity this cycle
  double resistance;
  double theta_ratio;   // theta / knee
};

void build_charge(CycleRecord& cycle, const SynthConfig& cfg, const CellState& cell, Rng& noise) {
  const double cutoff = cfg.chemistry.cutoff.max_v;
  const double nominal = cfg.chemistry.nominal_capacity_mAh;
  const double crate = cycle.condition.charge_c_rate;
  const double current = crate * nominal / 1000.0;
  const double ir = current * cell.resistance;
  const double dt = 3600.0 / (cfg.charge_samples_per_hour * crate);
  const double soc_rate = current / (3.6 * cell.capacity_mAh);
  double soc = 0.02 + 0.01 * cycle.condition.discharge_c_rate;

  auto terminal = [&](double s) { return ocv(s) + ir; };
  auto& pts = cycle.charge_points;
  double t = 0.0;
  double vmax = -1.0;
  auto push = [&](double time, double v, double amps) {
    if (cfg.voltage_noise_v > 0.0) v += noise.normal(0.0, cfg.voltage_noise_v);
    v = std::min(std::max(v, vmax), cutoff);
    vmax = v;
    pts.push_back({time, v, amps, 0.0});
  };
  while (terminal(soc + soc_rate * dt) < cutoff) {
    push(t, terminal(soc), current);
    soc += soc_rate * dt;
    t += dt;
  }
  push(t, terminal(soc), current);
  // Cutoff crossing: bisect the SOC at which the terminal voltage reaches it.
  double lo = soc, hi = std::max(soc + soc_rate * dt, soc);
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (terminal(mid) < cutoff ? lo : hi) = mid;
  }
  t += (hi - soc) / soc_rate;
  pts.push_back({t, cutoff, current, 0.0});
  vmax = cutoff;

  // Constant-voltage taper down to C/20.
  const double tau = 600.0 * (1.0 + 0.5 * cell.theta_ratio);
  const double end_current = 0.05 * nominal / 1000.0;
  const double duration = current > end_current ? tau * std::log(current / end_current) : 0.0;
  const double cv_dt = 60.0;
  const double t_cv = t;
  for (double s = cv_dt; s < duration; s += cv_dt) {
    pts.push_back({t_cv + s, cutoff, current * std::exp(-s / tau), 0.0});
  }
  if (duration > 0.0) pts.push_back({t_cv + duration, cutoff, end_current, 0.0});
  integrate_charge(pts);
}

void build_relaxation(CycleRecord& cycle, const SynthConfig& cfg, const CellState& cell,
                      Rng& noise) {
  const double cutoff = cfg.chemistry.cutoff.max_v;
  const double nominal_a = cfg.chemistry.nominal_capacity_mAh / 1000.0;
  const double plating = std::max(0.0, cell.theta_ratio - 1.0);
  const double amplitude = 1.5 * cell.resistance * nominal_a + 0.04 * plating;
  const double fast = 0.4 * amplitude;
  const double slow = amplitude - fast;
  const double tau_fast = 90.0;
  const double tau_slow = 900.0 * (1.0 + 0.3 * cell.theta_ratio);
  const double t0 = cycle.charge_points.back().time_s;
  const double window = cfg.relax_minutes * 60.0;
  const auto steps = static_cast<std::size_t>(std::ceil(window / cfg.relax_step_s - 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double s = std::min(window, static_cast<double>(k) * cfg.relax_step_s);
    double v = cutoff - amplitude + fast * std::exp(-s / tau_fast) + slow * std::exp(-s / tau_slow);
    if (cfg.voltage_noise_v > 0.0) v += noise.normal(0.0, cfg.voltage_noise_v);
    cycle.relax_points.push_back({t0 + s, v});
  }
}

std::string battery_name(const SynthConfig& cfg, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%03zu", index);
  return cfg.name + buf;
}

}  // namespace

SynthBattery gen_battery(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  const DegradationParams& d = cfg.degradation;
  Rng cell_rng = derive_stream(cfg.seed, "cell", index);
  Rng schedule_rng = derive_stream(cfg.seed, "schedule", index);
  Rng noise = derive_stream(cfg.seed, "noise", index);

  const double rate_factor = std::exp(cfg.cell_sigma * cell_rng.normal());
  const double r0 = cfg.chemistry.resistance_ohm * std::exp(cfg.cell_sigma * cell_rng.normal());
  DegradationParams cell_params = d;
  cell_params.soh0 = d.soh0 * (1.0 + 0.2 * cfg.cell_sigma * cell_rng.normal());

  SynthBattery out;
  BatterySeries& series = out.series;
  series.battery_id = battery_name(cfg, index);
  series.chemistry = cfg.chemistry.chemistry;
  series.nominal_capacity_mAh = cfg.chemistry.nominal_capacity_mAh;
  series.cutoff_voltage_v = cfg.chemistry.cutoff;

  const bool fixed = cfg.schedule.mode == ScheduleMode::Fixed;
  const ConditionTriple base =
      fixed ? cfg.schedule.conditions[index % cfg.schedule.conditions.size()] : cfg.schedule.phase1;
  series.condition_tag = fixed ? condition_tag_for(series.chemistry, base)
                               : to_string(series.chemistry) + "-TPSL";

  ConditionTriple phase2{1.0, 1.0, cfg.schedule.phase2_temperature_c};
  double theta = 0.0;
  for (std::size_t k = 1; k <= cfg.max_cycles; ++k) {
    ConditionTriple cond = base;
    if (!fixed && k > cfg.schedule.phase1_cycles) {
      if ((k - cfg.schedule.phase1_cycles - 1) % cfg.schedule.switch_every == 0) {
        const auto& cr = cfg.schedule.phase2_charge_rates;
        const auto& dr = cfg.schedule.phase2_discharge_rates;
        phase2.charge_c_rate = cr[schedule_rng.index(cr.size())];
        phase2.discharge_c_rate = dr[schedule_rng.index(dr.size())];
      }
      cond = phase2;
    }
    const double soh = synth_soh(cell_params, theta);
    const CellState cell{soh * series.nominal_capacity_mAh,
                         r0 * (1.0 + theta / d.knee_theta), theta / d.knee_theta};

    CycleRecord cycle;
    cycle.cycle_index = static_cast<int>(k);
    cycle.condition = cond;
    build_charge(cycle, cfg, cell, noise);
    build_relaxation(cycle, cfg, cell, noise);
    const double penalty = 1.0 - d.charge_capacity_penalty * (cond.charge_c_rate - 1.0) -
                           d.discharge_capacity_penalty * (cond.discharge_c_rate - 1.0);
    double measured = cell.capacity_mAh * penalty;
    if (cfg.capacity_noise_mAh > 0.0) measured += noise.normal(0.0, cfg.capacity_noise_mAh);
    cycle.max_discharge_capacity_mAh = measured;
    series.cycles.push_back(std::move(cycle));
    out.stages.push_back(synth_stage(d, theta));
    out.true_soh.push_back(soh);
    if (soh <= cfg.end_of_life_soh) break;
    theta += synth_aging_rate(d, cond) * rate_factor;
  }
  return out;
}

SynthFleet gen_fleet(const SynthConfig& cfg) {
  cfg.validate();
  SynthFleet fleet;
  fleet.dataset.name = cfg.name;
  fleet.dataset.condition_tag = cfg.schedule.mode == ScheduleMode::Fixed
                                    ? to_string(cfg.chemistry.chemistry) + "-UL"
                                    : to_string(cfg.chemistry.chemistry) + "-TPSL";
  for (std::size_t i = 0; i < cfg.n_batteries; ++i) {
    SynthBattery b = gen_battery(cfg, i);
    fleet.stages[b.series.battery_id] = std::move(b.stages);
    fleet.true_soh[b.series.battery_id] = std::move(b.true_soh);
    fleet.dataset.batteries.push_back(std::move(b.series));
  }
  return fleet;
}

}  // namespace pimoe
