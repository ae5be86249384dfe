#include "pimoe/features.hpp"

#include <algorithm>
#include <cmath>

#include "pimoe/error.hpp"

namespace pimoe {

StatFeatures stat_features(std::span<const double> x) {
  require(x.size() >= 2, ErrorCode::InsufficientData, "statistics need at least two values");
  const double n = static_cast<double>(x.size());
  StatFeatures s;
  s.max = *std::max_element(x.begin(), x.end());
  s.min = *std::min_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / n;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.var = ss / (n - 1.0);
  if (s.var <= 0.0) return s;

  const double sd = std::sqrt(s.var);
  double m3 = 0.0;
  double m4 = 0.0;
  for (double v : x) {
    const double z = (v - s.mean) / sd;
    const double z2 = z * z;
    m3 += z2 * z;
    m4 += z2 * z2;
  }
  s.skew = m3 / n;
  s.kurt = m4 / n - 3.0;
  return s;
}

double q_at_dv(const ChargeCurve& curve, double v_start, double dv) {
  require(dv >= 0.0, ErrorCode::InvalidArgument, "dv must be non-negative");
  require(v_start + dv <= curve.max_voltage(), ErrorCode::OutOfRange,
          "window [" + std::to_string(v_start) + ", " + std::to_string(v_start + dv) +
              "] exceeds the cutoff voltage");
  return curve.charge_at(v_start + dv) - curve.charge_at(v_start);
}

double q_at_dv(const CycleRecord& cycle, double v_start, double dv) {
  return q_at_dv(ChargeCurve(cycle), v_start, dv);
}

double dv_at_dq(const ChargeCurve& curve, double v_start, double dq) {
  require(dq >= 0.0, ErrorCode::InvalidArgument, "dq must be non-negative");
  const double base = curve.charge_at(v_start);
  require(base + dq <= curve.total_charge(), ErrorCode::OutOfRange,
          "only " + std::to_string(curve.total_charge() - base) + " mAh remain above " +
              std::to_string(v_start) + " V");
  if (dq == 0.0) return 0.0;
  return curve.voltage_at(base + dq) - v_start;
}

double dv_at_dq(const CycleRecord& cycle, double v_start, double dq) {
  return dv_at_dq(ChargeCurve(cycle), v_start, dq);
}

std::vector<double> assemble_features(const ChargeVector& charge, const ChargeCurve& curve,
                                      const RelaxVector* relax, FeatureMode mode,
                                      double q_window_v, double dv_window_mAh) {
  require((mode == FeatureMode::Full12) == (relax != nullptr), ErrorCode::InvalidArgument,
          "relaxation vector must be supplied exactly when the feature mode is full12");
  std::vector<double> features;
  features.reserve(feature_count(mode));
  if (relax != nullptr) {
    const StatFeatures r = stat_features(relax->values_v);
    features.insert(features.end(), {r.max, r.mean, r.min, r.var, r.skew, r.kurt});
  }
  const StatFeatures c = stat_features(charge.segment_values());
  features.insert(features.end(), {c.max, c.mean, c.var, c.kurt});
  features.push_back(q_at_dv(curve, charge.v_start_v, q_window_v));
  features.push_back(dv_at_dq(curve, charge.v_start_v, dv_window_mAh));
  for (double f : features) {
    require(std::isfinite(f), ErrorCode::MalformedCycle, "non-finite feature value");
  }
  return features;
}

}  // namespace pimoe
