#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pimoe/preprocess.hpp"

namespace pimoe {

struct StatFeatures {
  double max = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double var = 0.0;
  double skew = 0.0;
  double kurt = 0.0;
};

/// Variance uses the n-1 denominator; skewness and excess kurtosis average
/// over n but standardise by the square root of that same n-1 variance.
/// Zero variance yields skew = kurt = 0.
StatFeatures stat_features(std::span<const double> x);

/// Charge accepted between v_start and v_start + dv.
double q_at_dv(const ChargeCurve& curve, double v_start, double dv = 0.05);
double q_at_dv(const CycleRecord& cycle, double v_start, double dv = 0.05);

/// Voltage rise needed to accept `dq` mAh from v_start.
double dv_at_dq(const ChargeCurve& curve, double v_start, double dq = 200.0);
double dv_at_dq(const CycleRecord& cycle, double v_start, double dq = 200.0);

/// Layout (Full12):
///   0 relax max, 1 relax mean, 2 relax min, 3 relax var, 4 relax skew,
///   5 relax kurt, 6 charge max, 7 charge mean, 8 charge var, 9 charge kurt,
///   10 Q_0.05, 11 dV_200.
/// ChargeOnly6 keeps entries 6..11. Charge statistics run over the n
/// segment values of the charge vector.
std::vector<double> assemble_features(const ChargeVector& charge, const ChargeCurve& curve,
                                      const RelaxVector* relax, FeatureMode mode,
                                      double q_window_v = 0.05, double dv_window_mAh = 200.0);

}  // namespace pimoe
