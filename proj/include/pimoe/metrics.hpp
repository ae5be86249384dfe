#pragma once

#include <span>

namespace pimoe {

struct MetricTriple {
  double rmse = 0.0;
  double mape_percent = 0.0;
  /// NaN with r2_defined == false when the truth has zero variance.
  double r2 = 0.0;
  double mae = 0.0;
  bool r2_defined = true;
};

/// Throws ShapeError on length mismatch or empty input and InvalidArgument
/// when a truth value is not positive (MAPE is undefined there).
MetricTriple compute_metrics(std::span<const double> prediction, std::span<const double> truth);

}  // namespace pimoe
