#include "pimoe/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pimoe/error.hpp"

namespace pimoe {

MetricTriple compute_metrics(std::span<const double> prediction, std::span<const double> truth) {
  require(prediction.size() == truth.size(), ErrorCode::ShapeError,
          "prediction has " + std::to_string(prediction.size()) + " values, truth " +
              std::to_string(truth.size()));
  require(!truth.empty(), ErrorCode::ShapeError, "metrics need at least one value");
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double s : truth) mean += s;
  mean /= n;
  double sse = 0.0, sae = 0.0, ape = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] > 0.0, ErrorCode::InvalidArgument, "MAPE needs positive truth values");
    const double e = prediction[i] - truth[i];
    sse += e * e;
    sae += std::abs(e);
    ape += std::abs(e) / truth[i];
    sst += (truth[i] - mean) * (truth[i] - mean);
  }
  MetricTriple m;
  m.rmse = std::sqrt(sse / n);
  m.mae = sae / n;
  m.mape_percent = 100.0 * ape / n;
  if (sst > 0.0) {
    m.r2 = 1.0 - sse / sst;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = false;
  }
  return m;
}

}  // namespace pimoe
