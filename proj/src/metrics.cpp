#include "crm/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "crm/error.hpp"

namespace crm {

double relative_mae(std::span<const double> predicted, std::span<const double> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::shape_mismatch,
          "relative_mae: inputs must have equal nonzero length");
  double err = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    err += std::abs(predicted[i] - truth[i]);
    mag += std::abs(truth[i]);
  }
  require(mag > 0.0, ErrorKind::invalid_argument, "relative_mae: truth has zero mean magnitude");
  return err / mag;
}

double correlation(std::span<const double> predicted, std::span<const double> truth) {
  require(predicted.size() == truth.size() && truth.size() >= 2, ErrorKind::shape_mismatch,
          "correlation: inputs must have equal length >= 2");
  const auto n = static_cast<double>(truth.size());
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mp += predicted[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double a = predicted[i] - mp, b = truth[i] - mt;
    spp += a * a;
    stt += b * b;
    spt += a * b;
  }
  require(spp > 0.0, ErrorKind::invalid_argument, "correlation: predicted values are constant");
  require(stt > 0.0, ErrorKind::invalid_argument, "correlation: true values are constant");
  // Rounding can push the ratio a few ulps past +-1.
  return std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
}

}  // namespace crm
