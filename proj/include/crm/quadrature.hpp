#pragma once

#include <functional>
#include <vector>

namespace crm {

// Gauss-Hermite rule for the weight exp(-x^2), nodes ascending.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussHermite(std::size_t order);

  // E[h(Z)] for Z ~ N(mean, sd^2).
  double expect(const std::function<double(double)>& h, double mean, double sd) const;
};

}  // namespace crm
