#pragma once
// Independent reference computations used as test oracles. They are written
// from the model definitions directly and share no code with the library.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cubic confounder feature x + x^2 + 2x^3 feeding the discrete propensity logits.
inline double cubic(double x) { return x + x * x + 2.0 * x * x * x; }

inline double mu(const int* t, const double* x) {
  return 0.3 * t[0] + 0.2 * t[1] + 0.15 * t[2] + 0.4 * x[0] + 0.10 * x[1] + 0.25 * x[2] + 0.15 * x[3] +
         t[0] * x[0] + t[0] * x[0] * x[0] + t[0] * x[0] * x[0] * x[0];
}

// Per-position softmax probability of token `tok` with logit slope s * tok.
inline double softmax_at(double s, int tok, int vocab) {
  double z = 0.0;
  for (int v = 0; v < vocab; ++v) z += std::exp(s * v - s * (vocab - 1) * (s > 0));
  return std::exp(s * tok - s * (vocab - 1) * (s > 0)) / z;
}

inline double propensity(const int* t, const double* x, const int* tv, double lambda) {
  return softmax_at(lambda * cubic(x[0]), t[0], tv[0]) * softmax_at(-lambda * cubic(x[3]), t[1], tv[1]) *
         softmax_at(lambda * cubic(x[1]), t[2], tv[2]);
}

// All confounder cells of the (5,4,2,3) grid, dimension 0 most significant.
inline std::vector<std::vector<double>> confounder_grid() {
  std::vector<std::vector<double>> g;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 3; ++d) g.push_back({double(a), double(b), double(c), double(d)});
  return g;
}

inline double apo(const int* t) {
  double s = 0.0;
  const auto g = confounder_grid();
  for (const auto& x : g) s += sigmoid(mu(t, x.data()));
  return s / static_cast<double>(g.size());
}

inline double marginal(const int* t, const int* tv, double lambda) {
  double s = 0.0;
  const auto g = confounder_grid();
  for (const auto& x : g) s += propensity(t, x.data(), tv, lambda);
  return s / static_cast<double>(g.size());
}

// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 4000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double normal_pdf(double x, double m, double sd) {
  const double z = (x - m) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

}  // namespace oracle
