#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crm/balance.hpp"
#include "crm/datagen.hpp"

namespace crm {

enum class DecompositionCase { binary, discrete_finite, continuous_poly, gaussian_linear };

std::string to_string(DecompositionCase c);
DecompositionCase parse_decomposition_case(std::string_view s);

// The weighted population estimate g_hat(t) = E[w(t, X) f(t, X) | T = t]
// against g(t) = E[f(t, X)], and the per-order terms c_k(t) eps_k(t).
struct Decomposition {
  double g_hat = 0.0;
  double g_true = 0.0;
  BalanceReport report;

  double direct_error() const { return g_hat - g_true; }
  double reconstructed() const { return report.reconstructed(); }
};

// A confounder distribution on a finite grid {0..V_d-1}^D at a fixed treatment.
// All vectors are indexed by mixed-radix cell (dimension 0 most significant).
struct FiniteProblem {
  std::vector<int> vocab;
  std::vector<double> p_x;          // P(X = x)
  std::vector<double> p_x_given_t;  // P(X = x | T = t)
  std::vector<double> f;            // f(t, x)
  std::vector<double> w;            // w_hat(t, x)
};

// Monomial coefficients c_a of f on the grid, via per-dimension Newton forward
// differences converted with signed Stirling numbers of the first kind.
// Indexed by exponent cell a in the same mixed radix (a_d < V_d).
std::vector<double> grid_monomial_coefficients(std::span<const double> f, std::span<const int> vocab);

// Exact decomposition over all monomials x^a = prod_d x_d^{a_d}; the order of
// an entry is its total degree. Terms above max_order are dropped
// (max_order < 0 keeps all). With a single binary confounder this is the
// c_0 = f(t,0), c_1 = f(t,1) - f(t,0) case.
Decomposition decompose_finite(const FiniteProblem& p, int max_order = -1);

// Discrete sequence DGP at treatment t by enumeration; w is an explicit table.
Decomposition decompose_discrete_seq(
    std::span<const int> t, const DiscreteSeqConfig& cfg,
    const std::function<double(std::span<const int>, std::span<const double>)>& w, int max_order = -1);

// Scalar X with f(t, x) = sum_k coeffs[k] x^k, X | T = t ~ N(cond_mean, cond_sd^2)
// and X ~ N(marg_mean, marg_sd^2); expectations by Gauss-Hermite quadrature.
struct GaussianPolyProblem {
  std::vector<double> coeffs;
  double cond_mean = 0.0, cond_sd = 1.0;
  double marg_mean = 0.0, marg_sd = 1.0;
  std::function<double(double)> w;  // x -> w_hat(t, x)
};

Decomposition decompose_continuous_poly(const GaussianPolyProblem& p, std::size_t nodes = 96);

// The linear-Gaussian DGP: c = (1 + 2t, 3), X | T = t ~ N(t/2, 1/2), X ~ N(0, 1).
Decomposition decompose_gaussian_linear(double t, const std::function<double(double, double)>& w,
                                        std::size_t nodes = 96);

}  // namespace crm
