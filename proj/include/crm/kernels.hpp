#pragma once

#include <span>
#include <vector>

#include "crm/model.hpp"

// Data-parallel kernels. The default versions split rows into fixed-size
// blocks, run blocks under OpenMP, and combine per-block partials in block
// order, so results do not depend on the thread count. The serial:: versions
// are straightforward row-by-row references kept for testing and benchmarks.
namespace crm::kernels {

inline constexpr std::size_t kBlockRows = 64;

// Raw network outputs, one row per entry of `rows` (indices into `features`).
Matrix forward(const ParamModel& m, const Matrix& features, std::span<const std::size_t> rows);

// Accumulated parameter gradient: sum_i dout_i . d out_i / d params.
std::vector<double> backward(const ParamModel& m, const Matrix& features,
                             std::span<const std::size_t> rows, const Matrix& dout);

// Deterministic blocked sum.
double sum(std::span<const double> v);

// out[i] = sum_j c_j N(t_i; mu_j, exp(log_sigma_j)) / sum_j c_j
std::vector<double> gaussian_mixture(std::span<const double> t, std::span<const double> mu,
                                     std::span<const double> log_sigma,
                                     std::span<const double> weight);

// out[i] = sum_j c_j prod_pos probs_j[pos][tokens_i[pos]] / sum_j c_j, where
// probs is (n_components x sum(vocab)) and tokens is (n_queries x positions).
std::vector<double> categorical_mixture(std::span<const int> tokens, std::span<const int> vocab,
                                        const Matrix& probs, std::span<const double> weight);

namespace serial {

Matrix forward(const ParamModel& m, const Matrix& features, std::span<const std::size_t> rows);
std::vector<double> backward(const ParamModel& m, const Matrix& features,
                             std::span<const std::size_t> rows, const Matrix& dout);
double sum(std::span<const double> v);
std::vector<double> gaussian_mixture(std::span<const double> t, std::span<const double> mu,
                                     std::span<const double> log_sigma,
                                     std::span<const double> weight);
std::vector<double> categorical_mixture(std::span<const int> tokens, std::span<const int> vocab,
                                        const Matrix& probs, std::span<const double> weight);

}  // namespace serial
}  // namespace crm::kernels
