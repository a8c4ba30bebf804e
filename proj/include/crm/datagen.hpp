#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crm/dataset.hpp"

namespace crm {

// X ~ N(0,1); T | X ~ N(X, 1); Y = 1 + 2T + 3X + eps, eps ~ N(0,1).
struct LinearGaussianConfig {
  std::size_t n = 10000;
  std::uint64_t seed = 0;

  static constexpr double intercept = 1.0;
  static constexpr double treatment_coef = 2.0;
  static constexpr double confounder_coef = 3.0;
  static constexpr double noise_sd = 1.0;

  void validate() const;
};

Dataset gen_linear_gaussian(const LinearGaussianConfig& cfg);

// g(t) = 1 + 2t + 3 E[X], E[X] = 0.
double true_apo_linear(double t);

// Density of T | X = x, i.e. N(t; x, 1).
double true_propensity_linear(double t, double x);

// Length-4 confounders and length-3 token treatments with the logit and
// outcome structure of the discrete sequence benchmark.
struct DiscreteSeqConfig {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  std::array<int, 4> confounder_vocab{5, 4, 2, 3};
  std::array<int, 3> treatment_vocab{4, 2, 2};
  double confounding_strength = 1.0;  // multiplies every propensity logit

  void validate() const;
  std::size_t num_confounder_cells() const;
  std::size_t num_treatments() const;
};

// The 64-treatment variant used for the model-size ablation.
DiscreteSeqConfig discrete_seq_64(std::size_t n, std::uint64_t seed);

Dataset gen_discrete_seq(const DiscreteSeqConfig& cfg);

// Conditional outcome logit mu(t, x).
double discrete_outcome_logit(std::span<const int> t, std::span<const double> x);

double true_propensity_discrete(std::span<const int> t, std::span<const double> x,
                                const DiscreteSeqConfig& cfg);

// Per-position softmax probabilities p_j(. | x), concatenated over positions.
std::vector<double> discrete_token_probs(std::span<const double> x, const DiscreteSeqConfig& cfg);

// (1/|X|) sum_x sigmoid(mu(t, x)); independent of confounding strength.
double true_apo_discrete(std::span<const int> t, const DiscreteSeqConfig& cfg);

// Marginal treatment probability p_T(t) by enumeration over the confounder grid.
double true_marginal_discrete(std::span<const int> t, const DiscreteSeqConfig& cfg);

// All confounder cells in mixed-radix order, as real-valued rows.
std::vector<std::vector<double>> enumerate_confounders(const DiscreteSeqConfig& cfg);
std::vector<std::vector<int>> enumerate_treatments(std::span<const int> vocab);

// Assigns split tags so that no treatment value appears in two splits.
// Continuous treatments are distinct almost surely, giving a row-level split.
void split_by_treatment(Dataset& d, std::array<double, 3> fractions, std::uint64_t seed);

// Explicit mu(t, x) grid with a confounder marginal.
struct OutcomeTable {
  std::vector<std::vector<int>> treatments;
  std::vector<int> confounder_bins;
  std::vector<double> probs;         // |T| x |X| row-major
  std::vector<double> marginal;      // |X|, sums to 1
  std::vector<double> propensity;    // optional |T| x |X|, p(t | x); empty = uniform

  std::size_t num_treatments() const { return treatments.size(); }
  std::size_t num_bins() const { return confounder_bins.size(); }
  double prob(std::size_t t, std::size_t k) const { return probs[t * num_bins() + k]; }
  std::size_t treatment_index(std::span<const int> t) const;

  void validate() const;
  bool operator==(const OutcomeTable&) const = default;
};

// Table CSV: t_id,tok_0..tok_{m-1},x_bin,prob[,propensity]; marginal CSV: x_bin,p.
OutcomeTable load_outcome_table(const std::filesystem::path& table_path,
                                const std::filesystem::path& marginal_path);
void write_outcome_table(const OutcomeTable& table, const std::filesystem::path& table_path,
                         const std::filesystem::path& marginal_path);

Dataset gen_from_table(const OutcomeTable& table, std::size_t n, std::uint64_t seed);

// sum_k P(X = k) mu(t, k)
double true_apo_from_table(const OutcomeTable& table, std::span<const int> t);

}  // namespace crm
