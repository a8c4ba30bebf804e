#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/estimators.hpp"
#include "crm/loss.hpp"

namespace crm {

// marginal_batch: weighted view moments against unweighted view moments.
// per_treatment_group: moments within the rows whose treatment equals `at`.
// kernel_window: rows weighted by a Gaussian kernel in T around `at.value`
// (scalar treatments), bandwidth n^(-1/5) * std(T).
enum class BalanceMode { marginal_batch, per_treatment_group, kernel_window };

std::string to_string(BalanceMode m);
BalanceMode parse_balance_mode(std::string_view s);

struct BalanceQuery {
  BalanceMode mode = BalanceMode::marginal_batch;
  Treatment at;
};

// Order-k balancing error per confounder dimension (a single entry for k = 0).
// Weights are aligned with rows; the reference moments are over all rows.
std::vector<double> balance_error(const Dataset& d, std::span<const std::size_t> rows,
                                  std::span<const double> weights, int k, const BalanceQuery& q);

struct BalanceEntry {
  int order = 0;
  std::string dim;
  double epsilon = 0.0;
  double coefficient = 0.0;
  double contribution = 0.0;
};

struct BalanceReport {
  BalanceMode mode = BalanceMode::marginal_batch;
  int max_order = 0;
  std::vector<BalanceEntry> entries;
  std::vector<double> order_norm2;  // ||eps_k||^2 per order
  double total = 0.0;               // sum of order_norm2

  double reconstructed() const;  // sum of contributions
  void finalize();               // recomputes order_norm2 and total from entries

  // CSV: order,dim,epsilon,coefficient,contribution
  std::string to_csv() const;
  static BalanceReport from_csv(std::string_view text);
};

BalanceReport balance_report(const Dataset& d, std::span<const std::size_t> rows,
                             std::span<const double> weights, int max_order, const BalanceQuery& q);

// sum_k ||eps_k||^2 in marginal_batch mode.
double balance_regularizer(const Dataset& d, std::span<const std::size_t> rows,
                           std::span<const double> weights, int max_order);

// Group-size-weighted mean over the view's treatment groups of the
// per_treatment_group total through max_order.
double mean_group_balance(const Dataset& d, std::span<const std::size_t> rows,
                          std::span<const double> weights, int max_order);

// How the weight-training objective groups rows.
enum class WeightObjective { per_treatment_group, marginal_batch };

struct WeightTrainingOptions {
  WeightObjective objective = WeightObjective::per_treatment_group;
  std::size_t scalar_bins = 10;  // treatment quantile bins standing in for groups of scalar T
};

// Weight model trained on the balance objective alone.
WeightModel train_weights_balanced(const Dataset& d, std::span<const std::size_t> rows, int max_order,
                                   const Architecture& arch, const OptimizerConfig& opt,
                                   const WeightTrainingOptions& wopt = {},
                                   std::vector<double>* trace = nullptr);

// Likelihood plus reg_strength times the marginal-batch balance of the implied
// ratios p_T / e. reg_strength = 0 is plain maximum likelihood.
PropensityModel train_propensity_balanced(const Dataset& d, std::span<const std::size_t> rows,
                                          int max_order, double reg_strength,
                                          const Architecture& arch, const OptimizerConfig& opt,
                                          std::vector<double>* trace = nullptr);

}  // namespace crm
