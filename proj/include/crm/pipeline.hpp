#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crm/balance.hpp"
#include "crm/estimators.hpp"

namespace crm {

enum class EstimatorKind { naive, oi, oi_crm, ipw_crm, sw_crm };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(std::string_view s);

struct PipelineConfig {
  EstimatorKind estimator = EstimatorKind::sw_crm;
  int K = 2;                  // balance order for weights / regularized propensities
  double reg_strength = 1.0;  // ipw_crm only; 0 gives plain maximum likelihood
  int balance_eval_order = 4; // order of the reported balance total
  std::vector<std::size_t> hidden{64, 64};
  OptimizerConfig nuisance;   // propensity or weight model
  OptimizerConfig outcome;
  OptimizerConfig apo;
  WeightTrainingOptions weight_options;
  std::uint64_t seed = 0;

  // Paper-analogous defaults for the dataset's treatment kind. Step budgets
  // are expressed as epochs of the aggregated or mini-batched design.
  static PipelineConfig defaults(EstimatorKind kind, const Dataset& d);
};

struct FittedEstimator {
  EstimatorKind kind = EstimatorKind::naive;
  int K = 0;
  std::optional<ApoModel> apo;
  std::optional<OutcomeModel> outcome;
  std::optional<PropensityModel> propensity;
  std::optional<WeightModel> weights;
  std::vector<std::size_t> population;  // rows averaged over by the OI estimator
  std::optional<CrmTargets> targets;
  std::size_t clamped_cells = 0;        // binary cell-mean targets clipped into [0, 1]
  double balance_total = 0.0;           // NaN when the estimator has no weights
  std::vector<double> nuisance_trace;   // per-epoch loss of the propensity/weight/outcome model
  std::vector<double> apo_trace;

  std::vector<double> predict(const Dataset& d, std::span<const Treatment> ts) const;
};

// Implied per-row weights: p_T / e for ipw_crm, w for sw_crm, 1 for naive;
// empty for the outcome-model estimators.
std::vector<double> estimator_weights(const FittedEstimator& est, const Dataset& d,
                                      std::span<const std::size_t> rows);

// w_hat(t, x) at arbitrary points: p_T(t) / max(e(t, x), floor) for ipw_crm
// (p_T over the stored population), w for sw_crm, 1 for naive.
using WeightFn = std::function<double(const Treatment&, std::span<const double>)>;
WeightFn estimator_weight_function(const FittedEstimator& est, const Dataset& d);

FittedEstimator fit_estimator(const Dataset& d, std::span<const std::size_t> train_rows,
                              const PipelineConfig& cfg);

// Checkpoints of every fitted component, loss traces (epoch,loss), the CRM
// targets and an "estimator" descriptor (kind, K, balance_total). The OI
// population is not stored; loading takes it from the dataset's train split.
void save_estimator(const FittedEstimator& est, const std::filesystem::path& dir);
FittedEstimator load_estimator(const std::filesystem::path& dir, const Dataset& d);

using TruthFn = std::function<double(const Treatment&)>;

struct Evaluation {
  std::vector<Treatment> treatments;
  std::vector<double> predicted;
  std::vector<double> truth;
  double rel_mae = 0.0;
  double correlation = 0.0;  // NaN when undefined (constant predictions)
  double balance_total = 0.0;
};

// Distinct treatments of the rows, in sorted order.
std::vector<Treatment> distinct_treatments(const Dataset& d, std::span<const std::size_t> rows);

Evaluation evaluate(const FittedEstimator& est, const Dataset& d, std::span<const Treatment> ts,
                    const TruthFn& truth);

}  // namespace crm
