#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crm/dataset.hpp"
#include "crm/model.hpp"
#include "crm/optim.hpp"

namespace crm {

// e(t, x): Gaussian head (mean, log-scale) for scalar treatments, per-position
// categorical logits for token treatments. Input is the confounders only.
struct PropensityModel {
  ParamModel net;

  static Architecture default_architecture(const Dataset& d);

  // e(T_i, X_i) for each listed row.
  std::vector<double> at_rows(const Dataset& d, std::span<const std::size_t> rows) const;
  // e(t, x) at an arbitrary point.
  double at(const Treatment& t, std::span<const double> x) const;
  // p_T(t) = (1/n) sum_j e(t, X_j) over the population rows, for each query.
  std::vector<double> marginal(const Dataset& d, std::span<const std::size_t> population,
                               std::span<const Treatment> queries) const;
};

// w(t, x) > 0 through a softplus head.
struct WeightModel {
  ParamModel net;

  static Architecture default_architecture(const Dataset& d);
  std::vector<double> at_rows(const Dataset& d, std::span<const std::size_t> rows) const;
  double at(const Treatment& t, std::span<const double> x) const;
};

// f(t, x); sigmoid head for binary outcomes.
struct OutcomeModel {
  ParamModel net;

  static Architecture default_architecture(const Dataset& d);
  std::vector<double> at_rows(const Dataset& d, std::span<const std::size_t> rows) const;
  // f(t, X_j) for every population row.
  std::vector<double> at_treatment(const Dataset& d, std::span<const std::size_t> population,
                                   const Treatment& t) const;
};

// g(t), a function of the treatment alone.
struct ApoModel {
  ParamModel net;

  static Architecture default_architecture(const Dataset& d);
  std::vector<double> predict(std::span<const Treatment> ts) const;
};

// Applies the head transform (identity, sigmoid, softplus) to a raw output column.
std::vector<double> apply_head(Head h, const Matrix& out);

// (1/n) sum_i Y_i 1[T_i = t] / e_i, with e_i = e(T_i, X_i) aligned with rows.
double ipw_classical(const Dataset& d, std::span<const std::size_t> rows,
                     std::span<const double> propensity, const Treatment& t);

// (1/n) sum_j f(t, X_j).
double oi_classical(const OutcomeModel& f, const Dataset& d, std::span<const std::size_t> population,
                    const Treatment& t);

enum class TargetKind { naive, ipw_crm, sw_crm, oi_crm };
std::string to_string(TargetKind k);

inline constexpr double kPropensityFloor = 1e-3;

// Per-row regression targets aligned with `rows`. Binary outcomes carry the
// probability q of the pair [1 - q, q].
struct CrmTargets {
  TargetKind provenance = TargetKind::naive;
  std::string nuisance;
  std::vector<std::size_t> rows;
  std::vector<double> values;
  bool pairs = false;
  std::size_t clamped = 0;  // pairs clipped into [0, 1]
  std::size_t floored = 0;  // propensities raised to the floor

  void write_csv(const std::filesystem::path& path) const;
};

CrmTargets make_naive_targets(const Dataset& d, std::span<const std::size_t> rows);

// Targets (p_T(T_i) / max(e_i, floor)) Y_i from per-row propensities and
// marginals. With clamp_pairs, binary targets are clipped into [0, 1] row by
// row; otherwise they are left raw for fit_apo to clip after aggregation.
CrmTargets make_ipw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                                std::span<const double> propensity, std::span<const double> marginal,
                                double floor = kPropensityFloor, bool clamp_pairs = true);
// Same, evaluating the model on the rows themselves (population = rows).
CrmTargets make_ipw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                                const PropensityModel& e, double floor = kPropensityFloor,
                                bool clamp_pairs = true);

CrmTargets make_sw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               std::span<const double> weights, bool clamp_pairs = true);
CrmTargets make_sw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               const WeightModel& w, bool clamp_pairs = true);

// Target for row i: (1/n) sum_j f(T_i, X_j) over the population rows.
CrmTargets make_oi_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               const OutcomeModel& f, std::span<const std::size_t> population);

// Minimizes squared error (real outcomes) or cross-entropy against target
// pairs (binary outcomes) over treatment-only inputs. Rows sharing a
// treatment are aggregated into one cell carrying their mean target, which
// leaves the gradient unchanged. Binary cell means outside [0, 1] are clipped
// and counted in *clamped_cells.
ApoModel fit_apo(const CrmTargets& targets, const Dataset& d, const Architecture& arch,
                 const OptimizerConfig& opt, std::vector<double>* trace = nullptr,
                 std::size_t* clamped_cells = nullptr);

// Nuisance training by maximum likelihood / regression.
PropensityModel fit_propensity(const Dataset& d, std::span<const std::size_t> rows,
                               const Architecture& arch, const OptimizerConfig& opt,
                               std::vector<double>* trace = nullptr);
OutcomeModel fit_outcome(const Dataset& d, std::span<const std::size_t> rows, const Architecture& arch,
                         const OptimizerConfig& opt, std::vector<double>* trace = nullptr);

}  // namespace crm
