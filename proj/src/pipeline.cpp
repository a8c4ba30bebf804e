#include "crm/pipeline.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>

#include "crm/config.hpp"
#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/metrics.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Architecture with_hidden(Architecture a, const std::vector<std::size_t>& hidden) {
  if (!a.hidden.empty()) a.hidden = hidden;
  return a;
}

OptimizerConfig seeded(OptimizerConfig o, std::uint64_t root, std::string_view stream) {
  o.seed = stream_seed(root, stream);
  return o;
}

double total_balance(const Dataset& d, std::span<const std::size_t> rows, std::span<const double> w,
                     int order) {
  if (d.treatment_kind == TreatmentKind::token_sequence) return mean_group_balance(d, rows, w, order);
  return balance_regularizer(d, rows, w, order);
}

}  // namespace

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::naive: return "naive";
    case EstimatorKind::oi: return "oi";
    case EstimatorKind::oi_crm: return "oi_crm";
    case EstimatorKind::ipw_crm: return "ipw_crm";
    case EstimatorKind::sw_crm: return "sw_crm";
  }
  return "naive";
}

EstimatorKind parse_estimator(std::string_view s) {
  for (auto k : {EstimatorKind::naive, EstimatorKind::oi, EstimatorKind::oi_crm, EstimatorKind::ipw_crm,
                 EstimatorKind::sw_crm}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorKind::parse_error, "unknown estimator: " + std::string(s));
}

PipelineConfig PipelineConfig::defaults(EstimatorKind kind, const Dataset& d) {
  PipelineConfig c;
  c.estimator = kind;
  if (d.treatment_kind == TreatmentKind::token_sequence) {
    c.K = 2;
    c.balance_eval_order = 4;
    for (auto* o : {&c.nuisance, &c.outcome, &c.apo}) {
      o->variant = OptimizerVariant::adamw;
      o->learning_rate = 1e-3;
      o->weight_decay = 0.01;
      o->batch_size = 0;
    }
    c.nuisance.epochs = 2000;
    c.outcome.epochs = 3000;
    c.apo.epochs = 3000;
  } else {
    c.K = 1;
    c.balance_eval_order = 1;
    for (auto* o : {&c.nuisance, &c.outcome, &c.apo}) {
      o->variant = OptimizerVariant::adam;
      o->weight_decay = 0.0;
    }
    // About 2000 mini-batch steps for the propensity/weight network.
    const std::size_t n = std::max<std::size_t>(1, d.rows(Split::train).size());
    c.nuisance.learning_rate = 1e-3;
    c.nuisance.batch_size = std::min<std::size_t>(256, n);
    const std::size_t per_epoch = (n + c.nuisance.batch_size - 1) / c.nuisance.batch_size;
    c.nuisance.epochs = (2000 + per_epoch - 1) / per_epoch;
    c.outcome.learning_rate = 1e-2;
    c.outcome.epochs = 2000;
    c.apo.learning_rate = 1e-2;
    c.apo.epochs = 2000;
  }
  return c;
}

std::vector<double> FittedEstimator::predict(const Dataset& d, std::span<const Treatment> ts) const {
  if (kind == EstimatorKind::oi) {
    std::vector<double> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(oi_classical(*outcome, d, population, t));
    return out;
  }
  return apo->predict(ts);
}

std::vector<double> estimator_weights(const FittedEstimator& est, const Dataset& d,
                                      std::span<const std::size_t> rows) {
  switch (est.kind) {
    case EstimatorKind::naive: return std::vector<double>(rows.size(), 1.0);
    case EstimatorKind::sw_crm: return est.weights->at_rows(d, rows);
    case EstimatorKind::ipw_crm: {
      std::vector<Treatment> ts;
      for (std::size_t r : rows) ts.push_back(d.treatment(r));
      auto e = est.propensity->at_rows(d, rows);
      const auto m = est.propensity->marginal(d, rows, ts);
      for (std::size_t a = 0; a < e.size(); ++a) e[a] = m[a] / std::max(e[a], kPropensityFloor);
      return e;
    }
    default: return {};
  }
}

WeightFn estimator_weight_function(const FittedEstimator& est, const Dataset& d) {
  switch (est.kind) {
    case EstimatorKind::naive: return [](const Treatment&, std::span<const double>) { return 1.0; };
    case EstimatorKind::sw_crm: {
      const WeightModel w = *est.weights;
      return [w](const Treatment& t, std::span<const double> x) { return w.at(t, x); };
    }
    case EstimatorKind::ipw_crm: {
      const PropensityModel e = *est.propensity;
      const auto& pop = est.population;
      auto cache = std::make_shared<std::map<Treatment, double>>();
      return [e, &d, pop, cache](const Treatment& t, std::span<const double> x) {
        auto it = cache->find(t);
        if (it == cache->end()) {
          const Treatment q[1] = {t};
          it = cache->emplace(t, e.marginal(d, pop, q)[0]).first;
        }
        return it->second / std::max(e.at(t, x), kPropensityFloor);
      };
    }
    default: fail(ErrorKind::invalid_argument, to_string(est.kind) + " has no weights");
  }
}

FittedEstimator fit_estimator(const Dataset& d, std::span<const std::size_t> train_rows,
                              const PipelineConfig& cfg) {
  require(!train_rows.empty(), ErrorKind::invalid_argument, "no training rows");
  FittedEstimator est;
  est.kind = cfg.estimator;
  est.K = cfg.K;
  est.population.assign(train_rows.begin(), train_rows.end());
  const auto apo_arch = with_hidden(ApoModel::default_architecture(d), cfg.hidden);
  const auto apo_opt = seeded(cfg.apo, cfg.seed, "apo");

  switch (cfg.estimator) {
    case EstimatorKind::naive:
      est.targets = make_naive_targets(d, train_rows);
      break;
    case EstimatorKind::oi:
    case EstimatorKind::oi_crm: {
      est.outcome = fit_outcome(d, train_rows, with_hidden(OutcomeModel::default_architecture(d), cfg.hidden),
                                seeded(cfg.outcome, cfg.seed, "outcome"), &est.nuisance_trace);
      if (cfg.estimator == EstimatorKind::oi) {
        est.balance_total = kNaN;
        return est;
      }
      est.targets = make_oi_crm_targets(d, train_rows, *est.outcome, train_rows);
      break;
    }
    case EstimatorKind::ipw_crm: {
      est.propensity = train_propensity_balanced(
          d, train_rows, cfg.K, cfg.reg_strength,
          with_hidden(PropensityModel::default_architecture(d), cfg.hidden),
          seeded(cfg.nuisance, cfg.seed, "nuisance"), &est.nuisance_trace);
      est.targets = make_ipw_crm_targets(d, train_rows, *est.propensity, kPropensityFloor, false);
      break;
    }
    case EstimatorKind::sw_crm: {
      est.weights = train_weights_balanced(d, train_rows, cfg.K,
                                           with_hidden(WeightModel::default_architecture(d), cfg.hidden),
                                           seeded(cfg.nuisance, cfg.seed, "nuisance"), cfg.weight_options,
                                           &est.nuisance_trace);
      est.targets = make_sw_crm_targets(d, train_rows, *est.weights, false);
      break;
    }
  }
  est.apo = fit_apo(*est.targets, d, apo_arch, apo_opt, &est.apo_trace, &est.clamped_cells);
  if (cfg.estimator == EstimatorKind::oi_crm) {
    est.balance_total = kNaN;
  } else {
    const auto w = estimator_weights(est, d, train_rows);
    est.balance_total = total_balance(d, train_rows, w, cfg.balance_eval_order);
  }
  return est;
}

void save_estimator(const FittedEstimator& est, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  csv::write_text(dir / "estimator",
                  "kind=" + to_string(est.kind) + "\nK=" + std::to_string(est.K) + "\nbalance_total=" + csv::format(est.balance_total) + "\n");
  const auto write_trace = [&](const std::vector<double>& t, const char* name) {
    if (t.empty()) return;
    std::string s = "epoch,loss\n";
    for (std::size_t e = 0; e < t.size(); ++e) s += std::to_string(e) + ',' + csv::format(t[e]) + '\n';
    csv::write_text(dir / name, s);
  };
  write_trace(est.nuisance_trace, "trace_nuisance.csv");
  write_trace(est.apo_trace, "trace_apo.csv");
  if (est.targets) est.targets->write_csv(dir / "targets.csv");
  if (est.apo) save_checkpoint(est.apo->net, dir / "apo.ckpt");
  if (est.outcome) save_checkpoint(est.outcome->net, dir / "outcome.ckpt");
  if (est.propensity) save_checkpoint(est.propensity->net, dir / "propensity.ckpt");
  if (est.weights) save_checkpoint(est.weights->net, dir / "weights.ckpt");
}

FittedEstimator load_estimator(const std::filesystem::path& dir, const Dataset& d) {
  const auto desc = Config::load(dir / "estimator");
  require(desc.has("kind"), ErrorKind::parse_error, "estimator descriptor: missing kind");
  FittedEstimator est;
  est.kind = parse_estimator(desc.get("kind", ""));
  est.K = static_cast<int>(desc.get_int("K", 0));
  est.balance_total = csv::to_double(desc.get("balance_total", "nan"));
  est.population = d.rows(Split::train);
  switch (est.kind) {
    case EstimatorKind::oi:
      est.outcome = OutcomeModel{load_checkpoint(dir / "outcome.ckpt")};
      return est;
    case EstimatorKind::oi_crm:
      est.outcome = OutcomeModel{load_checkpoint(dir / "outcome.ckpt")};
      break;
    case EstimatorKind::ipw_crm:
      est.propensity = PropensityModel{load_checkpoint(dir / "propensity.ckpt")};
      break;
    case EstimatorKind::sw_crm:
      est.weights = WeightModel{load_checkpoint(dir / "weights.ckpt")};
      break;
    case EstimatorKind::naive:
      break;
  }
  est.apo = ApoModel{load_checkpoint(dir / "apo.ckpt")};
  return est;
}

std::vector<Treatment> distinct_treatments(const Dataset& d, std::span<const std::size_t> rows) {
  std::set<Treatment> s;
  for (std::size_t r : rows) s.insert(d.treatment(r));
  return {s.begin(), s.end()};
}

Evaluation evaluate(const FittedEstimator& est, const Dataset& d, std::span<const Treatment> ts,
                    const TruthFn& truth) {
  Evaluation ev;
  ev.treatments.assign(ts.begin(), ts.end());
  ev.predicted = est.predict(d, ts);
  for (const auto& t : ts) ev.truth.push_back(truth(t));
  ev.rel_mae = relative_mae(ev.predicted, ev.truth);
  try {
    ev.correlation = correlation(ev.predicted, ev.truth);
  } catch (const Error&) {
    ev.correlation = kNaN;
  }
  ev.balance_total = est.balance_total;
  return ev;
}

}  // namespace crm
