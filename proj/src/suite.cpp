#include "crm/suite.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void apply_optimizer(const Config& c, const std::string& prefix, OptimizerConfig& o) {
  o.learning_rate = c.get_double(prefix + ".lr", o.learning_rate);
  o.epochs = static_cast<std::size_t>(c.get_int(prefix + ".epochs", static_cast<long long>(o.epochs)));
  o.batch_size = static_cast<std::size_t>(c.get_int(prefix + ".batch_size", static_cast<long long>(o.batch_size)));
  o.weight_decay = c.get_double(prefix + ".weight_decay", o.weight_decay);
  if (c.has(prefix + ".variant")) {
    const auto v = c.get(prefix + ".variant", "");
    if (v == "adam") {
      o.variant = OptimizerVariant::adam;
    } else if (v == "adamw") {
      o.variant = OptimizerVariant::adamw;
    } else {
      fail(ErrorKind::parse_error, prefix + ".variant must be adam or adamw");
    }
  }
}

}  // namespace

std::string to_string(DgpKind k) { return k == DgpKind::linear_gaussian ? "linear_gaussian" : "discrete_seq"; }

DgpKind parse_dgp(std::string_view s) {
  if (s == "linear_gaussian") return DgpKind::linear_gaussian;
  if (s == "discrete_seq") return DgpKind::discrete_seq;
  fail(ErrorKind::parse_error, "unknown dgp: " + std::string(s));
}

DataSpec DataSpec::from_config(const Config& c) {
  DataSpec s;
  s.dgp = parse_dgp(c.get("data.dgp", to_string(s.dgp)));
  s.n = static_cast<std::size_t>(c.get_int("data.n", static_cast<long long>(s.n)));
  s.lambda = c.get_double("data.lambda", s.lambda);
  if (c.has("data.treatment_vocab")) {
    s.treatment_vocab.clear();
    for (auto v : c.get_ints("data.treatment_vocab", {})) s.treatment_vocab.push_back(static_cast<int>(v));
  }
  if (c.has("data.split")) {
    const auto f = c.get_doubles("data.split", {});
    require(f.size() == 3, ErrorKind::parse_error, "data.split needs three fractions");
    s.split = {f[0], f[1], f[2]};
  }
  return s;
}

DiscreteSeqConfig discrete_config(const DataSpec& spec, std::uint64_t seed) {
  DiscreteSeqConfig cfg;
  cfg.n = spec.n;
  cfg.seed = stream_seed(seed, "datagen");
  cfg.confounding_strength = spec.lambda;
  require(spec.treatment_vocab.size() == cfg.treatment_vocab.size(), ErrorKind::invalid_argument,
          "the discrete DGP has three treatment positions");
  std::copy(spec.treatment_vocab.begin(), spec.treatment_vocab.end(), cfg.treatment_vocab.begin());
  return cfg;
}

Experiment make_experiment(const DataSpec& spec, std::uint64_t seed) {
  Experiment ex;
  const auto data_seed = stream_seed(seed, "datagen");
  if (spec.dgp == DgpKind::linear_gaussian) {
    LinearGaussianConfig cfg;
    cfg.n = spec.n;
    cfg.seed = data_seed;
    ex.data = gen_linear_gaussian(cfg);
    ex.truth = [](const Treatment& t) { return true_apo_linear(t.value); };
  } else {
    const auto cfg = discrete_config(spec, seed);
    ex.data = gen_discrete_seq(cfg);
    ex.discrete = cfg;
    ex.truth = [cfg](const Treatment& t) { return true_apo_discrete(t.tokens, cfg); };
  }
  split_by_treatment(ex.data, spec.split, stream_seed(seed, "split"));
  return ex;
}

PipelineConfig pipeline_from_config(const Config& c, EstimatorKind kind, int K, const Dataset& d,
                                    std::uint64_t seed) {
  auto p = PipelineConfig::defaults(kind, d);
  p.K = K;
  p.seed = seed;
  p.reg_strength = c.get_double("pipeline.reg_strength", p.reg_strength);
  p.balance_eval_order = static_cast<int>(c.get_int("pipeline.balance_eval_order", p.balance_eval_order));
  if (c.has("pipeline.hidden")) {
    p.hidden.clear();
    for (auto h : c.get_ints("pipeline.hidden", {})) {
      require(h > 0, ErrorKind::invalid_argument, "pipeline.hidden widths must be positive");
      p.hidden.push_back(static_cast<std::size_t>(h));
    }
  }
  const auto obj = c.get("pipeline.weight_objective", "per_treatment_group");
  if (obj == "per_treatment_group") {
    p.weight_options.objective = WeightObjective::per_treatment_group;
  } else if (obj == "marginal_batch") {
    p.weight_options.objective = WeightObjective::marginal_batch;
  } else {
    fail(ErrorKind::parse_error, "pipeline.weight_objective must be per_treatment_group or marginal_batch");
  }
  p.weight_options.scalar_bins =
      static_cast<std::size_t>(c.get_int("pipeline.scalar_bins", static_cast<long long>(p.weight_options.scalar_bins)));
  apply_optimizer(c, "nuisance", p.nuisance);
  apply_optimizer(c, "outcome", p.outcome);
  apply_optimizer(c, "apo", p.apo);
  return p;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = "estimator,K,n,lambda,seed,rel_mae,correlation,balance_total,wall_ms\n";
  for (const auto& r : rows) {
    s += r.estimator + ',' + std::to_string(r.K) + ',' + std::to_string(r.n) + ',' + csv::format(r.lambda) +
         ',' + std::to_string(r.seed) + ',' + csv::format(r.rel_mae) + ',' + csv::format(r.correlation) +
         ',' + csv::format(r.balance_total) + ',' + csv::format(r.wall_ms) + '\n';
  }
  return s;
}

std::vector<MetricsRow> parse_metrics_csv(std::string_view text) {
  const auto t = csv::parse(text);
  require(t.header == std::vector<std::string>{"estimator", "K", "n", "lambda", "seed", "rel_mae", "correlation",
                                               "balance_total", "wall_ms"},
          ErrorKind::parse_error, "metrics CSV: unexpected header");
  std::vector<MetricsRow> out;
  for (const auto& f : t.rows) {
    MetricsRow r;
    r.estimator = f[0];
    r.K = static_cast<int>(csv::to_int(f[1]));
    r.n = static_cast<std::size_t>(csv::to_int(f[2]));
    r.lambda = csv::to_double(f[3]);
    r.seed = static_cast<std::uint64_t>(csv::to_int(f[4]));
    r.rel_mae = csv::to_double(f[5]);
    r.correlation = csv::to_double(f[6]);
    r.balance_total = csv::to_double(f[7]);
    r.wall_ms = csv::to_double(f[8]);
    out.push_back(std::move(r));
  }
  return out;
}

SuiteConfig SuiteConfig::from_config(const Config& c) {
  SuiteConfig s;
  s.data = DataSpec::from_config(c);
  s.overrides = c;
  if (c.has("suite.estimators")) {
    s.estimators.clear();
    for (const auto& e : c.get_list("suite.estimators", {})) s.estimators.push_back(parse_estimator(e));
  }
  if (c.has("suite.K")) {
    s.Ks.clear();
    for (auto k : c.get_ints("suite.K", {})) s.Ks.push_back(static_cast<int>(k));
  }
  if (c.has("suite.n")) {
    s.ns.clear();
    for (auto n : c.get_ints("suite.n", {})) s.ns.push_back(static_cast<std::size_t>(n));
  } else {
    s.ns = {s.data.n};
  }
  s.lambdas = c.get_doubles("suite.lambda", {s.data.lambda});
  if (c.has("suite.seeds")) {
    s.seeds.clear();
    for (auto v : c.get_ints("suite.seeds", {})) s.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  s.timing = c.get_bool("suite.timing", false);
  require(!s.estimators.empty() && !s.Ks.empty() && !s.ns.empty() && !s.lambdas.empty() && !s.seeds.empty(),
          ErrorKind::invalid_argument, "suite axes must be nonempty");
  return s;
}

MetricsRow run_cell(const Experiment& ex, const DataSpec& spec, EstimatorKind kind, int K,
                    std::uint64_t seed, const Config& overrides, bool timing) {
  MetricsRow row;
  row.estimator = to_string(kind);
  row.K = K;
  row.n = spec.n;
  row.lambda = spec.lambda;
  row.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  const auto train = ex.data.rows(Split::train);
  const auto pcfg = pipeline_from_config(overrides, kind, K, ex.data, seed);
  const auto est = fit_estimator(ex.data, train, pcfg);
  const auto test = distinct_treatments(ex.data, ex.data.rows(Split::test));
  const auto ev = evaluate(est, ex.data, test, ex.truth);
  row.rel_mae = ev.rel_mae;
  row.correlation = ev.correlation;
  row.balance_total = ev.balance_total;
  if (timing) {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return row;
}

SuiteResult run_benchmark(const SuiteConfig& cfg) {
  SuiteResult res;
  for (std::size_t n : cfg.ns) {
    for (double lambda : cfg.lambdas) {
      for (std::uint64_t seed : cfg.seeds) {
        DataSpec spec = cfg.data;
        spec.n = n;
        spec.lambda = lambda;
        Experiment ex;
        std::string data_error;
        try {
          ex = make_experiment(spec, seed);
        } catch (const Error& e) {
          data_error = e.what();
        }
        for (auto kind : cfg.estimators) {
          for (int K : cfg.Ks) {
            MetricsRow row{to_string(kind), K, n, lambda, seed, kNaN, kNaN, kNaN, 0.0};
            try {
              if (!data_error.empty()) fail(ErrorKind::invalid_argument, data_error);
              row = run_cell(ex, spec, kind, K, seed, cfg.overrides, cfg.timing);
            } catch (const Error& e) {
              res.failures.push_back(row.estimator + ",K=" + std::to_string(K) + ",n=" + std::to_string(n) +
                                     ",lambda=" + csv::format(lambda) + ",seed=" + std::to_string(seed) + ": " +
                                     std::string(to_string(e.kind())) + ": " + e.what());
            }
            res.rows.push_back(row);
          }
        }
      }
    }
  }
  return res;
}

}  // namespace crm
