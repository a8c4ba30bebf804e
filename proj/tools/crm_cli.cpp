// crm: generate, train, evaluate, decompose, project and bench from a flat config.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "crm/config.hpp"
#include "crm/csv.hpp"
#include "crm/decompose.hpp"
#include "crm/error.hpp"
#include "crm/projection.hpp"
#include "crm/rng.hpp"
#include "crm/suite.hpp"

namespace fs = std::filesystem;
using namespace crm;

namespace {

constexpr const char* kAllEstimators = "naive,oi,oi_crm,ipw_crm,sw_crm";

struct Run {
  std::string command;
  Config config;
  std::uint64_t seed = 0;
  fs::path out;
  bool quiet = false;

  void log(const std::string& msg) const {
    if (!quiet) std::cout << msg << '\n';
  }
  fs::path data_path() const { return config.get("data.path", (out / "data.csv").string()); }
  fs::path truth_path() const { return config.get("data.truth", (out / "truth.csv").string()); }
  fs::path model_dir(EstimatorKind k) const { return out / "models" / to_string(k); }
  std::vector<EstimatorKind> estimators(const std::string& key) const {
    std::vector<EstimatorKind> ks;
    for (const auto& s : config.get_list(key, config.get_list("train.estimators", csv::split(kAllEstimators)))) {
      ks.push_back(parse_estimator(s));
    }
    return ks;
  }
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Every file under the output directory with its FNV-1a checksum, sorted by path.
void write_manifest(const Run& run) {
  std::map<std::string, std::string> sums;
  for (const auto& e : fs::recursive_directory_iterator(run.out)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), run.out).generic_string();
    if (rel == "manifest") continue;
    sums[rel] = hex(fnv1a(csv::read_text(e.path())));
  }
  std::string s = "command=" + run.command + "\nconfig_hash=" + hex(run.config.hash()) +
                  "\nseed=" + std::to_string(run.seed) + '\n';
  for (const auto& [path, sum] : sums) s += "artifact=" + path + ' ' + sum + '\n';
  csv::write_text(run.out / "manifest", s);
}

std::map<std::string, double> read_truth(const fs::path& path) {
  const auto t = csv::read(path);
  require(t.header == std::vector<std::string>{"treatment", "apo"}, ErrorKind::parse_error,
          "truth CSV: expected header treatment,apo");
  std::map<std::string, double> m;
  for (const auto& r : t.rows) m[r[0]] = csv::to_double(r[1]);
  return m;
}

TruthFn truth_lookup(const fs::path& path) {
  auto m = std::make_shared<std::map<std::string, double>>(read_truth(path));
  return [m](const Treatment& t) {
    const auto it = m->find(to_string(t));
    require(it != m->end(), ErrorKind::unseen_treatment, "no truth for treatment " + to_string(t));
    return it->second;
  };
}

void cmd_generate(const Run& run) {
  const auto spec = DataSpec::from_config(run.config);
  const auto ex = make_experiment(spec, run.seed);
  fs::create_directories(run.out);
  write_dataset(ex.data, run.out / "data.csv");
  std::string truth = "treatment,apo\n";
  for (const auto& t : distinct_treatments(ex.data, ex.data.all_rows())) {
    truth += to_string(t) + ',' + csv::format(ex.truth(t)) + '\n';
  }
  csv::write_text(run.out / "truth.csv", truth);
  run.log("generated " + std::to_string(ex.data.size()) + " rows (" + to_string(spec.dgp) + ")");
}

void cmd_train(const Run& run) {
  const auto d = read_dataset(run.data_path());
  const auto train = d.rows(Split::train);
  for (auto kind : run.estimators("train.estimators")) {
    auto cfg = pipeline_from_config(run.config, kind, 0, d, run.seed);
    cfg.K = static_cast<int>(run.config.get_int("train.K", PipelineConfig::defaults(kind, d).K));
    const auto est = fit_estimator(d, train, cfg);
    save_estimator(est, run.model_dir(kind));
    run.log("trained " + to_string(kind) + " (K=" + std::to_string(cfg.K) + ")");
  }
}

void cmd_evaluate(const Run& run) {
  const auto d = read_dataset(run.data_path());
  const auto truth = truth_lookup(run.truth_path());
  const auto split = parse_split(run.config.get("evaluate.split", "test"));
  const auto ts = distinct_treatments(d, d.rows(split));
  const double lambda = run.config.get_double("data.lambda", DataSpec{}.lambda);
  std::vector<MetricsRow> rows;
  for (auto kind : run.estimators("evaluate.estimators")) {
    const auto est = load_estimator(run.model_dir(kind), d);
    const auto ev = evaluate(est, d, ts, truth);
    rows.push_back({to_string(kind), est.K, d.size(), lambda, run.seed, ev.rel_mae, ev.correlation,
                    ev.balance_total, 0.0});
    run.log(to_string(kind) + ": rel_mae=" + csv::format(ev.rel_mae) + " correlation=" + csv::format(ev.correlation));
  }
  fs::create_directories(run.out);
  csv::write_text(run.out / "metrics.csv", metrics_csv(rows));
}

std::string decomposition_row(const std::string& t, const Decomposition& dec) {
  return t + ',' + csv::format(dec.g_hat) + ',' + csv::format(dec.g_true) + ',' + csv::format(dec.direct_error()) +
         ',' + csv::format(dec.reconstructed()) + '\n';
}

void cmd_decompose(const Run& run) {
  const auto spec = DataSpec::from_config(run.config);
  const auto d = read_dataset(run.data_path());
  const auto kind = parse_estimator(run.config.get("decompose.estimator", "sw_crm"));
  const auto est = load_estimator(run.model_dir(kind), d);
  const auto w = estimator_weight_function(est, d);
  const auto dir = run.out / "decompose";
  fs::create_directories(dir);
  std::string summary = "treatment,g_hat,g_true,direct_error,reconstructed\n";
  if (spec.dgp == DgpKind::discrete_seq) {
    require(d.treatment_kind == TreatmentKind::token_sequence, ErrorKind::invalid_argument,
            "decompose: the discrete case needs a token-sequence dataset");
    const auto cfg = discrete_config(spec, run.seed);
    const int max_order = static_cast<int>(run.config.get_int("decompose.max_order", -1));
    for (const auto& toks : enumerate_treatments(cfg.treatment_vocab)) {
      const auto t = Treatment::sequence(toks);
      const auto dec = decompose_discrete_seq(
          toks, cfg, [&](std::span<const int> tt, std::span<const double> x) {
            return w(Treatment::sequence({tt.begin(), tt.end()}), x);
          }, max_order);
      csv::write_text(dir / (to_string(t) + ".csv"), dec.report.to_csv());
      summary += decomposition_row(to_string(t), dec);
    }
  } else {
    require(d.treatment_kind == TreatmentKind::continuous_scalar, ErrorKind::invalid_argument,
            "decompose: the Gaussian case needs a scalar-treatment dataset");
    const auto ts = run.config.get_doubles("decompose.t", {-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5});
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const auto dec = decompose_gaussian_linear(ts[i], [&](double t, double x) {
        const double xs[1] = {x};
        return w(Treatment::scalar(t), xs);
      });
      csv::write_text(dir / ("t" + std::to_string(i) + ".csv"), dec.report.to_csv());
      summary += decomposition_row(csv::format(ts[i]), dec);
    }
  }
  csv::write_text(dir / "summary.csv", summary);
  run.log("decomposed with " + to_string(kind) + " weights");
}

void cmd_project(const Run& run) {
  const auto spec = DataSpec::from_config(run.config);
  require(spec.dgp == DgpKind::discrete_seq, ErrorKind::invalid_argument,
          "project: attribute truth needs the discrete DGP");
  const auto d = read_dataset(run.data_path());
  const auto kind = parse_estimator(run.config.get("project.estimator", "sw_crm"));
  const auto est = load_estimator(run.model_dir(kind), d);
  const auto attr = make_attribute(run.config.get("project.attribute", "token:0"), d);
  const auto pop_name = run.config.get("project.population", "test");
  const auto rows = pop_name == "all" ? d.all_rows() : d.rows(parse_split(pop_name));
  const ApoFn g = [&](std::span<const Treatment> ts) { return est.predict(d, ts); };
  const auto projected = project_apo_table(g, d, rows, attr);
  auto cfg = pipeline_from_config(run.config, kind, est.K, d, run.seed);
  const auto retrained = retrain_attribute_estimator(d, d.rows(Split::train), attr, cfg);
  const auto truth = attribute_truth_discrete(discrete_config(spec, run.seed), attr);
  fs::create_directories(run.out);
  csv::write_text(run.out / "projection.csv", projection_csv(attr, projected, retrained, truth));
  const auto cmp = compare_projection(projected, retrained, truth);
  run.log("projected corr=" + csv::format(cmp.projected_correlation) +
          " rel_mae=" + csv::format(cmp.projected_rel_mae) +
          "; retrained rel_mae=" + csv::format(cmp.retrained_rel_mae));
}

void cmd_bench(const Run& run) {
  auto cfg = SuiteConfig::from_config(run.config);
  if (!run.config.has("suite.seeds")) cfg.seeds = {run.seed};
  const auto res = run_benchmark(cfg);
  fs::create_directories(run.out);
  csv::write_text(run.out / "results.csv", metrics_csv(res.rows));
  std::string fails;
  for (const auto& f : res.failures) fails += f + '\n';
  csv::write_text(run.out / "failures.txt", fails);
  run.log(std::to_string(res.rows.size()) + " cells, " + std::to_string(res.failures.size()) + " failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal risk minimization experiments"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  long long seed = -1;
  bool quiet = false;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "root seed (overrides the config's seed key)");
  app.add_option("--out", out_dir, "output directory (default $CRM_OUT_ROOT or ./crm_out)");
  app.add_flag("--quiet", quiet, "suppress progress output");
  app.fallthrough();

  const std::map<std::string, void (*)(const Run&)> commands{
      {"generate", cmd_generate}, {"train", cmd_train},     {"evaluate", cmd_evaluate},
      {"decompose", cmd_decompose}, {"project", cmd_project}, {"bench", cmd_bench},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.quiet = quiet;
    if (!config_path.empty()) run.config = Config::load(config_path);
    if (seed >= 0) run.config.set("seed", std::to_string(seed));
    run.seed = static_cast<std::uint64_t>(run.config.get_int("seed", 0));
    if (!out_dir.empty()) {
      run.out = out_dir;
    } else if (const char* root = std::getenv("CRM_OUT_ROOT")) {
      run.out = root;
    } else {
      run.out = "crm_out";
    }
    commands.at(run.command)(run);
    fs::create_directories(run.out);
    write_manifest(run);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
}
