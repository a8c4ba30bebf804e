#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crm/config.hpp"
#include "crm/datagen.hpp"
#include "crm/pipeline.hpp"

namespace crm {

enum class DgpKind { linear_gaussian, discrete_seq };

std::string to_string(DgpKind k);
DgpKind parse_dgp(std::string_view s);

struct DataSpec {
  DgpKind dgp = DgpKind::discrete_seq;
  std::size_t n = 10000;
  double lambda = 1.0;
  std::vector<int> treatment_vocab{4, 2, 2};
  std::array<double, 3> split{0.5, 0.25, 0.25};

  // Keys: data.dgp, data.n, data.lambda, data.treatment_vocab, data.split
  static DataSpec from_config(const Config& c);
};

// A generated, split dataset with its ground truth.
struct Experiment {
  Dataset data;
  DiscreteSeqConfig discrete;  // meaningful for the discrete DGP
  TruthFn truth;
};

// The discrete generator configuration described by a spec (seed from the "datagen" stream).
DiscreteSeqConfig discrete_config(const DataSpec& spec, std::uint64_t seed);

// Generation and split draw from the "datagen" and "split" streams of `seed`.
Experiment make_experiment(const DataSpec& spec, std::uint64_t seed);

// Defaults for the dataset kind, then overrides from keys
//   pipeline.{reg_strength,balance_eval_order,hidden,weight_objective,scalar_bins}
//   {nuisance,outcome,apo}.{lr,epochs,batch_size,weight_decay,variant}
PipelineConfig pipeline_from_config(const Config& c, EstimatorKind kind, int K, const Dataset& d,
                                    std::uint64_t seed);

struct MetricsRow {
  std::string estimator;
  int K = 0;
  std::size_t n = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double rel_mae = 0.0;
  double correlation = 0.0;
  double balance_total = 0.0;
  double wall_ms = 0.0;
};

// estimator,K,n,lambda,seed,rel_mae,correlation,balance_total,wall_ms
std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(std::string_view text);

struct SuiteConfig {
  DataSpec data;
  std::vector<EstimatorKind> estimators{EstimatorKind::sw_crm};
  std::vector<int> Ks{2};
  std::vector<std::size_t> ns{10000};
  std::vector<double> lambdas{1.0};
  std::vector<std::uint64_t> seeds{0};
  bool timing = false;  // wall_ms stays 0 unless set, keeping CSVs reproducible
  Config overrides;

  // Keys: suite.estimators, suite.K, suite.n, suite.lambda, suite.seeds,
  // suite.timing, plus the data.* and pipeline override keys.
  static SuiteConfig from_config(const Config& c);
};

struct SuiteResult {
  std::vector<MetricsRow> rows;
  std::vector<std::string> failures;  // one line per failed cell
};

// Runs every (n, lambda, seed) dataset once and every (estimator, K) on it.
// A failing cell is recorded with NaN metrics and the suite continues.
SuiteResult run_benchmark(const SuiteConfig& cfg);

// Fits one estimator on the train split and scores it on the test treatments.
MetricsRow run_cell(const Experiment& ex, const DataSpec& spec, EstimatorKind kind, int K,
                    std::uint64_t seed, const Config& overrides, bool timing = false);

}  // namespace crm
