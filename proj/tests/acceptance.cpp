// Acceptance run: one PASS/FAIL line per criterion. Result CSVs go to
// $CRM_OUT_ROOT/acceptance (default ./acceptance_out). The exit status is 0
// when every job ran to completion, whatever its verdict; a job that throws
// exits 1.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crm/balance.hpp"
#include "crm/csv.hpp"
#include "crm/decompose.hpp"
#include "crm/error.hpp"
#include "crm/estimators.hpp"
#include "crm/metrics.hpp"
#include "crm/optim.hpp"
#include "crm/projection.hpp"
#include "crm/rng.hpp"
#include "crm/suite.hpp"
#include "gradient_zoo.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace crm;

namespace {

constexpr std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

struct Verdict {
  bool pass = false;
  std::string detail;
  std::string csv;  // the job's result table
};

std::string fmt(double v) { return csv::format(v); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// 1. Every architecture x loss pairing within 1e-4 of central differences.
Verdict gradient_suite() {
  Verdict v;
  v.csv = "case,max_rel_error\n";
  double worst = 0.0;
  for (auto& c : gz::zoo()) {
    ParamModel m(c.arch);
    m.initialize(21);
    const Objective obj{&c.features, c.loss};
    const double e = grad_check(m, obj, gz::iota(obj.size()), 1e-5);
    worst = std::max(worst, e);
    v.csv += c.name + ',' + fmt(e) + '\n';
  }
  v.pass = worst <= 1e-4;
  v.detail = "worst relative error " + fmt(worst) + " (tolerance 1e-4)";
  return v;
}

// 2. Exact identity against direct enumeration with 20 random weight tables.
Verdict discrete_identity() {
  DiscreteSeqConfig cfg;
  const int tv[3] = {4, 2, 2};
  const auto grid = oracle::confounder_grid();
  const auto ts = enumerate_treatments(cfg.treatment_vocab);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.05, 4.0);
  Verdict v;
  v.csv = "table,treatment,direct,reconstructed\n";
  double worst = 0.0;
  for (int table = 0; table < 20; ++table) {
    std::map<std::pair<std::vector<int>, std::vector<double>>, double> w;
    for (const auto& t : ts) {
      for (const auto& x : grid) w[{t, x}] = u(rng);
    }
    const auto wf = [&](std::span<const int> t, std::span<const double> x) {
      return w.at({{t.begin(), t.end()}, {x.begin(), x.end()}});
    };
    for (const auto& t : ts) {
      const double pt = oracle::marginal(t.data(), tv, 1.0);
      double ghat = 0.0, g = 0.0;
      for (const auto& x : grid) {
        const double f = oracle::sigmoid(oracle::mu(t.data(), x.data()));
        ghat += oracle::propensity(t.data(), x.data(), tv, 1.0) / (pt * grid.size()) * w.at({t, x}) * f;
        g += f / grid.size();
      }
      const double rec = decompose_discrete_seq(t, cfg, wf).reconstructed();
      worst = std::max(worst, std::abs(rec - (ghat - g)));
      v.csv += std::to_string(table) + ',' + to_string(Treatment::sequence(t)) + ',' + fmt(ghat - g) + ',' +
               fmt(rec) + '\n';
    }
  }
  v.pass = worst <= 1e-10;
  v.detail = "320 treatment/table pairs, worst |direct - reconstructed| " + fmt(worst) + " (tolerance 1e-10)";
  return v;
}

// 3. Order-0/1 reconstruction against Simpson-integrated direct errors.
Verdict gaussian_identity() {
  const std::vector<std::pair<std::string, std::function<double(double, double)>>> ws{
      {"bump", [](double t, double x) { return 0.5 + std::exp(-0.3 * (x - 0.2 * t) * (x - 0.2 * t)); }},
      {"logistic", [](double t, double x) { return 2.0 / (1.0 + std::exp(-(0.4 * x - 0.1 * t))); }},
      {"wave", [](double t, double x) { return 1.0 + 0.3 * std::sin(x + t) + 0.1 * std::cos(2 * x); }},
  };
  Verdict v;
  v.csv = "weight,t,direct,reconstructed\n";
  double worst = 0.0;
  for (const auto& [name, w] : ws) {
    for (int i = 0; i < 10; ++i) {
      const double t = -2.0 + 0.5 * i;
      const double ghat = oracle::simpson(
          [&](double x) { return oracle::normal_pdf(x, t / 2, std::sqrt(0.5)) * w(t, x) * (1 + 2 * t + 3 * x); },
          t / 2 - 12, t / 2 + 12);
      const double direct = ghat - (1 + 2 * t);
      const double rec = decompose_gaussian_linear(t, w).reconstructed();
      worst = std::max(worst, std::abs(rec - direct));
      v.csv += name + ',' + fmt(t) + ',' + fmt(direct) + ',' + fmt(rec) + '\n';
    }
  }
  v.pass = worst <= 1e-6;
  v.detail = "3 weight functions x 10 treatments, worst deviation " + fmt(worst) + " (tolerance 1e-6)";
  return v;
}

// 4. Balance-regularized IPW-CRM against plain IPW-CRM on the linear-Gaussian DGP.
Verdict regularization_trend() {
  const Config none;
  DataSpec spec;
  spec.dgp = DgpKind::linear_gaussian;
  Verdict v;
  v.csv = "n,seed,reg_strength,rel_mae,abs_eps0,abs_eps1\n";
  std::map<std::pair<std::size_t, double>, std::array<std::vector<double>, 3>> stats;
  const std::size_t ns[] = {300, 1000, 3000, 10000};
  for (std::size_t n : ns) {
    spec.n = n;
    for (std::uint64_t seed : kSeeds) {
      const auto ex = make_experiment(spec, seed);
      const auto train = ex.data.rows(Split::train);
      const auto test = distinct_treatments(ex.data, ex.data.rows(Split::test));
      for (double reg : {0.0, 1.0}) {
        auto cfg = pipeline_from_config(none, EstimatorKind::ipw_crm, 1, ex.data, seed);
        cfg.reg_strength = reg;
        const auto est = fit_estimator(ex.data, train, cfg);
        const double mae = evaluate(est, ex.data, test, ex.truth).rel_mae;
        const auto w = estimator_weights(est, ex.data, train);
        const double e0 = std::abs(balance_error(ex.data, train, w, 0, {})[0]);
        const double e1 = std::abs(balance_error(ex.data, train, w, 1, {})[0]);
        auto& s = stats[{n, reg}];
        s[0].push_back(mae);
        s[1].push_back(e0);
        s[2].push_back(e1);
        v.csv += std::to_string(n) + ',' + std::to_string(seed) + ',' + fmt(reg) + ',' + fmt(mae) + ',' + fmt(e0) +
                 ',' + fmt(e1) + '\n';
      }
    }
  }
  v.pass = true;
  std::ostringstream d;
  d << "median rel_mae/|eps0|/|eps1| plain vs regularized:";
  for (std::size_t n : ns) {
    const auto& p = stats[{n, 0.0}];
    const auto& r = stats[{n, 1.0}];
    d << " n=" << n << " [";
    for (int k = 0; k < 3; ++k) {
      const double mp = median(p[k]), mr = median(r[k]);
      d << (k ? " " : "") << fmt(mp) << "->" << fmt(mr);
      if (n >= 1000 && !(mr < mp)) v.pass = false;
    }
    d << ']';
  }
  v.detail = d.str();
  return v;
}

// Shared discrete-DGP benchmark cells, keyed by (estimator, K, lambda, seed).
class DiscreteCells {
 public:
  MetricsRow get(EstimatorKind kind, int K, double lambda, std::uint64_t seed) {
    const auto key = std::make_tuple(kind, K, lambda, seed);
    if (auto it = cells_.find(key); it != cells_.end()) return it->second;
    const auto exk = std::make_pair(lambda, seed);
    if (!data_.count(exk)) {
      DataSpec spec;
      spec.lambda = lambda;
      data_.emplace(exk, make_experiment(spec, seed));
    }
    DataSpec spec;
    spec.lambda = lambda;
    const auto row = run_cell(data_.at(exk), spec, kind, K, seed, Config{});
    cells_.emplace(key, row);
    return row;
  }
  void clear() {
    cells_.clear();
    data_.clear();
  }

 private:
  std::map<std::tuple<EstimatorKind, int, double, std::uint64_t>, MetricsRow> cells_;
  std::map<std::pair<double, std::uint64_t>, Experiment> data_;
};

DiscreteCells cells;

std::vector<MetricsRow> sweep(EstimatorKind kind, int K, double lambda) {
  std::vector<MetricsRow> rows;
  for (std::uint64_t seed : kSeeds) rows.push_back(cells.get(kind, K, lambda, seed));
  return rows;
}

double median_of(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.*field);
  return median(v);
}

// 5. SW-CRM (K=2) on the discrete DGP at n = 1e4.
Verdict discrete_table() {
  const auto sw2 = sweep(EstimatorKind::sw_crm, 2, 1.0);
  const auto sw1 = sweep(EstimatorKind::sw_crm, 1, 1.0);
  const auto ipw1 = sweep(EstimatorKind::ipw_crm, 1, 1.0);
  std::vector<MetricsRow> all = sw2;
  all.insert(all.end(), sw1.begin(), sw1.end());
  all.insert(all.end(), ipw1.begin(), ipw1.end());
  const double c2 = median_of(sw2, &MetricsRow::correlation), m2 = median_of(sw2, &MetricsRow::rel_mae);
  const double c1 = median_of(sw1, &MetricsRow::correlation), ci = median_of(ipw1, &MetricsRow::correlation);
  Verdict v;
  v.csv = metrics_csv(all);
  v.pass = c2 >= 0.9 && m2 <= 0.3 && c2 > c1 && c2 > ci;
  v.detail = "median SW-CRM(K=2) correlation " + fmt(c2) + " rel_mae " + fmt(m2) + "; SW-CRM(K=1) correlation " +
             fmt(c1) + ", IPW-CRM(K=1) correlation " + fmt(ci);
  return v;
}

// 6. Median correlation and order-4 balance total across K = 0..4.
Verdict k_monotonicity() {
  std::vector<MetricsRow> all;
  std::vector<double> corr, bal;
  for (int K = 0; K <= 4; ++K) {
    const auto rows = sweep(EstimatorKind::sw_crm, K, 1.0);
    all.insert(all.end(), rows.begin(), rows.end());
    corr.push_back(median_of(rows, &MetricsRow::correlation));
    bal.push_back(median_of(rows, &MetricsRow::balance_total));
  }
  int corr_inv = 0, bal_inv = 0;
  for (int K = 0; K < 4; ++K) {
    corr_inv += corr[K + 1] < corr[K];
    bal_inv += bal[K + 1] > bal[K];
  }
  Verdict v;
  v.csv = metrics_csv(all);
  v.pass = corr_inv <= 1 && bal_inv <= 1;
  std::ostringstream d;
  d << "median correlation by K:";
  for (double c : corr) d << ' ' << fmt(c);
  d << " (" << corr_inv << " inversions); median balance total:";
  for (double b : bal) d << ' ' << fmt(b);
  d << " (" << bal_inv << " inversions)";
  v.detail = d.str();
  return v;
}

// 7. Spread of median SW-CRM (K=2) correlation across confounding strengths.
Verdict lambda_stability() {
  std::vector<MetricsRow> all;
  std::vector<double> corr;
  for (double lambda : {0.5, 1.0, 2.0}) {
    const auto rows = sweep(EstimatorKind::sw_crm, 2, lambda);
    all.insert(all.end(), rows.begin(), rows.end());
    corr.push_back(median_of(rows, &MetricsRow::correlation));
  }
  const double spread = *std::max_element(corr.begin(), corr.end()) - *std::min_element(corr.begin(), corr.end());
  Verdict v;
  v.csv = metrics_csv(all);
  v.pass = spread <= 0.1;
  v.detail = "median correlation at lambda 0.5/1/2: " + fmt(corr[0]) + ' ' + fmt(corr[1]) + ' ' + fmt(corr[2]) +
             ", spread " + fmt(spread) + " (tolerance 0.1)";
  return v;
}

// 8. Projected SW-CRM (K=2) first-token APOs on the 64-treatment DGP.
Verdict projection_consistency() {
  DataSpec spec;
  spec.treatment_vocab = {16, 2, 2};
  Verdict v;
  v.csv = "seed,value,projected,retrained,truth\n";
  std::vector<double> corr, gap;
  for (std::uint64_t seed : kSeeds) {
    const auto ex = make_experiment(spec, seed);
    const auto& d = ex.data;
    const auto train = d.rows(Split::train);
    const auto cfg = pipeline_from_config(Config{}, EstimatorKind::sw_crm, 2, d, seed);
    const auto est = fit_estimator(d, train, cfg);
    const auto attr = make_attribute("token:0", d);
    // Test-split treatments do not cover every first-token value, so the Monte Carlo sum runs over all rows.
    const ApoFn g = [&](std::span<const Treatment> ts) { return est.predict(d, ts); };
    const auto projected = project_apo_table(g, d, d.all_rows(), attr);
    const auto retrained =
        retrain_attribute_estimator(d, train, attr, pipeline_from_config(Config{}, EstimatorKind::sw_crm, 2,
                                                                         relabel_by_attribute(d, attr), seed));
    const auto truth = attribute_truth_discrete(ex.discrete, attr);
    const auto cmp = compare_projection(projected, retrained, truth);
    corr.push_back(cmp.projected_correlation);
    gap.push_back(cmp.projected_rel_mae - cmp.retrained_rel_mae);
    for (std::size_t k = 0; k < truth.size(); ++k) {
      v.csv += std::to_string(seed) + ',' + std::to_string(attr.support[k]) + ',' + fmt(projected[k]) + ',' +
               fmt(retrained[k]) + ',' + fmt(truth[k]) + '\n';
    }
  }
  const double c = median(corr), g = median(gap);
  v.pass = c >= 0.95 && g <= 0.1;
  v.detail = "median projected correlation " + fmt(c) + " (>= 0.95), median projected minus retrained rel_mae " +
             fmt(g) + " (<= 0.1)";
  return v;
}

// 9. Classical IPW with oracle propensities across 50 replications.
Verdict ipw_unbiasedness() {
  DiscreteSeqConfig cfg;
  cfg.n = 10000;
  const int tv[3] = {4, 2, 2};
  const auto ts = enumerate_treatments(cfg.treatment_vocab);
  std::vector<std::vector<double>> est(ts.size());
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    cfg.seed = stream_seed(rep, "ipw_replication");
    const auto d = gen_discrete_seq(cfg);
    const auto rows = d.all_rows();
    std::vector<double> e(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      e[i] = oracle::propensity(d.tokens(i).data(), d.x_row(i).data(), tv, cfg.confounding_strength);
    }
    for (std::size_t j = 0; j < ts.size(); ++j) {
      // A treatment absent from a replication contributes an all-zero sum.
      double v = 0.0;
      try {
        v = ipw_classical(d, rows, e, Treatment::sequence(ts[j]));
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::unseen_treatment) throw;
      }
      est[j].push_back(v);
    }
  }
  Verdict v;
  v.csv = "treatment,truth,mean_estimate,standard_error,z\n";
  double worst = 0.0;
  int outside = 0;
  for (std::size_t j = 0; j < ts.size(); ++j) {
    double s = 0.0, s2 = 0.0;
    for (double a : est[j]) {
      s += a;
      s2 += a * a;
    }
    const double n = static_cast<double>(est[j].size());
    const double mean = s / n;
    const double se = std::sqrt(std::max(s2 - n * mean * mean, 0.0) / (n - 1) / n);
    const double truth = oracle::apo(ts[j].data());
    const double z = se > 0.0 ? std::abs(mean - truth) / se : (mean == truth ? 0.0 : HUGE_VAL);
    worst = std::max(worst, z);
    outside += z > 3.0;
    v.csv += to_string(Treatment::sequence(ts[j])) + ',' + fmt(truth) + ',' + fmt(mean) + ',' + fmt(se) + ',' +
             fmt(z) + '\n';
  }
  v.pass = outside == 0;
  v.detail = std::to_string(outside) + " of 16 treatments outside 3 standard errors, worst z " + fmt(worst);
  return v;
}

struct Job {
  int id;
  std::string name;
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  fs::path out = "acceptance_out";
  if (const char* root = std::getenv("CRM_OUT_ROOT")) out = fs::path(root) / "acceptance";
  fs::create_directories(out);

  const std::vector<Job> jobs{
      {1, "gradient suite", gradient_suite},
      {2, "discrete decomposition identity", discrete_identity},
      {3, "Gaussian decomposition", gaussian_identity},
      {4, "balance-regularized IPW-CRM trend", regularization_trend},
      {5, "SW-CRM on the discrete DGP", discrete_table},
      {6, "monotonicity in K", k_monotonicity},
      {7, "stability across confounding strength", lambda_stability},
      {8, "projection consistency", projection_consistency},
      {9, "oracle IPW unbiasedness", ipw_unbiasedness},
  };
  try {
    std::vector<std::string> first;
    int passed = 0;
    for (const auto& job : jobs) {
      const auto start = std::chrono::steady_clock::now();
      const auto v = job.run();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      csv::write_text(out / ("criterion" + std::to_string(job.id) + ".csv"), v.csv);
      first.push_back(v.csv);
      passed += v.pass;
      std::printf("criterion %d %s: %s (%s; %.1f s)\n", job.id, job.name.c_str(), v.pass ? "PASS" : "FAIL",
                  v.detail.c_str(), secs);
      std::fflush(stdout);
    }

    // 10. Every job again from scratch, same root seeds.
    cells.clear();
    std::vector<int> differing;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].run().csv != first[i]) differing.push_back(jobs[i].id);
    }
    const bool det = differing.empty();
    passed += det;
    std::string which;
    for (int id : differing) which += ' ' + std::to_string(id);
    std::printf("criterion 10 determinism: %s (%s)\n", det ? "PASS" : "FAIL",
                det ? "all 9 result CSVs byte-identical on rerun" : ("differing jobs:" + which).c_str());
    std::printf("%d of 10 criteria passed\n", passed);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
