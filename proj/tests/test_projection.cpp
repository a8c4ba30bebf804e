#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "crm/datagen.hpp"
#include "crm/error.hpp"
#include "crm/projection.hpp"
#include "oracles.hpp"

using namespace crm;

namespace {

// Token-sequence treatments with a zero confounder.
Dataset sequences(const std::vector<std::vector<int>>& ts, std::vector<int> vocab) {
  Dataset d;
  d.treatment_kind = TreatmentKind::token_sequence;
  d.t_vocab = std::move(vocab);
  for (const auto& t : ts) d.t_tokens.insert(d.t_tokens.end(), t.begin(), t.end());
  d.x_dim = 1;
  d.x.assign(ts.size(), 0.0);
  d.y.assign(ts.size(), 0.0);
  d.split.assign(ts.size(), Split::train);
  d.validate();
  return d;
}

ApoFn table_apo(std::map<Treatment, double> m) {
  return [m = std::move(m)](std::span<const Treatment> ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.push_back(m.at(t));
    return out;
  };
}

ApoFn oracle_apo() {
  return [](std::span<const Treatment> ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.push_back(oracle::apo(t.tokens.data()));
    return out;
  };
}

}  // namespace

TEST_CASE("projection examples") {
  const auto d = sequences({{0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 0}, {0, 1}}, {2, 2});
  const auto rows = d.all_rows();
  const auto attr = make_attribute("token:0", d);
  const ApoFn constant = [](std::span<const Treatment> ts) { return std::vector<double>(ts.size(), 0.37); };
  for (double v : project_apo_table(constant, d, rows, attr)) CHECK(v == 0.37);

  const auto g = table_apo({{Treatment::sequence({0, 0}), 0.2},
                            {Treatment::sequence({0, 1}), 0.6},
                            {Treatment::sequence({1, 0}), 0.1},
                            {Treatment::sequence({1, 1}), 0.9}});
  CHECK(project_apo(g, d, rows, attr, 0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(project_apo(g, d, rows, attr, 1) == doctest::Approx(0.5).epsilon(1e-15));
  const auto sum = make_attribute("threshold:token_sum:1", d);
  CHECK(project_apo(g, d, rows, sum, 1) == 0.9);

  std::vector<std::size_t> only0{0, 1, 4, 5};
  try {
    project_apo(g, d, only0, attr, 1);
    FAIL("expected empty group");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_group);
  }
  CHECK_THROWS_AS(project_apo(g, d, rows, attr, 2), Error);
  CHECK_THROWS_AS(make_attribute("token:2", d), Error);
  CHECK_THROWS_AS(make_attribute("colour", d), Error);
}

TEST_CASE("projecting the true APO reproduces the attribute truth") {
  DiscreteSeqConfig cfg;
  const int tv[3] = {4, 2, 2};
  const auto all = enumerate_treatments(cfg.treatment_vocab);
  SUBCASE("exact on a finite population") {
    // Randomized assignment: every treatment has probability 1/16, so one row per treatment is the population.
    cfg.confounding_strength = 0.0;
    const auto d = sequences(all, {cfg.treatment_vocab.begin(), cfg.treatment_vocab.end()});
    for (int pos = 0; pos < 3; ++pos) {
      const auto attr = make_attribute("token:" + std::to_string(pos), d);
      const auto proj = project_apo_table(oracle_apo(), d, d.all_rows(), attr);
      const auto lib = attribute_truth_discrete(cfg, attr);
      for (std::size_t k = 0; k < attr.support.size(); ++k) {
        double num = 0.0, den = 0.0;
        for (const auto& t : all) {
          if (t[pos] != attr.support[k]) continue;
          const double p = oracle::marginal(t.data(), tv, 0.0);
          num += p * oracle::apo(t.data());
          den += p;
        }
        CHECK(std::abs(proj[k] - num / den) <= 1e-12);
        CHECK(std::abs(lib[k] - num / den) <= 1e-12);
      }
    }
  }
  SUBCASE("within Monte Carlo error under confounding") {
    cfg.n = 200000;
    cfg.seed = 21;
    const auto d = gen_discrete_seq(cfg);
    const auto rows = d.all_rows();
    const auto attr = make_attribute("token:0", d);
    const auto proj = project_apo_table(oracle_apo(), d, rows, attr);
    for (std::size_t k = 0; k < attr.support.size(); ++k) {
      double num = 0.0, den = 0.0;
      for (const auto& t : all) {
        if (t[0] != attr.support[k]) continue;
        const double p = oracle::marginal(t.data(), tv, 1.0);
        num += p * oracle::apo(t.data());
        den += p;
      }
      double s = 0.0, s2 = 0.0, n = 0.0;
      for (std::size_t r : rows) {
        if (d.tokens(r)[0] != attr.support[k]) continue;
        const double v = oracle::apo(d.tokens(r).data());
        s += v;
        s2 += v * v;
        n += 1.0;
      }
      const double se = std::sqrt(std::max(s2 / n - (s / n) * (s / n), 0.0) / n);
      CAPTURE(k);
      CHECK(std::abs(proj[k] - num / den) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("projection properties") {
  DiscreteSeqConfig cfg;
  cfg.n = 3000;
  cfg.seed = 2;
  const auto d = gen_discrete_seq(cfg);
  const auto rows = d.all_rows();
  const auto attr = make_attribute("token:0", d);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  std::map<Treatment, double> m;
  for (const auto& t : enumerate_treatments(cfg.treatment_vocab)) m[Treatment::sequence(t)] = u(rng);
  const auto g = table_apo(m);
  const auto proj = project_apo_table(g, d, rows, attr);

  for (std::size_t k = 0; k < attr.support.size(); ++k) {
    double lo = HUGE_VAL, hi = -HUGE_VAL;
    for (std::size_t r : rows) {
      if (d.tokens(r)[0] != attr.support[k]) continue;
      const double v = m.at(d.treatment(r));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(proj[k] >= lo);
    CHECK(proj[k] <= hi);
  }

  std::vector<std::size_t> perm(rows.begin(), rows.end());
  std::shuffle(perm.begin(), perm.end(), rng);
  CHECK(project_apo_table(g, d, perm, attr) == proj);
}

TEST_CASE("retrained attribute estimator without confounding") {
  DiscreteSeqConfig cfg;
  cfg.n = 4000;
  cfg.seed = 9;
  cfg.confounding_strength = 0.0;
  const auto d = gen_discrete_seq(cfg);
  const auto rows = d.rows(Split::train);
  const auto attr = make_attribute("token:0", d);
  const auto retrained =
      retrain_attribute_estimator(d, rows, attr, PipelineConfig::defaults(EstimatorKind::sw_crm, relabel_by_attribute(d, attr)));
  for (std::size_t k = 0; k < attr.support.size(); ++k) {
    double s = 0.0, n = 0.0;
    for (std::size_t r : rows) {
      if (d.tokens(r)[0] != attr.support[k]) continue;
      s += d.y[r];
      n += 1.0;
    }
    const double mean = s / n;
    const double se = std::sqrt(mean * (1 - mean) / n);
    CAPTURE(k);
    CHECK(std::abs(retrained[k] - mean) <= 3.0 * se);
  }
}

TEST_CASE("projection comparison") {
  const std::vector<double> truth{0.2, 0.5, 0.9};
  auto c = compare_projection(truth, truth, truth);
  CHECK(c.projected_rel_mae == 0.0);
  CHECK(c.projected_correlation == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_FALSE(c.degenerate_correlation);

  // Hand values: |0.1| + |0| + |0.2| over 1.6; Pearson of (0.3, 0.5, 0.7) and truth.
  const std::vector<double> proj{0.3, 0.5, 0.7}, retr{0.2, 0.6, 0.9};
  c = compare_projection(proj, retr, truth);
  CHECK(c.projected_rel_mae == doctest::Approx(0.3 / 1.6).epsilon(1e-14));
  CHECK(c.retrained_rel_mae == doctest::Approx(0.1 / 1.6).epsilon(1e-14));
  // Centered truth (-0.333.., -0.0333.., 0.3666..), centered proj (-0.2, 0, 0.2).
  const double r = (0.2 / 3 + 0.2 * 1.1 / 3) / std::sqrt(0.08 * (0.1111111111111111 + 0.0011111111111111111 + 0.13444444444444445));
  CHECK(c.projected_correlation == doctest::Approx(r).epsilon(1e-12));

  const std::vector<double> t2{0.50, 0.51}, p2{0.52, 0.49};
  c = compare_projection(p2, t2, t2);
  CHECK(c.degenerate_correlation);
  CHECK(c.projected_correlation == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(compare_projection(proj, retr, t2), Error);

  const auto d = sequences({{0}, {1}, {2}}, {3});
  const auto csv = projection_csv(make_attribute("token:0", d), proj, retr, truth);
  CHECK(csv.rfind("attribute,value,projected,retrained,truth\n", 0) == 0);
}
