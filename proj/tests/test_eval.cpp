#include <doctest.h>

#include <cmath>
#include <random>

#include "crm/error.hpp"
#include "crm/metrics.hpp"
#include "crm/suite.hpp"

using namespace crm;

TEST_CASE("relative MAE") {
  const std::vector<double> a{0.3, -1.2, 4.0};
  CHECK(relative_mae(a, a) == 0.0);
  CHECK(relative_mae(std::vector<double>{2, 2}, std::vector<double>{1, 3}) == 0.5);
  CHECK(relative_mae(std::vector<double>{0.4, 1.0, 7.0}, std::vector<double>{0.2, 0.5, 3.5}) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(relative_mae(std::vector<double>{1}, std::vector<double>{0}), Error);
  CHECK_THROWS_AS(relative_mae(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
  CHECK_THROWS_AS(relative_mae(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("correlation") {
  const std::vector<double> t{0.1, 0.7, 0.3, 0.9};
  CHECK(correlation(t, t) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> neg;
  for (double v : t) neg.push_back(-v);
  CHECK(correlation(neg, t) == doctest::Approx(-1.0).epsilon(1e-15));
  // Centered (-1, 0, 1) and (-4/3, -1/3, 5/3): 3 / sqrt(2 * 42 / 9).
  CHECK(correlation(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) ==
        doctest::Approx(3.0 / std::sqrt(2.0 * 42.0 / 9.0)).epsilon(1e-14));
  CHECK(correlation(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}) == doctest::Approx(0.98198).epsilon(1e-5));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> p(50), q(50);
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = z(rng);
    p[i] = q[i] + 0.5 * z(rng);
  }
  const double r = correlation(p, q);
  std::vector<double> affine;
  for (double v : p) affine.push_back(3.5 * v - 11.0);
  CHECK(correlation(affine, q) == doctest::Approx(r).epsilon(1e-12));
  CHECK(r >= -1.0);
  CHECK(r <= 1.0);

  CHECK_THROWS_AS(correlation(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(correlation(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}), Error);
  CHECK_THROWS_AS(correlation(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("metrics CSV round trip") {
  std::vector<MetricsRow> rows{{"sw_crm", 2, 10000, 1.0, 3, 0.125, 0.9875, 0.0031, 0.0},
                               {"naive", 0, 500, 0.5, 4, 1.0 / 3.0, std::nan(""), std::nan(""), 12.5}};
  const auto text = metrics_csv(rows);
  CHECK(text.rfind("estimator,K,n,lambda,seed,rel_mae,correlation,balance_total,wall_ms\n", 0) == 0);
  const auto back = parse_metrics_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].estimator == "sw_crm");
  CHECK(back[0].K == 2);
  CHECK(back[0].n == 10000);
  CHECK(back[1].rel_mae == rows[1].rel_mae);
  CHECK(std::isnan(back[1].correlation));
  CHECK(metrics_csv(back) == text);
}

TEST_CASE("benchmark suite") {
  const auto cfg = SuiteConfig::from_config(Config::parse(
      "data.dgp=linear_gaussian\nsuite.estimators=naive,oi\nsuite.K=0\nsuite.n=600\nsuite.seeds=1,2\n"
      "apo.epochs=200\noutcome.epochs=200\n"));
  const auto a = run_benchmark(cfg);
  REQUIRE(a.rows.size() == 4);
  CHECK(a.failures.empty());
  for (const auto& r : a.rows) {
    CHECK(std::isfinite(r.rel_mae));
    CHECK(r.wall_ms == 0.0);
  }
  CHECK(metrics_csv(run_benchmark(cfg).rows) == metrics_csv(a.rows));

  SUBCASE("failing cells are recorded and the suite continues") {
    // OI has no APO model, so only the naive cells see the invalid learning rate.
    auto bad = cfg;
    bad.overrides.set("apo.lr", "-1");
    const auto b = run_benchmark(bad);
    REQUIRE(b.rows.size() == 4);
    CHECK(b.failures.size() == 2);
    CHECK(std::isnan(b.rows[0].rel_mae));
    CHECK(b.rows[1].rel_mae == a.rows[1].rel_mae);
    CHECK(b.failures[0].find("naive,K=0,n=600") == 0);
  }
}
