// Parallel (blocked OpenMP) kernels against their serial references.
#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "crm/kernels.hpp"
#include "crm/model.hpp"

namespace {

struct Fixture {
  crm::ParamModel model;
  crm::Matrix features;
  crm::Matrix dout;
  std::vector<std::size_t> rows;

  explicit Fixture(std::size_t n) {
    crm::InputSpec in;
    in.use_treatment = false;
    in.x_dim = 16;
    model = crm::ParamModel(crm::Architecture::mlp(in, {64, 64}, crm::Head::gaussian));
    model.initialize(7);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    features.resize(static_cast<Eigen::Index>(n), 16);
    for (Eigen::Index i = 0; i < features.size(); ++i) features.data()[i] = z(rng);
    dout.resize(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < dout.size(); ++i) dout.data()[i] = z(rng);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), 0);
  }
};

void BM_Forward(benchmark::State& s) {
  Fixture f(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(crm::kernels::forward(f.model, f.features, f.rows));
}

void BM_ForwardSerial(benchmark::State& s) {
  Fixture f(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(crm::kernels::serial::forward(f.model, f.features, f.rows));
}

void BM_Backward(benchmark::State& s) {
  Fixture f(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(crm::kernels::backward(f.model, f.features, f.rows, f.dout));
}

void BM_BackwardSerial(benchmark::State& s) {
  Fixture f(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) {
    benchmark::DoNotOptimize(crm::kernels::serial::backward(f.model, f.features, f.rows, f.dout));
  }
}

struct Mixture {
  std::vector<double> t, mu, ls, w;

  explicit Mixture(std::size_t n) : t(n), mu(n), ls(n, 0.0), w(n, 1.0) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = z(rng);
      mu[i] = z(rng);
    }
  }
};

void BM_GaussianMixture(benchmark::State& s) {
  Mixture m(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(crm::kernels::gaussian_mixture(m.t, m.mu, m.ls, m.w));
}

void BM_GaussianMixtureSerial(benchmark::State& s) {
  Mixture m(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(crm::kernels::serial::gaussian_mixture(m.t, m.mu, m.ls, m.w));
}

}  // namespace

BENCHMARK(BM_Forward)->Arg(1024)->Arg(16384);
BENCHMARK(BM_ForwardSerial)->Arg(1024)->Arg(16384);
BENCHMARK(BM_Backward)->Arg(1024)->Arg(16384);
BENCHMARK(BM_BackwardSerial)->Arg(1024)->Arg(16384);
BENCHMARK(BM_GaussianMixture)->Arg(1000)->Arg(4000);
BENCHMARK(BM_GaussianMixtureSerial)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
