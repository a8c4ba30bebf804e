#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "crm/loss.hpp"
#include "crm/model.hpp"

namespace gz {

using namespace crm;

inline InputSpec raw_input(std::size_t x_dim) {
  InputSpec in;
  in.use_treatment = true;
  in.x_dim = x_dim;
  return in;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

inline std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& a : v) a = u(rng);
  return v;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

struct Case {
  std::string name;
  Architecture arch;
  Matrix features;
  LossPtr loss;
};

// Every architecture family paired with every loss the library trains on.
inline std::vector<Case> zoo() {
  const std::size_t n = 12, xd = 3;
  std::vector<Case> cases;
  const auto counts = uniform(n, 0.5, 2.0, 1);
  const auto x = uniform(n * xd, -1.0, 1.0, 2);
  const std::vector<int> vocab{3, 2};
  std::vector<int> tokens(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    tokens[2 * i] = static_cast<int>(i % 3);
    tokens[2 * i + 1] = static_cast<int>((i / 3) % 2);
  }
  MomentTable ref = weighted_moments(x, xd, iota(n), counts, 2);
  for (auto& row : ref) {
    for (double& v : row) v += 0.1;
  }

  const auto add = [&](const std::string& name, std::vector<std::size_t> hidden, Activation act, Head head,
                       LossPtr loss, std::vector<int> head_vocab = {}) {
    const auto in = raw_input(xd);
    Architecture a = hidden.empty() ? Architecture::linear(in, head) : Architecture::mlp(in, hidden, head, act);
    a.head_vocab = head_vocab;
    cases.push_back({name, a, random_matrix(n, in.width(), 11 + cases.size()), loss});
  };
  const auto targets = uniform(n, -1.0, 1.0, 3);
  const auto probs = uniform(n, 0.05, 0.95, 4);
  const auto tvals = uniform(n, -1.0, 1.0, 5);
  for (auto [hidden, act, tag] : {std::tuple{std::vector<std::size_t>{}, Activation::relu, "linear"},
                                  std::tuple{std::vector<std::size_t>{8, 8}, Activation::relu, "mlp-relu"},
                                  std::tuple{std::vector<std::size_t>{6}, Activation::tanh, "mlp-tanh"}}) {
    const std::string t = tag;
    add(t + "/se", hidden, act, Head::identity, std::make_shared<SquaredErrorLoss>(targets, counts));
    add(t + "/ce", hidden, act, Head::sigmoid, std::make_shared<CrossEntropyLoss>(probs, counts));
    add(t + "/gauss-nll", hidden, act, Head::gaussian, std::make_shared<GaussianNllLoss>(tvals, counts));
    add(t + "/cat-nll", hidden, act, Head::categorical,
        std::make_shared<CategoricalNllLoss>(tokens, vocab, counts), vocab);
    std::vector<std::size_t> groups(n);
    for (std::size_t i = 0; i < n; ++i) groups[i] = i % 3;
    add(t + "/weight-balance", hidden, act, Head::softplus,
        std::make_shared<WeightBalanceLoss>(x, xd, groups, counts, 2, ref));
    add(t + "/weight-balance-marginal", hidden, act, Head::softplus,
        std::make_shared<WeightBalanceLoss>(x, xd, std::vector<std::size_t>{}, counts, 2, ref));
    add(t + "/ratio-gauss", hidden, act, Head::gaussian,
        std::make_shared<RatioBalanceLoss>(RatioBalanceLoss::gaussian(tvals, x, xd, counts, 2, ref, 1e-3)));
    add(t + "/ratio-cat", hidden, act, Head::categorical,
        std::make_shared<RatioBalanceLoss>(
            RatioBalanceLoss::categorical(tokens, vocab, x, xd, counts, 2, ref, 1e-3)),
        vocab);
    auto nll = std::make_shared<GaussianNllLoss>(tvals, counts);
    auto bal = std::make_shared<RatioBalanceLoss>(RatioBalanceLoss::gaussian(tvals, x, xd, counts, 1, ref, 1e-3));
    add(t + "/nll+ratio", hidden, act, Head::gaussian,
        std::make_shared<SumLoss>(std::vector<std::pair<double, LossPtr>>{{1.0, nll}, {0.7, bal}}));
  }
  return cases;
}

}  // namespace gz
