#include "crm/decompose.hpp"

#include <cmath>

#include "crm/error.hpp"
#include "crm/quadrature.hpp"

namespace crm {

namespace {

// Signed Stirling numbers of the first kind s(n, k), n, k < size.
std::vector<std::vector<long long>> stirling_first(int size) {
  std::vector<std::vector<long long>> s(static_cast<std::size_t>(size),
                                        std::vector<long long>(static_cast<std::size_t>(size), 0));
  s[0][0] = 1;
  for (int n = 1; n < size; ++n) {
    for (int k = 1; k <= n; ++k) {
      s[n][k] = s[n - 1][k - 1] - static_cast<long long>(n - 1) * s[n - 1][k];
    }
  }
  return s;
}

long long binomial(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// M[j][i]: coefficient of x^j contributed by the grid value f(i).
std::vector<std::vector<double>> newton_to_monomial(int V) {
  require(V >= 1 && V <= 15, ErrorKind::invalid_argument, "grid size per dimension must be in [1, 15]");
  const auto s = stirling_first(V);
  std::vector<std::vector<double>> M(static_cast<std::size_t>(V), std::vector<double>(static_cast<std::size_t>(V), 0.0));
  double fact = 1.0;
  for (int k = 0; k < V; ++k) {
    if (k > 0) fact *= k;
    for (int j = 0; j <= k; ++j) {
      if (s[k][j] == 0) continue;
      for (int i = 0; i <= k; ++i) {
        const long long num = s[k][j] * binomial(k, i) * (((k - i) % 2) ? -1 : 1);
        M[j][i] += static_cast<double>(num) / fact;
      }
    }
  }
  return M;
}

double monomial(std::span<const int> exps, std::span<const int> x) {
  double m = 1.0;
  for (std::size_t d = 0; d < exps.size(); ++d)
    for (int e = 0; e < exps[d]; ++e) m *= x[d];
  return m;
}

std::string monomial_label(std::span<const int> exps) {
  std::string s;
  for (std::size_t d = 0; d < exps.size(); ++d) {
    if (exps[d] == 0) continue;
    if (!s.empty()) s += '*';
    s += 'x' + std::to_string(d);
    if (exps[d] > 1) s += '^' + std::to_string(exps[d]);
  }
  return s.empty() ? "const" : s;
}

}  // namespace

std::string to_string(DecompositionCase c) {
  switch (c) {
    case DecompositionCase::binary: return "binary";
    case DecompositionCase::discrete_finite: return "discrete_finite";
    case DecompositionCase::continuous_poly: return "continuous_poly";
    case DecompositionCase::gaussian_linear: return "gaussian_linear";
  }
  return "binary";
}

DecompositionCase parse_decomposition_case(std::string_view s) {
  if (s == "binary") return DecompositionCase::binary;
  if (s == "discrete_finite") return DecompositionCase::discrete_finite;
  if (s == "continuous_poly") return DecompositionCase::continuous_poly;
  if (s == "gaussian_linear") return DecompositionCase::gaussian_linear;
  fail(ErrorKind::parse_error, "unknown decomposition case: " + std::string(s));
}

std::vector<double> grid_monomial_coefficients(std::span<const double> f, std::span<const int> vocab) {
  const std::size_t n = cell_count(vocab);
  require(f.size() == n, ErrorKind::shape_mismatch, "grid values do not match the vocabulary");
  std::vector<double> c(f.begin(), f.end()), next(n);
  // Apply the 1-D transform along each axis in turn.
  std::size_t inner = n;
  for (std::size_t d = 0; d < vocab.size(); ++d) {
    const auto V = static_cast<std::size_t>(vocab[d]);
    const auto M = newton_to_monomial(vocab[d]);
    inner /= V;
    const std::size_t outer = n / (inner * V);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * V * inner + in;
        for (std::size_t j = 0; j < V; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < V; ++i) s += M[j][i] * c[base + i * inner];
          next[base + j * inner] = s;
        }
      }
    }
    std::swap(c, next);
  }
  return c;
}

Decomposition decompose_finite(const FiniteProblem& p, int max_order) {
  const std::size_t n = cell_count(p.vocab);
  require(p.p_x.size() == n && p.p_x_given_t.size() == n && p.f.size() == n && p.w.size() == n,
          ErrorKind::shape_mismatch, "finite problem arrays must cover the grid");
  const auto coeffs = grid_monomial_coefficients(p.f, p.vocab);

  std::vector<std::vector<int>> xs(n);
  for (std::size_t c = 0; c < n; ++c) xs[c] = cell_digits(c, p.vocab);

  Decomposition out;
  for (std::size_t c = 0; c < n; ++c) {
    out.g_hat += p.p_x_given_t[c] * p.w[c] * p.f[c];
    out.g_true += p.p_x[c] * p.f[c];
  }
  int top = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& exps = xs[a];
    int degree = 0;
    for (int e : exps) degree += e;
    if (max_order >= 0 && degree > max_order) continue;
    double weighted = 0.0, marginal = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double m = monomial(exps, xs[c]);
      weighted += p.p_x_given_t[c] * p.w[c] * m;
      marginal += p.p_x[c] * m;
    }
    const double eps = weighted - marginal;
    out.report.entries.push_back({degree, monomial_label(exps), eps, coeffs[a], coeffs[a] * eps});
    top = std::max(top, degree);
  }
  out.report.mode = BalanceMode::per_treatment_group;
  out.report.max_order = max_order >= 0 ? max_order : top;
  out.report.finalize();
  return out;
}

Decomposition decompose_discrete_seq(
    std::span<const int> t, const DiscreteSeqConfig& cfg,
    const std::function<double(std::span<const int>, std::span<const double>)>& w, int max_order) {
  cfg.validate();
  const auto xs = enumerate_confounders(cfg);
  FiniteProblem p;
  p.vocab.assign(cfg.confounder_vocab.begin(), cfg.confounder_vocab.end());
  const double px = 1.0 / static_cast<double>(xs.size());
  const double pt = true_marginal_discrete(t, cfg);
  for (const auto& x : xs) {
    p.p_x.push_back(px);
    p.p_x_given_t.push_back(true_propensity_discrete(t, x, cfg) * px / pt);
    p.f.push_back(sigmoid(discrete_outcome_logit(t, x)));
    p.w.push_back(w(t, x));
  }
  return decompose_finite(p, max_order);
}

Decomposition decompose_continuous_poly(const GaussianPolyProblem& p, std::size_t nodes) {
  require(!p.coeffs.empty(), ErrorKind::invalid_argument, "polynomial needs at least one coefficient");
  require(static_cast<bool>(p.w), ErrorKind::invalid_argument, "weight function missing");
  const GaussHermite gh(nodes);
  auto f = [&](double x) {
    double v = 0.0;
    for (std::size_t k = p.coeffs.size(); k-- > 0;) v = v * x + p.coeffs[k];
    return v;
  };
  Decomposition out;
  out.g_hat = gh.expect([&](double x) { return p.w(x) * f(x); }, p.cond_mean, p.cond_sd);
  out.g_true = gh.expect(f, p.marg_mean, p.marg_sd);
  for (std::size_t k = 0; k < p.coeffs.size(); ++k) {
    const int kk = static_cast<int>(k);
    auto xk = [kk](double x) { return std::pow(x, kk); };
    const double eps = gh.expect([&](double x) { return p.w(x) * xk(x); }, p.cond_mean, p.cond_sd) -
                       gh.expect(xk, p.marg_mean, p.marg_sd);
    out.report.entries.push_back({kk, k == 0 ? "const" : "x0", eps, p.coeffs[k], p.coeffs[k] * eps});
  }
  out.report.mode = BalanceMode::per_treatment_group;
  out.report.max_order = static_cast<int>(p.coeffs.size()) - 1;
  out.report.finalize();
  return out;
}

Decomposition decompose_gaussian_linear(double t, const std::function<double(double, double)>& w,
                                        std::size_t nodes) {
  GaussianPolyProblem p;
  p.coeffs = {LinearGaussianConfig::intercept + LinearGaussianConfig::treatment_coef * t,
              LinearGaussianConfig::confounder_coef};
  p.cond_mean = t / 2.0;
  p.cond_sd = std::sqrt(0.5);
  p.marg_mean = 0.0;
  p.marg_sd = 1.0;
  p.w = [&](double x) { return w(t, x); };
  return decompose_continuous_poly(p, nodes);
}

}  // namespace crm
