#include "crm/balance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "crm/csv.hpp"
#include "crm/error.hpp"

namespace crm {

namespace {

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

// Per-row kernel or indicator weights selecting the conditioning set.
std::vector<double> selector(const Dataset& d, std::span<const std::size_t> rows, const BalanceQuery& q) {
  std::vector<double> s(rows.size(), 1.0);
  if (q.mode == BalanceMode::per_treatment_group) {
    bool any = false;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      s[a] = d.treatment(rows[a]) == q.at ? 1.0 : 0.0;
      any = any || s[a] > 0.0;
    }
    if (!any) fail(ErrorKind::empty_group, "no rows with treatment " + to_string(q.at));
  } else if (q.mode == BalanceMode::kernel_window) {
    require(d.treatment_kind == TreatmentKind::continuous_scalar, ErrorKind::invalid_argument,
            "kernel_window mode needs scalar treatments");
    require(rows.size() >= 2, ErrorKind::invalid_argument, "kernel_window needs at least two rows");
    double mean = 0.0, sq = 0.0;
    for (std::size_t r : rows) mean += d.t_value[r];
    mean /= static_cast<double>(rows.size());
    for (std::size_t r : rows) sq += (d.t_value[r] - mean) * (d.t_value[r] - mean);
    const double sd = std::sqrt(sq / static_cast<double>(rows.size() - 1));
    const double h = std::pow(static_cast<double>(rows.size()), -0.2) * sd;
    require(h > 0.0, ErrorKind::invalid_argument, "kernel_window: treatments are constant");
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const double z = (d.t_value[rows[a]] - q.at.value) / h;
      s[a] = std::exp(-0.5 * z * z);
    }
  }
  return s;
}

std::vector<double> error_from_selector(const Dataset& d, std::span<const std::size_t> rows,
                                        std::span<const double> w, std::span<const double> sel, int k) {
  const std::size_t width = moment_width(k, d.x_dim);
  std::vector<double> num(width, 0.0), ref(width, 0.0);
  double mass = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto x = d.x_row(rows[a]);
    mass += sel[a];
    for (std::size_t j = 0; j < width; ++j) {
      const double m = k == 0 ? 1.0 : ipow(x[j], k);
      num[j] += sel[a] * w[a] * m;
      ref[j] += m;
    }
  }
  require(mass > 0.0, ErrorKind::empty_group, "balance error over an empty conditioning set");
  std::vector<double> eps(width);
  for (std::size_t j = 0; j < width; ++j)
    eps[j] = num[j] / mass - ref[j] / static_cast<double>(rows.size());
  return eps;
}

void check_inputs(std::span<const std::size_t> rows, std::span<const double> weights, int k) {
  require(k >= 0, ErrorKind::invalid_argument, "balance order must be >= 0");
  require(!rows.empty(), ErrorKind::invalid_argument, "balance error over an empty view");
  require(weights.size() == rows.size(), ErrorKind::shape_mismatch, "one weight per row required");
}

// Flattened confounders of the design representatives.
std::vector<double> design_x(const Dataset& d, const Design& design) {
  std::vector<double> x;
  x.reserve(design.size() * d.x_dim);
  for (std::size_t r : design.representative) {
    const auto xr = d.x_row(r);
    x.insert(x.end(), xr.begin(), xr.end());
  }
  return x;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

std::string to_string(BalanceMode m) {
  switch (m) {
    case BalanceMode::marginal_batch: return "marginal_batch";
    case BalanceMode::per_treatment_group: return "per_treatment_group";
    case BalanceMode::kernel_window: return "kernel_window";
  }
  return "marginal_batch";
}

BalanceMode parse_balance_mode(std::string_view s) {
  if (s == "marginal_batch") return BalanceMode::marginal_batch;
  if (s == "per_treatment_group") return BalanceMode::per_treatment_group;
  if (s == "kernel_window") return BalanceMode::kernel_window;
  fail(ErrorKind::parse_error, "unknown balance mode: " + std::string(s));
}

std::vector<double> balance_error(const Dataset& d, std::span<const std::size_t> rows,
                                  std::span<const double> weights, int k, const BalanceQuery& q) {
  check_inputs(rows, weights, k);
  const auto sel = selector(d, rows, q);
  return error_from_selector(d, rows, weights, sel, k);
}

double BalanceReport::reconstructed() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.contribution;
  return s;
}

void BalanceReport::finalize() {
  order_norm2.assign(static_cast<std::size_t>(max_order) + 1, 0.0);
  for (const auto& e : entries) {
    require(e.order >= 0 && e.order <= max_order, ErrorKind::invalid_argument,
            "balance entry order out of range");
    order_norm2[static_cast<std::size_t>(e.order)] += e.epsilon * e.epsilon;
  }
  total = std::accumulate(order_norm2.begin(), order_norm2.end(), 0.0);
}

std::string BalanceReport::to_csv() const {
  std::string s = "order,dim,epsilon,coefficient,contribution\n";
  for (const auto& e : entries) {
    s += std::to_string(e.order) + ',' + e.dim + ',' + csv::format(e.epsilon) + ',' +
         csv::format(e.coefficient) + ',' + csv::format(e.contribution) + '\n';
  }
  return s;
}

BalanceReport BalanceReport::from_csv(std::string_view text) {
  const auto t = csv::parse(text);
  require(t.header == std::vector<std::string>{"order", "dim", "epsilon", "coefficient", "contribution"},
          ErrorKind::parse_error, "balance report: unexpected header");
  BalanceReport r;
  for (const auto& row : t.rows) {
    BalanceEntry e;
    e.order = static_cast<int>(csv::to_int(row[0]));
    e.dim = row[1];
    e.epsilon = csv::to_double(row[2]);
    e.coefficient = csv::to_double(row[3]);
    e.contribution = csv::to_double(row[4]);
    r.max_order = std::max(r.max_order, e.order);
    r.entries.push_back(std::move(e));
  }
  r.finalize();
  return r;
}

BalanceReport balance_report(const Dataset& d, std::span<const std::size_t> rows,
                             std::span<const double> weights, int max_order, const BalanceQuery& q) {
  check_inputs(rows, weights, max_order);
  const auto sel = selector(d, rows, q);
  BalanceReport r;
  r.mode = q.mode;
  r.max_order = max_order;
  for (int k = 0; k <= max_order; ++k) {
    const auto eps = error_from_selector(d, rows, weights, sel, k);
    for (std::size_t j = 0; j < eps.size(); ++j) {
      r.entries.push_back({k, k == 0 ? "const" : "x" + std::to_string(j), eps[j], 0.0, 0.0});
    }
  }
  r.finalize();
  return r;
}

double balance_regularizer(const Dataset& d, std::span<const std::size_t> rows,
                           std::span<const double> weights, int max_order) {
  return balance_report(d, rows, weights, max_order, {}).total;
}

double mean_group_balance(const Dataset& d, std::span<const std::size_t> rows,
                          std::span<const double> weights, int max_order) {
  check_inputs(rows, weights, max_order);
  double acc = 0.0;
  for (const auto& g : group_by_treatment(d, rows)) {
    const auto r = balance_report(d, rows, weights, max_order,
                                  {BalanceMode::per_treatment_group, g.treatment});
    acc += static_cast<double>(g.rows.size()) * r.total;
  }
  return acc / static_cast<double>(rows.size());
}

WeightModel train_weights_balanced(const Dataset& d, std::span<const std::size_t> rows, int max_order,
                                   const Architecture& arch, const OptimizerConfig& opt,
                                   const WeightTrainingOptions& wopt, std::vector<double>* trace) {
  require(max_order >= 0, ErrorKind::invalid_argument, "balance order must be >= 0");
  require(arch.head == Head::softplus, ErrorKind::invalid_argument, "weight models use a softplus head");
  const bool discrete = d.treatment_kind == TreatmentKind::token_sequence && d.discrete_x();
  const Design design = make_design(d, rows, discrete ? Aggregation::treatment_and_x : Aggregation::none);
  const Matrix features = build_features(arch.input, d, design.representative);
  auto x = design_x(d, design);

  std::vector<std::size_t> group;
  if (wopt.objective == WeightObjective::per_treatment_group) {
    group.resize(design.size());
    if (d.treatment_kind == TreatmentKind::token_sequence) {
      std::map<Treatment, std::size_t> ids;
      for (std::size_t c = 0; c < design.size(); ++c) {
        const auto [it, _] = ids.emplace(d.treatment(design.representative[c]), ids.size());
        group[c] = it->second;
      }
    } else {
      // Equal-count bins of the scalar treatment stand in for treatment groups.
      require(wopt.scalar_bins >= 1, ErrorKind::invalid_argument, "scalar_bins must be >= 1");
      std::vector<std::size_t> order = all_indices(design.size());
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return d.t_value[design.representative[a]] < d.t_value[design.representative[b]];
      });
      for (std::size_t i = 0; i < order.size(); ++i)
        group[order[i]] = i * wopt.scalar_bins / order.size();
    }
  }
  const auto reference = weighted_moments(x, d.x_dim, all_indices(design.size()), design.count, max_order);
  auto loss = std::make_shared<WeightBalanceLoss>(std::move(x), d.x_dim, std::move(group), design.count,
                                                  max_order, reference);
  WeightModel w{ParamModel(arch)};
  w.net.initialize(opt.seed);
  auto res = train(w.net, Objective{&features, loss}, opt);
  if (trace) *trace = std::move(res.trace);
  return w;
}

PropensityModel train_propensity_balanced(const Dataset& d, std::span<const std::size_t> rows,
                                          int max_order, double reg_strength,
                                          const Architecture& arch, const OptimizerConfig& opt,
                                          std::vector<double>* trace) {
  require(max_order >= 0, ErrorKind::invalid_argument, "balance order must be >= 0");
  require(reg_strength >= 0.0, ErrorKind::invalid_argument, "reg_strength must be >= 0");
  if (reg_strength == 0.0) return fit_propensity(d, rows, arch, opt, trace);

  const bool discrete = d.treatment_kind == TreatmentKind::token_sequence && d.discrete_x();
  const Design design = make_design(d, rows, discrete ? Aggregation::treatment_and_x : Aggregation::none);
  const Matrix features = build_features(arch.input, d, design.representative);
  auto x = design_x(d, design);
  const auto reference = weighted_moments(x, d.x_dim, all_indices(design.size()), design.count, max_order);

  LossPtr nll, bal;
  if (arch.head == Head::categorical) {
    std::vector<int> toks;
    for (std::size_t r : design.representative) {
      const auto t = d.tokens(r);
      toks.insert(toks.end(), t.begin(), t.end());
    }
    nll = std::make_shared<CategoricalNllLoss>(toks, arch.head_vocab, design.count);
    bal = std::make_shared<RatioBalanceLoss>(RatioBalanceLoss::categorical(
        std::move(toks), arch.head_vocab, std::move(x), d.x_dim, design.count, max_order, reference,
        kPropensityFloor));
  } else {
    require(arch.head == Head::gaussian, ErrorKind::invalid_argument,
            "propensity head must be gaussian or categorical");
    std::vector<double> t;
    for (std::size_t r : design.representative) t.push_back(d.t_value[r]);
    nll = std::make_shared<GaussianNllLoss>(t, design.count);
    bal = std::make_shared<RatioBalanceLoss>(RatioBalanceLoss::gaussian(
        std::move(t), std::move(x), d.x_dim, design.count, max_order, reference, kPropensityFloor));
  }
  auto loss = std::make_shared<SumLoss>(std::vector<std::pair<double, LossPtr>>{{1.0, nll}, {reg_strength, bal}});
  PropensityModel e{ParamModel(arch)};
  e.net.initialize(opt.seed);
  auto res = train(e.net, Objective{&features, loss}, opt);
  if (trace) *trace = std::move(res.trace);
  return e;
}

}  // namespace crm
