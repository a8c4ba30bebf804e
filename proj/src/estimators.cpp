#include "crm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/kernels.hpp"
#include "crm/loss.hpp"

namespace crm {

namespace {

const std::vector<std::size_t> kDefaultHidden{64, 64};

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

Matrix outputs(const ParamModel& m, const Matrix& features) {
  const auto rows = iota_rows(static_cast<std::size_t>(features.rows()));
  return kernels::forward(m, features, rows);
}

bool discrete_inputs(const Dataset& d) {
  return d.treatment_kind == TreatmentKind::token_sequence && d.discrete_x();
}

// Confounder-only feature rows of a dataset subset.
Matrix confounder_features(const ParamModel& m, const Dataset& d, std::span<const std::size_t> rows) {
  return build_features(m.architecture().input, d, rows);
}

// Per-position softmax probabilities for each listed row, concatenated.
Matrix token_probs(const ParamModel& m, const Dataset& d, std::span<const std::size_t> rows) {
  const Matrix out = outputs(m, confounder_features(m, d, rows));
  Matrix probs(out.rows(), out.cols());
  const auto& vocab = m.architecture().head_vocab;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    std::size_t off = 0;
    for (int v : vocab) {
      const auto p = softmax({out.row(i).data() + off, static_cast<std::size_t>(v)});
      for (std::size_t k = 0; k < p.size(); ++k) probs(i, static_cast<Eigen::Index>(off + k)) = p[k];
      off += static_cast<std::size_t>(v);
    }
  }
  return probs;
}

double normal_pdf(double t, double mu, double log_sigma) {
  const double inv = std::exp(-log_sigma);
  const double z = (t - mu) * inv;
  return 0.39894228040143267794 * inv * std::exp(-0.5 * z * z);
}

double clamp_pair(double q, std::size_t& clamped) {
  if (q < 0.0 || q > 1.0) {
    ++clamped;
    return std::clamp(q, 0.0, 1.0);
  }
  return q;
}

}  // namespace

std::vector<double> apply_head(Head h, const Matrix& out) {
  require(out.cols() == 1, ErrorKind::shape_mismatch, "apply_head expects a single output column");
  std::vector<double> v(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double z = out(i, 0);
    switch (h) {
      case Head::sigmoid: v[static_cast<std::size_t>(i)] = sigmoid(z); break;
      case Head::softplus: v[static_cast<std::size_t>(i)] = softplus(z); break;
      default: v[static_cast<std::size_t>(i)] = z; break;
    }
  }
  return v;
}

Architecture PropensityModel::default_architecture(const Dataset& d) {
  const auto in = InputSpec::confounders_only(d);
  if (d.treatment_kind == TreatmentKind::token_sequence) {
    auto a = Architecture::mlp(in, kDefaultHidden, Head::categorical);
    a.head_vocab = d.t_vocab;
    return a;
  }
  return Architecture::mlp(in, kDefaultHidden, Head::gaussian);
}

std::vector<double> PropensityModel::at_rows(const Dataset& d, std::span<const std::size_t> rows) const {
  std::vector<double> e(rows.size());
  if (net.architecture().head == Head::categorical) {
    const Matrix probs = token_probs(net, d, rows);
    const auto& vocab = net.architecture().head_vocab;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const auto toks = d.tokens(rows[a]);
      double p = 1.0;
      std::size_t off = 0;
      for (std::size_t j = 0; j < vocab.size(); ++j) {
        p *= probs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(off + static_cast<std::size_t>(toks[j])));
        off += static_cast<std::size_t>(vocab[j]);
      }
      e[a] = p;
    }
  } else {
    const Matrix out = outputs(net, confounder_features(net, d, rows));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const auto i = static_cast<Eigen::Index>(a);
      e[a] = normal_pdf(d.t_value[rows[a]], out(i, 0), out(i, 1));
    }
  }
  return e;
}

double PropensityModel::at(const Treatment& t, std::span<const double> x) const {
  const auto& arch = net.architecture();
  std::vector<double> feat(arch.input.width());
  encode(arch.input, t, x, feat);
  const auto out = net.forward(feat);
  if (arch.head != Head::categorical) return normal_pdf(t.value, out[0], out[1]);
  require(t.tokens.size() == arch.head_vocab.size(), ErrorKind::shape_mismatch, "propensity: treatment length mismatch");
  double p = 1.0;
  std::size_t off = 0;
  for (std::size_t j = 0; j < arch.head_vocab.size(); ++j) {
    const auto v = static_cast<std::size_t>(arch.head_vocab[j]);
    const auto probs = softmax(std::span<const double>(out).subspan(off, v));
    p *= probs[static_cast<std::size_t>(t.tokens[j])];
    off += v;
  }
  return p;
}

std::vector<double> PropensityModel::marginal(const Dataset& d, std::span<const std::size_t> population,
                                              std::span<const Treatment> queries) const {
  require(!population.empty(), ErrorKind::invalid_argument, "marginal over an empty population");
  const std::vector<double> weight(population.size(), 1.0);
  if (net.architecture().head == Head::categorical) {
    const auto& vocab = net.architecture().head_vocab;
    std::vector<int> toks;
    toks.reserve(queries.size() * vocab.size());
    for (const auto& q : queries) {
      require(q.tokens.size() == vocab.size(), ErrorKind::shape_mismatch,
              "marginal: treatment length mismatch");
      toks.insert(toks.end(), q.tokens.begin(), q.tokens.end());
    }
    // Distinct confounder rows share probabilities; aggregate them first.
    const Design cells = make_design(d, population, Aggregation::x);
    const Matrix probs = token_probs(net, d, cells.representative);
    return kernels::categorical_mixture(toks, vocab, probs, cells.count);
  }
  const Matrix out = outputs(net, confounder_features(net, d, population));
  std::vector<double> mu(population.size()), ls(population.size()), t(queries.size());
  for (std::size_t j = 0; j < population.size(); ++j) {
    mu[j] = out(static_cast<Eigen::Index>(j), 0);
    ls[j] = out(static_cast<Eigen::Index>(j), 1);
  }
  for (std::size_t i = 0; i < queries.size(); ++i) t[i] = queries[i].value;
  return kernels::gaussian_mixture(t, mu, ls, weight);
}

Architecture WeightModel::default_architecture(const Dataset& d) {
  return Architecture::mlp(InputSpec::treatment_and_confounders(d), kDefaultHidden, Head::softplus);
}

std::vector<double> WeightModel::at_rows(const Dataset& d, std::span<const std::size_t> rows) const {
  return apply_head(Head::softplus, outputs(net, build_features(net.architecture().input, d, rows)));
}

double WeightModel::at(const Treatment& t, std::span<const double> x) const {
  std::vector<double> feat(net.architecture().input.width());
  encode(net.architecture().input, t, x, feat);
  return softplus(net.forward(feat)[0]);
}

Architecture OutcomeModel::default_architecture(const Dataset& d) {
  const auto in = InputSpec::treatment_and_confounders(d);
  const Head h = d.outcome_kind == OutcomeKind::binary ? Head::sigmoid : Head::identity;
  if (d.treatment_kind == TreatmentKind::continuous_scalar) return Architecture::linear(in, h);
  return Architecture::mlp(in, kDefaultHidden, h);
}

std::vector<double> OutcomeModel::at_rows(const Dataset& d, std::span<const std::size_t> rows) const {
  return apply_head(net.architecture().head,
                    outputs(net, build_features(net.architecture().input, d, rows)));
}

std::vector<double> OutcomeModel::at_treatment(const Dataset& d, std::span<const std::size_t> population,
                                               const Treatment& t) const {
  return apply_head(net.architecture().head,
                    outputs(net, build_features_at(net.architecture().input, d, population, t)));
}

Architecture ApoModel::default_architecture(const Dataset& d) {
  const auto in = InputSpec::treatment_only(d);
  const Head h = d.outcome_kind == OutcomeKind::binary ? Head::sigmoid : Head::identity;
  if (d.treatment_kind == TreatmentKind::continuous_scalar) return Architecture::linear(in, h);
  return Architecture::mlp(in, kDefaultHidden, h);
}

std::vector<double> ApoModel::predict(std::span<const Treatment> ts) const {
  return apply_head(net.architecture().head,
                    outputs(net, build_treatment_features(net.architecture().input, ts)));
}

double ipw_classical(const Dataset& d, std::span<const std::size_t> rows,
                     std::span<const double> propensity, const Treatment& t) {
  require(propensity.size() == rows.size(), ErrorKind::shape_mismatch,
          "ipw_classical: one propensity per row required");
  require(!rows.empty(), ErrorKind::invalid_argument, "ipw_classical: empty dataset");
  double s = 0.0;
  bool seen = false;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    if (d.treatment(rows[a]) != t) continue;
    seen = true;
    require(propensity[a] > 0.0, ErrorKind::invalid_argument, "ipw_classical: non-positive propensity");
    s += d.y[rows[a]] / propensity[a];
  }
  if (!seen) fail(ErrorKind::unseen_treatment, "IPW estimate undefined for unseen treatment " + to_string(t));
  return s / static_cast<double>(rows.size());
}

double oi_classical(const OutcomeModel& f, const Dataset& d, std::span<const std::size_t> population,
                    const Treatment& t) {
  require(!population.empty(), ErrorKind::invalid_argument, "oi_classical: empty population");
  const auto v = f.at_treatment(d, population, t);
  return kernels::sum(v) / static_cast<double>(v.size());
}

std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::naive: return "naive";
    case TargetKind::ipw_crm: return "ipw_crm";
    case TargetKind::sw_crm: return "sw_crm";
    case TargetKind::oi_crm: return "oi_crm";
  }
  return "naive";
}

void CrmTargets::write_csv(const std::filesystem::path& path) const {
  std::string s = pairs ? "row_id,target_0,target_1\n" : "row_id,target\n";
  for (std::size_t a = 0; a < rows.size(); ++a) {
    s += std::to_string(rows[a]) + ',';
    if (pairs) s += csv::format(1.0 - values[a]) + ',';
    s += csv::format(values[a]) + '\n';
  }
  csv::write_text(path, s);
}

CrmTargets make_naive_targets(const Dataset& d, std::span<const std::size_t> rows) {
  CrmTargets t;
  t.provenance = TargetKind::naive;
  t.nuisance = "none";
  t.rows.assign(rows.begin(), rows.end());
  t.pairs = d.outcome_kind == OutcomeKind::binary;
  for (std::size_t r : rows) t.values.push_back(d.y[r]);
  return t;
}

CrmTargets make_ipw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                                std::span<const double> propensity, std::span<const double> marginal,
                                double floor, bool clamp_pairs) {
  require(propensity.size() == rows.size() && marginal.size() == rows.size(),
          ErrorKind::shape_mismatch, "ipw targets: one propensity and marginal per row required");
  require(floor > 0.0, ErrorKind::invalid_argument, "propensity floor must be positive");
  CrmTargets t;
  t.provenance = TargetKind::ipw_crm;
  t.nuisance = "propensity";
  t.rows.assign(rows.begin(), rows.end());
  t.pairs = d.outcome_kind == OutcomeKind::binary;
  t.values.resize(rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    double e = propensity[a];
    if (!std::isfinite(e) || !std::isfinite(marginal[a]))
      throw NonFiniteError(rows[a], "ipw targets: non-finite propensity at row " + std::to_string(rows[a]));
    if (e < floor) {
      e = floor;
      ++t.floored;
    }
    const double v = marginal[a] / e * d.y[rows[a]];
    t.values[a] = t.pairs && clamp_pairs ? clamp_pair(v, t.clamped) : v;
  }
  return t;
}

CrmTargets make_ipw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                                const PropensityModel& e, double floor, bool clamp_pairs) {
  std::vector<Treatment> ts;
  ts.reserve(rows.size());
  for (std::size_t r : rows) ts.push_back(d.treatment(r));
  const auto prop = e.at_rows(d, rows);
  const auto marg = e.marginal(d, rows, ts);
  return make_ipw_crm_targets(d, rows, prop, marg, floor, clamp_pairs);
}

CrmTargets make_sw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               std::span<const double> weights, bool clamp_pairs) {
  require(weights.size() == rows.size(), ErrorKind::shape_mismatch,
          "sw targets: one weight per row required");
  CrmTargets t;
  t.provenance = TargetKind::sw_crm;
  t.nuisance = "weights";
  t.rows.assign(rows.begin(), rows.end());
  t.pairs = d.outcome_kind == OutcomeKind::binary;
  t.values.resize(rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a) {
    if (!std::isfinite(weights[a]))
      throw NonFiniteError(rows[a], "sw targets: non-finite weight at row " + std::to_string(rows[a]));
    const double v = weights[a] * d.y[rows[a]];
    t.values[a] = t.pairs && clamp_pairs ? clamp_pair(v, t.clamped) : v;
  }
  return t;
}

CrmTargets make_sw_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               const WeightModel& w, bool clamp_pairs) {
  return make_sw_crm_targets(d, rows, w.at_rows(d, rows), clamp_pairs);
}

CrmTargets make_oi_crm_targets(const Dataset& d, std::span<const std::size_t> rows,
                               const OutcomeModel& f, std::span<const std::size_t> population) {
  CrmTargets t;
  t.provenance = TargetKind::oi_crm;
  t.nuisance = "outcome";
  t.rows.assign(rows.begin(), rows.end());
  t.pairs = d.outcome_kind == OutcomeKind::binary;
  t.values.resize(rows.size());
  if (d.treatment_kind == TreatmentKind::token_sequence) {
    // Rows sharing a treatment share a target.
    std::map<Treatment, double> cache;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const Treatment tr = d.treatment(rows[a]);
      auto it = cache.find(tr);
      if (it == cache.end()) it = cache.emplace(tr, oi_classical(f, d, population, tr)).first;
      t.values[a] = it->second;
    }
  } else {
    for (std::size_t a = 0; a < rows.size(); ++a)
      t.values[a] = oi_classical(f, d, population, d.treatment(rows[a]));
  }
  return t;
}

ApoModel fit_apo(const CrmTargets& targets, const Dataset& d, const Architecture& arch,
                 const OptimizerConfig& opt, std::vector<double>* trace, std::size_t* clamped_cells) {
  require(targets.values.size() == targets.rows.size(), ErrorKind::shape_mismatch,
          "targets misaligned with rows");
  require(!arch.input.use_confounders, ErrorKind::invalid_argument,
          "an APO model takes the treatment alone");
  std::vector<double> per_row(d.size(), 0.0);
  for (std::size_t a = 0; a < targets.rows.size(); ++a) per_row[targets.rows[a]] = targets.values[a];

  const Aggregation agg = d.treatment_kind == TreatmentKind::token_sequence ? Aggregation::treatment
                                                                             : Aggregation::none;
  const Design design = make_design(d, targets.rows, agg);
  const Matrix features = build_features(arch.input, d, design.representative);
  auto mean_target = design.cell_mean(per_row);

  LossPtr loss;
  if (d.outcome_kind == OutcomeKind::binary) {
    require(arch.head == Head::sigmoid, ErrorKind::invalid_argument,
            "binary outcomes need a sigmoid APO head");
    std::size_t clamped = 0;
    for (double& q : mean_target) q = clamp_pair(q, clamped);
    if (clamped_cells) *clamped_cells = clamped;
    loss = std::make_shared<CrossEntropyLoss>(std::move(mean_target), design.count);
  } else {
    loss = std::make_shared<SquaredErrorLoss>(std::move(mean_target), design.count);
  }
  ApoModel g{ParamModel(arch)};
  g.net.initialize(opt.seed);
  auto res = train(g.net, Objective{&features, loss}, opt);
  if (trace) *trace = std::move(res.trace);
  return g;
}

PropensityModel fit_propensity(const Dataset& d, std::span<const std::size_t> rows,
                               const Architecture& arch, const OptimizerConfig& opt,
                               std::vector<double>* trace) {
  require(!arch.input.use_treatment, ErrorKind::invalid_argument,
          "a propensity model takes the confounders alone");
  PropensityModel e{ParamModel(arch)};
  e.net.initialize(opt.seed);
  const Aggregation agg = discrete_inputs(d) ? Aggregation::treatment_and_x : Aggregation::none;
  const Design design = make_design(d, rows, agg);
  const Matrix features = build_features(arch.input, d, design.representative);
  LossPtr loss;
  if (arch.head == Head::categorical) {
    std::vector<int> toks;
    for (std::size_t r : design.representative) {
      const auto t = d.tokens(r);
      toks.insert(toks.end(), t.begin(), t.end());
    }
    loss = std::make_shared<CategoricalNllLoss>(std::move(toks), arch.head_vocab, design.count);
  } else {
    require(arch.head == Head::gaussian, ErrorKind::invalid_argument,
            "propensity head must be gaussian or categorical");
    std::vector<double> t;
    for (std::size_t r : design.representative) t.push_back(d.t_value[r]);
    loss = std::make_shared<GaussianNllLoss>(std::move(t), design.count);
  }
  auto res = train(e.net, Objective{&features, loss}, opt);
  if (trace) *trace = std::move(res.trace);
  return e;
}

OutcomeModel fit_outcome(const Dataset& d, std::span<const std::size_t> rows, const Architecture& arch,
                         const OptimizerConfig& opt, std::vector<double>* trace) {
  OutcomeModel f{ParamModel(arch)};
  f.net.initialize(opt.seed);
  const Aggregation agg = discrete_inputs(d) ? Aggregation::treatment_and_x : Aggregation::none;
  const Design design = make_design(d, rows, agg);
  const Matrix features = build_features(arch.input, d, design.representative);
  auto mean_y = design.cell_mean(d.y);
  LossPtr loss;
  if (d.outcome_kind == OutcomeKind::binary) {
    require(arch.head == Head::sigmoid, ErrorKind::invalid_argument,
            "binary outcomes need a sigmoid outcome head");
    loss = std::make_shared<CrossEntropyLoss>(std::move(mean_y), design.count);
  } else {
    loss = std::make_shared<SquaredErrorLoss>(std::move(mean_y), design.count);
  }
  auto res = train(f.net, Objective{&features, loss}, opt);
  if (trace) *trace = std::move(res.trace);
  return f;
}

}  // namespace crm
