#include "crm/projection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/metrics.hpp"

namespace crm {

namespace {

std::size_t support_index(const AttributeSpec& spec, int value) {
  const auto it = std::find(spec.support.begin(), spec.support.end(), value);
  require(it != spec.support.end(), ErrorKind::invalid_argument,
          spec.name + ": value " + std::to_string(value) + " outside the attribute support");
  return static_cast<std::size_t>(it - spec.support.begin());
}

}  // namespace

AttributeSpec make_attribute(std::string_view spec, const Dataset& d) {
  const auto parts = csv::split(spec, ':');
  AttributeSpec a;
  a.name = std::string(spec);
  if (parts.size() == 2 && parts[0] == "token") {
    require(d.treatment_kind == TreatmentKind::token_sequence, ErrorKind::invalid_argument,
            "token attributes need sequence treatments");
    const auto j = csv::to_int(parts[1]);
    require(j >= 0 && static_cast<std::size_t>(j) < d.t_len(), ErrorKind::invalid_argument,
            "token position out of range: " + std::string(spec));
    const auto pos = static_cast<std::size_t>(j);
    a.label = [pos](const Treatment& t) { return t.tokens.at(pos); };
    for (int v = 0; v < d.t_vocab[pos]; ++v) a.support.push_back(v);
    return a;
  }
  if (parts.size() == 3 && parts[0] == "threshold") {
    const double thr = csv::to_double(parts[2]);
    if (parts[1] == "value") {
      a.label = [thr](const Treatment& t) { return t.value > thr ? 1 : 0; };
    } else if (parts[1] == "token_sum") {
      a.label = [thr](const Treatment& t) {
        double s = 0.0;
        for (int v : t.tokens) s += v;
        return s > thr ? 1 : 0;
      };
    } else {
      fail(ErrorKind::parse_error, "unknown threshold function: " + std::string(parts[1]));
    }
    a.support = {0, 1};
    return a;
  }
  fail(ErrorKind::parse_error, "unknown attribute: " + std::string(spec));
}

std::vector<double> project_apo_table(const ApoFn& g, const Dataset& d, std::span<const std::size_t> rows,
                                      const AttributeSpec& spec) {
  // Evaluate g once per distinct treatment, then average with row counts.
  std::map<Treatment, std::size_t> counts;
  for (std::size_t r : rows) ++counts[d.treatment(r)];
  std::vector<Treatment> ts;
  for (const auto& [t, c] : counts) ts.push_back(t);
  const auto gv = g(ts);
  std::vector<double> num(spec.support.size(), 0.0), den(spec.support.size(), 0.0);
  std::size_t i = 0;
  for (const auto& [t, c] : counts) {
    const auto k = support_index(spec, spec.label(t));
    num[k] += static_cast<double>(c) * gv[i++];
    den[k] += static_cast<double>(c);
  }
  std::vector<double> out(spec.support.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (den[k] == 0.0) {
      fail(ErrorKind::empty_group, spec.name + ": no rows with attribute value " +
                                       std::to_string(spec.support[k]));
    }
    out[k] = num[k] / den[k];
  }
  return out;
}

double project_apo(const ApoFn& g, const Dataset& d, std::span<const std::size_t> rows,
                   const AttributeSpec& spec, int value) {
  const auto k = support_index(spec, value);
  std::vector<std::size_t> sel;
  for (std::size_t r : rows)
    if (spec.label(d.treatment(r)) == value) sel.push_back(r);
  if (sel.empty()) {
    fail(ErrorKind::empty_group, spec.name + ": no rows with attribute value " + std::to_string(value));
  }
  AttributeSpec single = spec;
  single.support = {spec.support[k]};
  return project_apo_table(g, d, sel, single)[0];
}

std::vector<double> attribute_truth_discrete(const DiscreteSeqConfig& cfg, const AttributeSpec& spec) {
  std::vector<double> num(spec.support.size(), 0.0), den(spec.support.size(), 0.0);
  for (const auto& t : enumerate_treatments(cfg.treatment_vocab)) {
    const double p = true_marginal_discrete(t, cfg);
    const auto k = support_index(spec, spec.label(Treatment::sequence(t)));
    num[k] += p * true_apo_discrete(t, cfg);
    den[k] += p;
  }
  std::vector<double> out(num.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    require(den[k] > 0.0, ErrorKind::empty_group, spec.name + ": attribute value has zero probability");
    out[k] = num[k] / den[k];
  }
  return out;
}

Dataset relabel_by_attribute(const Dataset& d, const AttributeSpec& spec) {
  Dataset r;
  r.treatment_kind = TreatmentKind::token_sequence;
  r.outcome_kind = d.outcome_kind;
  r.x_dim = d.x_dim;
  r.x = d.x;
  r.x_vocab = d.x_vocab;
  r.t_vocab = {static_cast<int>(spec.support.size())};
  r.y = d.y;
  r.split = d.split;
  r.t_tokens.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    r.t_tokens[i] = static_cast<int>(support_index(spec, spec.label(d.treatment(i))));
  return r;
}

std::vector<double> retrain_attribute_estimator(const Dataset& d, std::span<const std::size_t> rows,
                                                const AttributeSpec& spec, const PipelineConfig& cfg) {
  const Dataset r = relabel_by_attribute(d, spec);
  const auto est = fit_estimator(r, rows, cfg);
  std::vector<Treatment> ts;
  for (std::size_t k = 0; k < spec.support.size(); ++k) ts.push_back(Treatment::sequence({static_cast<int>(k)}));
  return est.predict(r, ts);
}

ProjectionComparison compare_projection(std::span<const double> projected,
                                        std::span<const double> retrained, std::span<const double> truth) {
  require(projected.size() == truth.size() && retrained.size() == truth.size(), ErrorKind::shape_mismatch,
          "projection tables must share the attribute support");
  ProjectionComparison c;
  c.projected_rel_mae = relative_mae(projected, truth);
  c.retrained_rel_mae = relative_mae(retrained, truth);
  c.projected_correlation = correlation(projected, truth);
  c.retrained_correlation = correlation(retrained, truth);
  c.degenerate_correlation = truth.size() == 2;
  return c;
}

std::string projection_csv(const AttributeSpec& spec, std::span<const double> projected,
                           std::span<const double> retrained, std::span<const double> truth) {
  require(projected.size() == spec.support.size() && retrained.size() == spec.support.size() &&
              truth.size() == spec.support.size(),
          ErrorKind::shape_mismatch, "projection tables must match the attribute support");
  std::string s = "attribute,value,projected,retrained,truth\n";
  for (std::size_t k = 0; k < spec.support.size(); ++k) {
    s += spec.name + ',' + std::to_string(spec.support[k]) + ',' + csv::format(projected[k]) + ',' +
         csv::format(retrained[k]) + ',' + csv::format(truth[k]) + '\n';
  }
  return s;
}

}  // namespace crm
