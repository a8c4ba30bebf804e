#include "crm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// h(z) = z + z^2 + 2 z^3, the per-position confounder score.
double logit_score(double z) { return z + z * z + 2.0 * z * z * z; }

// Source confounder dimension and sign for each treatment position.
constexpr std::array<std::size_t, 3> kLogitSource{0, 3, 1};
constexpr std::array<double, 3> kLogitSign{1.0, -1.0, 1.0};

// Samples index i with probability p[i] by inverse CDF.
std::size_t sample_categorical(std::span<const double> p, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return p.size() - 1;
}

}  // namespace

void LinearGaussianConfig::validate() const {
  require(n >= 1, ErrorKind::invalid_argument, "linear-Gaussian config: n must be >= 1");
}

Dataset gen_linear_gaussian(const LinearGaussianConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "datagen");
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.treatment_kind = TreatmentKind::continuous_scalar;
  d.outcome_kind = OutcomeKind::real;
  d.x_dim = 1;
  d.x.resize(cfg.n);
  d.t_value.resize(cfg.n);
  d.y.resize(cfg.n);
  d.split.assign(cfg.n, Split::train);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x = normal(rng);
    const double t = x + normal(rng);
    const double eps = cfg.noise_sd * normal(rng);
    d.x[i] = x;
    d.t_value[i] = t;
    d.y[i] = cfg.intercept + cfg.treatment_coef * t + cfg.confounder_coef * x + eps;
  }
  return d;
}

double true_apo_linear(double t) {
  return LinearGaussianConfig::intercept + LinearGaussianConfig::treatment_coef * t;
}

double true_propensity_linear(double t, double x) {
  const double z = t - x;
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

void DiscreteSeqConfig::validate() const {
  require(n >= 1, ErrorKind::invalid_argument, "discrete config: n must be >= 1");
  for (int v : confounder_vocab)
    require(v >= 1, ErrorKind::invalid_argument, "discrete config: confounder vocab must be >= 1");
  for (int v : treatment_vocab)
    require(v >= 1, ErrorKind::invalid_argument, "discrete config: treatment vocab must be >= 1");
  require(confounding_strength >= 0.0 && std::isfinite(confounding_strength),
          ErrorKind::invalid_argument, "discrete config: confounding strength must be >= 0");
}

std::size_t DiscreteSeqConfig::num_confounder_cells() const { return cell_count(confounder_vocab); }
std::size_t DiscreteSeqConfig::num_treatments() const { return cell_count(treatment_vocab); }

DiscreteSeqConfig discrete_seq_64(std::size_t n, std::uint64_t seed) {
  DiscreteSeqConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.treatment_vocab = {16, 2, 2};
  return cfg;
}

double discrete_outcome_logit(std::span<const int> t, std::span<const double> x) {
  const double t0 = t[0], t1 = t[1], t2 = t[2];
  const double x0 = x[0];
  return 0.3 * t0 + 0.2 * t1 + 0.15 * t2 + 0.4 * x0 + 0.10 * x[1] + 0.25 * x[2] + 0.15 * x[3] +
         t0 * x0 + t0 * x0 * x0 + t0 * x0 * x0 * x0;
}

std::vector<double> discrete_token_probs(std::span<const double> x, const DiscreteSeqConfig& cfg) {
  std::vector<double> out;
  for (std::size_t j = 0; j < 3; ++j) {
    const int vocab = cfg.treatment_vocab[j];
    const double score = kLogitSign[j] * logit_score(x[kLogitSource[j]]);
    std::vector<double> logits(static_cast<std::size_t>(vocab));
    for (int v = 0; v < vocab; ++v) logits[v] = cfg.confounding_strength * v * score;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (double l : logits) out.push_back(l / z);
  }
  return out;
}

namespace {

void check_treatment(std::span<const int> t, std::span<const int> vocab) {
  require(t.size() == vocab.size(), ErrorKind::shape_mismatch, "treatment length mismatch");
  for (std::size_t j = 0; j < t.size(); ++j) {
    require(t[j] >= 0 && t[j] < vocab[j], ErrorKind::invalid_argument,
            "treatment token out of vocabulary at position " + std::to_string(j));
  }
}

void check_confounder(std::span<const double> x, const DiscreteSeqConfig& cfg) {
  require(x.size() == 4, ErrorKind::shape_mismatch, "confounder length must be 4");
  for (std::size_t j = 0; j < 4; ++j) {
    require(x[j] >= 0 && x[j] < cfg.confounder_vocab[j] && x[j] == std::floor(x[j]),
            ErrorKind::invalid_argument, "confounder out of range at dimension " + std::to_string(j));
  }
}

}  // namespace

double true_propensity_discrete(std::span<const int> t, std::span<const double> x,
                                const DiscreteSeqConfig& cfg) {
  check_treatment(t, cfg.treatment_vocab);
  check_confounder(x, cfg);
  const auto probs = discrete_token_probs(x, cfg);
  double p = 1.0;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    p *= probs[offset + static_cast<std::size_t>(t[j])];
    offset += static_cast<std::size_t>(cfg.treatment_vocab[j]);
  }
  return p;
}

std::vector<std::vector<double>> enumerate_confounders(const DiscreteSeqConfig& cfg) {
  std::vector<std::vector<double>> out;
  const std::size_t n = cfg.num_confounder_cells();
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    auto digits = cell_digits(c, cfg.confounder_vocab);
    out.emplace_back(digits.begin(), digits.end());
  }
  return out;
}

std::vector<std::vector<int>> enumerate_treatments(std::span<const int> vocab) {
  std::vector<std::vector<int>> out;
  const std::size_t n = cell_count(vocab);
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) out.push_back(cell_digits(c, vocab));
  return out;
}

double true_apo_discrete(std::span<const int> t, const DiscreteSeqConfig& cfg) {
  check_treatment(t, cfg.treatment_vocab);
  const auto xs = enumerate_confounders(cfg);
  double s = 0.0;
  for (const auto& x : xs) s += sigmoid(discrete_outcome_logit(t, x));
  return s / static_cast<double>(xs.size());
}

double true_marginal_discrete(std::span<const int> t, const DiscreteSeqConfig& cfg) {
  const auto xs = enumerate_confounders(cfg);
  double s = 0.0;
  for (const auto& x : xs) s += true_propensity_discrete(t, x, cfg);
  return s / static_cast<double>(xs.size());
}

Dataset gen_discrete_seq(const DiscreteSeqConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "datagen");
  Dataset d;
  d.treatment_kind = TreatmentKind::token_sequence;
  d.outcome_kind = OutcomeKind::binary;
  d.x_dim = 4;
  d.x_vocab.assign(cfg.confounder_vocab.begin(), cfg.confounder_vocab.end());
  d.t_vocab.assign(cfg.treatment_vocab.begin(), cfg.treatment_vocab.end());
  d.x.resize(cfg.n * 4);
  d.t_tokens.resize(cfg.n * 3);
  d.y.resize(cfg.n);
  d.split.assign(cfg.n, Split::train);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    double* x = d.x.data() + i * 4;
    for (std::size_t j = 0; j < 4; ++j) {
      const int v = cfg.confounder_vocab[j];
      x[j] = std::min(v - 1, static_cast<int>(unif(rng) * v));
    }
    const auto probs = discrete_token_probs({x, 4}, cfg);
    std::size_t offset = 0;
    int* t = d.t_tokens.data() + i * 3;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto v = static_cast<std::size_t>(cfg.treatment_vocab[j]);
      t[j] = static_cast<int>(sample_categorical({probs.data() + offset, v}, rng));
      offset += v;
    }
    const double p = sigmoid(discrete_outcome_logit({t, 3}, {x, 4}));
    d.y[i] = unif(rng) < p ? 1.0 : 0.0;
  }
  return d;
}

void split_by_treatment(Dataset& d, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions)
    require(f > 0.0, ErrorKind::invalid_argument, "split fractions must be positive");
  require(std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) <= 1e-9,
          ErrorKind::invalid_argument, "split fractions must sum to 1");
  auto groups = group_by_treatment(d, d.all_rows());
  const std::size_t D = groups.size();
  require(D >= 3, ErrorKind::invalid_argument,
          "split: " + std::to_string(D) + " distinct treatments for 3 nonempty splits");

  std::vector<std::size_t> order(D);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);

  auto count_for = [&](double f) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(D))));
  };
  const std::size_t n_val = count_for(fractions[1]);
  const std::size_t n_test = count_for(fractions[2]);
  require(n_val + n_test < D, ErrorKind::invalid_argument,
          "split: too few distinct treatments for the requested fractions");
  const std::size_t n_train = D - n_val - n_test;

  for (std::size_t k = 0; k < D; ++k) {
    const Split s = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    for (std::size_t r : groups[order[k]].rows) d.split[r] = s;
  }
}

std::size_t OutcomeTable::treatment_index(std::span<const int> t) const {
  for (std::size_t i = 0; i < treatments.size(); ++i) {
    if (std::equal(t.begin(), t.end(), treatments[i].begin(), treatments[i].end())) return i;
  }
  fail(ErrorKind::unseen_treatment, "treatment not present in outcome table");
}

void OutcomeTable::validate() const {
  require(!treatments.empty() && !confounder_bins.empty(), ErrorKind::invalid_argument,
          "outcome table is empty");
  require(probs.size() == num_treatments() * num_bins(), ErrorKind::shape_mismatch,
          "outcome table grid is incomplete");
  require(marginal.size() == num_bins(), ErrorKind::shape_mismatch,
          "marginal length != number of bins");
  for (double p : probs)
    require(p >= 0.0 && p <= 1.0, ErrorKind::invalid_argument, "probability outside [0,1]");
  double s = 0.0;
  for (double p : marginal) {
    require(p >= 0.0, ErrorKind::invalid_argument, "negative marginal probability");
    s += p;
  }
  require(std::abs(s - 1.0) <= 1e-9, ErrorKind::invalid_argument, "marginal does not sum to 1");
  if (!propensity.empty()) {
    require(propensity.size() == probs.size(), ErrorKind::shape_mismatch,
            "propensity grid is incomplete");
    for (std::size_t k = 0; k < num_bins(); ++k) {
      double col = 0.0;
      for (std::size_t t = 0; t < num_treatments(); ++t) col += propensity[t * num_bins() + k];
      require(std::abs(col - 1.0) <= 1e-9, ErrorKind::invalid_argument,
              "propensity column does not sum to 1");
    }
  }
}

OutcomeTable load_outcome_table(const std::filesystem::path& table_path,
                                const std::filesystem::path& marginal_path) {
  const auto tab = csv::read(table_path);
  const auto marg = csv::read(marginal_path);
  OutcomeTable out;

  const std::size_t mb = marg.column("x_bin"), mp = marg.column("p");
  std::map<int, double> marginal;
  for (const auto& r : marg.rows) {
    const int bin = static_cast<int>(csv::to_int(r[mb]));
    require(!marginal.count(bin), ErrorKind::parse_error, "duplicate x_bin in marginal");
    marginal[bin] = csv::to_double(r[mp]);
  }
  std::map<int, std::size_t> bin_index;
  for (auto& [bin, p] : marginal) {
    bin_index[bin] = out.confounder_bins.size();
    out.confounder_bins.push_back(bin);
    out.marginal.push_back(p);
  }

  const std::size_t ct = tab.column("t_id"), cx = tab.column("x_bin"), cp = tab.column("prob");
  std::vector<std::size_t> tok_cols;
  for (std::size_t c = 0; c < tab.header.size(); ++c) {
    if (tab.header[c].rfind("tok_", 0) == 0) tok_cols.push_back(c);
  }
  require(!tok_cols.empty(), ErrorKind::parse_error, "outcome table has no tok_ columns");
  std::size_t cprop = tab.header.size();
  for (std::size_t c = 0; c < tab.header.size(); ++c)
    if (tab.header[c] == "propensity") cprop = c;
  const bool has_prop = cprop < tab.header.size();

  std::map<long long, std::vector<int>> tokens_by_id;
  std::map<std::pair<long long, int>, std::pair<double, double>> cells;
  for (const auto& r : tab.rows) {
    const long long id = csv::to_int(r[ct]);
    std::vector<int> toks;
    for (std::size_t c : tok_cols) toks.push_back(static_cast<int>(csv::to_int(r[c])));
    auto [it, inserted] = tokens_by_id.emplace(id, toks);
    require(inserted || it->second == toks, ErrorKind::parse_error,
            "t_id " + std::to_string(id) + " has inconsistent tokens");
    const int bin = static_cast<int>(csv::to_int(r[cx]));
    require(bin_index.count(bin), ErrorKind::parse_error,
            "x_bin " + std::to_string(bin) + " missing from marginal");
    const double p = csv::to_double(r[cp]);
    const double e = has_prop ? csv::to_double(r[cprop]) : 0.0;
    require(cells.emplace(std::make_pair(id, bin), std::make_pair(p, e)).second,
            ErrorKind::parse_error, "duplicate (t_id, x_bin) row");
  }

  for (auto& [id, toks] : tokens_by_id) out.treatments.push_back(toks);
  out.probs.assign(out.num_treatments() * out.num_bins(), 0.0);
  if (has_prop) out.propensity.assign(out.probs.size(), 0.0);
  std::size_t ti = 0;
  for (auto& [id, toks] : tokens_by_id) {
    for (std::size_t k = 0; k < out.num_bins(); ++k) {
      auto it = cells.find({id, out.confounder_bins[k]});
      require(it != cells.end(), ErrorKind::parse_error,
              "missing grid cell for t_id " + std::to_string(id));
      out.probs[ti * out.num_bins() + k] = it->second.first;
      if (has_prop) out.propensity[ti * out.num_bins() + k] = it->second.second;
    }
    ++ti;
  }
  out.validate();
  return out;
}

void write_outcome_table(const OutcomeTable& table, const std::filesystem::path& table_path,
                         const std::filesystem::path& marginal_path) {
  table.validate();
  std::ostringstream os;
  os << "t_id,";
  for (std::size_t j = 0; j < table.treatments.front().size(); ++j) os << "tok_" << j << ',';
  os << "x_bin,prob";
  if (!table.propensity.empty()) os << ",propensity";
  os << '\n';
  for (std::size_t t = 0; t < table.num_treatments(); ++t) {
    for (std::size_t k = 0; k < table.num_bins(); ++k) {
      os << t << ',';
      for (int v : table.treatments[t]) os << v << ',';
      os << table.confounder_bins[k] << ',' << csv::format(table.prob(t, k));
      if (!table.propensity.empty())
        os << ',' << csv::format(table.propensity[t * table.num_bins() + k]);
      os << '\n';
    }
  }
  csv::write_text(table_path, os.str());

  std::ostringstream ms;
  ms << "x_bin,p\n";
  for (std::size_t k = 0; k < table.num_bins(); ++k)
    ms << table.confounder_bins[k] << ',' << csv::format(table.marginal[k]) << '\n';
  csv::write_text(marginal_path, ms.str());
}

Dataset gen_from_table(const OutcomeTable& table, std::size_t n, std::uint64_t seed) {
  table.validate();
  require(n >= 1, ErrorKind::invalid_argument, "gen_from_table: n must be >= 1");
  Rng rng = make_rng(seed, "datagen");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t m = table.treatments.front().size();
  Dataset d;
  d.treatment_kind = TreatmentKind::token_sequence;
  d.outcome_kind = OutcomeKind::binary;
  d.x_dim = 1;
  d.t_vocab.assign(m, 1);
  for (const auto& t : table.treatments)
    for (std::size_t j = 0; j < m; ++j) d.t_vocab[j] = std::max(d.t_vocab[j], t[j] + 1);
  const int max_bin = *std::max_element(table.confounder_bins.begin(), table.confounder_bins.end());
  const bool bins_nonneg = *std::min_element(table.confounder_bins.begin(),
                                             table.confounder_bins.end()) >= 0;
  if (bins_nonneg) d.x_vocab = {max_bin + 1};

  std::vector<double> uniform_t(table.num_treatments(), 1.0 / static_cast<double>(table.num_treatments()));
  std::vector<double> col(table.num_treatments());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = sample_categorical(table.marginal, rng);
    std::size_t t = 0;
    if (table.propensity.empty()) {
      t = sample_categorical(uniform_t, rng);
    } else {
      for (std::size_t a = 0; a < table.num_treatments(); ++a)
        col[a] = table.propensity[a * table.num_bins() + k];
      t = sample_categorical(col, rng);
    }
    d.x.push_back(table.confounder_bins[k]);
    d.t_tokens.insert(d.t_tokens.end(), table.treatments[t].begin(), table.treatments[t].end());
    d.y.push_back(unif(rng) < table.prob(t, k) ? 1.0 : 0.0);
    d.split.push_back(Split::train);
  }
  return d;
}

double true_apo_from_table(const OutcomeTable& table, std::span<const int> t) {
  const std::size_t ti = table.treatment_index(t);
  double s = 0.0;
  for (std::size_t k = 0; k < table.num_bins(); ++k) s += table.marginal[k] * table.prob(ti, k);
  return s;
}

}  // namespace crm
