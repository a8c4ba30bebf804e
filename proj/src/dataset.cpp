#include "crm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "crm/csv.hpp"
#include "crm/error.hpp"

namespace crm {

std::string to_string(TreatmentKind k) {
  return k == TreatmentKind::continuous_scalar ? "continuous_scalar" : "token_sequence";
}

std::string to_string(OutcomeKind k) { return k == OutcomeKind::real ? "real" : "binary"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(ErrorKind::parse_error, "unknown split tag '" + std::string(s) + "'");
}

std::string to_string(const Treatment& t) {
  if (!t.is_sequence()) return csv::format(t.value);
  std::string out;
  for (std::size_t j = 0; j < t.tokens.size(); ++j) {
    if (j) out += '.';
    out += std::to_string(t.tokens[j]);
  }
  return out;
}

std::size_t cell_index(std::span<const int> digits, std::span<const int> radix) {
  require(digits.size() == radix.size(), ErrorKind::shape_mismatch, "cell_index: length mismatch");
  std::size_t idx = 0;
  for (std::size_t j = 0; j < radix.size(); ++j) {
    require(digits[j] >= 0 && digits[j] < radix[j], ErrorKind::invalid_argument,
            "cell_index: digit out of range");
    idx = idx * static_cast<std::size_t>(radix[j]) + static_cast<std::size_t>(digits[j]);
  }
  return idx;
}

std::vector<int> cell_digits(std::size_t index, std::span<const int> radix) {
  std::vector<int> d(radix.size());
  for (std::size_t j = radix.size(); j-- > 0;) {
    d[j] = static_cast<int>(index % static_cast<std::size_t>(radix[j]));
    index /= static_cast<std::size_t>(radix[j]);
  }
  return d;
}

std::size_t cell_count(std::span<const int> radix) {
  std::size_t n = 1;
  for (int r : radix) n *= static_cast<std::size_t>(r);
  return n;
}

Treatment Dataset::treatment(std::size_t i) const {
  if (treatment_kind == TreatmentKind::continuous_scalar) return Treatment::scalar(t_value[i]);
  auto tk = tokens(i);
  return Treatment::sequence(std::vector<int>(tk.begin(), tk.end()));
}

std::size_t Dataset::treatment_id(std::size_t i) const {
  require(treatment_kind == TreatmentKind::token_sequence, ErrorKind::invalid_argument,
          "treatment_id requires token treatments");
  return cell_index(tokens(i), t_vocab);
}

std::size_t Dataset::x_cell(std::size_t i) const {
  require(discrete_x(), ErrorKind::invalid_argument, "x_cell requires discrete confounders");
  std::size_t idx = 0;
  auto row = x_row(i);
  for (std::size_t j = 0; j < x_dim; ++j) {
    idx = idx * static_cast<std::size_t>(x_vocab[j]) + static_cast<std::size_t>(row[j]);
  }
  return idx;
}

std::vector<std::size_t> Dataset::rows(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::all_rows() const {
  std::vector<std::size_t> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

void Dataset::validate() const {
  const std::size_t n = size();
  require(x.size() == n * x_dim, ErrorKind::shape_mismatch, "confounder array length != n * d_x");
  require(split.size() == n, ErrorKind::shape_mismatch, "split tags length != n");
  if (treatment_kind == TreatmentKind::continuous_scalar) {
    require(t_value.size() == n, ErrorKind::shape_mismatch, "treatment array length != n");
  } else {
    require(!t_vocab.empty(), ErrorKind::invalid_argument, "token treatments need a vocabulary");
    require(t_tokens.size() == n * t_len(), ErrorKind::shape_mismatch,
            "token array length != n * m");
    for (std::size_t i = 0; i < t_tokens.size(); ++i) {
      const int v = t_tokens[i];
      require(v >= 0 && v < t_vocab[i % t_len()], ErrorKind::invalid_argument,
              "token out of vocabulary at row " + std::to_string(i / t_len()));
    }
  }
  if (discrete_x()) {
    require(x_vocab.size() == x_dim, ErrorKind::shape_mismatch, "x_vocab length != d_x");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      require(v >= 0 && v < x_vocab[i % x_dim] && v == std::floor(v), ErrorKind::invalid_argument,
              "confounder out of range at row " + std::to_string(i / x_dim));
    }
  }
  if (outcome_kind == OutcomeKind::binary) {
    for (std::size_t i = 0; i < n; ++i) {
      require(y[i] == 0.0 || y[i] == 1.0, ErrorKind::invalid_argument,
              "binary outcome not in {0,1} at row " + std::to_string(i));
    }
  }
}

std::vector<TreatmentGroup> group_by_treatment(const Dataset& d,
                                               std::span<const std::size_t> rows) {
  std::map<Treatment, std::vector<std::size_t>> groups;
  for (std::size_t r : rows) groups[d.treatment(r)].push_back(r);
  std::vector<TreatmentGroup> out;
  out.reserve(groups.size());
  for (auto& [t, members] : groups) out.push_back({t, std::move(members)});
  return out;
}

std::vector<double> Design::cell_mean(std::span<const double> per_row) const {
  std::vector<double> out(size(), 0.0);
  for (std::size_t c = 0; c < size(); ++c) {
    double s = 0.0;
    auto m = cell_members(c);
    for (std::size_t r : m) s += per_row[r];
    out[c] = s / static_cast<double>(m.size());
  }
  return out;
}

Design make_design(const Dataset& d, std::span<const std::size_t> rows, Aggregation agg) {
  Design out;
  if (agg == Aggregation::none) {
    out.representative.assign(rows.begin(), rows.end());
    out.count.assign(rows.size(), 1.0);
    out.members.assign(rows.begin(), rows.end());
    out.member_offset.resize(rows.size() + 1);
    for (std::size_t i = 0; i <= rows.size(); ++i) out.member_offset[i] = i;
    return out;
  }
  const bool use_t = agg != Aggregation::x;
  const bool use_x = agg == Aggregation::treatment_and_x || agg == Aggregation::x;
  std::map<std::vector<double>, std::vector<std::size_t>> cells;
  std::vector<double> key;
  for (std::size_t r : rows) {
    key.clear();
    if (use_t) {
      if (d.treatment_kind == TreatmentKind::continuous_scalar) {
        key.push_back(d.t_value[r]);
      } else {
        for (int v : d.tokens(r)) key.push_back(v);
      }
    }
    if (use_x) {
      auto xr = d.x_row(r);
      key.insert(key.end(), xr.begin(), xr.end());
    }
    cells[key].push_back(r);
  }
  out.member_offset.push_back(0);
  for (auto& [k, members] : cells) {
    out.representative.push_back(members.front());
    out.count.push_back(static_cast<double>(members.size()));
    out.members.insert(out.members.end(), members.begin(), members.end());
    out.member_offset.push_back(out.members.size());
  }
  return out;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> parse_ints(std::string_view s) {
  std::vector<int> out;
  if (csv::trim(s).empty()) return out;
  for (auto& f : csv::split(s)) out.push_back(static_cast<int>(csv::to_int(f)));
  return out;
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  std::ostringstream os;
  for (std::size_t j = 0; j < d.x_dim; ++j) os << "x_" << j << ',';
  const std::size_t m = d.treatment_kind == TreatmentKind::continuous_scalar ? 1 : d.t_len();
  for (std::size_t j = 0; j < m; ++j) os << "t_" << j << ',';
  os << "y,split\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.x_row(i)) os << csv::format(v) << ',';
    if (d.treatment_kind == TreatmentKind::continuous_scalar) {
      os << csv::format(d.t_value[i]) << ',';
    } else {
      for (int v : d.tokens(i)) os << v << ',';
    }
    os << csv::format(d.y[i]) << ',' << to_string(d.split[i]) << '\n';
  }
  csv::write_text(path, os.str());

  std::ostringstream meta;
  meta << "treatment_kind = " << to_string(d.treatment_kind) << '\n'
       << "outcome_kind = " << to_string(d.outcome_kind) << '\n'
       << "t_vocab = " << join_ints(d.t_vocab) << '\n'
       << "x_vocab = " << join_ints(d.x_vocab) << '\n';
  csv::write_text(path.string() + ".meta", meta.str());
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  Dataset d;
  std::vector<std::size_t> xcols, tcols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (h.rfind("x_", 0) == 0) xcols.push_back(c);
    else if (h.rfind("t_", 0) == 0) tcols.push_back(c);
  }
  require(!tcols.empty(), ErrorKind::parse_error, "dataset has no t_ columns");
  const std::size_t ycol = table.column("y");
  const std::size_t scol = table.column("split");
  d.x_dim = xcols.size();
  const std::size_t n = table.rows.size();

  std::map<std::string, std::string> meta;
  const std::filesystem::path meta_path = path.string() + ".meta";
  if (std::filesystem::exists(meta_path)) {
    std::istringstream in(csv::read_text(meta_path));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      meta[std::string(csv::trim(std::string_view(line).substr(0, eq)))] =
          std::string(csv::trim(std::string_view(line).substr(eq + 1)));
    }
  }

  std::vector<std::vector<double>> tv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    for (std::size_t c : xcols) d.x.push_back(csv::to_double(row[c]));
    for (std::size_t c : tcols) tv[i].push_back(csv::to_double(row[c]));
    d.y.push_back(csv::to_double(row[ycol]));
    d.split.push_back(parse_split(row[scol]));
  }

  bool tokens = tcols.size() > 1;
  if (meta.count("treatment_kind")) tokens = meta["treatment_kind"] == "token_sequence";
  if (tokens) {
    d.treatment_kind = TreatmentKind::token_sequence;
    d.t_vocab = meta.count("t_vocab") ? parse_ints(meta["t_vocab"]) : std::vector<int>{};
    if (d.t_vocab.empty()) {
      d.t_vocab.assign(tcols.size(), 1);
      for (auto& r : tv)
        for (std::size_t j = 0; j < r.size(); ++j)
          d.t_vocab[j] = std::max(d.t_vocab[j], static_cast<int>(r[j]) + 1);
    }
    for (auto& r : tv)
      for (double v : r) {
        require(v == std::floor(v), ErrorKind::parse_error, "non-integer token");
        d.t_tokens.push_back(static_cast<int>(v));
      }
  } else {
    d.treatment_kind = TreatmentKind::continuous_scalar;
    for (auto& r : tv) d.t_value.push_back(r[0]);
  }

  if (meta.count("x_vocab")) {
    d.x_vocab = parse_ints(meta["x_vocab"]);
  }

  if (meta.count("outcome_kind")) {
    d.outcome_kind = meta["outcome_kind"] == "binary" ? OutcomeKind::binary : OutcomeKind::real;
  } else {
    const bool bin = std::all_of(d.y.begin(), d.y.end(), [](double v) { return v == 0 || v == 1; });
    d.outcome_kind = bin ? OutcomeKind::binary : OutcomeKind::real;
  }
  d.validate();
  return d;
}

}  // namespace crm
