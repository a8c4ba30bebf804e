#include "crm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crm/csv.hpp"
#include "crm/error.hpp"
#include "crm/rng.hpp"

namespace crm {

std::size_t InputSpec::width() const {
  std::size_t w = 0;
  if (use_treatment) {
    if (t_vocab.empty()) {
      w += 1;
    } else {
      for (int v : t_vocab) w += static_cast<std::size_t>(v);
    }
  }
  if (use_confounders) {
    if (x_vocab.empty()) {
      w += x_dim;
    } else {
      for (int v : x_vocab) w += static_cast<std::size_t>(v);
    }
  }
  return w;
}

InputSpec InputSpec::treatment_only(const Dataset& d) {
  InputSpec s;
  s.use_confounders = false;
  s.t_vocab = d.t_vocab;
  return s;
}

InputSpec InputSpec::confounders_only(const Dataset& d) {
  InputSpec s;
  s.use_treatment = false;
  s.x_dim = d.x_dim;
  s.x_vocab = d.x_vocab;
  return s;
}

InputSpec InputSpec::treatment_and_confounders(const Dataset& d) {
  InputSpec s;
  s.t_vocab = d.t_vocab;
  s.x_dim = d.x_dim;
  s.x_vocab = d.x_vocab;
  return s;
}

void encode(const InputSpec& spec, const Treatment& t, std::span<const double> x,
            std::span<double> out) {
  require(out.size() == spec.width(), ErrorKind::shape_mismatch, "encode: output width mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t pos = 0;
  if (spec.use_treatment) {
    if (spec.t_vocab.empty()) {
      require(!t.is_sequence(), ErrorKind::shape_mismatch, "encode: expected scalar treatment");
      out[pos++] = t.value;
    } else {
      require(t.tokens.size() == spec.t_vocab.size(), ErrorKind::shape_mismatch,
              "encode: treatment length mismatch");
      for (std::size_t j = 0; j < spec.t_vocab.size(); ++j) {
        const int v = t.tokens[j];
        require(v >= 0 && v < spec.t_vocab[j], ErrorKind::shape_mismatch,
                "encode: token out of vocabulary");
        out[pos + static_cast<std::size_t>(v)] = 1.0;
        pos += static_cast<std::size_t>(spec.t_vocab[j]);
      }
    }
  }
  if (spec.use_confounders) {
    require(x.size() == spec.x_dim, ErrorKind::shape_mismatch, "encode: confounder width mismatch");
    if (spec.x_vocab.empty()) {
      for (double v : x) out[pos++] = v;
    } else {
      for (std::size_t j = 0; j < spec.x_dim; ++j) {
        const auto v = static_cast<std::size_t>(x[j]);
        require(x[j] >= 0 && v < static_cast<std::size_t>(spec.x_vocab[j]),
                ErrorKind::shape_mismatch, "encode: confounder out of range");
        out[pos + v] = 1.0;
        pos += static_cast<std::size_t>(spec.x_vocab[j]);
      }
    }
  }
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(Head h) {
  switch (h) {
    case Head::identity: return "identity";
    case Head::sigmoid: return "sigmoid";
    case Head::softplus: return "softplus";
    case Head::gaussian: return "gaussian";
    case Head::categorical: return "categorical";
  }
  return "identity";
}

std::size_t Architecture::output_width() const {
  switch (head) {
    case Head::gaussian: return 2;
    case Head::categorical: {
      std::size_t w = 0;
      for (int v : head_vocab) w += static_cast<std::size_t>(v);
      return w;
    }
    default: return 1;
  }
}

std::vector<std::size_t> Architecture::layer_widths() const {
  std::vector<std::size_t> w{input.width()};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output_width());
  return w;
}

std::size_t Architecture::parameter_count() const {
  const auto w = layer_widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * (w[l] + 1);
  return n;
}

Architecture Architecture::linear(InputSpec in, Head head) {
  Architecture a;
  a.input = std::move(in);
  a.head = head;
  return a;
}

Architecture Architecture::mlp(InputSpec in, std::vector<std::size_t> hidden, Head head,
                               Activation act) {
  Architecture a;
  a.input = std::move(in);
  a.hidden = std::move(hidden);
  a.head = head;
  a.activation = act;
  return a;
}

ParamModel::ParamModel(Architecture arch) : arch_(std::move(arch)) {
  require(arch_.output_width() >= 1, ErrorKind::invalid_argument, "architecture has no outputs");
  require(arch_.head != Head::categorical || !arch_.head_vocab.empty(), ErrorKind::invalid_argument,
          "categorical head needs a vocabulary");
  const auto w = arch_.layer_widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    offsets_.push_back(off);
    off += w[l + 1] * (w[l] + 1);
  }
  params_.assign(off, 0.0);
}

std::size_t ParamModel::bias_offset(std::size_t layer) const {
  const auto w = arch_.layer_widths();
  return offsets_[layer] + w[layer + 1] * w[layer];
}

void ParamModel::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, "init");
  const auto w = arch_.layer_widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(w[l], 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t count = w[l + 1] * (w[l] + 1);
    for (std::size_t i = 0; i < count; ++i) params_[offsets_[l] + i] = u(rng);
  }
}

void ParamModel::set_parameters(std::span<const double> p) {
  require(p.size() == params_.size(), ErrorKind::shape_mismatch, "parameter count mismatch");
  std::copy(p.begin(), p.end(), params_.begin());
}

std::vector<double> ParamModel::forward(std::span<const double> features) const {
  const auto w = arch_.layer_widths();
  require(features.size() == w[0], ErrorKind::shape_mismatch, "forward: input width mismatch");
  std::vector<double> a(features.begin(), features.end());
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double* W = params_.data() + offsets_[l];
    const double* b = W + w[l + 1] * w[l];
    std::vector<double> z(w[l + 1]);
    for (std::size_t o = 0; o < w[l + 1]; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < w[l]; ++i) s += W[o * w[l] + i] * a[i];
      z[o] = s;
    }
    if (l + 2 < w.size()) {
      for (double& v : z) v = arch_.activation == Activation::relu ? std::max(0.0, v) : std::tanh(v);
    }
    a = std::move(z);
  }
  return a;
}

Matrix build_features(const InputSpec& spec, const Dataset& d, std::span<const std::size_t> rows) {
  Matrix f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(spec.width()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    encode(spec, d.treatment(rows[i]), d.x_row(rows[i]),
           {f.row(static_cast<Eigen::Index>(i)).data(), spec.width()});
  }
  return f;
}

Matrix build_features_at(const InputSpec& spec, const Dataset& d, std::span<const std::size_t> rows,
                         const Treatment& t) {
  Matrix f(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(spec.width()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    encode(spec, t, d.x_row(rows[i]), {f.row(static_cast<Eigen::Index>(i)).data(), spec.width()});
  }
  return f;
}

Matrix build_treatment_features(const InputSpec& spec, std::span<const Treatment> ts) {
  require(!spec.use_confounders, ErrorKind::invalid_argument,
          "treatment features requested for a model that reads confounders");
  Matrix f(static_cast<Eigen::Index>(ts.size()), static_cast<Eigen::Index>(spec.width()));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    encode(spec, ts[i], {}, {f.row(static_cast<Eigen::Index>(i)).data(), spec.width()});
  }
  return f;
}

double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) { return -softplus(-z); }

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) s += (v = std::exp(v - mx));
  for (double& v : p) v /= s;
  return p;
}

namespace {

constexpr std::string_view kMagic = "crm-checkpoint v1";

template <class T>
std::string join(const std::vector<T>& v) {
  if (v.empty()) return "-";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

template <class T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  if (s == "-") return out;
  for (auto& f : csv::split(s)) out.push_back(static_cast<T>(csv::to_int(f)));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const ParamModel& m) {
  const auto& a = m.architecture();
  std::ostringstream os;
  os << kMagic << '\n'
     << "input.use_treatment " << (a.input.use_treatment ? 1 : 0) << '\n'
     << "input.use_confounders " << (a.input.use_confounders ? 1 : 0) << '\n'
     << "input.t_vocab " << join(a.input.t_vocab) << '\n'
     << "input.x_dim " << a.input.x_dim << '\n'
     << "input.x_vocab " << join(a.input.x_vocab) << '\n'
     << "hidden " << join(a.hidden) << '\n'
     << "activation " << to_string(a.activation) << '\n'
     << "head " << to_string(a.head) << '\n'
     << "head_vocab " << join(a.head_vocab) << '\n'
     << "params " << m.parameter_count() << '\n';
  for (double p : m.parameters()) os << csv::format(p) << '\n';
  return os.str();
}

ParamModel parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  require(std::getline(in, line) && csv::trim(line) == kMagic, ErrorKind::parse_error,
          "not a crm checkpoint (bad header)");
  auto field = [&](std::string_view key) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse_error,
            "checkpoint truncated before '" + std::string(key) + "'");
    const auto sp = line.find(' ');
    require(sp != std::string::npos && std::string_view(line).substr(0, sp) == key,
            ErrorKind::parse_error, "checkpoint: expected '" + std::string(key) + "'");
    return std::string(csv::trim(std::string_view(line).substr(sp + 1)));
  };
  Architecture a;
  a.input.use_treatment = field("input.use_treatment") == "1";
  a.input.use_confounders = field("input.use_confounders") == "1";
  a.input.t_vocab = parse_list<int>(field("input.t_vocab"));
  a.input.x_dim = static_cast<std::size_t>(csv::to_int(field("input.x_dim")));
  a.input.x_vocab = parse_list<int>(field("input.x_vocab"));
  a.hidden = parse_list<std::size_t>(field("hidden"));
  const auto act = field("activation");
  require(act == "relu" || act == "tanh", ErrorKind::parse_error, "unknown activation " + act);
  a.activation = act == "relu" ? Activation::relu : Activation::tanh;
  const auto head = field("head");
  bool known = false;
  for (Head h : {Head::identity, Head::sigmoid, Head::softplus, Head::gaussian, Head::categorical}) {
    if (to_string(h) == head) {
      a.head = h;
      known = true;
    }
  }
  require(known, ErrorKind::parse_error, "unknown head " + head);
  a.head_vocab = parse_list<int>(field("head_vocab"));
  const auto count = static_cast<std::size_t>(csv::to_int(field("params")));
  ParamModel m(a);
  require(count == m.parameter_count(), ErrorKind::parse_error,
          "checkpoint parameter count does not match architecture");
  std::vector<double> p;
  p.reserve(count);
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    p.push_back(csv::to_double(line));
  }
  require(p.size() == count, ErrorKind::parse_error, "checkpoint parameter array truncated");
  m.set_parameters(p);
  return m;
}

void save_checkpoint(const ParamModel& m, const std::filesystem::path& path) {
  csv::write_text(path, serialize_checkpoint(m));
}

ParamModel load_checkpoint(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::missing_artifact,
          "checkpoint not found: " + path.string());
  return parse_checkpoint(csv::read_text(path));
}

}  // namespace crm
