#include "crm/kernels.hpp"

#include <cmath>

#include "crm/error.hpp"

namespace crm::kernels {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using ConstMap = Eigen::Map<const Matrix>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

std::size_t block_count(std::size_t n) { return (n + kBlockRows - 1) / kBlockRows; }

struct LayerView {
  ConstMap W;
  Eigen::Map<const RowVec> b;
};

LayerView layer(const ParamModel& m, std::size_t l, const std::vector<std::size_t>& w) {
  const double* p = m.parameters().data();
  return {ConstMap(p + m.weight_offset(l), static_cast<Eigen::Index>(w[l + 1]),
                   static_cast<Eigen::Index>(w[l])),
          Eigen::Map<const RowVec>(p + m.bias_offset(l), static_cast<Eigen::Index>(w[l + 1]))};
}

Matrix gather(const Matrix& features, std::span<const std::size_t> rows, std::size_t begin,
              std::size_t end) {
  Matrix a(static_cast<Eigen::Index>(end - begin), features.cols());
  for (std::size_t i = begin; i < end; ++i) {
    a.row(static_cast<Eigen::Index>(i - begin)) = features.row(static_cast<Eigen::Index>(rows[i]));
  }
  return a;
}

void activate(Matrix& z, Activation act) {
  if (act == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Forward pass for one block, keeping every layer's post-activation output.
std::vector<Matrix> forward_block(const ParamModel& m, Matrix input) {
  const auto w = m.architecture().layer_widths();
  const std::size_t L = w.size() - 1;
  std::vector<Matrix> acts;
  acts.reserve(L + 1);
  acts.push_back(std::move(input));
  for (std::size_t l = 0; l < L; ++l) {
    auto lv = layer(m, l, w);
    Matrix z = acts.back() * lv.W.transpose();
    z.rowwise() += lv.b;
    if (l + 1 < L) activate(z, m.architecture().activation);
    acts.push_back(std::move(z));
  }
  return acts;
}

void check_rows(const Matrix& features, std::span<const std::size_t> rows, const ParamModel& m) {
  require(static_cast<std::size_t>(features.cols()) == m.architecture().input.width(),
          ErrorKind::shape_mismatch, "feature width does not match model input");
  for (std::size_t r : rows) {
    require(r < static_cast<std::size_t>(features.rows()), ErrorKind::shape_mismatch,
            "row index out of range");
  }
}

}  // namespace

Matrix forward(const ParamModel& m, const Matrix& features, std::span<const std::size_t> rows) {
  check_rows(features, rows, m);
  const std::size_t n = rows.size();
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m.architecture().output_width()));
  const std::size_t nb = block_count(n);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t begin = b * kBlockRows, end = std::min(n, begin + kBlockRows);
    auto acts = forward_block(m, gather(features, rows, begin, end));
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        acts.back();
  }
  return out;
}

std::vector<double> backward(const ParamModel& m, const Matrix& features,
                             std::span<const std::size_t> rows, const Matrix& dout) {
  check_rows(features, rows, m);
  require(static_cast<std::size_t>(dout.rows()) == rows.size() &&
              static_cast<std::size_t>(dout.cols()) == m.architecture().output_width(),
          ErrorKind::shape_mismatch, "backward: output gradient shape mismatch");
  const auto w = m.architecture().layer_widths();
  const std::size_t L = w.size() - 1;
  const std::size_t n = rows.size();
  const std::size_t nb = block_count(n);
  const std::size_t P = m.parameter_count();
  std::vector<double> partial(nb * P, 0.0);
  const bool relu = m.architecture().activation == Activation::relu;

#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t begin = b * kBlockRows, end = std::min(n, begin + kBlockRows);
    auto acts = forward_block(m, gather(features, rows, begin, end));
    Matrix delta = dout.middleRows(static_cast<Eigen::Index>(begin),
                                   static_cast<Eigen::Index>(end - begin));
    double* g = partial.data() + b * P;
    for (std::size_t l = L; l-- > 0;) {
      Eigen::Map<Matrix> gW(g + m.weight_offset(l), static_cast<Eigen::Index>(w[l + 1]),
                            static_cast<Eigen::Index>(w[l]));
      Eigen::Map<RowVec> gb(g + m.bias_offset(l), static_cast<Eigen::Index>(w[l + 1]));
      gW.noalias() = delta.transpose() * acts[l];
      gb = delta.colwise().sum();
      if (l == 0) break;
      auto lv = layer(m, l, w);
      Matrix prev = delta * lv.W;
      const Matrix& a = acts[l];
      if (relu) {
        prev = (a.array() > 0.0).select(prev, 0.0);
      } else {
        prev = prev.cwiseProduct((1.0 - a.array().square()).matrix());
      }
      delta = std::move(prev);
    }
  }

  std::vector<double> grad(P, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    const double* g = partial.data() + b * P;
    for (std::size_t p = 0; p < P; ++p) grad[p] += g[p];
  }
  return grad;
}

double sum(std::span<const double> v) {
  const std::size_t nb = block_count(v.size());
  std::vector<double> partial(nb, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t end = std::min(v.size(), (b + 1) * kBlockRows);
    double s = 0.0;
    for (std::size_t i = b * kBlockRows; i < end; ++i) s += v[i];
    partial[b] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

std::vector<double> gaussian_mixture(std::span<const double> t, std::span<const double> mu,
                                     std::span<const double> log_sigma,
                                     std::span<const double> weight) {
  require(mu.size() == log_sigma.size() && mu.size() == weight.size(), ErrorKind::shape_mismatch,
          "gaussian_mixture: component arrays differ in length");
  std::vector<double> inv_sigma(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) inv_sigma[j] = std::exp(-log_sigma[j]);
  const double total = sum(weight);
  std::vector<double> out(t.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < t.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const double z = (t[i] - mu[j]) * inv_sigma[j];
      s += weight[j] * inv_sigma[j] * std::exp(-0.5 * z * z);
    }
    out[i] = kInvSqrt2Pi * s / total;
  }
  return out;
}

std::vector<double> categorical_mixture(std::span<const int> tokens, std::span<const int> vocab,
                                        const Matrix& probs, std::span<const double> weight) {
  const std::size_t P = vocab.size();
  require(P > 0 && tokens.size() % P == 0, ErrorKind::shape_mismatch,
          "categorical_mixture: token array not a multiple of the sequence length");
  require(static_cast<std::size_t>(probs.rows()) == weight.size(), ErrorKind::shape_mismatch,
          "categorical_mixture: one weight per component required");
  std::vector<std::size_t> offset(P, 0);
  for (std::size_t p = 1; p < P; ++p) offset[p] = offset[p - 1] + static_cast<std::size_t>(vocab[p - 1]);
  const double total = sum(weight);
  const std::size_t nq = tokens.size() / P;
  std::vector<double> out(nq);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < nq; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < probs.rows(); ++j) {
      double q = weight[static_cast<std::size_t>(j)];
      for (std::size_t p = 0; p < P; ++p) {
        q *= probs(j, static_cast<Eigen::Index>(offset[p] + static_cast<std::size_t>(tokens[i * P + p])));
      }
      s += q;
    }
    out[i] = s / total;
  }
  return out;
}

namespace serial {

Matrix forward(const ParamModel& m, const Matrix& features, std::span<const std::size_t> rows) {
  check_rows(features, rows, m);
  Matrix out(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(m.architecture().output_width()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    auto o = m.forward({features.row(r).data(), static_cast<std::size_t>(features.cols())});
    for (std::size_t k = 0; k < o.size(); ++k) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = o[k];
  }
  return out;
}

std::vector<double> backward(const ParamModel& m, const Matrix& features,
                             std::span<const std::size_t> rows, const Matrix& dout) {
  check_rows(features, rows, m);
  const auto w = m.architecture().layer_widths();
  const std::size_t L = w.size() - 1;
  const auto params = m.parameters();
  const bool relu = m.architecture().activation == Activation::relu;
  std::vector<double> grad(m.parameter_count(), 0.0);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    std::vector<std::vector<double>> acts{
        std::vector<double>(features.row(r).data(), features.row(r).data() + features.cols())};
    for (std::size_t l = 0; l < L; ++l) {
      const double* W = params.data() + m.weight_offset(l);
      const double* bias = params.data() + m.bias_offset(l);
      std::vector<double> z(w[l + 1]);
      for (std::size_t o = 0; o < w[l + 1]; ++o) {
        double s = bias[o];
        for (std::size_t k = 0; k < w[l]; ++k) s += W[o * w[l] + k] * acts[l][k];
        if (l + 1 < L) s = relu ? std::max(0.0, s) : std::tanh(s);
        z[o] = s;
      }
      acts.push_back(std::move(z));
    }
    std::vector<double> delta(w[L]);
    for (std::size_t o = 0; o < w[L]; ++o)
      delta[o] = dout(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
    for (std::size_t l = L; l-- > 0;) {
      const double* W = params.data() + m.weight_offset(l);
      double* gW = grad.data() + m.weight_offset(l);
      double* gb = grad.data() + m.bias_offset(l);
      for (std::size_t o = 0; o < w[l + 1]; ++o) {
        gb[o] += delta[o];
        for (std::size_t k = 0; k < w[l]; ++k) gW[o * w[l] + k] += delta[o] * acts[l][k];
      }
      if (l == 0) break;
      std::vector<double> prev(w[l], 0.0);
      for (std::size_t k = 0; k < w[l]; ++k) {
        double s = 0.0;
        for (std::size_t o = 0; o < w[l + 1]; ++o) s += delta[o] * W[o * w[l] + k];
        const double a = acts[l][k];
        prev[k] = relu ? (a > 0.0 ? s : 0.0) : s * (1.0 - a * a);
      }
      delta = std::move(prev);
    }
  }
  return grad;
}

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::vector<double> gaussian_mixture(std::span<const double> t, std::span<const double> mu,
                                     std::span<const double> log_sigma,
                                     std::span<const double> weight) {
  double total = 0.0;
  for (double c : weight) total += c;
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const double sigma = std::exp(log_sigma[j]);
      const double z = (t[i] - mu[j]) / sigma;
      s += weight[j] * kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
    }
    out[i] = s / total;
  }
  return out;
}

std::vector<double> categorical_mixture(std::span<const int> tokens, std::span<const int> vocab,
                                        const Matrix& probs, std::span<const double> weight) {
  const std::size_t P = vocab.size();
  double total = 0.0;
  for (double c : weight) total += c;
  const std::size_t nq = tokens.size() / P;
  std::vector<double> out(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < probs.rows(); ++j) {
      double q = weight[static_cast<std::size_t>(j)];
      std::size_t off = 0;
      for (std::size_t p = 0; p < P; ++p) {
        q *= probs(j, static_cast<Eigen::Index>(off + static_cast<std::size_t>(tokens[i * P + p])));
        off += static_cast<std::size_t>(vocab[p]);
      }
      s += q;
    }
    out[i] = s / total;
  }
  return out;
}

}  // namespace serial
}  // namespace crm::kernels
