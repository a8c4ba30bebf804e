#include "crm/loss.hpp"

#include <cmath>
#include <map>

#include "crm/error.hpp"

namespace crm {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double batch_mass(std::span<const std::size_t> rows, const std::vector<double>& count) {
  double c = 0.0;
  for (std::size_t r : rows) c += count[r];
  require(c > 0.0, ErrorKind::invalid_argument, "loss: batch has zero total count");
  return c;
}

void check_out(const Matrix& out, std::span<const std::size_t> rows, std::size_t width) {
  require(static_cast<std::size_t>(out.rows()) == rows.size() &&
              static_cast<std::size_t>(out.cols()) == width,
          ErrorKind::shape_mismatch, "loss: output shape mismatch");
}

// x^k with small integer exponent.
double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

// eps[k][d] = sum_i c_i v_i x_id^k / C - ref[k][d] over the listed rows.
MomentTable weighted_gap(std::span<const std::size_t> idx, std::span<const double> v,
                         const std::vector<double>& x, std::size_t x_dim,
                         const std::vector<double>& count, std::span<const std::size_t> rows,
                         int K, const MomentTable& ref) {
  MomentTable eps(static_cast<std::size_t>(K) + 1);
  double C = 0.0;
  for (std::size_t k = 0; k <= static_cast<std::size_t>(K); ++k)
    eps[k].assign(moment_width(static_cast<int>(k), x_dim), 0.0);
  for (std::size_t a : idx) {
    const std::size_t r = rows[a];
    const double cw = count[r] * v[a];
    C += count[r];
    eps[0][0] += cw;
    for (std::size_t d = 0; d < x_dim; ++d) {
      const double xd = x[r * x_dim + d];
      double p = 1.0;
      for (std::size_t k = 1; k <= static_cast<std::size_t>(K); ++k) {
        p *= xd;
        eps[k][d] += cw * p;
      }
    }
  }
  for (std::size_t k = 0; k < eps.size(); ++k)
    for (std::size_t d = 0; d < eps[k].size(); ++d) eps[k][d] = eps[k][d] / C - ref[k][d];
  return eps;
}

double squared_norm(const MomentTable& eps) {
  double s = 0.0;
  for (const auto& e : eps)
    for (double v : e) s += v * v;
  return s;
}

// d/dv_a of sum ||eps||^2 for one group, given the group's total count C.
double gap_gradient(const MomentTable& eps, const std::vector<double>& x, std::size_t x_dim,
                    std::size_t r, double c, double C, int K) {
  double g = eps[0][0];
  for (std::size_t d = 0; d < x_dim; ++d) {
    const double xd = x[r * x_dim + d];
    double p = 1.0;
    for (std::size_t k = 1; k <= static_cast<std::size_t>(K); ++k) {
      p *= xd;
      g += eps[k][d] * p;
    }
  }
  return 2.0 * g * c / C;
}

void check_reference(const MomentTable& ref, int K, std::size_t x_dim) {
  require(K >= 0, ErrorKind::invalid_argument, "balance order K must be >= 0");
  require(ref.size() >= static_cast<std::size_t>(K) + 1, ErrorKind::shape_mismatch,
          "reference moments shorter than K");
  for (std::size_t k = 0; k <= static_cast<std::size_t>(K); ++k)
    require(ref[k].size() == moment_width(static_cast<int>(k), x_dim), ErrorKind::shape_mismatch,
            "reference moment width mismatch");
}

}  // namespace

std::size_t moment_width(int order, std::size_t x_dim) { return order == 0 ? 1 : x_dim; }

MomentTable weighted_moments(std::span<const double> x, std::size_t x_dim,
                             std::span<const std::size_t> rows, std::span<const double> weight,
                             int max_order) {
  require(max_order >= 0, ErrorKind::invalid_argument, "moment order must be >= 0");
  MomentTable m(static_cast<std::size_t>(max_order) + 1);
  for (int k = 0; k <= max_order; ++k) m[static_cast<std::size_t>(k)].assign(moment_width(k, x_dim), 0.0);
  double C = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const double c = weight.empty() ? 1.0 : weight[a];
    C += c;
    m[0][0] += c;
    for (std::size_t d = 0; d < x_dim; ++d) {
      const double xd = x[rows[a] * x_dim + d];
      for (int k = 1; k <= max_order; ++k) m[static_cast<std::size_t>(k)][d] += c * ipow(xd, k);
    }
  }
  require(C > 0.0, ErrorKind::invalid_argument, "moments over an empty row set");
  for (auto& mk : m)
    for (double& v : mk) v /= C;
  return m;
}

SquaredErrorLoss::SquaredErrorLoss(std::vector<double> target, std::vector<double> count)
    : target_(std::move(target)), count_(std::move(count)) {
  require(target_.size() == count_.size(), ErrorKind::shape_mismatch, "targets/counts differ");
}

double SquaredErrorLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                  Matrix* grad) const {
  check_out(out, rows, 1);
  const double C = batch_mass(rows, count_);
  if (grad) grad->resize(out.rows(), 1);
  double s = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    const double r = out(i, 0) - target_[rows[a]];
    s += count_[rows[a]] * r * r;
    if (grad) (*grad)(i, 0) = 2.0 * count_[rows[a]] * r / C;
  }
  return s / C;
}

CrossEntropyLoss::CrossEntropyLoss(std::vector<double> target, std::vector<double> count)
    : target_(std::move(target)), count_(std::move(count)) {
  require(target_.size() == count_.size(), ErrorKind::shape_mismatch, "targets/counts differ");
  for (double q : target_)
    require(q >= 0.0 && q <= 1.0, ErrorKind::invalid_argument, "cross-entropy target outside [0,1]");
}

double CrossEntropyLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                  Matrix* grad) const {
  check_out(out, rows, 1);
  const double C = batch_mass(rows, count_);
  if (grad) grad->resize(out.rows(), 1);
  double s = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    const double z = out(i, 0), q = target_[rows[a]], c = count_[rows[a]];
    // -(q log s(z) + (1-q) log(1 - s(z))) = softplus(z) - q z
    s += c * (softplus(z) - q * z);
    if (grad) (*grad)(i, 0) = c * (sigmoid(z) - q) / C;
  }
  return s / C;
}

GaussianNllLoss::GaussianNllLoss(std::vector<double> t, std::vector<double> count)
    : t_(std::move(t)), count_(std::move(count)) {
  require(t_.size() == count_.size(), ErrorKind::shape_mismatch, "treatments/counts differ");
}

double GaussianNllLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                 Matrix* grad) const {
  check_out(out, rows, 2);
  const double C = batch_mass(rows, count_);
  if (grad) grad->resize(out.rows(), 2);
  double s = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    const double mu = out(i, 0), ls = out(i, 1), c = count_[rows[a]];
    const double z = (t_[rows[a]] - mu) * std::exp(-ls);
    s += c * (ls + 0.5 * z * z + kLogSqrt2Pi);
    if (grad) {
      (*grad)(i, 0) = -c * z * std::exp(-ls) / C;
      (*grad)(i, 1) = c * (1.0 - z * z) / C;
    }
  }
  return s / C;
}

CategoricalNllLoss::CategoricalNllLoss(std::vector<int> tokens, std::vector<int> vocab,
                                       std::vector<double> count)
    : tokens_(std::move(tokens)), vocab_(std::move(vocab)), count_(std::move(count)) {
  require(!vocab_.empty() && tokens_.size() == count_.size() * vocab_.size(),
          ErrorKind::shape_mismatch, "categorical NLL: tokens/counts differ");
}

std::size_t CategoricalNllLoss::output_width() const {
  std::size_t w = 0;
  for (int v : vocab_) w += static_cast<std::size_t>(v);
  return w;
}

double CategoricalNllLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                    Matrix* grad) const {
  check_out(out, rows, output_width());
  const double C = batch_mass(rows, count_);
  if (grad) grad->resize(out.rows(), out.cols());
  const std::size_t P = vocab_.size();
  double s = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    const double c = count_[rows[a]];
    std::size_t off = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const auto v = static_cast<std::size_t>(vocab_[p]);
      const auto prob = softmax({out.row(i).data() + off, v});
      const auto tok = static_cast<std::size_t>(tokens_[rows[a] * P + p]);
      s -= c * std::log(std::max(prob[tok], 1e-300));
      if (grad) {
        for (std::size_t k = 0; k < v; ++k) {
          (*grad)(i, static_cast<Eigen::Index>(off + k)) = c * (prob[k] - (k == tok ? 1.0 : 0.0)) / C;
        }
      }
      off += v;
    }
  }
  return s / C;
}

WeightBalanceLoss::WeightBalanceLoss(std::vector<double> x, std::size_t x_dim,
                                     std::vector<std::size_t> group, std::vector<double> count,
                                     int max_order, MomentTable reference)
    : x_(std::move(x)),
      x_dim_(x_dim),
      group_(std::move(group)),
      count_(std::move(count)),
      max_order_(max_order),
      ref_(std::move(reference)) {
  require(x_.size() == count_.size() * x_dim_, ErrorKind::shape_mismatch,
          "weight balance: confounders/counts differ");
  require(group_.empty() || group_.size() == count_.size(), ErrorKind::shape_mismatch,
          "weight balance: group ids/counts differ");
  check_reference(ref_, max_order_, x_dim_);
}

double WeightBalanceLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                   Matrix* grad) const {
  check_out(out, rows, 1);
  const double C = batch_mass(rows, count_);
  std::vector<double> w(rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a) w[a] = softplus(out(static_cast<Eigen::Index>(a), 0));

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t a = 0; a < rows.size(); ++a) groups[group_.empty() ? 0 : group_[rows[a]]].push_back(a);

  if (grad) grad->setZero(out.rows(), 1);
  double loss = 0.0;
  for (const auto& [g, idx] : groups) {
    double Cg = 0.0;
    for (std::size_t a : idx) Cg += count_[rows[a]];
    const auto eps = weighted_gap(idx, w, x_, x_dim_, count_, rows, max_order_, ref_);
    loss += Cg / C * squared_norm(eps);
    if (grad) {
      for (std::size_t a : idx) {
        const double dw = gap_gradient(eps, x_, x_dim_, rows[a], count_[rows[a]], C, max_order_);
        (*grad)(static_cast<Eigen::Index>(a), 0) = dw * sigmoid(out(static_cast<Eigen::Index>(a), 0));
      }
    }
  }
  return loss;
}

RatioBalanceLoss RatioBalanceLoss::gaussian(std::vector<double> t, std::vector<double> x,
                                            std::size_t x_dim, std::vector<double> count,
                                            int max_order, MomentTable reference, double floor) {
  RatioBalanceLoss l;
  l.gaussian_ = true;
  l.t_ = std::move(t);
  l.x_ = std::move(x);
  l.x_dim_ = x_dim;
  l.count_ = std::move(count);
  l.max_order_ = max_order;
  l.ref_ = std::move(reference);
  l.floor_ = floor;
  require(l.t_.size() == l.count_.size() && l.x_.size() == l.count_.size() * x_dim,
          ErrorKind::shape_mismatch, "ratio balance: array lengths differ");
  check_reference(l.ref_, max_order, x_dim);
  return l;
}

RatioBalanceLoss RatioBalanceLoss::categorical(std::vector<int> tokens, std::vector<int> vocab,
                                               std::vector<double> x, std::size_t x_dim,
                                               std::vector<double> count, int max_order,
                                               MomentTable reference, double floor) {
  RatioBalanceLoss l;
  l.gaussian_ = false;
  l.tokens_ = std::move(tokens);
  l.vocab_ = std::move(vocab);
  l.x_ = std::move(x);
  l.x_dim_ = x_dim;
  l.count_ = std::move(count);
  l.max_order_ = max_order;
  l.ref_ = std::move(reference);
  l.floor_ = floor;
  require(!l.vocab_.empty() && l.tokens_.size() == l.count_.size() * l.vocab_.size() &&
              l.x_.size() == l.count_.size() * x_dim,
          ErrorKind::shape_mismatch, "ratio balance: array lengths differ");
  check_reference(l.ref_, max_order, x_dim);
  return l;
}

std::size_t RatioBalanceLoss::output_width() const {
  if (gaussian_) return 2;
  std::size_t w = 0;
  for (int v : vocab_) w += static_cast<std::size_t>(v);
  return w;
}

double RatioBalanceLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out,
                                  Matrix* grad) const {
  check_out(out, rows, output_width());
  const std::size_t m = rows.size();
  const double C = batch_mass(rows, count_);
  const std::size_t P = vocab_.size();

  // q(i, j) = e(T_i | X_j) for batch entries i, j.
  Matrix q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  std::vector<std::vector<double>> probs;  // categorical: per-entry concatenated softmax
  std::vector<std::size_t> offset(P, 0);
  if (gaussian_) {
    for (std::size_t j = 0; j < m; ++j) {
      const double mu = out(static_cast<Eigen::Index>(j), 0);
      const double inv_s = std::exp(-out(static_cast<Eigen::Index>(j), 1));
      for (std::size_t i = 0; i < m; ++i) {
        const double z = (t_[rows[i]] - mu) * inv_s;
        q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kInvSqrt2Pi * inv_s * std::exp(-0.5 * z * z);
      }
    }
  } else {
    for (std::size_t p = 1; p < P; ++p) offset[p] = offset[p - 1] + static_cast<std::size_t>(vocab_[p - 1]);
    probs.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      for (std::size_t p = 0; p < P; ++p) {
        auto sm = softmax({out.row(jj).data() + offset[p], static_cast<std::size_t>(vocab_[p])});
        probs[j].insert(probs[j].end(), sm.begin(), sm.end());
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double v = 1.0;
        for (std::size_t p = 0; p < P; ++p)
          v *= probs[j][offset[p] + static_cast<std::size_t>(tokens_[rows[i] * P + p])];
        q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
    }
  }

  std::vector<double> e(m), marg(m, 0.0), r(m);
  std::vector<bool> floored(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < m; ++j) marg[i] += count_[rows[j]] * q(ii, static_cast<Eigen::Index>(j));
    marg[i] /= C;
    e[i] = q(ii, ii);
    if (e[i] < floor_) {
      e[i] = floor_;
      floored[i] = true;
    }
    r[i] = marg[i] / e[i];
  }

  std::vector<std::size_t> all(m);
  for (std::size_t a = 0; a < m; ++a) all[a] = a;
  const auto eps = weighted_gap(all, r, x_, x_dim_, count_, rows, max_order_, ref_);
  const double loss = squared_norm(eps);
  if (!grad) return loss;

  // beta(i, j) = d loss / d q(i, j)
  Matrix beta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double a_i = gap_gradient(eps, x_, x_dim_, rows[i], count_[rows[i]], C, max_order_);
    for (std::size_t j = 0; j < m; ++j)
      beta(ii, static_cast<Eigen::Index>(j)) = a_i / e[i] * count_[rows[j]] / C;
    if (!floored[i]) beta(ii, ii) -= a_i * r[i] / e[i];
  }

  grad->setZero(out.rows(), out.cols());
  if (gaussian_) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double mu = out(jj, 0);
      const double inv_s = std::exp(-out(jj, 1));
      double gmu = 0.0, gls = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double bq = beta(ii, jj) * q(ii, jj);
        const double z = (t_[rows[i]] - mu) * inv_s;
        gmu += bq * z * inv_s;
        gls += bq * (z * z - 1.0);
      }
      (*grad)(jj, 0) = gmu;
      (*grad)(jj, 1) = gls;
    }
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double bq = beta(ii, jj) * q(ii, jj);
        if (bq == 0.0) continue;
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t tok = static_cast<std::size_t>(tokens_[rows[i] * P + p]);
          for (std::size_t k = 0; k < static_cast<std::size_t>(vocab_[p]); ++k) {
            const double ind = k == tok ? 1.0 : 0.0;
            (*grad)(jj, static_cast<Eigen::Index>(offset[p] + k)) += bq * (ind - probs[j][offset[p] + k]);
          }
        }
      }
    }
  }
  return loss;
}

SumLoss::SumLoss(std::vector<std::pair<double, LossPtr>> terms) : terms_(std::move(terms)) {
  require(!terms_.empty(), ErrorKind::invalid_argument, "SumLoss needs at least one term");
  for (const auto& [s, l] : terms_)
    require(l && l->output_width() == terms_.front().second->output_width(),
            ErrorKind::shape_mismatch, "SumLoss terms disagree on output width");
}

std::size_t SumLoss::output_width() const { return terms_.front().second->output_width(); }

double SumLoss::evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const {
  double total = 0.0;
  if (grad) grad->setZero(out.rows(), out.cols());
  Matrix g;
  for (const auto& [scale, loss] : terms_) {
    total += scale * loss->evaluate(rows, out, grad ? &g : nullptr);
    if (grad) *grad += scale * g;
  }
  return total;
}

}  // namespace crm
