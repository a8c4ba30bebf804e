#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "crm/model.hpp"

namespace crm {

// A loss over a batch of design rows, evaluated on the raw model outputs for
// those rows. Per-row data lives in the loss and is indexed by design row;
// every row carries a multiplicity so aggregated cells weigh like their rows.
class Loss {
 public:
  virtual ~Loss() = default;

  virtual std::size_t output_width() const = 0;

  // `out` row k holds the raw output for design row rows[k]. When `grad` is
  // non-null it is resized and filled with d loss / d out.
  virtual double evaluate(std::span<const std::size_t> rows, const Matrix& out,
                          Matrix* grad) const = 0;
};

using LossPtr = std::shared_ptr<const Loss>;

// Moments E[x_d^k] per order; order 0 has a single entry (the constant 1).
using MomentTable = std::vector<std::vector<double>>;

std::size_t moment_width(int order, std::size_t x_dim);
// Count-weighted raw moments over rows of a flat n x d array, orders 0..K.
MomentTable weighted_moments(std::span<const double> x, std::size_t x_dim,
                             std::span<const std::size_t> rows, std::span<const double> weight,
                             int max_order);

// mean c_i (o_i - y_i)^2
class SquaredErrorLoss final : public Loss {
 public:
  SquaredErrorLoss(std::vector<double> target, std::vector<double> count);
  std::size_t output_width() const override { return 1; }
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<double> target_, count_;
};

// Cross-entropy of sigmoid(o) against a target probability q (the pair [1-q, q]).
class CrossEntropyLoss final : public Loss {
 public:
  CrossEntropyLoss(std::vector<double> target, std::vector<double> count);
  std::size_t output_width() const override { return 1; }
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<double> target_, count_;
};

// Negative log-density of t under N(mean, exp(log_scale)^2).
class GaussianNllLoss final : public Loss {
 public:
  GaussianNllLoss(std::vector<double> t, std::vector<double> count);
  std::size_t output_width() const override { return 2; }
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<double> t_, count_;
};

// Negative log-probability of a token sequence under per-position softmaxes.
class CategoricalNllLoss final : public Loss {
 public:
  CategoricalNllLoss(std::vector<int> tokens, std::vector<int> vocab, std::vector<double> count);
  std::size_t output_width() const override;
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<int> tokens_, vocab_;
  std::vector<double> count_;
};

// Balance objective for a weight model with softplus output w:
//   sum_groups (C_g / C) sum_{k<=K} || sum_{i in g} c_i w_i x_i^k / C_g - ref_k ||^2
// With no group ids the whole batch is one group (marginal mode).
class WeightBalanceLoss final : public Loss {
 public:
  WeightBalanceLoss(std::vector<double> x, std::size_t x_dim, std::vector<std::size_t> group,
                    std::vector<double> count, int max_order, MomentTable reference);
  std::size_t output_width() const override { return 1; }
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<double> x_;
  std::size_t x_dim_;
  std::vector<std::size_t> group_;
  std::vector<double> count_;
  int max_order_;
  MomentTable ref_;
};

// Marginal-batch balance of implied propensity ratios r_i = p_T(T_i) / e(T_i, X_i),
// where p_T is the count-weighted batch mixture of e(T_i, X_j) over j. The
// propensity is floored at `floor` (no gradient through floored values).
class RatioBalanceLoss final : public Loss {
 public:
  // Gaussian head: treatments are scalars.
  static RatioBalanceLoss gaussian(std::vector<double> t, std::vector<double> x, std::size_t x_dim,
                                   std::vector<double> count, int max_order, MomentTable reference,
                                   double floor);
  // Categorical head: treatments are token sequences.
  static RatioBalanceLoss categorical(std::vector<int> tokens, std::vector<int> vocab,
                                      std::vector<double> x, std::size_t x_dim,
                                      std::vector<double> count, int max_order,
                                      MomentTable reference, double floor);

  std::size_t output_width() const override;
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  RatioBalanceLoss() = default;

  bool gaussian_ = true;
  std::vector<double> t_;
  std::vector<int> tokens_, vocab_;
  std::vector<double> x_;
  std::size_t x_dim_ = 0;
  std::vector<double> count_;
  int max_order_ = 0;
  MomentTable ref_;
  double floor_ = 1e-3;
};

// sum_k scale_k * loss_k over a shared output.
class SumLoss final : public Loss {
 public:
  explicit SumLoss(std::vector<std::pair<double, LossPtr>> terms);
  std::size_t output_width() const override;
  double evaluate(std::span<const std::size_t> rows, const Matrix& out, Matrix* grad) const override;

 private:
  std::vector<std::pair<double, LossPtr>> terms_;
};

}  // namespace crm
