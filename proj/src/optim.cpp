#include "crm/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crm/error.hpp"
#include "crm/kernels.hpp"
#include "crm/rng.hpp"

namespace crm {

namespace {

void check_objective(const ParamModel& m, const Objective& obj) {
  require(obj.features && obj.loss, ErrorKind::invalid_argument, "objective is incomplete");
  require(static_cast<std::size_t>(obj.features->cols()) == m.architecture().input.width(),
          ErrorKind::shape_mismatch, "feature width does not match model input");
  require(obj.loss->output_width() == m.architecture().output_width(), ErrorKind::shape_mismatch,
          "loss width does not match model output");
}

void check_finite_outputs(const Matrix& out, std::span<const std::size_t> rows) {
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!out.row(i).allFinite()) {
      const auto r = rows[static_cast<std::size_t>(i)];
      throw NonFiniteError(r, "non-finite model output at row " + std::to_string(r));
    }
  }
}

void check_finite_grad(const Matrix& g, std::span<const std::size_t> rows) {
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    if (!g.row(i).allFinite()) {
      const auto r = rows[static_cast<std::size_t>(i)];
      throw NonFiniteError(r, "non-finite loss gradient at row " + std::to_string(r));
    }
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::invalid_argument,
          "learning_rate must be positive");
  require(weight_decay >= 0.0, ErrorKind::invalid_argument, "weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_argument,
          "Adam betas must lie in [0, 1)");
  require(eps > 0.0, ErrorKind::invalid_argument, "eps must be positive");
}

LossAndGradient gradient(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows) {
  check_objective(m, obj);
  const Matrix out = kernels::forward(m, *obj.features, rows);
  check_finite_outputs(out, rows);
  Matrix dout;
  LossAndGradient r;
  r.loss = obj.loss->evaluate(rows, out, &dout);
  if (!std::isfinite(r.loss)) throw NonFiniteError(rows.empty() ? 0 : rows[0], "non-finite loss");
  check_finite_grad(dout, rows);
  r.grad = kernels::backward(m, *obj.features, rows, dout);
  return r;
}

double loss_value(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows) {
  check_objective(m, obj);
  const Matrix out = kernels::forward(m, *obj.features, rows);
  check_finite_outputs(out, rows);
  return obj.loss->evaluate(rows, out, nullptr);
}

TrainResult train(ParamModel& m, const Objective& obj, const OptimizerConfig& cfg) {
  cfg.validate();
  check_objective(m, obj);
  const std::size_t n = obj.size();
  require(n > 0, ErrorKind::invalid_argument, "training on an empty design");
  const std::size_t batch = cfg.batch_size == 0 ? n : cfg.batch_size;
  require(batch <= n, ErrorKind::invalid_argument, "batch_size exceeds the number of rows");

  TrainResult result;
  if (cfg.epochs == 0) return result;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed, "shuffle");

  auto params = m.parameters();
  const std::size_t p = params.size();
  std::vector<double> m1(p, 0.0), m2(p, 0.0);
  std::size_t t = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
      LossAndGradient lg;
      try {
        lg = gradient(m, obj, rows);
      } catch (const NonFiniteError& e) {
        std::ostringstream msg;
        msg << "training diverged in epoch " << epoch << " (" << e.what() << "); trace prefix:";
        for (double v : result.trace) msg << ' ' << v;
        fail(ErrorKind::divergence, msg.str());
      }
      ++t;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      for (std::size_t j = 0; j < p; ++j) {
        double g = lg.grad[j];
        if (cfg.variant == OptimizerVariant::adam) g += cfg.weight_decay * params[j];
        m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g;
        m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g * g;
        double step = cfg.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + cfg.eps);
        if (cfg.variant == OptimizerVariant::adamw) step += cfg.learning_rate * cfg.weight_decay * params[j];
        params[j] -= step;
      }
      total += lg.loss;
      ++batches;
    }
    result.trace.push_back(total / static_cast<double>(batches));
  }
  return result;
}

double grad_check(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows,
                  double step) {
  require(step > 0.0 && std::isfinite(step), ErrorKind::invalid_argument,
          "finite-difference step must be positive");
  const auto analytic = gradient(m, obj, rows).grad;
  ParamModel probe = m;
  auto params = probe.parameters();
  double worst = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double orig = params[j];
    params[j] = orig + step;
    const double up = loss_value(probe, obj, rows);
    params[j] = orig - step;
    const double down = loss_value(probe, obj, rows);
    params[j] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[j]), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(analytic[j] - fd) / denom);
  }
  return worst;
}

}  // namespace crm
