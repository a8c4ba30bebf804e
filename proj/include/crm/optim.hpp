#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crm/loss.hpp"
#include "crm/model.hpp"

namespace crm {

enum class OptimizerVariant { adam, adamw };

struct OptimizerConfig {
  OptimizerVariant variant = OptimizerVariant::adamw;
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0: full batch
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// A model input matrix (one feature row per design row) paired with a loss
// indexed by the same design rows.
struct Objective {
  const Matrix* features = nullptr;
  LossPtr loss;

  std::size_t size() const { return static_cast<std::size_t>(features->rows()); }
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

// Loss and exact parameter gradient over the given design rows. Non-finite
// outputs or losses raise NonFiniteError naming the offending design row.
LossAndGradient gradient(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows);
double loss_value(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows);

struct TrainResult {
  std::vector<double> trace;  // mean batch loss per epoch
};

// Runs `epochs` passes of Adam/AdamW over the objective's rows, shuffled by the
// "shuffle" stream of cfg.seed. Zero epochs leave the model untouched.
TrainResult train(ParamModel& m, const Objective& obj, const OptimizerConfig& cfg);

// Largest per-coordinate |analytic - central difference| / max(|analytic|, |fd|, 1e-6).
double grad_check(const ParamModel& m, const Objective& obj, std::span<const std::size_t> rows,
                  double step);

}  // namespace crm
