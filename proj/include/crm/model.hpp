#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crm/dataset.hpp"

namespace crm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// How (treatment, confounder) pairs become a flat feature vector. Token
// sequences and discrete confounders are one-hot per position; continuous
// values pass through raw.
struct InputSpec {
  bool use_treatment = true;
  bool use_confounders = true;
  std::vector<int> t_vocab;  // empty: one scalar treatment feature
  std::size_t x_dim = 0;
  std::vector<int> x_vocab;  // empty: raw confounders

  std::size_t width() const;
  bool operator==(const InputSpec&) const = default;

  static InputSpec treatment_only(const Dataset& d);
  static InputSpec confounders_only(const Dataset& d);
  static InputSpec treatment_and_confounders(const Dataset& d);
};

void encode(const InputSpec& spec, const Treatment& t, std::span<const double> x,
            std::span<double> out);

enum class Activation { relu, tanh };

// Interpretation of the raw network output.
enum class Head {
  identity,     // real regression
  sigmoid,      // Bernoulli probability from a logit
  softplus,     // positive weight
  gaussian,     // (mean, log-scale)
  categorical,  // concatenated per-position logits
};

std::string to_string(Activation a);
std::string to_string(Head h);

struct Architecture {
  InputSpec input;
  std::vector<std::size_t> hidden;  // empty: linear model
  Activation activation = Activation::relu;
  Head head = Head::identity;
  std::vector<int> head_vocab;      // categorical head positions

  std::size_t output_width() const;
  std::vector<std::size_t> layer_widths() const;  // input, hidden..., output
  std::size_t parameter_count() const;
  bool operator==(const Architecture&) const = default;

  static Architecture linear(InputSpec in, Head head = Head::identity);
  static Architecture mlp(InputSpec in, std::vector<std::size_t> hidden, Head head,
                          Activation act = Activation::relu);
};

// A parametric map with a flat parameter vector. Layer l stores its weight
// matrix (out x in, row-major) followed by its bias.
class ParamModel {
 public:
  ParamModel() = default;
  explicit ParamModel(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  void initialize(std::uint64_t seed);
  void set_parameters(std::span<const double> p);

  std::size_t layer_count() const { return arch_.layer_widths().size() - 1; }
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  // Raw output for one encoded feature row.
  std::vector<double> forward(std::span<const double> features) const;

  bool operator==(const ParamModel& o) const { return arch_ == o.arch_ && params_ == o.params_; }

 private:
  Architecture arch_;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

// Feature matrix for a set of dataset rows (one feature row per entry).
Matrix build_features(const InputSpec& spec, const Dataset& d, std::span<const std::size_t> rows);
// Same rows, but with every treatment replaced by `t`.
Matrix build_features_at(const InputSpec& spec, const Dataset& d, std::span<const std::size_t> rows,
                         const Treatment& t);
Matrix build_treatment_features(const InputSpec& spec, std::span<const Treatment> ts);

// Head transforms applied to raw outputs.
double softplus(double z);
double sigmoid(double z);
double log_sigmoid(double z);
std::vector<double> softmax(std::span<const double> logits);

// Checkpoint: versioned text header with the architecture, then the flat
// parameter array, one shortest-round-trip decimal per line.
std::string serialize_checkpoint(const ParamModel& m);
ParamModel parse_checkpoint(std::string_view text);
void save_checkpoint(const ParamModel& m, const std::filesystem::path& path);
ParamModel load_checkpoint(const std::filesystem::path& path);

}  // namespace crm
