#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crm/datagen.hpp"
#include "crm/pipeline.hpp"

namespace crm {

// A deterministic treatment labeler with a finite integer support.
struct AttributeSpec {
  std::string name;
  std::function<int(const Treatment&)> label;
  std::vector<int> support;
};

// Built-ins, looked up by name:
//   token:<j>                 the j-th token of a sequence treatment
//   threshold:<fn>:<value>    1 if fn(t) > value else 0; fn is "value" (scalar
//                             treatment) or "token_sum"
AttributeSpec make_attribute(std::string_view spec, const Dataset& d);

using ApoFn = std::function<std::vector<double>(std::span<const Treatment>)>;

// sum_i 1[label(T_i) = value] g(T_i) / sum_i 1[label(T_i) = value]
double project_apo(const ApoFn& g, const Dataset& d, std::span<const std::size_t> rows,
                   const AttributeSpec& spec, int value);

// One projection per support value.
std::vector<double> project_apo_table(const ApoFn& g, const Dataset& d, std::span<const std::size_t> rows,
                                      const AttributeSpec& spec);

// Attribute-level truth sum_{label(t)=v} p_T(t) g(t) / sum_{label(t)=v} p_T(t)
// by enumerating the discrete sequence DGP.
std::vector<double> attribute_truth_discrete(const DiscreteSeqConfig& cfg, const AttributeSpec& spec);

// Copy of the dataset whose treatment is the attribute value (a single token).
Dataset relabel_by_attribute(const Dataset& d, const AttributeSpec& spec);

// Refits the estimator pipeline on relabeled rows; one APO per support value.
std::vector<double> retrain_attribute_estimator(const Dataset& d, std::span<const std::size_t> rows,
                                                const AttributeSpec& spec, const PipelineConfig& cfg);

struct ProjectionComparison {
  double projected_rel_mae = 0.0, projected_correlation = 0.0;
  double retrained_rel_mae = 0.0, retrained_correlation = 0.0;
  // With two support values the correlation is +-1 by construction.
  bool degenerate_correlation = false;
};

ProjectionComparison compare_projection(std::span<const double> projected,
                                        std::span<const double> retrained, std::span<const double> truth);

// CSV: attribute,value,projected,retrained,truth
std::string projection_csv(const AttributeSpec& spec, std::span<const double> projected,
                           std::span<const double> retrained, std::span<const double> truth);

}  // namespace crm
