#pragma once

#include <span>

namespace crm {

// mean |predicted - truth| / mean |truth|
double relative_mae(std::span<const double> predicted, std::span<const double> truth);

// Pearson correlation; constant inputs are rejected.
double correlation(std::span<const double> predicted, std::span<const double> truth);

}  // namespace crm
