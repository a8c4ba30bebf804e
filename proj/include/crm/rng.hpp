#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crm {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a root seed and a stream name
// (e.g. "datagen", "init", "shuffle"), so that ablations can vary one
// stream while holding the others fixed.
std::uint64_t stream_seed(std::uint64_t root, std::string_view name);

inline Rng make_rng(std::uint64_t root, std::string_view name) {
  return Rng(stream_seed(root, name));
}

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace crm
