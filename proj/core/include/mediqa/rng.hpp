#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mediqa {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named sub-stream ("data", "init",
/// "shuffle", ...) so components can be reproduced in isolation.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

}  // namespace mediqa
