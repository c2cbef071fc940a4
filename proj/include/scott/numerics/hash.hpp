#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "scott/numerics/mlp.hpp"

namespace scott::numerics {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Hash of layer sizes, activation and the exact bit patterns of every
/// parameter.
std::uint64_t fingerprint(const MlpParams& params);

}  // namespace scott::numerics
