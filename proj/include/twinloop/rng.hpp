#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace twinloop {

using Rng = std::mt19937_64;

/// Derives an independent generator from a master seed, a stream tag
/// ("arrivals", "mobility", ...) and up to two integer qualifiers.
/// Identical arguments always give an identical stream.
Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                std::uint64_t b = 0);

}  // namespace twinloop
