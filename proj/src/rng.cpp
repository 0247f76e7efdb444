#include "twinloop/rng.hpp"

#include <array>

namespace twinloop {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t t = fnv1a(tag);
  std::array<std::uint32_t, 8> words{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(t),    static_cast<std::uint32_t>(t >> 32),
      static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
      static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

}  // namespace twinloop
