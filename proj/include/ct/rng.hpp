#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ct {

// Counter-based seed derivation: every module draws its stream from the one
// master seed without perturbing other modules' streams when new ones are
// added.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t index = 0) {
  return splitmix64(master ^ splitmix64(fnv1a(stream) + 0x632be59bd9b4e019ull * index));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view stream,
                                std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(master, stream, index));
}

}  // namespace ct
