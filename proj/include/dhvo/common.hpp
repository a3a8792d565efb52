#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dhvo {

// Thrown for invalid configuration values, unknown config keys and
// malformed input files. The CLI maps it to exit code 2.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a caller violates an operation contract at runtime
// (e.g. stepping an environment with a non-ready task).
struct invalid_action_error : std::logic_error {
  explicit invalid_action_error(const std::string& what) : std::logic_error(what) {}
};

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Derives an independent stream seed from a master seed and a tag, so
// sub-components (dag generation, exploration, replay sampling, ...)
// never share a random stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return detail::splitmix64(master ^ h);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  return detail::splitmix64(derive_seed(master, tag) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace dhvo
