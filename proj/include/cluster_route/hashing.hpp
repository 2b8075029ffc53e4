#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace cluster_route {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of string parts and integers into one 64-bit key.
/// Part boundaries are length-delimited so ("ab","c") != ("a","bc").
class KeyHasher {
 public:
  explicit KeyHasher(std::uint64_t seed = 0) : state_(mix64(seed)) {}
  KeyHasher& add(std::string_view part);
  KeyHasher& add(std::uint64_t value);
  std::uint64_t value() const { return mix64(state_); }

 private:
  std::uint64_t state_;
};

/// Maps a 64-bit hash onto [0, 1) using the top 53 bits.
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string hex64(std::uint64_t v);

}  // namespace cluster_route
