#include "hgtnet/rng.hpp"

#include <cmath>
#include <numbers>

namespace hgt {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t RngStream::at(std::uint64_t index) const noexcept {
  std::uint64_t h = mix64(seed_);
  h = mix64(h ^ stream_id_);
  return mix64(h ^ mix64(index));
}

double RngStream::uniform_at(std::uint64_t index) const noexcept {
  return static_cast<double>(at(index) >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double RngStream::normal() noexcept {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::child(std::uint64_t id) const noexcept {
  return RngStream(seed_, mix64(stream_id_ ^ mix64(id ^ 0xA5A5A5A5A5A5A5A5ULL)), 0);
}

}  // namespace hgt
