#pragma once

#include <cstdint>
#include <string_view>

namespace hgt {

// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x) noexcept;

// FNV-1a hash, used to derive stream ids from names and sample ids.
std::uint64_t stream_key(std::string_view name) noexcept;

// Counter-based random stream. Draw i of stream (seed, stream_id) is a pure
// function of (seed, stream_id, i), so streams never share state and can be
// recreated anywhere.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept
      : seed_(seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  // Random access; does not advance the stream.
  std::uint64_t at(std::uint64_t index) const noexcept;
  double uniform_at(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept { return at(counter_++); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return uniform_at(counter_++); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via Box-Muller (consumes two draws).
  double normal() noexcept;

  // Independent stream keyed by (this stream, id). Counter starts at 0.
  RngStream child(std::uint64_t id) const noexcept;
  RngStream child(std::string_view name) const noexcept { return child(stream_key(name)); }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace hgt
