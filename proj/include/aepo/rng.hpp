#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace aepo {

// What a stream is used for. Part of the stream key so that different
// consumers at the same step never share random numbers.
enum class StreamPurpose : std::uint64_t {
  kGroupQuery = 1,
  kGroupRollout = 2,
  kRegDraw = 3,
  kRegGroupQuery = 4,
  kRegGroupRollout = 5,
  kEvalMonteCarlo = 6,
  kTest = 7,
};

std::uint64_t splitmix64(std::uint64_t x);

// Counter-based random stream. The output sequence is a pure function of
// (seed, keys): the i-th draw is mix(key + i * gamma), so two streams built
// from the same key produce identical values no matter which thread or in
// which order they are consumed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t a = 0,
            std::uint64_t b = 0, std::uint64_t c = 0)
      : RngStream(seed, {static_cast<std::uint64_t>(purpose), a, b, c}) {}

  std::uint64_t next_u64();
  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). n > 0.
  std::uint64_t below(std::uint64_t n);
  // Index drawn from a probability vector by inverse CDF.
  std::size_t categorical(std::span<const double> probs);

  std::uint64_t tag() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace aepo
