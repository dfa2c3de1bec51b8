#pragma once

#include <array>
#include <cstdint>

#include "aio/numcore/real.hpp"

namespace aio::inline AIO_ABI {

/// Philox4x32-10 counter-based bijection (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Serializable position of an Rng stream.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t position = 0;  // number of 32-bit words consumed
  bool operator==(const RngState&) const = default;
};

/// Deterministic random stream: key = seed, counter = (block index, stream).
/// Distinct (seed, stream) pairs give independent sequences, so per-purpose
/// and per-iteration streams can be derived without shared state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : state_{seed, stream, 0} {}
  static Rng from_state(const RngState& s);
  RngState state() const { return state_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard normal via Box-Muller (one variate per call).
  double normal();
  /// Normal(0, sigma^2) resampled until |x| <= 2 sigma.
  double truncated_normal(double sigma);

 private:
  RngState state_;
};

/// Mixes a seed with a tag into a new 64-bit seed (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace aio::inline AIO_ABI
