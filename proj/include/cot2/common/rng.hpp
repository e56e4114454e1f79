#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace cot2 {

/// Counter-based random stream. The state is a 64-bit counter and each output
/// is the SplitMix64 finalizer of the advanced counter, so a stream is fully
/// determined by its (seed, keys...) address. Two streams built from the same
/// address produce identical sequences regardless of thread or call order.
///
/// Satisfies UniformRandomBitGenerator, so it can drive <random> distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) : state_(mix(seed ^ kSeedSalt)) {}
  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Child stream addressed by this stream's current state and `key`; does not
  /// advance this stream.
  Stream fork(std::uint64_t key) const;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSeedSalt = 0x5a17c0ffee5eed00ULL;

  std::uint64_t state_;
};

/// Inverse-CDF categorical draw with one uniform. Zero-mass entries are never
/// returned.
std::size_t sample_categorical(std::span<const double> probs, double u);

inline std::size_t sample_categorical(std::span<const double> probs,
                                      Stream& stream) {
  return sample_categorical(probs, stream.uniform());
}

}  // namespace cot2
