#ifndef COLAUDIT_RNG_H_
#define COLAUDIT_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace colaudit {

// SplitMix64 finalizer. Used to derive independent stream seeds and as a
// counter-based generator for the parallel Monte Carlo kernels.
constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` under `base`. Distinct indices give distinct seeds.
constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t index) {
  return SplitMix64(SplitMix64(base) ^ SplitMix64(index + 0x632be59bd9b4e019ULL));
}

// Maps 64 random bits to a double in [0, 1) with 53 bits of precision.
constexpr double BitsToUnit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based uniform: the i-th draw of stream `seed`. Pure function, so
// results do not depend on how work is split across threads.
constexpr double CounterUniform(std::uint64_t seed, std::uint64_t counter) {
  return BitsToUnit(SplitMix64(seed ^ SplitMix64(counter)));
}

// Sequential generator. The conversions to doubles and indices are written
// out here rather than taken from <random> distributions, whose output is
// implementation-defined; transcripts must replay bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double Uniform() { return BitsToUnit(engine_()); }

  // Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t Index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Inverse-CDF draw from a probability vector. Never returns an index with
  // zero mass.
  std::size_t Categorical(std::span<const double> probs) {
    const double u = Uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = i;
      acc += probs[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

  std::uint64_t NextBits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace colaudit

#endif  // COLAUDIT_RNG_H_
