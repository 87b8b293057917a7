#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace dang {

// Deterministic random source. All draws are implemented directly on top of
// the mt19937 word stream so that a serialized engine state captures the
// complete sampling state (std::normal_distribution would keep a hidden
// cached value outside the engine).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(static_cast<std::mt19937::result_type>(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    eng_.seed(seq);
  }

  std::uint32_t next_u32() { return eng_(); }

  // Uniform in [0, 1). One engine word.
  double uniform() { return next_u32() * 0x1p-32; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range. Always consumes exactly one engine word.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - lo + 1;
    return lo + static_cast<int>((static_cast<std::uint64_t>(next_u32()) * span) >> 32);
  }

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  // Box-Muller without spare caching: two engine words per draw.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;  // (0, 1]
    const double u2 = next_u32() * 0x1p-32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  static Rng deserialize(const std::string& state) {
    Rng r(0);
    std::istringstream is(state);
    is >> r.eng_;
    return r;
  }

 private:
  std::mt19937 eng_;
};

}  // namespace dang
