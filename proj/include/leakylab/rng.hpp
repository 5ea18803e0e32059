#pragma once

#include <cmath>
#include <cstdint>

namespace leakylab {

// Counter-based generator: splitmix64 finalizer applied to key + i*golden.
// Streams are split by hashing (seed, purpose, index), so workers can draw
// from disjoint streams without coordination and every draw is a pure
// function of (key, counter).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t purpose,
                                  std::uint64_t index = 0) {
    std::uint64_t k = mix(seed + kGolden * (purpose + 1));
    k = mix(k + kGolden * (index + 1));
    return k;
  }

  static CounterRng stream(std::uint64_t seed, std::uint64_t purpose,
                           std::uint64_t index = 0) {
    return CounterRng(derive_key(seed, purpose, index));
  }

  std::uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  // [0, 1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // (0, 1]
  double next_unit_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit_pos();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Gamma(alpha, 1) for alpha >= 1, Marsaglia-Tsang.
  double next_gamma(double alpha) {
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = next_unit_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  // Student-t with df degrees of freedom (df > 2), unit-variance standardized.
  double next_student_t_standardized(double df) {
    const double z = next_gaussian();
    const double g = next_gamma(0.5 * df);
    const double t = z * std::sqrt(df / (2.0 * g));
    return t / std::sqrt(df / (df - 2.0));
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream purposes; keep stable, they are part of the reproducibility contract.
namespace stream_purpose {
inline constexpr std::uint64_t labels = 1;
inline constexpr std::uint64_t noise_row = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t mc = 4;
inline constexpr std::uint64_t probes = 5;
inline constexpr std::uint64_t trial = 6;
inline constexpr std::uint64_t qp_start = 7;
}  // namespace stream_purpose

}  // namespace leakylab
