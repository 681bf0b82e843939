#pragma once

// Counter-based random streams.
//
// Every consumer of randomness gets its own stream, derived from a 64-bit
// root seed and a short tuple of tags (step index, slot index, trial, ...).
// Derivation is a pure function of its inputs, so simulated and live
// execution can reproduce the exact same draws for the same logical slot,
// and independent trials never share state.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace apsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sample identifier theta. The stochastic gradient g(x, theta) is a
// deterministic function of (x, theta).
using SampleKey = std::uint64_t;

namespace rng_detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rng_detail

// Hash a root seed together with any number of tags.
constexpr std::uint64_t derive_key(std::uint64_t root, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = rng_detail::mix64(root + rng_detail::kGolden);
  for (std::uint64_t t : tags) {
    h = rng_detail::mix64(h ^ rng_detail::mix64(t + rng_detail::kGolden));
  }
  return h;
}

// Stream tags used throughout the engine.
namespace stream_tag {
inline constexpr std::uint64_t kPerturbation = 0x7a657461ULL;  // master zeta stream
inline constexpr std::uint64_t kSlot = 0x736c6f74ULL;          // theta_{t,i}
inline constexpr std::uint64_t kSchedule = 0x736368ULL;
inline constexpr std::uint64_t kLiveWorker = 0x6c697665ULL;
inline constexpr std::uint64_t kTrial = 0x747269ULL;
inline constexpr std::uint64_t kSampleNoise = 0x6e6f6973ULL;
}  // namespace stream_tag

// SplitMix64 generator. Satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Stream(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += rng_detail::kGolden;
    return rng_detail::mix64(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>((*this)());
    // Lemire-style rejection keeps the draw exactly uniform.
    const std::uint64_t limit = max() - max() % span;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  // Standard normal via Box-Muller; the second variate is cached so draws
  // come in a fixed, documented order.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // d independent N(0, scale^2) coordinates.
  Vector normal_vector(Eigen::Index d, double scale) {
    Vector v(d);
    for (Eigen::Index j = 0; j < d; ++j) v[j] = scale * normal();
    return v;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Stream stream_for(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
  return Stream(derive_key(root, tags));
}

// Key of the stochastic-gradient sample consumed by slot (t, i) of a run.
inline SampleKey slot_key(std::uint64_t seed, std::int64_t t, std::int64_t i) noexcept {
  return derive_key(seed, {stream_tag::kSlot, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)});
}

// Seed of trial number `trial` under a Monte-Carlo seed base.
inline std::uint64_t trial_seed(std::uint64_t base, std::int64_t trial) noexcept {
  return derive_key(base, {stream_tag::kTrial, static_cast<std::uint64_t>(trial)});
}

}  // namespace apsgd
