#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace crtbayes {

/// Stream tags used when deriving substream seeds. Values are part of the
/// reproducibility contract: changing one changes every downstream draw.
enum class StreamTag : std::uint64_t {
  truth = 0x7472757468ULL,
  trial = 0x747269616cULL,
  chain = 0x636861696eULL,
  bootstrap = 0x626f6f74ULL,
  cluster_size = 0x73697a65ULL,
  covariates = 0x636f76ULL,
  random_effect = 0x7265ULL,
  outcome_noise = 0x6e6f697365ULL,
  assignment = 0x61726dULL,
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derive a child seed from a parent seed and a path of integer keys.
///
/// The derivation folds each key into the running state with one splitmix64
/// finalizer round: s <- splitmix64(s ^ splitmix64(key)). Parents and keys
/// combine order-sensitively, so (seed, a, b) and (seed, b, a) differ.
inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = detail::splitmix64(parent);
  for (auto k : keys) s = detail::splitmix64(s ^ detail::splitmix64(k));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t parent, StreamTag tag,
                                 std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t s = derive_seed(parent, {static_cast<std::uint64_t>(tag)});
  for (auto k : keys) s = detail::splitmix64(s ^ detail::splitmix64(k));
  return s;
}

/// Thin wrapper over a 64-bit Mersenne twister with the handful of
/// distributions the samplers need.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unit_(engine_); }

  double normal(double mean = 0.0, double sd = 1.0) {
    return mean + sd * normal_(engine_);
  }

  /// Gamma with the given shape and rate (mean shape / rate).
  double gamma(double shape, double rate) {
    using param = std::gamma_distribution<double>::param_type;
    return gamma_(engine_, param(shape, 1.0 / rate));
  }

  /// Inverse-gamma with density proportional to x^{-shape-1} exp(-rate / x).
  double inverse_gamma(double shape, double rate) {
    return 1.0 / gamma(shape, rate);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on the closed range [lo, hi].
  long uniform_int(long lo, long hi) {
    using param = std::uniform_int_distribution<long>::param_type;
    return int_(engine_, param(lo, hi));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::gamma_distribution<double> gamma_{};
  std::uniform_int_distribution<long> int_{};
};

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace crtbayes
