#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rfadv {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Bad user-supplied configuration (flags, config files, parameter ranges).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated on-disk artifact.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (shape mismatch and the like).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

inline void require(bool ok, const char *what) {
  if (!ok) throw ContractError(what);
}

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a path of counters,
/// e.g. derive_seed(seed, cell, trial). Order of the counters matters.
template <typename... Ix>
constexpr std::uint64_t derive_seed(std::uint64_t base, Ix... ix) {
  std::uint64_t s = mix64(base);
  ((s = mix64(s ^ mix64(static_cast<std::uint64_t>(ix) + 0x632be59bd9b4e019ULL))), ...);
  return s;
}

/// Seeded random stream. Everything stochastic in the library takes one of
/// these by reference; nothing touches global state.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::uint32_t bit() { return static_cast<std::uint32_t>(engine_() >> 63); }
  std::uint64_t next() { return engine_(); }

  /// Circular complex Gaussian with E|z|^2 == variance.
  cplx complex_normal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  std::mt19937_64 &engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double norm2(const CVec &v) {
  double s = 0.0;
  for (const auto &z : v) s += std::norm(z);
  return std::sqrt(s);
}

inline double energy(const CVec &v) {
  double s = 0.0;
  for (const auto &z : v) s += std::norm(z);
  return s;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Runs body(i) for i in [0, n) on up to `jobs` threads with static
/// interleaved assignment. Callers write results into slot i, so output is
/// independent of the thread count.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)> &body) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace rfadv
