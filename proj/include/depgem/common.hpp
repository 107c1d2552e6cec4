// Shared utilities: errors, seeded RNG streams, numerically safe special
// functions, and a deterministic batch runner for Monte Carlo estimators.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace depgem {

/// Invalid input or configuration (CLI exit code 1).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure such as a non-factorizable Gram matrix (CLI exit code 2).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// RNG streams
// ---------------------------------------------------------------------------

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable seed for substream `stream` of a root seed. Streams derived from
/// the same root are independent for practical purposes and do not depend on
/// construction order, which keeps parallel reductions reproducible.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
               (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
}

/// Counter-based xoshiro256** generator with uniform and normal draws.
/// Self-contained so that draws are identical across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) { init(seed); }
  RandomStream(std::uint64_t seed, std::uint64_t stream) {
    init(derive_seed(seed, stream));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe as a log() argument.
  double open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (one spare cached per pair).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(open01()));
    const double a = 2.0 * M_PI * u01();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  void init(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = mix64(x);
    }
  }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Standard normal CDF via the complementary error function.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Standard normal upper-tail probability.
inline double normal_sf(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

/// log of the upper-tail probability, finite for all x. erfc stays in range
/// until about x = 37; beyond that use the continued asymptotic expansion.
inline double normal_logsf(double x) {
  if (x < 35.0) return std::log(normal_sf(x));
  const double x2 = x * x;
  double term = 1.0, series = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) / x2;
    series += term;
  }
  return -0.5 * x2 - 0.5 * kLog2Pi - std::log(x) + std::log(series);
}

/// log(1 - exp(u)) for u < 0 without cancellation.
inline double log1mexp(double u) {
  return u > -M_LN2 ? std::log(-std::expm1(u)) : std::log1p(-std::exp(u));
}

/// Inverse of normal_logsf: the x with log Phi_c(x) = log_p, for log_p < 0.
/// Newton iteration on the log survival function; the hazard exceeds x, so
/// the step is well defined everywhere.
inline double normal_isf_log(double log_p) {
  double x;
  if (log_p > -0.7) {
    x = 0.0;
  } else {
    const double r = -log_p;
    x = std::sqrt(std::max(0.0, 2.0 * r - std::log(4.0 * M_PI * r)));
  }
  for (int it = 0; it < 100; ++it) {
    const double f = normal_logsf(x) - log_p;
    if (std::abs(f) < 1e-13) break;
    const double log_hazard = -0.5 * x * x - 0.5 * kLog2Pi - normal_logsf(x);
    double step = f * std::exp(-log_hazard);
    step = std::clamp(step, -4.0, 4.0);
    x += step;
  }
  return x;
}

inline double logsumexp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Ascending factorial a(a+1)...(a+n-1); empty product for n = 0.
inline double rising_factorial(double a, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= a + i;
  return r;
}

// ---------------------------------------------------------------------------
// Deterministic parallel batches
// ---------------------------------------------------------------------------

/// Runs `fn(batch_index, stream)` for every batch, each batch on its own RNG
/// substream. Results are independent of the thread count, so estimates are
/// reproducible given (seed, n_batches) alone.
inline void run_batches(std::uint64_t seed, int n_batches, int threads,
                        const std::function<void(int, RandomStream&)>& fn) {
  threads = std::max(1, std::min(threads, n_batches));
  if (threads == 1) {
    for (int b = 0; b < n_batches; ++b) {
      RandomStream rng(seed, static_cast<std::uint64_t>(b));
      fn(b, rng);
    }
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int b = next.fetch_add(1);
      if (b >= n_batches) return;
      RandomStream rng(seed, static_cast<std::uint64_t>(b));
      fn(b, rng);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

/// Mean and standard error of per-batch estimates.
struct BatchSummary {
  double mean = 0.0;
  double se = 0.0;
};

inline BatchSummary summarize_batches(std::span<const double> batch_means) {
  BatchSummary out;
  const auto n = static_cast<double>(batch_means.size());
  for (double b : batch_means) out.mean += b;
  out.mean /= n;
  double ss = 0.0;
  for (double b : batch_means) ss += (b - out.mean) * (b - out.mean);
  out.se = std::sqrt(ss / (n * (n - 1.0)));
  return out;
}

/// FNV-1a 64-bit hash, used to bind analysis outputs to their inputs.
inline std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace depgem
