#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ddace {

// Bad inputs: malformed files, out-of-range parameters, unknown presets.
// The CLI maps these to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime numeric failures: divergence, non-finite values, factorization
// breakdown. The CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit generator (splitmix64). Identical streams on every
/// platform, unlike the std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) { return int(next_u64() % std::uint64_t(n)); }

  /// Standard normal via Box-Muller (two draws per sample, no cache).
  double normal();

  /// Derived independent stream; `stream` distinguishes siblings.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t state_;
};

/// Shortest decimal form that parses back to the identical double.
/// All file writers use this so outputs are byte-reproducible.
std::string format_double(double v);

/// Strict double parse; throws InputError mentioning `context` on failure.
double parse_double(const std::string& s, const std::string& context);

/// Strict integer parse with the same error convention.
long parse_long(const std::string& s, const std::string& context);

}  // namespace ddace
