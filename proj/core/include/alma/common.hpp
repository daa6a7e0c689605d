#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace alma {

// Bad configuration: wrong shapes, invalid config values, malformed files.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke an API contract (e.g. backward on a non-scalar).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Unknown id / index out of range.
struct LookupError : std::out_of_range {
  explicit LookupError(const std::string& what) : std::out_of_range(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic seed derivation for independent streams (env k, episode e, ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = root ^ 0xa0761d6478bd642fULL;
  for (std::uint64_t p : path) {
    s ^= splitmix64(p) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    (void)splitmix64(s);
  }
  return splitmix64(s);
}

// mt19937_64 stream with portable double/int draws. Distributions from <random>
// are implementation-defined, so draws are derived from raw 64-bit output only.
class Rng {
 public:
  Rng() : gen_(0x853c49e6748fea9bULL) {}
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  void seed(std::uint64_t s) { gen_.seed(s); }

  // Uniform in [0, 1) with 53 bits of entropy.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next_u64() { return gen_(); }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void deserialize(const std::string& text) {
    std::istringstream is(text);
    is >> gen_;
    if (!is) throw ConfigError("Rng::deserialize: malformed engine state");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace alma
