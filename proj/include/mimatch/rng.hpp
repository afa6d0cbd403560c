#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace mimatch {

// Deterministic random stream. All randomness in the library goes through
// this class so that results are reproducible per seed and independent
// streams can be derived for parallel work (master seed + path of ids).
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static RngStream derive(uint64_t master, std::initializer_list<uint64_t> path) {
    uint64_t s = splitmix(master);
    for (uint64_t p : path) s = splitmix(s ^ (p + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2)));
    return RngStream(s);
  }

  uint64_t next_u64() {
    // xorshift64* on a splitmix-initialized state
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dull;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [a, b); returns exactly a when the range is degenerate.
  double uniform(double a, double b) {
    if (a == b) return a;
    return a + uniform() * (b - a);
  }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    if (lo >= hi) return lo;
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool coin() { return (next_u64() & 1ull) != 0; }

  // Standard normal via Box-Muller (deterministic, caches the second value).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  static uint64_t hash_string(const char* s) {
    // FNV-1a, used to key per-pair evaluation streams by pair id
    uint64_t h = 0xcbf29ce484222325ull;
    for (; *s; ++s) {
      h ^= static_cast<uint64_t>(static_cast<unsigned char>(*s));
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mimatch
