#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cfisac {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Random stream for one scenario. The engine is std::mt19937_64; the
// uniform/normal transforms are written out here because the standard
// distributions are implementation-defined and would break bit-exact
// reproducibility across standard libraries.
class Stream {
 public:
  Stream(std::uint64_t master_seed, std::uint64_t index)
      : engine_(splitmix64(splitmix64(master_seed) ^ splitmix64(index + 0x51ed2701ULL))) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cfisac
