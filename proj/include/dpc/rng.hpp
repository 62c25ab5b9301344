// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dpc {

// Seeded RNG with a fixed cross-platform output sequence. The mt19937 word
// stream is pinned by the standard; the float/normal/shuffle transforms
// below avoid the implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  // uniform in [0, 1)
  float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>((static_cast<std::uint64_t>(next_u32()) * span) >> 32);
  }

  // Box-Muller, standard normal
  float normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    float u1 = 0.0f;
    while (u1 <= 1e-12f) u1 = uniform();
    float u2 = uniform();
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.2831853071795864769f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  float normal(float mean, float stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937 gen_;
  float spare_ = 0.0f;
  bool have_spare_ = false;
};

}  // namespace dpc
