#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace zipgait {

// Seedable RNG threaded explicitly through training/sampling.
// Normal draws use Box-Muller on top of mt19937_64 so the stream does not
// depend on the standard library's distribution implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double uniform() {  // [0,1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(gen_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void fill_normal(T* p, std::int64_t n, double scale = 1.0) {
        for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<T>(normal() * scale);
    }

    Rng fork() { return Rng(gen_()); }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace zipgait
