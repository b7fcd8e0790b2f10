#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace lexa {

// Seeded random stream with fully specified draw algorithms, so that results
// are reproducible and the complete state round-trips through serialize().
class RandomSource {
  public:
    explicit RandomSource(uint64_t seed = 0) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

    uint32_t raw() { return engine_(); }

    // Uniform in [0, 1) with 32-bit resolution.
    double uniform() { return static_cast<double>(engine_()) * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        const int span = hi - lo + 1;
        int v = lo + static_cast<int>(uniform() * span);
        return v > hi ? hi : v;
    }

    // Box-Muller, cosine branch only; stateless beyond the engine.
    double normal() {
        double u1 = uniform();
        if (u1 < 1e-12) u1 = 1e-12;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::string serialize() const;
    void deserialize(const std::string& text);

    // Derives an independent stream; mixes the parts with splitmix64.
    static uint64_t mix(uint64_t a, uint64_t b);

  private:
    std::mt19937 engine_;
};

}  // namespace lexa
