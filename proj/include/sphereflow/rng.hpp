#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sphereflow {

// Deterministic random stream. mt19937_64 is fully specified by the standard;
// the uniform and gaussian converters are hand-rolled so that the byte stream
// never depends on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform in [0, 1) with 53 random bits
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, no spare caching: every draw consumes exactly two uniforms,
    // which keeps prefix-stream reasoning simple.
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Eigen::VectorXd gaussian_vector(int d) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v[i] = gaussian();
        return v;
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace sphereflow
