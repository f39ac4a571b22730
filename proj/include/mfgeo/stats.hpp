#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace mfgeo {

struct MeanInterval {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double lower = 0.0;
    double upper = 0.0;
    int count = 0;
    bool contains(double x) const { return lower <= x && x <= upper; }
};

// Student-t confidence interval for the mean; needs at least two samples.
MeanInterval mean_interval(std::span<const double> samples, double confidence = 0.95);

struct PowerLawFit {
    double exponent = 0.0;
    double prefactor = 0.0;
    double r_squared = 0.0;
};

// Least-squares fit of log y = log c + p log x over pairs with x, y > 0.
PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y);

// splitmix64 finalizer; a counter-based generator for per-item streams.
std::uint64_t splitmix64(std::uint64_t x);

// Independent stream key for item `index` under a run seed.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index);
// Uniform double in [0, 1) with 53 random bits, a pure function of (key, counter).
double counter_uniform(std::uint64_t key, std::uint64_t counter);
// Standard normal pair by Box-Muller from two counter uniforms.
std::pair<double, double> counter_normal_pair(std::uint64_t key, std::uint64_t counter);

}  // namespace mfgeo
