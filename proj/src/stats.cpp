#include "mfgeo/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mfgeo {

MeanInterval mean_interval(std::span<const double> samples, double confidence) {
    if (samples.size() < 2) throw std::invalid_argument("mean_interval: need at least two samples");
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("mean_interval: confidence must lie in (0, 1)");
    MeanInterval r;
    r.count = static_cast<int>(samples.size());
    long double s = 0.0L;
    for (double x : samples) s += x;
    r.mean = static_cast<double>(s / r.count);
    long double ss = 0.0L;
    for (double x : samples) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(static_cast<double>(ss / (r.count - 1)));
    boost::math::students_t dist(r.count - 1);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.5 * (1.0 - confidence)));
    const double half = t * r.stddev / std::sqrt(static_cast<double>(r.count));
    r.lower = r.mean - half;
    r.upper = r.mean + half;
    return r;
}

PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_power_law: length mismatch");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    if (lx.size() < 2) throw std::invalid_argument("fit_power_law: need two positive pairs");
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_power_law: abscissae are all equal");
    PowerLawFit f;
    f.exponent = sxy / sxx;
    f.prefactor = std::exp(my - f.exponent * mx);
    f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index ^ 0x5851f42d4c957f2dULL));
}

double counter_uniform(std::uint64_t key, std::uint64_t counter) {
    return static_cast<double>(splitmix64(key ^ splitmix64(counter)) >> 11) * 0x1.0p-53;
}

std::pair<double, double> counter_normal_pair(std::uint64_t key, std::uint64_t counter) {
    // 1 - u lies in (0, 1], so the log is finite
    const double u1 = 1.0 - counter_uniform(key, 2 * counter);
    const double u2 = counter_uniform(key, 2 * counter + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace mfgeo
