#include <doctest.h>

#include "mfgeo/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mfgeo;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

// Composite Simpson rule, independent of the library.
template <class F>
double simpson(F f, double a, double b, int panels = 2000) {
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_SUITE("geometry") {
    TEST_CASE("disk metric at reference points") {
        auto disk = ChartGeometry::poincare_disk(2);
        auto md = disk.metric_data_at(vec({0.0, 0.0}));
        CHECK(md.g.isApprox(4.0 * Matrix::Identity(2, 2), 1e-15));
        CHECK(md.vol_weight == doctest::Approx(4.0).epsilon(1e-14));
        md = disk.metric_data_at(vec({0.5, 0.0}));
        CHECK(md.g(0, 0) == doctest::Approx(4.0 / 0.5625).epsilon(1e-14));
        CHECK(md.g(0, 1) == 0.0);
        CHECK((md.g * md.g_inv - Matrix::Identity(2, 2)).norm() < 1e-12);
    }

    TEST_CASE("disk volume weight is (2/(1-r^2))^n") {
        for (int n : {2, 3}) {
            auto disk = ChartGeometry::poincare_disk(n);
            Vector x = Vector::Constant(n, 0.3);
            const double r2 = x.squaredNorm();
            CHECK(disk.metric_data_at(x).vol_weight == doctest::Approx(std::pow(2.0 / (1.0 - r2), n)).epsilon(1e-13));
        }
    }

    TEST_CASE("flat torus metric is Euclidean") {
        auto torus = ChartGeometry::flat_torus({1.0, 1.0});
        auto md = torus.metric_data_at(vec({0.3, 0.7}));
        CHECK(md.g.isApprox(Matrix::Identity(2, 2)));
        CHECK(md.vol_weight == 1.0);
        for (const auto& gk : torus.christoffel(vec({0.3, 0.7}))) CHECK(gk.norm() == 0.0);
    }

    TEST_CASE("points outside the domain are rejected") {
        auto disk = ChartGeometry::poincare_disk(2);
        CHECK_THROWS_AS(disk.metric_data_at(vec({1.0, 0.0})), DomainError);
        CHECK_THROWS_AS(disk.metric_data_at(vec({0.96, 0.0})), DomainError);
        CHECK_THROWS_AS(disk.metric_data_at(vec({2.0, 2.0})), DomainError);
        CHECK_NOTHROW(disk.metric_data_at(vec({0.9, 0.0})));
    }

    TEST_CASE("generator coefficients match the expanded disk Laplacian") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (int n : {2, 3, 4}) {
            auto disk = ChartGeometry::poincare_disk(n);
            for (int t = 0; t < 20; ++t) {
                Vector x(n);
                for (int k = 0; k < n; ++k) x[k] = u(rng);
                const double s = 1.0 - x.squaredNorm();
                auto c = disk.generator_coeffs_at(x);
                CHECK((c.diffusion - (s * s / 4.0) * Matrix::Identity(n, n)).norm() < 1e-12);
                // expanded first-order coefficient ((n-2)(1-|x|^2)/2) x
                CHECK((c.drift_correction - ((n - 2) * s / 2.0) * x).norm() < 1e-12);
            }
        }
    }

    TEST_CASE("generator coefficients on flat and trivially conformal tori") {
        auto flat = ChartGeometry::flat_torus({1.0, 2.0});
        auto c = flat.generator_coeffs_at(vec({0.2, 1.5}));
        CHECK(c.diffusion.isApprox(Matrix::Identity(2, 2)));
        CHECK(c.drift_correction.norm() == 0.0);
        auto conf = ChartGeometry::conformal_torus({1.0, 1.0}, {});
        c = conf.generator_coeffs_at(vec({0.2, 0.5}));
        CHECK(c.diffusion.isApprox(Matrix::Identity(2, 2)));
        CHECK(c.drift_correction.norm() == 0.0);
    }

    TEST_CASE("gradient norm") {
        auto disk = ChartGeometry::poincare_disk(2);
        CHECK(disk.grad_norm_sq_at(vec({0, 0}), vec({1, 0})) == doctest::Approx(0.25));
        CHECK(disk.grad_norm_sq_at(vec({0.5, 0}), vec({2, 0})) == doctest::Approx(0.5625));
        CHECK(disk.grad_norm_sq_at(vec({0.5, 0}), vec({0, 0})) == 0.0);
        auto torus = ChartGeometry::flat_torus({1.0, 1.0});
        CHECK(torus.grad_norm_sq_at(vec({0.1, 0.1}), vec({3, 4})) == doctest::Approx(25.0));
    }

    TEST_CASE("disk distance against line-element quadrature") {
        auto disk = ChartGeometry::poincare_disk(2);
        const double oracle = simpson([](double s) { return 2.0 / (1.0 - s * s); }, 0.0, 0.5);
        CHECK(disk.geodesic_distance(vec({0, 0}), vec({0.5, 0})) == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(oracle == doctest::Approx(std::log(3.0)).epsilon(1e-12));
        // Moebius invariance: the pair (a, b) has the distance of (0, (-a)(+)b).
        Vector a = vec({0.3, -0.2}), b = vec({-0.4, 0.5});
        const double d = disk.geodesic_distance(a, b);
        const double r = mobius_add(-a, b).norm();
        const double d0 = simpson([](double s) { return 2.0 / (1.0 - s * s); }, 0.0, r);
        CHECK(d == doctest::Approx(d0).epsilon(1e-10));
    }

    TEST_CASE("torus distances wrap") {
        auto torus = ChartGeometry::flat_torus({1.0, 1.0});
        CHECK(torus.geodesic_distance(vec({0.1, 0}), vec({0.9, 0})) == doctest::Approx(0.2));
        CHECK(torus.geodesic_distance(vec({0.3, 0.3}), vec({0.3, 0.3})) == 0.0);
    }

    TEST_CASE("conformal torus distance approximates the metric") {
        auto flat_like = ChartGeometry::conformal_torus({1.0, 1.0}, {}, 128);
        // points snap to lattice nodes: error at most one lattice diagonal
        CHECK(std::abs(flat_like.geodesic_distance(vec({0.1, 0.2}), vec({0.4, 0.2})) - 0.3) <= std::sqrt(2.0) / 128);
        CHECK(flat_like.geodesic_distance(vec({0.125, 0.25}), vec({0.375, 0.25})) == doctest::Approx(0.25).epsilon(1e-12));
        // constant phi = log 2 scales all lengths by 2; lattice anisotropy stays within 3%
        auto scaled = ChartGeometry::conformal_torus({1.0, 1.0}, {{0, 0, std::log(2.0), 0.0}}, 128);
        const double d = scaled.geodesic_distance(vec({0.1, 0.1}), vec({0.35, 0.2}));
        CHECK(std::abs(d - 2.0 * std::hypot(0.25, 0.1)) < 0.03 * d);
        CHECK(scaled.geodesic_distance(vec({0.1, 0.1}), vec({0.1, 0.1})) == 0.0);
    }

    TEST_CASE("distances are symmetric and satisfy the triangle inequality") {
        std::vector<ChartGeometry> geoms{ChartGeometry::poincare_disk(2), ChartGeometry::flat_torus({1.0, 1.0}),
                                         ChartGeometry::conformal_torus({1.0, 1.0}, {{1, 0, 0.3, 0.0}, {0, 1, 0.0, 0.2}}, 48)};
        std::mt19937_64 rng(11);
        for (const auto& g : geoms) {
            auto sample = [&]() {
                std::uniform_real_distribution<double> u(g.periodic() ? 0.0 : -0.65, g.periodic() ? 1.0 : 0.65);
                Vector x(2);
                do {
                    x = vec({u(rng), u(rng)});
                } while (!g.admissible(view(x)));
                return x;
            };
            const int triples = g.kind() == GeometryKind::conformal_torus ? 300 : 10000;
            int violations = 0;
            for (int t = 0; t < triples; ++t) {
                Vector x = sample(), y = sample(), z = sample();
                const double dxy = g.geodesic_distance(x, y);
                if (dxy > g.geodesic_distance(x, z) + g.geodesic_distance(z, y) + 1e-9) ++violations;
                if (std::abs(dxy - g.geodesic_distance(y, x)) > 0.0) ++violations;
            }
            CHECK_MESSAGE(violations == 0, g.name());
        }
    }

    TEST_CASE("disk curvature against finite-difference curvature of the chart metric") {
        auto disk = ChartGeometry::poincare_disk(2);
        Vector x = vec({0.2, -0.1});
        // Gauss curvature of g = e^{2 psi} delta is -e^{-2 psi} (psi_xx + psi_yy).
        auto psi = [&](double a, double b) { return 0.5 * std::log(disk.metric_data_at(vec({a, b})).g(0, 0)); };
        const double h = 1e-4;
        const double lap = (psi(x[0] + h, x[1]) + psi(x[0] - h, x[1]) + psi(x[0], x[1] + h) + psi(x[0], x[1] - h) -
                            4.0 * psi(x[0], x[1])) /
                           (h * h);
        const double gauss = -std::exp(-2.0 * psi(x[0], x[1])) * lap;
        CHECK(gauss == doctest::Approx(-1.0).epsilon(1e-5));
        const double lam = 2.0 / (1.0 - x.squaredNorm());
        Vector v = vec({1.0 / lam, 0.0});
        auto cd = disk.curvature_data_at(x, v);
        CHECK(cd.scalar == doctest::Approx(2.0 * gauss).epsilon(1e-5));
        REQUIRE(cd.ricci.has_value());
        CHECK(*cd.ricci == doctest::Approx(gauss).epsilon(1e-5));
        CHECK(cd.ricci_lower_bound == doctest::Approx(1.0));
    }

    TEST_CASE("curvature on tori") {
        auto flat = ChartGeometry::flat_torus({1.0, 1.0});
        auto cd = flat.curvature_data_at(vec({0.5, 0.5}), vec({1.0, 0.0}));
        CHECK(cd.scalar == 0.0);
        CHECK(*cd.ricci == 0.0);
        auto conf = ChartGeometry::conformal_torus({1.0, 1.0}, {{0, 0, 0.7, 0.0}}, 32);
        cd = conf.curvature_data_at(vec({0.3, 0.3}));
        CHECK(cd.scalar == doctest::Approx(0.0));
        // nonconstant phi: R = -2 e^{-2 phi} Lap phi, checked with finite differences of phi
        auto wavy = ChartGeometry::conformal_torus({1.0, 1.0}, {{1, 1, 0.2, 0.1}}, 32);
        Vector x = vec({0.3, 0.6});
        const double h = 1e-4;
        auto phi = [&](double a, double b) { return 0.5 * std::log(wavy.metric_data_at(vec({a, b})).g(0, 0)); };
        const double lap = (phi(x[0] + h, x[1]) + phi(x[0] - h, x[1]) + phi(x[0], x[1] + h) + phi(x[0], x[1] - h) -
                            4.0 * phi(x[0], x[1])) /
                           (h * h);
        CHECK(wavy.scalar_curvature(x) == doctest::Approx(-2.0 * std::exp(-2.0 * phi(x[0], x[1])) * lap).epsilon(1e-5));
    }

    TEST_CASE("non-unit directions are rejected") {
        auto disk = ChartGeometry::poincare_disk(2);
        CHECK_THROWS_AS(disk.curvature_data_at(vec({0, 0}), vec({1.0, 0.0})), DomainError);
        CHECK_NOTHROW(disk.curvature_data_at(vec({0, 0}), vec({0.5, 0.0})));
    }

    TEST_CASE("exponential map and translations are isometric") {
        auto disk = ChartGeometry::poincare_disk(2);
        Vector x = vec({0.1, 0.2});
        const double lam = 2.0 / (1.0 - x.squaredNorm());
        Vector v = vec({0.3 / lam, -0.4 / lam});  // |v|_g = 0.5
        Vector y = disk.exp_map(x, v);
        CHECK(disk.geodesic_distance(x, y) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK((disk.translate(x, v, x) - y).norm() < 1e-12);
        Vector p = vec({-0.2, 0.05}), q = vec({0.15, 0.3});
        CHECK(disk.geodesic_distance(disk.translate(x, v, p), disk.translate(x, v, q)) ==
              doctest::Approx(disk.geodesic_distance(p, q)).epsilon(1e-11));
        auto torus = ChartGeometry::flat_torus({1.0, 1.0});
        CHECK((torus.exp_map(vec({0.9, 0.5}), vec({0.2, 0.0})) - vec({0.1, 0.5})).norm() < 1e-12);
    }
}
