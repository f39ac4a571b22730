#include <doctest.h>

#include "mfgeo/fpk.hpp"
#include "mfgeo/parallel.hpp"
#include "mfgeo/sde.hpp"

#include <array>
#include <cmath>
#include <numbers>

using namespace mfgeo;

namespace {

std::shared_ptr<const ChartGeometry> torus(double period) {
    return std::make_shared<ChartGeometry>(ChartGeometry::flat_torus({period, period}));
}

std::shared_ptr<const ChartGeometry> disk() { return std::make_shared<ChartGeometry>(ChartGeometry::poincare_disk(2)); }

Matrix repeated(const Vector& x, int count) {
    Matrix out(count, x.size());
    for (int p = 0; p < count; ++p) out.row(p) = x.transpose();
    return out;
}

std::vector<double> column(const Matrix& m, int c) { return {m.col(c).data(), m.col(c).data() + m.rows()}; }

Vector bump(const Grid& g, double width) {
    return normalize_density(g, sample_on_grid(g, [=](auto x) {
        const double dx = std::remainder(x[0] - 0.5, 1.0), dy = std::remainder(x[1] - 0.5, 1.0);
        return std::exp(-(dx * dx + dy * dy) / (2 * width * width));
    }));
}

}  // namespace

TEST_SUITE("sde") {
    TEST_CASE("disk noise at the origin is 1/sqrt2 times identity with no drift correction") {
        auto g = disk();
        auto c = noise_coeffs_at(*g, Vector::Zero(2));
        CHECK((c.sigma - Matrix::Identity(2, 2) / std::sqrt(2.0)).norm() <= 1e-14);
        CHECK(c.correction.norm() <= 1e-14);

        Vector x(2);
        x << 0.3, -0.4;
        auto off = noise_coeffs_at(*g, x);
        const double lam = g->conformal_factor(view(x));
        CHECK((off.sigma * off.sigma.transpose() - 2.0 / (lam * lam) * Matrix::Identity(2, 2)).norm() <= 1e-12);
        CHECK(off.correction.norm() <= 1e-12);
    }

    TEST_CASE("one step reproduces the generic noise factor") {
        auto g = disk();
        Vector x(2);
        x << 0.2, 0.1;
        SimulationSpec spec{.geometry = g, .horizon = 1e-3, .dt = 1e-3, .seed = 11};
        auto traj = simulate(spec, repeated(x, 3));
        REQUIRE(traj.times.size() == 2);
        auto c = noise_coeffs_at(*g, x);
        for (int p = 0; p < 3; ++p) {
            const auto [z0, z1] = counter_normal_pair(stream_key(11, static_cast<std::uint64_t>(p)), 0);
            Vector z(2);
            z << z0, z1;
            const Vector expect = x + c.sigma * z * std::sqrt(spec.dt) + c.correction * spec.dt;
            CHECK((traj.positions[1].row(p).transpose() - expect).norm() <= 1e-14);
        }
    }

    TEST_CASE("flat torus without drift is Brownian motion with variance 2t per axis") {
        auto g = torus(100.0);
        Vector x0 = Vector::Constant(2, 50.0);
        const int n = 4000;
        SimulationSpec spec{.geometry = g, .horizon = 0.5, .dt = 0.01, .seed = 3, .record_every = 50};
        auto traj = simulate(spec, repeated(x0, n));
        const Matrix& end = traj.positions.back();
        for (int k = 0; k < 2; ++k) {
            auto s = mean_interval(column(end, k), 0.999);
            CHECK(s.contains(50.0));
            // the variance estimate has standard error sqrt(2 / n) * variance
            CHECK(s.stddev * s.stddev == doctest::Approx(1.0).epsilon(4.0 * std::sqrt(2.0 / n)));
        }
    }

    TEST_CASE("constant drift shifts the mean by b T") {
        auto geom = torus(100.0);
        auto grid = std::make_shared<Grid>(geom, 8);
        VectorField b(grid->size(), 2);
        b.col(0).setConstant(0.3);
        b.col(1).setConstant(-0.2);
        SimulationSpec spec{.geometry = geom, .horizon = 2.0, .dt = 0.02, .seed = 5};
        spec.drift = std::make_shared<DriftTrajectory>(grid, 0.5, std::vector<VectorField>(5, b));
        Vector x0 = Vector::Constant(2, 40.0);
        auto traj = simulate(spec, repeated(x0, 3000));
        auto sx = mean_interval(column(traj.positions.back(), 0), 0.999);
        auto sy = mean_interval(column(traj.positions.back(), 1), 0.999);
        CHECK(sx.contains(40.0 + 0.6));
        CHECK(sy.contains(40.0 - 0.4));
        CHECK(sx.upper - sx.lower < 0.5);
    }

    TEST_CASE("drift interpolation is exact for linear fields away from the rim") {
        auto grid = std::make_shared<Grid>(disk(), 32);
        VectorField lin(grid->size(), 2);
        for (int i = 0; i < grid->size(); ++i) {
            lin(i, 0) = 2.0 * grid->node(i)[0] - grid->node(i)[1];
            lin(i, 1) = 0.5 + grid->node(i)[1];
        }
        DriftTrajectory drift(grid, 0.1, {lin, 2.0 * lin});
        const std::array<double, 2> x{0.123, -0.311};
        auto v = drift(0.05, x);
        CHECK(v[0] == doctest::Approx(2 * 0.123 + 0.311).epsilon(1e-12));
        CHECK(v[1] == doctest::Approx(0.5 - 0.311).epsilon(1e-12));
        CHECK(drift(0.1, x)[0] == doctest::Approx(2 * v[0]).epsilon(1e-12));
        CHECK(drift.slice_at(0.3) == 1);
        CHECK(drift.slice_at(0.1 * 3 / 3) == 1);
        CHECK(drift.slice_at(0.0999999) == 0);
        // outside the node hull the nearest node carries the value
        const std::array<double, 2> rim{0.0, 0.949};
        const auto r = drift(0.0, rim);
        CHECK(r[1] == lin(grid->locate(rim), 1));
    }

    TEST_CASE("a seed reproduces bit-identical trajectories for any thread count") {
        auto geom = disk();
        auto grid = std::make_shared<Grid>(geom, 16);
        VectorField b = VectorField::Zero(grid->size(), 2);
        b.col(0).setConstant(0.4);
        SimulationSpec spec{.geometry = geom, .horizon = 0.2, .dt = 0.01, .seed = 42, .record_every = 5};
        spec.drift = std::make_shared<DriftTrajectory>(grid, 0.2, std::vector<VectorField>{b, b});
        Matrix x0 = sample_grid_density(*grid, normalize_density(*grid, Vector::Ones(grid->size())), 500, 7);

        const int saved = thread_count();
        set_thread_count(1);
        auto a = simulate(spec, x0);
        auto s1 = sample_grid_density(*grid, normalize_density(*grid, Vector::Ones(grid->size())), 500, 7);
        set_thread_count(4);
        auto b4 = simulate(spec, x0);
        set_thread_count(saved);
        REQUIRE(a.positions.size() == b4.positions.size());
        for (std::size_t r = 0; r < a.positions.size(); ++r)
            CHECK((a.positions[r].array() == b4.positions[r].array()).all());
        CHECK((s1.array() == x0.array()).all());
        CHECK(a.reflections == b4.reflections);

        spec.seed = 43;
        auto c = simulate(spec, x0);
        CHECK((c.positions.back().array() != a.positions.back().array()).any());
    }

    TEST_CASE("disk particles are reflected inside the truncation radius and counted") {
        auto geom = disk();
        Vector x0(2);
        x0 << 0.0, 0.945;
        SimulationSpec spec{.geometry = geom, .horizon = 0.05, .dt = 0.01, .seed = 9};
        auto traj = simulate(spec, repeated(x0, 400));
        CHECK(traj.reflections > 0);
        CHECK(traj.particle_steps == 400 * 5);
        CHECK(traj.excess_reflections == (traj.reflections * 1000 > traj.particle_steps));
        for (const auto& snap : traj.positions)
            for (int p = 0; p < snap.rows(); ++p) CHECK(snap.row(p).norm() < geom->r_max());
    }

    TEST_CASE("grid sampling is deterministic and follows the density") {
        auto grid = std::make_shared<Grid>(torus(1.0), 32);
        Vector m = bump(*grid, 0.1);
        auto a = sample_grid_density(*grid, m, 4000, 1);
        auto b = sample_grid_density(*grid, m, 4000, 1);
        CHECK((a.array() == b.array()).all());
        auto sx = mean_interval(column(a, 0), 0.999);
        CHECK(sx.contains(0.5));
        CHECK(sx.stddev == doctest::Approx(0.1).epsilon(0.05));
    }

    TEST_CASE("empirical distance at t = 0 is sampling noise of order N^-1/2") {
        auto grid = std::make_shared<Grid>(torus(1.0), 32);
        DensityTransport transport(grid, 8);
        Vector m = bump(*grid, 0.15);
        double small = 0.0, large = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            small += empirical_distance(transport, sample_grid_density(*grid, m, 1000, seed), m).coarse;
            large += empirical_distance(transport, sample_grid_density(*grid, m, 4000, seed + 10), m).coarse;
        }
        CHECK(large / small >= 0.35);
        CHECK(large / small <= 0.65);
        auto d = empirical_distance(transport, sample_grid_density(*grid, m, 1000, 1), m);
        CHECK(d.lower <= d.coarse);
        CHECK(d.coarse <= d.upper);
    }

    TEST_CASE("heat flow at t = 0.1 stays within twice the t = 0 sampling noise") {
        auto geom = torus(1.0);
        auto grid = std::make_shared<Grid>(geom, 32);
        DensityTransport transport(grid, 8);
        ForwardProblem fp;
        fp.grid = grid;
        fp.horizon = 0.1;
        fp.steps = 50;
        fp.initial = bump(*grid, 0.12);
        auto heat = solve_forward(fp);

        SimulationSpec spec{.geometry = geom, .horizon = 0.1, .dt = 0.002, .seed = 21, .record_every = 25};
        auto traj = simulate(spec, sample_grid_density(*grid, fp.initial, 2000, 21));
        auto report = empirical_vs_fpk(transport, traj, heat.m, fp.dt());
        REQUIRE(report.size() == 3);
        CHECK(report.front().time == 0.0);
        CHECK(report.back().time == doctest::Approx(0.1));
        CHECK(report.back().coarse <= 2.0 * report.front().coarse);

        CHECK_THROWS_AS(empirical_vs_fpk(transport, traj, heat.m, 0.003), DomainError);
        CHECK_THROWS_AS(empirical_vs_fpk(transport, traj, {heat.m.front()}, fp.dt()), DomainError);
    }

    TEST_CASE("empirical flow from a point is Hoelder-1/2 in time") {
        auto geom = torus(1.0);
        auto grid = std::make_shared<Grid>(geom, 64);
        DensityTransport transport(grid, 32);
        SimulationSpec spec{.geometry = geom, .horizon = 0.02, .dt = 0.0005, .seed = 8, .record_every = 4};
        auto traj = simulate(spec, repeated(Vector::Constant(2, 0.5), 2000));
        auto reg = empirical_time_regularity(transport, traj);
        CHECK(reg.fit.exponent >= 0.35);
        CHECK(reg.fit.exponent <= 0.65);
        const double t = reg.lags.back();
        CHECK(reg.distances.back() == doctest::Approx(std::sqrt(std::numbers::pi * t)).epsilon(0.1));
    }

    TEST_CASE("invalid simulation settings are rejected") {
        SimulationSpec spec{.geometry = torus(1.0), .horizon = 1.0, .dt = 0.3};
        CHECK_THROWS_AS(simulate(spec, Matrix::Zero(1, 2)), DomainError);
        spec.dt = 0.25;
        CHECK_NOTHROW(simulate(spec, Matrix::Zero(1, 2)));
        CHECK_THROWS_AS(simulate(spec, Matrix::Zero(1, 3)), DomainError);
        spec.diffusion = 0.0;
        CHECK_THROWS_AS(simulate(spec, Matrix::Zero(1, 2)), DomainError);
        SimulationSpec on_disk{.geometry = disk(), .horizon = 0.1, .dt = 0.1};
        CHECK_THROWS_AS(simulate(on_disk, Matrix::Constant(1, 2, 0.9)), DomainError);
        auto grid = std::make_shared<Grid>(disk(), 8);
        CHECK_THROWS_AS(DriftTrajectory(grid, 0.1, {VectorField::Zero(3, 2)}), DomainError);
        CHECK_THROWS_AS(DriftTrajectory(grid, 0.0, {VectorField::Zero(grid->size(), 2)}), DomainError);
    }
}
