#include <doctest.h>

#include "mfgeo/hjb.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mfgeo;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const Grid> torus_grid(int n) {
    return std::make_shared<Grid>(std::make_shared<ChartGeometry>(ChartGeometry::flat_torus({1.0, 1.0})), n);
}
std::shared_ptr<const Grid> disk_grid(int n) {
    return std::make_shared<Grid>(std::make_shared<ChartGeometry>(ChartGeometry::poincare_disk(2)), n);
}

BackwardProblem constant_problem(std::shared_ptr<const Grid> g, double c, int steps = 20) {
    BackwardProblem p;
    p.grid = g;
    p.horizon = 1.0;
    p.steps = steps;
    p.source.assign(steps + 1, Vector::Constant(g->size(), c));
    p.terminal = Vector::Zero(g->size());
    p.bound = std::abs(c);
    return p;
}

BackwardProblem smooth_problem(std::shared_ptr<const Grid> g, double amp, int steps, double terminal_scale = 0.5) {
    BackwardProblem p;
    p.grid = g;
    p.horizon = 1.0;
    p.steps = steps;
    for (int n = 0; n <= steps; ++n) {
        const double t = p.time(n);
        p.source.push_back(sample_on_grid(*g, [&](auto x) {
            return amp * (std::cos(2 * pi * x[0]) * (1 + 0.5 * t) + 0.5 * std::sin(2 * pi * x[1]));
        }));
    }
    p.terminal = sample_on_grid(*g, [&](auto x) { return terminal_scale * amp * std::sin(2 * pi * (x[0] + x[1])); });
    p.bound = 2.0 * amp;
    return p;
}

}  // namespace

TEST_SUITE("hjb") {
    TEST_CASE("Cole-Hopf transform") {
        Vector z = Vector::Zero(5);
        CHECK(cole_hopf(z).isApprox(Vector::Ones(5)));
        CHECK(cole_hopf(Vector::Constant(3, 2.0)).isApprox(Vector::Constant(3, std::exp(-1.0)), 1e-15));
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-20, 20);
        Vector r(1000);
        for (auto& v : r) v = u(rng);
        CHECK((inverse_cole_hopf(cole_hopf(r)) - r).lpNorm<Eigen::Infinity>() <= 1e-13 * 20);
        Vector bad = Vector::Ones(3);
        bad[1] = 0.0;
        CHECK_THROWS_AS(inverse_cole_hopf(bad), DomainError);
        // monotone decreasing
        CHECK(cole_hopf(Vector::Constant(1, 1.0))[0] < cole_hopf(Vector::Constant(1, 0.5))[0]);
    }

    TEST_CASE("zero data gives w = 1 and u = 0") {
        auto g = torus_grid(16);
        auto w = solve_linear_parabolic_backward(constant_problem(g, 0.0));
        for (const auto& s : w) CHECK((s.array() - 1.0).abs().maxCoeff() < 1e-12);
        auto sol = solve_hjb(constant_problem(g, 0.0));
        for (const auto& s : sol.u) CHECK(s.lpNorm<Eigen::Infinity>() < 1e-12);
        for (const auto& b : sol.drift) CHECK(b.lpNorm<Eigen::Infinity>() < 1e-11);
    }

    TEST_CASE("constant source gives spatially constant solutions") {
        for (auto g : {torus_grid(16), disk_grid(16)}) {
            const double c = 0.7;
            auto p = constant_problem(g, c);
            auto w = solve_linear_parabolic_backward(p);
            for (int n = 0; n <= p.steps; ++n)
                CHECK((w[n].array() - std::exp(-c * (p.horizon - p.time(n)) / 2)).abs().maxCoeff() < 1e-12);
            for (auto method : {HjbMethod::cole_hopf, HjbMethod::direct}) {
                auto sol = solve_hjb(p, method);
                for (int n = 0; n <= p.steps; ++n)
                    CHECK((sol.u[n].array() - c * (p.horizon - p.time(n))).abs().maxCoeff() < 1e-11);
            }
        }
    }

    TEST_CASE("barrier and sup bounds on random data") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1, 1);
        for (auto g : {torus_grid(24), disk_grid(24)}) {
            BackwardProblem p;
            p.grid = g;
            p.horizon = 1.5;
            p.steps = 30;
            for (int n = 0; n <= p.steps; ++n) {
                Vector f(g->size());
                for (auto& v : f) v = 3.0 * u(rng);
                p.source.push_back(f);
            }
            p.terminal = Vector(g->size());
            for (auto& v : p.terminal) v = 3.0 * u(rng);
            p.bound = 3.0;
            auto sol = solve_hjb(p);
            CHECK(sol.report.barrier_violations == 0);
            CHECK(sol.report.barrier_ratio <= 1.0);
            CHECK(sol.report.sup_abs_u <= sol.report.sup_bound);
            for (int n = 0; n <= p.steps; ++n) {
                const double b = 0.5 * p.bound * (p.horizon - p.time(n) + 1);
                CHECK(sol.w[n].minCoeff() >= std::exp(-b) * (1 - 1e-12));
                CHECK(sol.w[n].maxCoeff() <= std::exp(b) * (1 + 1e-12));
            }
        }
    }

    TEST_CASE("data exceeding C0 is rejected") {
        auto p = constant_problem(torus_grid(8), 1.0);
        p.bound = 0.5;
        CHECK_THROWS_AS(solve_hjb(p), DomainError);
        p.bound = 1.0;
        p.source.pop_back();
        CHECK_THROWS_AS(solve_hjb(p), DomainError);
    }

    TEST_CASE("Cole-Hopf and direct methods agree on smooth data") {
        auto g = torus_grid(64);
        // The two schemes differ at first order in dt with a constant quadratic
        // in the data amplitude, so the cross-check uses gentle data.
        auto p = smooth_problem(g, 0.05, 100, 0.02);
        auto a = solve_hjb(p, HjbMethod::cole_hopf);
        auto b = solve_hjb(p, HjbMethod::direct);
        double gap = 0.0;
        for (int n = 0; n <= p.steps; ++n) gap = std::max(gap, (a.u[n] - b.u[n]).lpNorm<Eigen::Infinity>());
        CHECK(gap <= 1e-4);
    }

    TEST_CASE("direct method rejects steps that are too large") {
        auto g = torus_grid(64);
        auto p = smooth_problem(g, 1.0, 2);
        p.terminal = sample_on_grid(*g, [](auto x) { return 1.0 * std::sin(2 * pi * 3 * x[0]); });
        p.bound = 2.0;
        p.horizon = 50.0;
        try {
            solve_hjb(p, HjbMethod::direct);
            FAIL("expected a step instability");
        } catch (const StepInstability& e) {
            CHECK(e.suggested_dt() < p.dt());
        }
    }

    TEST_CASE("drift from value") {
        auto t = torus_grid(64);
        std::vector<Vector> u{Vector::Constant(t->size(), 3.0), sample_on_grid(*t, [](auto x) { return std::sin(2 * pi * x[0]); })};
        auto b = drift_from_value(*t, u);
        CHECK(b[0].lpNorm<Eigen::Infinity>() == 0.0);
        for (int i = 0; i < t->size(); i += 131)
            CHECK(b[1](i, 0) == doctest::Approx(-2 * pi * std::cos(2 * pi * t->node(i)[0])).epsilon(2e-3));
        auto d = disk_grid(63);
        std::vector<Vector> lin{sample_on_grid(*d, [](auto x) { return x[0]; })};
        const std::array<double, 2> o{0.0, 0.0};
        CHECK(drift_from_value(*d, lin)[0](d->locate(o), 0) == doctest::Approx(-0.25).epsilon(1e-12));
    }

    TEST_CASE("gradient bound is stable under refinement") {
        double prev = 0.0;
        for (int n : {32, 64}) {
            auto sol = solve_hjb(smooth_problem(torus_grid(n), 1.0, 50));
            CHECK(std::isfinite(sol.report.max_grad_norm));
            if (prev > 0) CHECK(std::abs(sol.report.max_grad_norm - prev) < 0.05 * prev);
            prev = sol.report.max_grad_norm;
        }
    }
}
