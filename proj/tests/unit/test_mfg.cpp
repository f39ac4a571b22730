#include <doctest.h>

#include "mfgeo/mfg.hpp"

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

Vector bump(const Grid& g, double cx, double cy, double width) {
    return normalize_density(g, sample_on_grid(g, [=, &g](auto x) {
        double dx = x[0] - cx, dy = x[1] - cy;
        if (g.periodic()) {
            dx = std::remainder(dx, 1.0);
            dy = std::remainder(dy, 1.0);
        }
        return std::exp(-(dx * dx + dy * dy) / (2 * width * width));
    }));
}

Vector random_density(const Grid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // a few random bumps keep the field smooth enough to be realistic
    Vector m = Vector::Constant(g.size(), 0.05);
    for (int k = 0; k < 3; ++k) {
        const double cx = g.periodic() ? u(rng) : 1.4 * u(rng) - 0.7;
        const double cy = g.periodic() ? u(rng) : 1.4 * u(rng) - 0.7;
        m += u(rng) * bump(g, cx, cy, 0.05 + 0.2 * u(rng));
    }
    return normalize_density(g, m);
}

CouplingSpec kernel_spec(InteractionKernel::Shape shape, double scale, int lattice = 16) {
    CouplingSpec s;
    s.kernel.shape = shape;
    s.kernel.scale = scale;
    s.lattice = lattice;
    return s;
}

CouplingSpec anchored_spec(double strength) {
    CouplingSpec s = kernel_spec(InteractionKernel::Shape::exponential, 0.1);
    s.kind = CouplingKind::anchored;
    s.strength = strength;
    s.anchor.terms = {FourierTerm{1, 0, 0.5, 0.0}, FourierTerm{0, 1, 0.0, 0.3}};
    return s;
}

}  // namespace

TEST_SUITE("mfg") {
    TEST_CASE("constant kernel and payoff give the total mass") {
        for (auto g : {torus_grid(16), disk_grid(16)}) {
            std::mt19937_64 rng(3);
            const Vector m = random_density(*g, rng);
            for (int lattice : {0, 8}) {
                auto spec = kernel_spec(InteractionKernel::Shape::constant, 1.0, lattice);
                Coupling c(g, spec);
                CHECK((c.evaluate(m).array() - 1.0).abs().maxCoeff() < 1e-12);
                CHECK_FALSE(c.depends_on_measure());
                // renormalized: F = int f dm, constant in x
                spec.renormalize = true;
                spec.payoff.terms = {FourierTerm{1, 0, 1.0, 0.0}};
                Coupling r(g, spec);
                const double expected =
                    integrate_volume(*g, (sample_on_grid(*g, [](auto x) { return 1.0 + std::cos(2 * pi * x[0]); }).array() *
                                          m.array())
                                             .matrix());
                CHECK((r.evaluate(m).array() - expected).abs().maxCoeff() < 1e-12);
            }
        }
    }

    TEST_CASE("uniform density on the torus gives a constant field") {
        auto g = torus_grid(32);
        const Vector uni = normalize_density(*g, Vector::Ones(g->size()));
        for (int lattice : {0, 16}) {
            Coupling c(g, kernel_spec(InteractionKernel::Shape::gaussian, 0.15, lattice));
            const Vector f = c.evaluate(uni);
            CHECK(f.maxCoeff() - f.minCoeff() < 1e-8);
        }
    }

    TEST_CASE("exact evaluation matches direct quadrature") {
        auto g = disk_grid(16);
        std::mt19937_64 rng(9);
        const Vector m = random_density(*g, rng);
        auto spec = kernel_spec(InteractionKernel::Shape::inverse, 0.3, 0);
        spec.payoff = ScalarProfile{0.5, {FourierTerm{1, 1, 0.2, 0.1}}, {2.0, 2.0}};
        Coupling c(g, spec);
        const Vector f = c.evaluate(m);
        const auto& geom = g->geometry();
        for (int i = 0; i < g->size(); i += 7) {
            double s = 0.0;
            for (int j = 0; j < g->size(); ++j)
                s += 1.0 / (1.0 + geom.geodesic_distance(g->node(i), g->node(j)) / 0.3) * spec.payoff(g->node(j)) * m[j] *
                     g->weights()[j];
            CHECK(f[i] == doctest::Approx(s).epsilon(1e-12));
        }
    }

    TEST_CASE("lattice evaluation approximates exact evaluation") {
        auto g = torus_grid(32);
        std::mt19937_64 rng(4);
        const Vector m = random_density(*g, rng);
        const Vector exact = Coupling(g, kernel_spec(InteractionKernel::Shape::gaussian, 0.2, 0)).evaluate(m);
        const Vector coarse = Coupling(g, kernel_spec(InteractionKernel::Shape::gaussian, 0.2, 16)).evaluate(m);
        CHECK((exact - coarse).lpNorm<Eigen::Infinity>() < 0.05 * exact.lpNorm<Eigen::Infinity>());
    }

    TEST_CASE("bound and W1 Lipschitz constant hold on random pairs") {
        auto g = torus_grid(12);
        Coupling c(g, kernel_spec(InteractionKernel::Shape::exponential, 0.2, 0));
        Matrix cost(g->size(), g->size());
        for (int i = 0; i < g->size(); ++i)
            for (int j = 0; j < g->size(); ++j) cost(i, j) = g->geometry().geodesic_distance(g->node(i), g->node(j));
        std::mt19937_64 rng(2);
        for (int t = 0; t < 10; ++t) {
            const Vector mu = random_density(*g, rng), nu = random_density(*g, rng);
            const Vector fm = c.evaluate(mu);
            CHECK(fm.lpNorm<Eigen::Infinity>() <= c.bound() + 1e-12);
            const Vector w = g->weights();
            const double w1 = w1_exact((mu.array() * w.array()).matrix(), (nu.array() * w.array()).matrix() *
                                           (mu.dot(w) / nu.dot(w)), cost)
                                  .cost;
            CHECK((fm - c.evaluate(nu)).lpNorm<Eigen::Infinity>() <= c.w1_lipschitz() * w1 * (1 + 1e-9));
        }
    }

    TEST_CASE("monotonicity gap") {
        auto g = torus_grid(32);
        std::mt19937_64 rng(11);
        const Vector mu = random_density(*g, rng), nu = random_density(*g, rng);
        Coupling c(g, kernel_spec(InteractionKernel::Shape::exponential, 0.1));
        CHECK(monotonicity_gap(c, mu, mu) == 0.0);
        // rank-one kernel phi(x) phi(y): the gap is a perfect square
        const Vector phi = sample_on_grid(*g, [](auto x) { return std::sin(2 * pi * x[0]) + 0.3; });
        auto rank_one = [&](const Vector& m) -> Vector {
            return phi * integrate_volume(*g, (phi.array() * m.array()).matrix());
        };
        const double s = integrate_volume(*g, (phi.array() * (mu - nu).array()).matrix());
        CHECK(monotonicity_gap(*g, rank_one, mu, nu) == doctest::Approx(s * s).epsilon(1e-12));
    }

    TEST_CASE("positive semidefinite kernels are monotone on random pairs") {
        struct Case {
            std::shared_ptr<const Grid> grid;
            double scale;
        };
        for (const auto& cs : {Case{torus_grid(32), 0.1}, Case{disk_grid(32), 0.25}}) {
            Coupling c(cs.grid, kernel_spec(InteractionKernel::Shape::exponential, cs.scale));
            // rim points of the padded disk lattice coincide, so K may be singular
            REQUIRE(c.min_kernel_eigenvalue() > -1e-12);
            std::mt19937_64 rng(21);
            double worst = std::numeric_limits<double>::infinity();
            for (int t = 0; t < 100; ++t) {
                const Vector mu = random_density(*cs.grid, rng), nu = random_density(*cs.grid, rng);
                worst = std::min(worst, monotonicity_gap(c, mu, nu));
            }
            CHECK(worst >= -1e-10);
        }
    }

    TEST_CASE("decoupled game converges in one iteration") {
        auto g = torus_grid(32);
        MfgProblem p;
        p.grid = g;
        p.horizon = 0.5;
        p.steps = 20;
        p.initial = bump(*g, 0.5, 0.5, 0.1);
        auto sol = picard_solve(p);
        CHECK(sol.converged);
        CHECK(sol.iterations == 1);
        for (const auto& u : sol.u) CHECK(u.lpNorm<Eigen::Infinity>() < 1e-12);
        ForwardProblem heat;
        heat.grid = g;
        heat.horizon = p.horizon;
        heat.steps = p.steps;
        heat.initial = p.initial;
        const auto flow = solve_forward(heat);
        CHECK((flow.m.back() - sol.m.back()).lpNorm<Eigen::Infinity>() < 1e-12);
        auto r = equilibrium_residual(sol, p);
        CHECK(r.hjb <= 1e-10);
        CHECK(r.fpk <= 1e-10);
        CHECK(r.fixed_point <= 1e-10);
    }

    TEST_CASE("spatially constant coupling leaves the density a heat flow") {
        auto g = disk_grid(32);
        MfgProblem p;
        p.grid = g;
        p.horizon = 1.0;
        p.steps = 20;
        p.initial = bump(*g, 0.2, 0.1, 0.15);
        p.running = std::make_shared<Coupling>(g, kernel_spec(InteractionKernel::Shape::constant, 1.0));
        auto sol = picard_solve(p);
        CHECK(sol.converged);
        CHECK(sol.iterations == 1);
        for (int n = 0; n <= p.steps; ++n)
            CHECK((sol.u[n].array() - (p.horizon - n * p.dt())).abs().maxCoeff() < 1e-10);
        for (const auto& b : sol.drift) CHECK(b.lpNorm<Eigen::Infinity>() < 1e-8);
    }

    TEST_CASE("monotone coupling: different initial flows reach the same equilibrium") {
        auto g = torus_grid(32);
        MfgProblem p;
        p.grid = g;
        p.horizon = 1.0;
        p.steps = 40;
        p.initial = bump(*g, 0.3, 0.5, 0.1);
        p.running = std::make_shared<Coupling>(g, anchored_spec(1.0));
        PicardOptions opt;
        opt.tolerance = 1e-6;
        auto a = picard_solve(p, opt);
        opt.initial_guess.assign(p.steps + 1, normalize_density(*g, Vector::Ones(g->size())));
        auto b = picard_solve(p, opt);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        DensityTransport transport(g, 16);
        CHECK(flow_distance(transport, a.m, b.m, 1) <= 1e-4);
        CHECK(a.hjb.barrier_violations == 0);
        CHECK(a.hjb.sup_abs_u <= a.hjb.sup_bound);
        for (const auto& it : a.history) CHECK(it.w1_lower <= it.w1_residual);
    }

    TEST_CASE("an unconverged run reports its residual") {
        auto g = torus_grid(32);
        MfgProblem p;
        p.grid = g;
        p.horizon = 1.0;
        p.steps = 20;
        p.initial = bump(*g, 0.3, 0.5, 0.1);
        p.running = std::make_shared<Coupling>(g, anchored_spec(2.0));
        PicardOptions opt;
        opt.max_iters = 1;
        opt.tolerance = 1e-8;
        auto sol = picard_solve(p, opt);
        CHECK_FALSE(sol.converged);
        CHECK(sol.diagnostic.find("not converged") != std::string::npos);
        CHECK(equilibrium_residual(sol, p).fixed_point > opt.tolerance);
        opt.max_iters = 0;
        auto none = picard_solve(p, opt);
        CHECK_FALSE(none.converged);
        CHECK(none.iterations == 0);
    }

    TEST_CASE("equilibrium residuals shrink under refinement") {
        double prev_hjb = 0.0, prev_fpk = 0.0;
        for (int n : {32, 64}) {
            auto g = torus_grid(n);
            MfgProblem p;
            p.grid = g;
            p.horizon = 0.5;
            p.steps = n * n / 64;
            p.initial = bump(*g, 0.3, 0.5, 0.1);
            p.running = std::make_shared<Coupling>(g, anchored_spec(1.0));
            PicardOptions opt;
            opt.damping = 1.0;
            opt.tolerance = 1e-7;
            auto sol = picard_solve(p, opt);
            REQUIRE(sol.converged);
            auto r = equilibrium_residual(sol, p);
            if (prev_hjb > 0) {
                // dt ~ h^2: first order in time gives a factor 4 for the HJB
                // residual; the weak FPK residual is first order in h
                CHECK(r.hjb < 0.35 * prev_hjb);
                CHECK(r.fpk < 0.6 * prev_fpk);
            }
            prev_hjb = r.hjb;
            prev_fpk = r.fpk;
        }
    }
}
