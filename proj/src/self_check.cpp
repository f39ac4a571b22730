// Closed-form examples run by the self-check command. Each case is cheap
// (well under a second) and returns the observed error against its bound.

#include "mfgeo/commands.hpp"
#include "mfgeo/coupling.hpp"
#include "mfgeo/curvature_mfg.hpp"
#include "mfgeo/fpk.hpp"
#include "mfgeo/geograph.hpp"
#include "mfgeo/hjb.hpp"
#include "mfgeo/mfg.hpp"
#include "mfgeo/sde.hpp"
#include "mfgeo/transport.hpp"

#include <cmath>
#include <numbers>

namespace mfgeo {

namespace {

constexpr double pi = std::numbers::pi;

Check at_most(double value, double bound, std::string detail = {}) {
    return {{}, value <= bound, value, bound, std::move(detail)};
}

Check holds(bool ok, std::string detail = {}) { return {{}, ok, ok ? 1.0 : 0.0, 1.0, std::move(detail)}; }

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

std::shared_ptr<const ChartGeometry> disk() { return std::make_shared<ChartGeometry>(ChartGeometry::poincare_disk(2)); }
std::shared_ptr<const ChartGeometry> torus(double l = 1.0) {
    return std::make_shared<ChartGeometry>(ChartGeometry::flat_torus({l, l}));
}
std::shared_ptr<const ChartGeometry> flat_conformal(double c) {
    return std::make_shared<ChartGeometry>(ChartGeometry::conformal_torus({1.0, 1.0}, {FourierTerm{0, 0, c, 0.0}}, 64));
}
std::shared_ptr<const Grid> grid_of(std::shared_ptr<const ChartGeometry> g, int n) {
    return std::make_shared<Grid>(std::move(g), n);
}

double sup(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

// node closest to the chart origin
int centre_node(const Grid& g) {
    const std::array<double, 2> o{0.0, 0.0};
    return g.locate(o);
}

BackwardProblem backward(std::shared_ptr<const Grid> g, double c, int steps) {
    BackwardProblem p;
    p.grid = g;
    p.horizon = 1.0;
    p.steps = steps;
    p.source.assign(steps + 1, Vector::Constant(g->size(), c));
    p.terminal = Vector::Zero(g->size());
    p.bound = std::abs(c);
    return p;
}

std::vector<SelfCheckCase> build() {
    std::vector<SelfCheckCase> cs;
    auto add = [&](const char* module, const char* name, std::function<Check()> f) {
        cs.push_back({module, name, std::move(f)});
    };

    // geometry
    add("geometry", "disk origin metric is 4 I with volume weight 4", [] {
        auto m = disk()->metric_data_at(vec({0.0, 0.0}));
        return at_most((m.g - 4.0 * Matrix::Identity(2, 2)).norm() + std::abs(m.vol_weight - 4.0), 1e-14);
    });
    add("geometry", "disk metric at (0.5, 0) is 4/0.5625 I", [] {
        auto m = disk()->metric_data_at(vec({0.5, 0.0}));
        return at_most((m.g - 4.0 / 0.5625 * Matrix::Identity(2, 2)).norm(), 1e-12);
    });
    add("geometry", "flat torus metric is the identity", [] {
        auto m = torus()->metric_data_at(vec({0.3, 0.7}));
        return at_most((m.g - Matrix::Identity(2, 2)).norm() + std::abs(m.vol_weight - 1.0), 0.0);
    });
    add("geometry", "flat generator has unit diffusion and no correction", [] {
        double err = 0.0;
        for (const auto& g : {torus(), flat_conformal(0.0)}) {
            auto c = g->generator_coeffs_at(vec({0.2, 0.6}));
            err = std::max(err, (c.diffusion - Matrix::Identity(2, 2)).norm() + c.drift_correction.norm());
        }
        return at_most(err, 1e-14);
    });
    add("geometry", "disk |p|^2_g at (0.5, 0), p = (2, 0) is 0.5625", [] {
        return at_most(std::abs(disk()->grad_norm_sq_at(vec({0.5, 0.0}), vec({2.0, 0.0})) - 0.5625), 1e-14);
    });
    add("geometry", "torus |p|^2 for p = (3, 4) is 25", [] {
        return at_most(std::abs(torus()->grad_norm_sq_at(vec({0.1, 0.1}), vec({3.0, 4.0})) - 25.0), 0.0);
    });
    add("geometry", "distance from a point to itself is 0", [] {
        const Vector x = vec({0.3, -0.2});
        return at_most(disk()->geodesic_distance(x, x) + torus()->geodesic_distance(x, x), 0.0);
    });
    add("geometry", "torus distance wraps: (0.1, 0) to (0.9, 0) is 0.2", [] {
        return at_most(std::abs(torus()->geodesic_distance(vec({0.1, 0.0}), vec({0.9, 0.0})) - 0.2), 1e-15);
    });
    add("geometry", "flat and constant-exponent tori have zero curvature", [] {
        double err = 0.0;
        for (const auto& g : {torus(), flat_conformal(0.4)}) {
            auto c = g->curvature_data_at(vec({0.25, 0.5}));
            err = std::max({err, std::abs(c.scalar), std::abs(g->ricci_lower_bound())});
        }
        return at_most(err, 1e-12);
    });

    // discretization
    add("discretization", "64 x 64 unit torus weights sum to 1", [] {
        return at_most(std::abs(grid_of(torus(), 64)->total_volume() - 1.0), 1e-14);
    });
    add("discretization", "Laplacian of a constant vanishes", [] {
        double err = 0.0;
        for (const auto& g : {grid_of(torus(), 32), grid_of(disk(), 32)})
            err = std::max(err, sup(apply_laplace_beltrami(*g, Vector::Constant(g->size(), 3.0))));
        return at_most(err, 1e-12);
    });
    add("discretization", "torus Laplacian of sin(2 pi x) is -4 pi^2 sin(2 pi x)", [] {
        auto g = grid_of(torus(), 64);
        Vector u = sample_on_grid(*g, [](auto x) { return std::sin(2 * pi * x[0]); });
        return at_most(sup(apply_laplace_beltrami(*g, u) + 4 * pi * pi * u) / (4 * pi * pi), 5e-3);
    });
    add("discretization", "disk Laplacian of |x|^2 near the origin is 1", [] {
        auto g = grid_of(disk(), 64);
        Vector u = sample_on_grid(*g, [](auto x) { return x[0] * x[0] + x[1] * x[1]; });
        return at_most(std::abs(apply_laplace_beltrami(*g, u)[centre_node(*g)] - 1.0), 1e-2);
    });
    add("discretization", "zero drift advects nothing", [] {
        auto g = grid_of(disk(), 16);
        Vector m = Vector::LinSpaced(g->size(), 0.0, 1.0);
        VectorField b = VectorField::Zero(g->size(), 2);
        return at_most(sup(apply_advection(*g, m, b, AdvectionForm::divergence)) +
                           sup(apply_advection(*g, m, b, AdvectionForm::gradient)),
                       0.0);
    });
    add("discretization", "divergence form conserves the volume-weighted sum", [] {
        auto g = grid_of(torus(), 32);
        Vector m = sample_on_grid(*g, [](auto x) { return 1.5 + std::cos(2 * pi * x[0]) * std::sin(2 * pi * x[1]); });
        VectorField b(g->size(), 2);
        for (int i = 0; i < g->size(); ++i) b.row(i) << std::sin(2 * pi * g->node(i)[1]), 0.7;
        return at_most(std::abs(apply_advection(*g, m, b, AdvectionForm::divergence).dot(g->weights())), 1e-13);
    });
    add("discretization", "integral of 1 is 1 and densities normalize to mass 1", [] {
        auto g = grid_of(torus(), 32);
        auto d = DiscreteField::density_field(g, Vector::LinSpaced(g->size(), 1.0, 2.0));
        return at_most(std::abs(integrate_volume(*g, Vector::Ones(g->size())) - 1.0) +
                           std::abs(integrate_volume(*g, d.values) - 1.0),
                       1e-10);
    });
    add("discretization", "zero-drift adjointness defect on the torus", [] {
        auto g = grid_of(torus(), 32);
        return at_most(adjoint_pair_check(*g, VectorField::Zero(g->size(), 2)).absolute, 1e-13);
    });
    add("discretization", "covariant Hessian: constant gives 0, x^2 along e1 gives 2", [] {
        auto g = torus(10.0);
        const Vector x = vec({3.0, 4.0}), v = vec({1.0, 0.0});
        const double h0 = covariant_hessian_quadratic(*g, [](const Vector&) { return 5.0; }, x, v);
        const double h2 = covariant_hessian_quadratic(*g, [](const Vector& y) { return y[0] * y[0]; }, x, v);
        return at_most(std::abs(h0) + std::abs(h2 - 2.0), 1e-6);
    });

    // hjb
    add("hjb", "Cole-Hopf maps 0 to 1, 2 to 1/e and inverts exactly", [] {
        Vector u = Vector::LinSpaced(50, -3.0, 3.0);
        const double err = std::abs(cole_hopf(Vector::Zero(1))[0] - 1.0) +
                           std::abs(cole_hopf(Vector::Constant(1, 2.0))[0] - std::exp(-1.0)) +
                           sup(inverse_cole_hopf(cole_hopf(u)) - u);
        return at_most(err, 1e-13);
    });
    add("hjb", "linear backward equation: w = exp(-c (T - t) / 2)", [] {
        auto g = grid_of(torus(), 16);
        double err = 0.0;
        for (double c : {0.0, 0.8}) {
            auto p = backward(g, c, 20);
            auto w = solve_linear_parabolic_backward(p);
            for (int n = 0; n <= p.steps; ++n)
                err = std::max(err, sup(w[n].array() - std::exp(-c * (p.horizon - p.time(n)) / 2.0)));
        }
        return at_most(err, 1e-12);
    });
    add("hjb", "constant source c gives u = c (T - t)", [] {
        auto g = grid_of(disk(), 16);
        double err = 0.0;
        for (double c : {0.0, 0.6})
            for (auto method : {HjbMethod::cole_hopf, HjbMethod::direct}) {
                auto p = backward(g, c, 20);
                auto s = solve_hjb(p, method);
                for (int n = 0; n <= p.steps; ++n)
                    err = std::max(err, sup(s.u[n].array() - c * (p.horizon - p.time(n))));
            }
        return at_most(err, 1e-11);
    });

    // fpk
    add("fpk", "uniform density stays uniform without drift", [] {
        auto g = grid_of(torus(), 32);
        ForwardProblem p;
        p.grid = g;
        p.horizon = 0.5;
        p.steps = 10;
        p.initial = normalize_density(*g, Vector::Ones(g->size()));
        auto s = solve_forward(p);
        double err = 0.0;
        for (const auto& m : s.m) err = std::max(err, sup(m.array() - 1.0));
        return at_most(err, 1e-12);
    });
    add("fpk", "point mass spreads with mass 1 toward uniform", [] {
        auto g = grid_of(torus(), 32);
        ForwardProblem p;
        p.grid = g;
        p.horizon = 1.0;
        p.steps = 40;
        Vector m0 = Vector::Zero(g->size());
        m0[g->size() / 2] = 1.0;
        p.initial = normalize_density(*g, m0);
        auto s = solve_forward(p);
        bool spreading = true;
        for (int n = 1; n <= p.steps; ++n) spreading = spreading && s.m[n].maxCoeff() <= s.m[n - 1].maxCoeff();
        return Check{{}, spreading && s.report.max_mass_defect <= 1e-12 && sup(s.m.back().array() - 1.0) < 1e-3,
                     sup(s.m.back().array() - 1.0), 1e-3, "distance to uniform at T = 1"};
    });
    add("fpk", "drift of a constant value is zero; disk B^1(0) = -1/4 for u = x1", [] {
        auto g = grid_of(disk(), 64);
        auto b0 = drift_from_value(*g, {Vector::Constant(g->size(), 2.0)});
        auto b1 = drift_from_value(*g, {sample_on_grid(*g, [](auto x) { return x[0]; })});
        const int c = centre_node(*g);
        return at_most(b0[0].cwiseAbs().maxCoeff() + std::abs(b1[0](c, 0) + 0.25) + std::abs(b1[0](c, 1)), 1e-3);
    });
    add("fpk", "torus drift of sin(2 pi x) is (-2 pi cos(2 pi x), 0)", [] {
        auto g = grid_of(torus(), 64);
        auto b = drift_from_value(*g, {sample_on_grid(*g, [](auto x) { return std::sin(2 * pi * x[0]); })});
        Vector expect = sample_on_grid(*g, [](auto x) { return -2 * pi * std::cos(2 * pi * x[0]); });
        return at_most(sup(b[0].col(0) - expect) / (2 * pi) + sup(b[0].col(1)), 5e-3);
    });

    // coupling
    add("coupling", "constant kernel and payoff: F(m) = 1", [] {
        auto g = grid_of(torus(), 16);
        CouplingSpec s;
        s.kernel.shape = InteractionKernel::Shape::constant;
        Coupling f(g, s);
        Vector m = normalize_density(*g, Vector::LinSpaced(g->size(), 0.1, 3.0));
        return at_most(sup(f.evaluate(m).array() - 1.0), 1e-12);
    });
    add("coupling", "renormalized constant kernel gives the constant int f dm", [] {
        auto g = grid_of(torus(), 16);
        CouplingSpec s;
        s.kernel.shape = InteractionKernel::Shape::constant;
        s.renormalize = true;
        s.payoff = ScalarProfile{0.5, {FourierTerm{1, 0, 0.3, 0.0}}, {1.0, 1.0}};
        Coupling f(g, s);
        Vector m = normalize_density(*g, Vector::LinSpaced(g->size(), 0.1, 3.0));
        Vector out = f.evaluate(m);
        return at_most(out.maxCoeff() - out.minCoeff(), 1e-12);
    });
    add("coupling", "monotonicity gap of identical measures is 0", [] {
        auto g = grid_of(disk(), 16);
        Coupling f(g, CouplingSpec{});
        Vector m = normalize_density(*g, Vector::LinSpaced(g->size(), 0.1, 3.0));
        return at_most(std::abs(monotonicity_gap(f, m, m)), 0.0);
    });

    // mfg
    add("mfg", "decoupled zero game converges in one iteration with u = 0", [] {
        auto g = grid_of(torus(), 16);
        MfgProblem p;
        p.grid = g;
        p.horizon = 0.5;
        p.steps = 10;
        p.initial = normalize_density(*g, Vector::LinSpaced(g->size(), 1.0, 2.0));
        auto s = picard_solve(p);
        double u = 0.0;
        for (const auto& x : s.u) u = std::max(u, sup(x));
        return Check{{}, s.converged && s.iterations == 1 && u <= 1e-12, u, 1e-12, s.diagnostic};
    });
    add("mfg", "spatially constant coupling: zero drift and residuals <= 1e-10", [] {
        auto g = grid_of(torus(), 16);
        MfgProblem p;
        p.grid = g;
        p.horizon = 0.5;
        p.steps = 10;
        p.initial = normalize_density(*g, Vector::LinSpaced(g->size(), 1.0, 2.0));
        CouplingSpec s;
        s.kernel.shape = InteractionKernel::Shape::constant;
        p.running = std::make_shared<Coupling>(g, s);
        auto sol = picard_solve(p);
        double b = 0.0;
        for (const auto& d : sol.drift) b = std::max(b, d.cwiseAbs().maxCoeff());
        auto r = equilibrium_residual(sol, p);
        return at_most(std::max({b, r.hjb, r.fpk}), 1e-10);
    });
    add("mfg", "one Picard iteration on a coupled game reports not converged", [] {
        auto g = grid_of(torus(), 16);
        MfgProblem p;
        p.grid = g;
        p.horizon = 0.5;
        p.steps = 10;
        p.initial = normalize_density(*g, sample_on_grid(*g, [](auto x) { return 1.0 + 0.8 * std::cos(2 * pi * x[0]); }));
        p.running = std::make_shared<Coupling>(g, CouplingSpec{});
        PicardOptions o;
        o.max_iters = 1;
        o.tolerance = 1e-12;
        auto s = picard_solve(p, o);
        return Check{{}, !s.converged && s.history.back().w1_residual > o.tolerance, s.history.back().w1_residual,
                     o.tolerance, s.diagnostic};
    });

    // curvature_mfg
    add("curvature_mfg", "flat and constant-exponent tori give v = 0", [] {
        double err = 0.0;
        for (const auto& geom : {torus(), flat_conformal(0.4)}) {
            StationaryProblem p;
            p.grid = grid_of(geom, 16);
            auto s = solve_stationary(p);
            auto full = verify_full_system(p, s.v, s.m);
            err = std::max({err, sup(s.v), full.fpk, full.hjb});
        }
        return at_most(err, 1e-10);
    });

    // transport
    add("transport", "two point masses at distance 2 are W1 = 2 apart", [] {
        Matrix c(2, 2);
        c << 0.0, 2.0, 2.0, 0.0;
        auto r = w1_exact(vec({1.0, 0.0}), vec({0.0, 1.0}), c);
        return at_most(std::abs(r.cost - 2.0), 0.0);
    });
    add("transport", "identical measures are W1 = 0 apart", [] {
        Matrix c(3, 3);
        c << 0, 1, 2, 1, 0, 1, 2, 1, 0;
        const Vector m = vec({0.2, 0.5, 0.3});
        auto g = grid_of(torus(), 16);
        DensityTransport t(g, 4);
        const Vector d = normalize_density(*g, Vector::LinSpaced(g->size(), 1.0, 2.0));
        const auto b = t.bracket(d, d);
        return at_most(w1_exact(m, m, c).cost + b.upper, 0.0);
    });

    // geograph
    add("geograph", "collinear points at spacing 1 give the path P3", [] {
        Matrix pts(3, 2);
        pts << 1, 5, 2, 5, 3, 5;
        auto g = GeometricGraph::from_points(torus(10.0), pts, 1.0);
        return holds(g.edge_count() == 2 && g.connected() && g.distance(0, 2) == 2.0);
    });
    add("geograph", "radius at least the diameter gives the complete graph", [] {
        auto geom = torus(1.0);
        auto pts = sample_points(*geom, 12, [](const Vector&) { return 1.0; }, 3);
        auto g = GeometricGraph::from_points(geom, pts, geom->diameter());
        return holds(g.edge_count() == 66);
    });
    add("geograph", "unit balls: uniform on K5, ends and centre of P3", [] {
        std::vector<EdgeRecord> k5, p3{{0, 1, 1.0}, {1, 2, 1.0}};
        for (int a = 0; a < 5; ++a)
            for (int b = a + 1; b < 5; ++b) k5.push_back({a, b, 1.0});
        auto gk = GeometricGraph::from_edges(5, k5);
        auto gp = GeometricGraph::from_edges(3, p3);
        const auto bk = ball_measure(gk, 2, 1.0);
        return holds(bk.nodes.size() == 5 && bk.weight == 0.2 && ball_measure(gp, 0, 1.0).nodes.size() == 2 &&
                     ball_measure(gp, 1, 1.0).nodes.size() == 3);
    });
    add("geograph", "complete-graph edge has kappa = 1", [] {
        std::vector<EdgeRecord> k5;
        for (int a = 0; a < 5; ++a)
            for (int b = a + 1; b < 5; ++b) k5.push_back({a, b, 1.0});
        return at_most(std::abs(ollivier_edge(GeometricGraph::from_edges(5, k5), 0, 3, 1.0).kappa - 1.0), 0.0);
    });
    add("geograph", "flat torus continuous curvature vanishes", [] {
        auto r = coarse_curvature_continuous(*torus(), vec({0.5, 0.5}), vec({1.0, 0.0}), 0.1, 0.05);
        return at_most(std::abs(r.rescaled), 1e-6);
    });
    add("geograph", "coincident centres are rejected", [] {
        try {
            coarse_curvature_continuous(*torus(), vec({0.5, 0.5}), vec({1.0, 0.0}), 0.1, 0.0);
        } catch (const DomainError&) {
            return holds(true);
        }
        return holds(false, "delta = 0 accepted");
    });
    add("geograph", "uniform torus weighted Ricci and scalar are 0", [] {
        auto w = weighted_ricci_target(*torus(), [](const Vector&) { return 1.0; }, vec({0.3, 0.3}), vec({1.0, 0.0}));
        return at_most(std::abs(w.weighted) + std::abs(w.weighted_scalar), 1e-12);
    });
    add("geograph", "two-node convergence experiment is rejected", [] {
        ConvergenceSettings s;
        s.sizes = {2};
        s.target = vec({0.5, 0.5});
        s.direction = vec({1.0, 0.0});
        s.seeds = {1};
        try {
            convergence_experiment(torus(), [](const Vector&) { return 1.0; }, s);
        } catch (const DomainError&) {
            return holds(true);
        }
        return holds(false, "N = 2 accepted");
    });

    // sde
    add("sde", "disk noise at the origin is I / sqrt 2 with no correction", [] {
        auto c = noise_coeffs_at(*disk(), vec({0.0, 0.0}));
        return at_most((c.sigma - Matrix::Identity(2, 2) / std::sqrt(2.0)).norm() + c.correction.norm(), 1e-14);
    });
    add("sde", "torus Brownian motion has variance 2t per axis", [] {
        SimulationSpec s;
        s.geometry = torus(100.0);
        s.horizon = 0.5;
        s.dt = 0.05;
        s.record_every = 10;
        const int n = 4000;
        auto traj = simulate(s, Matrix::Constant(n, 2, 50.0));
        const Matrix d = traj.positions.back().array() - 50.0;
        const double var = d.squaredNorm() / (2.0 * n);
        return at_most(std::abs(var - 1.0), 5.0 * std::sqrt(1.0 / n), "pooled variance " + std::to_string(var));
    });
    add("sde", "t = 0 empirical distance shrinks like N^-1/2", [] {
        auto g = grid_of(torus(), 32);
        DensityTransport t(g, 8);
        Vector m = normalize_density(*g, sample_on_grid(*g, [](auto x) { return 1.0 + 0.7 * std::cos(2 * pi * x[0]); }));
        double small = 0.0, large = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            small += empirical_distance(t, sample_grid_density(*g, m, 1000, seed), m).coarse;
            large += empirical_distance(t, sample_grid_density(*g, m, 4000, seed + 3), m).coarse;
        }
        const double ratio = large / small;
        return Check{{}, ratio >= 0.35 && ratio <= 0.65, ratio, 0.65, "expected near 0.5"};
    });

    // cli
    add("cli", "minimal mfg-solve config records defaults", [] {
        auto c = parse_config({{"command", "mfg-solve"}});
        return holds(c.at("numerics").at("grid") == 64 && c.at("numerics").at("steps") == 100 &&
                     c.at("coupling").at("running").at("kernel").at("shape") == "exponential");
    });
    add("cli", "negative epsilon is reported with its field", [] {
        try {
            parse_config({{"command", "graph-converge"}, {"experiment", {{"epsilon", {{"scale", -1.0}}}}}});
        } catch (const ConfigError& e) {
            return holds(e.violations().size() == 1 && e.violations()[0].rfind("experiment.epsilon.scale", 0) == 0,
                         e.violations()[0]);
        }
        return holds(false, "accepted");
    });
    add("cli", "unknown keys are rejected by name", [] {
        try {
            parse_config({{"command", "mfg-solve"}, {"numerics", {{"gird", 32}}}});
        } catch (const ConfigError& e) {
            return holds(e.violations().size() == 1 && e.violations()[0] == "numerics.gird: unknown key",
                         e.violations()[0]);
        }
        return holds(false, "accepted");
    });
    return cs;
}

}  // namespace

const std::vector<SelfCheckCase>& self_check_cases() {
    static const std::vector<SelfCheckCase> cases = build();
    return cases;
}

}  // namespace mfgeo
