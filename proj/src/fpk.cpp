#include "mfgeo/fpk.hpp"

#include "mfgeo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfgeo {

namespace {

constexpr double substep_safety = 0.9;
constexpr double mass_tolerance = 1e-10;

double mass(const Grid& grid, const Vector& m) { return integrate_volume(grid, m); }

// Zero out roundoff-level negatives left by the linear solve; anything larger
// is a genuine positivity failure.
void clean_negatives(Vector& m, int step) {
    const double scale = std::max(1.0, m.lpNorm<Eigen::Infinity>());
    for (auto& v : m) {
        if (v >= 0.0) continue;
        if (v < -1e-13 * scale) {
            std::ostringstream os;
            os << "forward step " << step << ": density became negative (" << v << ")";
            throw std::runtime_error(os.str());
        }
        v = 0.0;
    }
}

}  // namespace

void ForwardProblem::validate() const {
    if (!grid) throw DomainError("forward problem: missing grid");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("forward problem: horizon must be positive");
    if (steps < 1) throw DomainError("forward problem: need at least one time step");
    if (!(diffusion > 0.0)) throw DomainError("forward problem: diffusion constant must be positive");
    if (initial.size() != grid->size()) throw DomainError("forward problem: initial density does not match the grid");
    if (initial.minCoeff() < 0.0) throw DomainError("forward problem: initial density has negative entries");
    if (std::abs(integrate_volume(*grid, initial) - 1.0) > mass_tolerance)
        throw DomainError("forward problem: initial density is not normalized");
    if (!drift.empty()) {
        if (static_cast<int>(drift.size()) != steps + 1)
            throw DomainError("forward problem: drift trajectory must have steps + 1 slices");
        for (const auto& b : drift)
            if (b.rows() != grid->size() || b.cols() != grid->dimension() || !b.allFinite())
                throw DomainError("forward problem: drift slice does not match the grid");
    }
}

Vector reference_point(const ChartGeometry& geom) {
    Vector x = Vector::Zero(geom.dimension());
    if (geom.periodic())
        for (int k = 0; k < geom.dimension(); ++k) x[k] = 0.5 * geom.periods()[k];
    return x;
}

FpkSolution solve_forward(const ForwardProblem& problem) {
    problem.validate();
    const Grid& grid = *problem.grid;
    const double dt = problem.dt();
    ImplicitDiffusion heat(grid, problem.diffusion * dt);

    const Vector x0 = reference_point(grid.geometry());
    Vector dist2(grid.size());
    {
        const auto d = grid.geometry().distances_from(x0, grid.coordinate_matrix());
        for (int i = 0; i < grid.size(); ++i) dist2[i] = d[i] * d[i];
    }

    FpkSolution sol;
    sol.m.reserve(problem.steps + 1);
    sol.m.push_back(problem.initial);
    auto record = [&](const Vector& m) {
        sol.mass_defect.push_back(std::abs(mass(grid, m) - 1.0));
        sol.second_moment.push_back(integrate_volume(grid, (dist2.array() * m.array()).matrix()));
    };
    record(problem.initial);

    for (int n = 0; n < problem.steps; ++n) {
        Vector m = sol.m.back();
        if (!problem.drift.empty()) {
            const VectorField& b = problem.drift[n];
            const double rate = max_upwind_rate(grid, b);
            const int sub = std::max(1, static_cast<int>(std::ceil(dt * rate / substep_safety)));
            sol.report.max_substeps = std::max(sol.report.max_substeps, sub);
            const double tau = dt / sub;
            for (int s = 0; s < sub; ++s) m -= tau * apply_advection(grid, m, b, AdvectionForm::divergence);
        }
        m = heat.apply(m);
        clean_negatives(m, n);
        record(m);
        if (sol.mass_defect.back() > mass_tolerance) {
            std::ostringstream os;
            os << "forward step " << n << ": mass defect " << sol.mass_defect.back() << " exceeds " << mass_tolerance;
            throw std::runtime_error(os.str());
        }
        sol.m.push_back(std::move(m));
    }

    FpkReport& r = sol.report;
    r.max_mass_defect = *std::max_element(sol.mass_defect.begin(), sol.mass_defect.end());
    r.max_second_moment = *std::max_element(sol.second_moment.begin(), sol.second_moment.end());
    r.min_density = sol.m.front().minCoeff();
    for (const auto& m : sol.m) r.min_density = std::min(r.min_density, m.minCoeff());
    return sol;
}

double weak_form_residual(const ForwardProblem& problem, const std::vector<Vector>& m,
                          const std::vector<Vector>& tests) {
    const Grid& grid = *problem.grid;
    if (static_cast<int>(m.size()) != problem.steps + 1)
        throw DomainError("weak_form_residual: trajectory length does not match the time grid");
    const double dt = problem.dt();
    double worst = 0.0;
    for (const auto& phi : tests) {
        if (phi.size() != grid.size()) throw DomainError("weak_form_residual: test field does not match the grid");
        const Vector lap = problem.diffusion * apply_laplace_beltrami(grid, phi);
        const VectorField grad = chart_gradient(grid, phi);
        for (int n = 0; n < problem.steps; ++n) {
            Vector gen = lap;
            if (!problem.drift.empty()) gen += (problem.drift[n].array() * grad.array()).rowwise().sum().matrix();
            const double lhs = (integrate_volume(grid, (phi.array() * m[n + 1].array()).matrix()) -
                                integrate_volume(grid, (phi.array() * m[n].array()).matrix())) /
                               dt;
            const double rhs = integrate_volume(grid, (gen.array() * m[n + 1].array()).matrix());
            worst = std::max(worst, std::abs(lhs - rhs));
        }
    }
    return worst;
}

TimeRegularity time_regularity(const DensityTransport& transport, const std::vector<Vector>& m, double dt,
                               const std::vector<int>& step_indices) {
    TimeRegularity r;
    const Vector base = transport.block_masses(m.front());
    for (int k : step_indices) {
        if (k <= 0 || k >= static_cast<int>(m.size())) throw DomainError("time_regularity: step index out of range");
        r.lags.push_back(k * dt);
        r.distances.push_back(transport.coarse_w1(base, transport.block_masses(m[k])));
    }
    const auto fit = fit_power_law(r.lags, r.distances);
    r.exponent = fit.exponent;
    r.r_squared = fit.r_squared;
    return r;
}

}  // namespace mfgeo
