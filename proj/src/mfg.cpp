#include "mfgeo/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mfgeo {

void MfgProblem::validate() const {
    if (!grid) throw DomainError("mfg problem: missing grid");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("mfg problem: horizon must be positive");
    if (steps < 1) throw DomainError("mfg problem: need at least one time step");
    if (initial.size() != grid->size()) throw DomainError("mfg problem: initial density does not match the grid");
    if (initial.minCoeff() < 0.0 || std::abs(integrate_volume(*grid, initial) - 1.0) > 1e-10)
        throw DomainError("mfg problem: initial density must be a normalized nonnegative field");
    for (const auto* c : {running.get(), terminal.get()})
        if (c && &c->grid() != grid.get())
            throw DomainError("mfg problem: coupling is bound to a different grid");
}

double MfgProblem::coupling_bound() const {
    double b = 0.0;
    if (running) b = std::max(b, running->bound());
    if (terminal) b = std::max(b, terminal->bound());
    return b;
}

double flow_distance(const DensityTransport& transport, const std::vector<Vector>& a, const std::vector<Vector>& b,
                     int stride, double* lower) {
    if (a.size() != b.size() || a.empty()) throw DomainError("flow_distance: flows have different lengths");
    const int last = static_cast<int>(a.size()) - 1;
    stride = std::max(1, stride);
    double upper = 0.0, low = 0.0;
    for (int n = 0;; n = std::min(n + stride, last)) {
        const auto br = transport.bracket(a[n], b[n]);
        upper = std::max(upper, br.upper);
        low = std::max(low, br.lower);
        if (n == last) break;
    }
    if (lower) *lower = low;
    return upper;
}

std::vector<Vector> smooth_test_fields(const Grid& grid) {
    const ChartGeometry& geom = grid.geometry();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<Vector> out;
    if (geom.periodic()) {
        const double l0 = geom.periods()[0];
        const double l1 = geom.dimension() > 1 ? geom.periods()[1] : 1.0;
        out.push_back(sample_on_grid(grid, [&](auto x) { return std::cos(two_pi * x[0] / l0); }));
        out.push_back(sample_on_grid(grid, [&](auto x) { return std::sin(two_pi * x[0] / l0); }));
        if (geom.dimension() > 1) {
            out.push_back(sample_on_grid(grid, [&](auto x) { return std::cos(two_pi * x[1] / l1); }));
            out.push_back(sample_on_grid(grid, [&](auto x) { return std::sin(two_pi * (x[0] / l0 + x[1] / l1)); }));
        }
    } else {
        for (int k = 0; k < geom.dimension(); ++k)
            out.push_back(sample_on_grid(grid, [k](auto x) { return x[k]; }));
        out.push_back(sample_on_grid(grid, [](auto x) {
            double s = 0.0;
            for (double v : x) s += v * v;
            return s;
        }));
    }
    return out;
}

MfgSolution picard_solve(const MfgProblem& problem, const PicardOptions& options) {
    problem.validate();
    if (!(options.damping > 0.0 && options.damping <= 1.0)) throw DomainError("picard: damping must lie in (0, 1]");
    if (!(options.tolerance > 0.0)) throw DomainError("picard: tolerance must be positive");
    if (options.max_iters < 0) throw DomainError("picard: max_iters must be nonnegative");
    const Grid& grid = *problem.grid;
    const int steps = problem.steps;

    std::vector<Vector> flow = options.initial_guess;
    if (flow.empty()) flow.assign(steps + 1, problem.initial);
    if (static_cast<int>(flow.size()) != steps + 1) throw DomainError("picard: initial guess must have steps + 1 slices");
    for (const auto& m : flow)
        if (m.size() != grid.size() || m.minCoeff() < 0.0) throw DomainError("picard: initial guess slice is not a density");

    MfgSolution sol;
    sol.bound = problem.coupling_bound();
    const bool coupled = (problem.running && problem.running->depends_on_measure()) ||
                         (problem.terminal && problem.terminal->depends_on_measure());
    DensityTransport transport(problem.grid, options.transport_blocks);

    double alpha = options.damping;
    double previous = std::numeric_limits<double>::infinity();
    std::vector<Vector> last_u;
    for (int k = 1; k <= options.max_iters; ++k) {
        BackwardProblem bp;
        bp.grid = problem.grid;
        bp.horizon = problem.horizon;
        bp.steps = steps;
        bp.source = problem.running ? problem.running->evaluate_flow(flow)
                                    : std::vector<Vector>(steps + 1, Vector::Zero(grid.size()));
        bp.terminal = problem.terminal ? problem.terminal->evaluate(flow.back()) : Vector::Zero(grid.size());
        bp.bound = sol.bound;
        HjbSolution hjb = solve_hjb(bp, options.method);

        ForwardProblem fp;
        fp.grid = problem.grid;
        fp.horizon = problem.horizon;
        fp.steps = steps;
        fp.initial = problem.initial;
        fp.drift = hjb.drift;
        FpkSolution psi = solve_forward(fp);

        PicardIterate it;
        it.damping = alpha;
        // Psi is constant when neither coupling reads the measure, so its first
        // value is an exact fixed point.
        if (coupled) it.w1_residual = flow_distance(transport, flow, psi.m, options.metric_stride, &it.w1_lower);
        for (int n = 0; n <= steps; ++n) {
            it.sup_change_m = std::max(it.sup_change_m, (psi.m[n] - flow[n]).lpNorm<Eigen::Infinity>());
            if (!last_u.empty())
                it.sup_change_u = std::max(it.sup_change_u, (hjb.u[n] - last_u[n]).lpNorm<Eigen::Infinity>());
        }
        sol.history.push_back(it);
        sol.iterations = k;
        sol.u = hjb.u;
        sol.m = psi.m;
        sol.drift = std::move(hjb.drift);
        sol.hjb = hjb.report;
        sol.fpk = psi.report;
        last_u = std::move(hjb.u);

        if (!coupled || it.w1_residual <= options.tolerance) {
            sol.converged = true;
            break;
        }
        if (it.w1_residual > previous) alpha = std::max(options.min_damping, 0.5 * alpha);
        previous = it.w1_residual;
        for (int n = 0; n <= steps; ++n) flow[n] = (1.0 - alpha) * flow[n] + alpha * psi.m[n];
    }

    if (!sol.converged) {
        std::ostringstream os;
        os << "not converged after " << sol.iterations << " iterations";
        if (!sol.history.empty())
            os << " (W1 residual " << sol.history.back().w1_residual << " > tolerance " << options.tolerance << ")";
        sol.diagnostic = os.str();
        if (sol.m.empty()) sol.m = flow;
    } else {
        sol.diagnostic = "converged";
    }
    return sol;
}

EquilibriumResidual equilibrium_residual(const MfgSolution& solution, const MfgProblem& problem) {
    const Grid& grid = *problem.grid;
    const int steps = problem.steps;
    const double dt = problem.dt();
    EquilibriumResidual r;
    if (!solution.history.empty()) r.fixed_point = solution.history.back().w1_residual;
    else r.fixed_point = std::numeric_limits<double>::infinity();
    if (static_cast<int>(solution.u.size()) != steps + 1 || static_cast<int>(solution.m.size()) != steps + 1) {
        r.hjb = r.fpk = std::numeric_limits<double>::infinity();
        return r;
    }

    for (int n = 0; n < steps; ++n) {
        const Vector& u = solution.u[n];
        Vector res = -(solution.u[n + 1] - u) / dt - apply_laplace_beltrami(grid, u) + 0.5 * grad_norm_sq(grid, u);
        if (problem.running) res -= problem.running->evaluate(solution.m[n]);
        r.hjb = std::max(r.hjb, res.lpNorm<Eigen::Infinity>());
    }
    Vector g = problem.terminal ? problem.terminal->evaluate(solution.m.back()) : Vector::Zero(grid.size());
    r.hjb = std::max(r.hjb, (solution.u.back() - g).lpNorm<Eigen::Infinity>());

    ForwardProblem fp;
    fp.grid = problem.grid;
    fp.horizon = problem.horizon;
    fp.steps = steps;
    fp.initial = problem.initial;
    fp.drift = solution.drift;
    r.fpk = weak_form_residual(fp, solution.m, smooth_test_fields(grid));
    return r;
}

}  // namespace mfgeo
