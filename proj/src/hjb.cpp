#include "mfgeo/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfgeo {

namespace {

double barrier(double c0, double horizon, double t) { return 0.5 * c0 * (horizon - t + 1.0); }

}  // namespace

void BackwardProblem::validate() const {
    if (!grid) throw DomainError("backward problem: missing grid");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("backward problem: horizon must be positive");
    if (steps < 1) throw DomainError("backward problem: need at least one time step");
    if (static_cast<int>(source.size()) != steps + 1)
        throw DomainError("backward problem: source trajectory must have steps + 1 slices");
    if (!std::isfinite(bound) || bound < 0.0) throw DomainError("backward problem: C0 must be finite and nonnegative");
    if (terminal.size() != grid->size()) throw DomainError("backward problem: terminal field does not match the grid");
    const double slack = 1e-12 * std::max(1.0, bound);
    if (terminal.lpNorm<Eigen::Infinity>() > bound + slack) throw DomainError("backward problem: |G| exceeds C0");
    for (const auto& f : source) {
        if (f.size() != grid->size()) throw DomainError("backward problem: source slice does not match the grid");
        if (!f.allFinite()) throw DomainError("backward problem: source is not finite");
        if (f.lpNorm<Eigen::Infinity>() > bound + slack) throw DomainError("backward problem: |F| exceeds C0");
    }
}

Vector cole_hopf(const Vector& u) { return (-0.5 * u.array()).exp().matrix(); }

Vector inverse_cole_hopf(const Vector& w) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (!(w[i] > 0.0))
            throw DomainError("inverse Cole-Hopf: w must be strictly positive (the barrier bound keeps it above "
                              "exp(-C0 (T - t + 1) / 2))");
    return (-2.0 * w.array().log()).matrix();
}

std::vector<Vector> solve_linear_parabolic_backward(const BackwardProblem& problem) {
    problem.validate();
    const Grid& grid = *problem.grid;
    const int steps = problem.steps;
    const double dt = problem.dt();
    ImplicitDiffusion heat(grid, dt);

    std::vector<Vector> w(steps + 1);
    w[steps] = cole_hopf(problem.terminal);
    for (int n = steps - 1; n >= 0; --n) {
        Vector next = heat.apply(w[n + 1]);
        w[n] = ((-0.5 * dt * problem.source[n].array()).exp() * next.array()).matrix();
        const double b = barrier(problem.bound, problem.horizon, problem.time(n));
        const double lo = w[n].minCoeff();
        const double hi = w[n].maxCoeff();
        const double tol = b * 1e-12 + 1e-12;
        if (!(lo > 0.0) || std::abs(std::log(lo)) > b + tol || std::abs(std::log(hi)) > b + tol) {
            std::ostringstream os;
            os << "linear backward step " << n << " left the barrier band [exp(-" << b << "), exp(" << b << ")]";
            throw StepInstability(os.str(), 0.5 * dt);
        }
    }
    return w;
}

std::vector<VectorField> drift_from_value(const Grid& grid, const std::vector<Vector>& u) {
    std::vector<VectorField> out;
    out.reserve(u.size());
    for (const auto& slice : u) out.push_back(-metric_gradient(grid, slice));
    return out;
}

HjbSolution solve_hjb(const BackwardProblem& problem, HjbMethod method) {
    problem.validate();
    const Grid& grid = *problem.grid;
    const int steps = problem.steps;
    const double dt = problem.dt();
    HjbSolution sol;

    if (method == HjbMethod::cole_hopf) {
        sol.w = solve_linear_parabolic_backward(problem);
        sol.u.reserve(sol.w.size());
        for (const auto& w : sol.w) sol.u.push_back(inverse_cole_hopf(w));
    } else {
        ImplicitDiffusion heat(grid, dt);
        sol.u.assign(steps + 1, Vector());
        sol.u[steps] = problem.terminal;
        for (int n = steps - 1; n >= 0; --n) {
            const Vector& next = sol.u[n + 1];
            // Central differencing of the explicit Hamiltonian against implicit
            // diffusion is von Neumann stable for dt * |grad u|_g^2 <= 2.
            const Vector grad2 = grad_norm_sq(grid, next);
            const double peak = grad2.maxCoeff();
            if (dt * peak > 2.0) {
                std::ostringstream os;
                os << "direct HJB step " << n << ": dt * max |grad u|_g^2 = " << dt * peak << " exceeds 2";
                throw StepInstability(os.str(), 1.8 / peak);
            }
            Vector rhs = next - 0.5 * dt * grad2;
            sol.u[n] = heat.apply(rhs) + dt * problem.source[n];
        }
    }

    sol.drift = drift_from_value(grid, sol.u);

    HjbReport& r = sol.report;
    r.sup_bound = problem.bound * (problem.horizon + 1.0);
    r.min_w = std::numeric_limits<double>::infinity();
    r.max_w = 0.0;
    for (int n = 0; n <= steps; ++n) {
        const Vector& u = sol.u[n];
        r.sup_abs_u = std::max(r.sup_abs_u, u.lpNorm<Eigen::Infinity>());
        const double b = barrier(problem.bound, problem.horizon, problem.time(n));
        // |log w| = |u| / 2
        const double worst = 0.5 * u.lpNorm<Eigen::Infinity>();
        if (b > 0.0) r.barrier_ratio = std::max(r.barrier_ratio, worst / b);
        for (Eigen::Index i = 0; i < u.size(); ++i)
            if (0.5 * std::abs(u[i]) > b * (1 + 1e-12) + 1e-12) ++r.barrier_violations;
        if (!sol.w.empty()) {
            r.min_w = std::min(r.min_w, sol.w[n].minCoeff());
            r.max_w = std::max(r.max_w, sol.w[n].maxCoeff());
        } else {
            r.min_w = std::min(r.min_w, std::exp(-0.5 * u.maxCoeff()));
            r.max_w = std::max(r.max_w, std::exp(-0.5 * u.minCoeff()));
        }
        r.max_grad_norm = std::max(r.max_grad_norm, std::sqrt(grad_norm_sq(grid, u).maxCoeff()));
    }
    return sol;
}

}  // namespace mfgeo
