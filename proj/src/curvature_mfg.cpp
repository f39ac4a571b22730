#include "mfgeo/curvature_mfg.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <sstream>

namespace mfgeo {

namespace {

Vector nodal_curvature(const Grid& grid) {
    Vector r(grid.size());
    for (int i = 0; i < grid.size(); ++i) r[i] = grid.geometry().scalar_curvature(grid.node_vector(i));
    return r;
}

Vector boltzmann_density(const Grid& grid, const Vector& v) {
    // shift by the minimum so the exponential cannot overflow
    const Vector e = (-(v.array() - v.minCoeff())).exp().matrix();
    return normalize_density(grid, e);
}

// d/dv of the reduced operator: -r I - d(1/2 |grad v|^2) + c Lap_h.
SparseMatrix jacobian(const StationaryProblem& p, const Vector& v) {
    const Grid& grid = *p.grid;
    const int n = grid.size();
    const VectorField grad = chart_gradient(grid, v);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(n) * (3 + 4 * grid.dimension()));
    const SparseMatrix& k = grid.stiffness();
    const Vector& w = grid.weights();
    for (int col = 0; col < k.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(k, col); it; ++it)
            t.emplace_back(it.row(), it.col(), -p.reduction_coefficient * it.value() / w[it.row()]);
    for (int i = 0; i < n; ++i) {
        t.emplace_back(i, i, -p.discount);
        for (int d = 0; d < grid.dimension(); ++d) {
            const int lo = grid.neighbor(i, d, -1), hi = grid.neighbor(i, d, +1);
            const double c = grid.inverse_metric()[i] * grad(i, d) / (2.0 * grid.spacing(d));
            t.emplace_back(i, hi, -c);
            t.emplace_back(i, lo, c);
        }
    }
    SparseMatrix j(n, n);
    j.setFromTriplets(t.begin(), t.end());
    return j;
}

}  // namespace

void StationaryProblem::validate() const {
    if (!grid) throw DomainError("stationary problem: missing grid");
    if (!grid->periodic())
        throw DomainError("stationary problem: the curvature game is defined on compact (periodic) geometries only");
    if (!(discount > 0.0) || !std::isfinite(discount)) throw DomainError("stationary problem: discount r must be positive");
    if (!(reduction_coefficient > 0.0)) throw DomainError("stationary problem: reduction coefficient must be positive");
    if (!(tolerance > 0.0)) throw DomainError("stationary problem: tolerance must be positive");
}

Vector reduced_residual(const StationaryProblem& p, const Vector& scalar_curvature, const Vector& v) {
    const Grid& grid = *p.grid;
    return -p.discount * v - 0.5 * grad_norm_sq(grid, v) + p.reduction_coefficient * apply_laplace_beltrami(grid, v) +
           scalar_curvature;
}

StationarySolution solve_stationary(const StationaryProblem& problem) {
    problem.validate();
    const Grid& grid = *problem.grid;
    StationarySolution sol;
    sol.scalar_curvature = nodal_curvature(grid);
    const double mean_r = integrate_volume(grid, sol.scalar_curvature) / grid.total_volume();
    Vector v = Vector::Constant(grid.size(), mean_r / problem.discount);

    auto norm = [&](const Vector& x) { return reduced_residual(problem, sol.scalar_curvature, x).lpNorm<Eigen::Infinity>(); };
    double res = norm(v);

    Eigen::SparseLU<SparseMatrix> lu;
    for (int it = 0; it < problem.max_newton && res > problem.tolerance; ++it) {
        const Vector e = reduced_residual(problem, sol.scalar_curvature, v);
        lu.compute(jacobian(problem, v));
        if (lu.info() != Eigen::Success) break;
        const Vector step = lu.solve(-e);
        // backtracking on the sup-norm of the residual
        double t = 1.0;
        double trial = norm(v + step);
        while (!(trial < res) && t > 1e-4) {
            t *= 0.5;
            trial = norm(v + t * step);
        }
        ++sol.newton_iterations;
        if (!(trial < res)) break;
        v += t * step;
        res = trial;
        sol.history.push_back(res);
    }

    if (res > problem.tolerance) {
        // (r - c Lap_h) v_new = R^g - 1/2 |grad v|^2, damped
        sol.used_fallback = true;
        SparseMatrix a = problem.reduction_coefficient * grid.stiffness();
        for (int i = 0; i < grid.size(); ++i) a.coeffRef(i, i) += problem.discount * grid.weights()[i];
        Eigen::SparseLU<SparseMatrix> lin;
        lin.compute(a);
        const Vector& w = grid.weights();
        for (int it = 0; it < problem.max_fixed_point && res > problem.tolerance; ++it) {
            const Vector rhs = (w.array() * (sol.scalar_curvature - 0.5 * grad_norm_sq(grid, v)).array()).matrix();
            v = 0.5 * v + 0.5 * lin.solve(rhs);
            res = norm(v);
            ++sol.fixed_point_iterations;
            sol.history.push_back(res);
        }
    }

    sol.v = v;
    sol.m = boltzmann_density(grid, v);
    sol.residual = res;
    sol.converged = res <= problem.tolerance;
    std::ostringstream os;
    os << (sol.converged ? "converged" : "not converged") << " after " << sol.newton_iterations << " Newton and "
       << sol.fixed_point_iterations << " fixed-point iterations, residual " << res;
    sol.diagnostic = os.str();
    return sol;
}

FullSystemResidual verify_full_system(const StationaryProblem& problem, const Vector& v, const Vector& m) {
    problem.validate();
    const Grid& grid = *problem.grid;
    if (v.size() != grid.size() || m.size() != grid.size()) throw DomainError("verify_full_system: field size mismatch");
    if (!(m.minCoeff() > 0.0)) throw DomainError("verify_full_system: density must be strictly positive");
    FullSystemResidual out;
    const VectorField drift = -metric_gradient(grid, v);
    const Vector fpk = apply_laplace_beltrami(grid, m) - apply_advection(grid, m, drift, AdvectionForm::divergence);
    out.fpk = fpk.lpNorm<Eigen::Infinity>();
    const Vector log_m = m.array().log().matrix();
    out.mean_field_curvature = nodal_curvature(grid) - apply_laplace_beltrami(grid, log_m);
    const Vector hjb = -problem.discount * v - 0.5 * grad_norm_sq(grid, v) + apply_laplace_beltrami(grid, v) +
                       out.mean_field_curvature;
    out.hjb = hjb.lpNorm<Eigen::Infinity>();
    return out;
}

}  // namespace mfgeo
