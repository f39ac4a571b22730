#pragma once

#include "mfgeo/grid.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgeo {

// A time step failed a stability or barrier check; carries a smaller step
// that should pass.
class StepInstability : public std::runtime_error {
public:
    StepInstability(const std::string& what, double suggested_dt)
        : std::runtime_error(what), suggested_dt_(suggested_dt) {}
    double suggested_dt() const { return suggested_dt_; }

private:
    double suggested_dt_;
};

// -d_t u - Lap_g u + 1/2 |grad u|_g^2 = F(t), u(T) = G on t in [0, T].
struct BackwardProblem {
    std::shared_ptr<const Grid> grid;
    double horizon = 1.0;
    int steps = 100;
    std::vector<Vector> source;  // steps + 1 slices, slice n at t = n * dt
    Vector terminal;
    double bound = 0.0;  // C0 >= max(sup|F|, sup|G|)

    double dt() const { return horizon / steps; }
    double time(int n) const { return n * dt(); }
    // Throws DomainError when the invariants fail.
    void validate() const;
};

enum class HjbMethod { cole_hopf, direct };

struct HjbReport {
    double sup_abs_u = 0.0;
    double sup_bound = 0.0;  // C0 (T + 1)
    double min_w = 0.0;
    double max_w = 0.0;
    // Largest value of |log w| / (C0 (T - t + 1) / 2) over nodes and steps;
    // <= 1 means the barrier bounds hold.
    double barrier_ratio = 0.0;
    int barrier_violations = 0;
    double max_grad_norm = 0.0;  // max_t ||grad_g u(t)||_inf
};

struct HjbSolution {
    std::vector<Vector> u;             // steps + 1 slices
    std::vector<Vector> w;             // Cole-Hopf variable (empty for the direct method)
    std::vector<VectorField> drift;    // -grad_g u per slice
    HjbReport report;
};

// w = exp(-u / 2)
Vector cole_hopf(const Vector& u);
// u = -2 log w; rejects w <= 0.
Vector inverse_cole_hopf(const Vector& w);

// d_t w + Lap_g w - F w / 2 = 0, w(T) = exp(-G/2). Implicit diffusion with an
// exact integrating factor for the zeroth-order term, so the solution obeys
// exp(-C0 (T - t + 1)/2) <= w <= exp(C0 (T - t + 1)/2) at every step.
std::vector<Vector> solve_linear_parabolic_backward(const BackwardProblem& problem);

HjbSolution solve_hjb(const BackwardProblem& problem, HjbMethod method = HjbMethod::cole_hopf);

// Drift -g^{kj} d_j u for each slice.
std::vector<VectorField> drift_from_value(const Grid& grid, const std::vector<Vector>& u);

}  // namespace mfgeo
