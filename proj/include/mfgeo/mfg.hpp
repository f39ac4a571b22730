#pragma once

#include "mfgeo/coupling.hpp"
#include "mfgeo/fpk.hpp"
#include "mfgeo/hjb.hpp"
#include "mfgeo/transport.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mfgeo {

// -d_t u - Lap_g u + 1/2 |grad u|_g^2 = F(m(t)),  u(T) = G(m(T))
//  d_t m - div_g(m grad_g u) - Lap_g m = 0,      m(0) = m0
struct MfgProblem {
    std::shared_ptr<const Grid> grid;
    double horizon = 1.0;
    int steps = 100;
    Vector initial;  // normalized density
    std::shared_ptr<const Coupling> running;
    std::shared_ptr<const Coupling> terminal;  // may be null for G = 0

    double dt() const { return horizon / steps; }
    void validate() const;
    // max(sup |F|, sup |G|)
    double coupling_bound() const;
};

struct PicardOptions {
    double damping = 0.5;      // alpha in (0, 1]
    double min_damping = 1.0 / 64.0;
    double tolerance = 1e-5;   // in the W1 fixed-point metric
    int max_iters = 200;
    HjbMethod method = HjbMethod::cole_hopf;
    int transport_blocks = 16;  // blocks per axis for the W1 brackets
    int metric_stride = 20;     // time slices compared: every stride-th and the last
    // Initial density flow guess; empty means m0 frozen in time.
    std::vector<Vector> initial_guess;
};

struct PicardIterate {
    double w1_residual = 0.0;  // sup_t W1 upper bound between m^k and Psi(m^k)
    double w1_lower = 0.0;     // matching lower bound
    double sup_change_m = 0.0;
    double sup_change_u = 0.0;
    double damping = 0.0;
};

struct MfgSolution {
    std::vector<Vector> u;
    std::vector<Vector> m;
    std::vector<VectorField> drift;
    std::vector<PicardIterate> history;
    bool converged = false;
    int iterations = 0;
    std::string diagnostic;
    HjbReport hjb;
    FpkReport fpk;
    double bound = 0.0;  // C0
};

// Damped Picard iteration m <- (1 - alpha) m + alpha Psi(m), with Psi the
// density flow of the optimal drift for the value function of m. alpha halves
// whenever the residual grows. Returns the last iterate with converged = false
// (and a diagnostic) when max_iters is exhausted.
MfgSolution picard_solve(const MfgProblem& problem, const PicardOptions& options = {});

struct EquilibriumResidual {
    double hjb = 0.0;          // sup-norm of the strong discrete HJB residual
    double fpk = 0.0;          // weak-form FPK residual on low-mode test fields
    double fixed_point = 0.0;  // last W1 residual of the iteration
};

EquilibriumResidual equilibrium_residual(const MfgSolution& solution, const MfgProblem& problem);

// sup over compared slices of the W1 upper bound between two density flows.
double flow_distance(const DensityTransport& transport, const std::vector<Vector>& a, const std::vector<Vector>& b,
                     int stride, double* lower = nullptr);

// Low-frequency smooth test fields for the weak-form residual.
std::vector<Vector> smooth_test_fields(const Grid& grid);

}  // namespace mfgeo
