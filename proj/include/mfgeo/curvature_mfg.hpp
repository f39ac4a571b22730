#pragma once

#include "mfgeo/grid.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mfgeo {

// Stationary curvature game on a compact (periodic) geometry:
//   0 = div(grad v m) + Lap_g m
//   0 = -r v - 1/2 |grad v|_g^2 + Lap_g v + R^m,   R^m = R^g - Lap_g log m
// With m = exp(-v) dvol / Z the first equation holds identically and the
// second becomes -r v - 1/2 |grad v|_g^2 + c Lap_g v + R^g = 0 with c = 2.
// The coefficient is kept configurable; c = 3 is the alternative reading.
struct StationaryProblem {
    std::shared_ptr<const Grid> grid;
    double discount = 1.0;  // r > 0
    double reduction_coefficient = 2.0;
    double tolerance = 1e-10;  // sup-norm of the reduced residual
    int max_newton = 50;
    int max_fixed_point = 2000;

    void validate() const;
};

struct StationarySolution {
    Vector v;
    Vector m;              // exp(-v) normalized against the volume weights
    Vector scalar_curvature;  // R^g at the nodes
    double residual = 0.0;
    int newton_iterations = 0;
    int fixed_point_iterations = 0;
    bool used_fallback = false;
    bool converged = false;
    std::vector<double> history;  // residual after each iteration
    std::string diagnostic;
};

// -r v - 1/2 |grad v|_g^2 + c Lap_h v + R^g at the nodes.
Vector reduced_residual(const StationaryProblem& problem, const Vector& scalar_curvature, const Vector& v);

// Newton on the discrete equation with its exact Jacobian, started from
// v = (mean R^g) / r; falls back to a damped linear fixed point when Newton
// stalls.
StationarySolution solve_stationary(const StationaryProblem& problem);

struct FullSystemResidual {
    double fpk = 0.0;  // sup |Lap_h m - div_h(B m)|, B = -grad_g v
    double hjb = 0.0;  // sup |-r v - 1/2 |grad v|^2 + Lap_h v + R^m|
    Vector mean_field_curvature;  // R^m = R^g - Lap_h log m
};

FullSystemResidual verify_full_system(const StationaryProblem& problem, const Vector& v, const Vector& m);

}  // namespace mfgeo
