#pragma once

#include "mfgeo/grid.hpp"
#include "mfgeo/transport.hpp"

#include <memory>
#include <vector>

namespace mfgeo {

// d_t m + div_g(B m) - nu Lap_g m = 0 on [0, T], m(0) = m0.
// nu = 1 pairs with the HJB operator; nu = 1/2 is the alternative generator
// normalization and is only meaningful outside the coupled game.
struct ForwardProblem {
    std::shared_ptr<const Grid> grid;
    double horizon = 1.0;
    int steps = 100;
    Vector initial;                  // normalized density
    std::vector<VectorField> drift;  // steps + 1 slices, or empty for B = 0
    double diffusion = 1.0;

    double dt() const { return horizon / steps; }
    double time(int n) const { return n * dt(); }
    void validate() const;
};

struct FpkReport {
    double max_mass_defect = 0.0;   // max_n |sum_i m_i w_i - 1|
    double min_density = 0.0;
    double max_second_moment = 0.0;  // max_n int d(x0, x)^2 m dvol
    int max_substeps = 1;            // advection subcycles in the worst step
};

struct FpkSolution {
    std::vector<Vector> m;  // steps + 1 slices
    std::vector<double> mass_defect;
    std::vector<double> second_moment;
    FpkReport report;
};

// Point the second moment is measured from: the disk origin or the torus centre.
Vector reference_point(const ChartGeometry& geom);

// IMEX step: explicit upwind advection in divergence form, subcycled so every
// substep keeps positivity, then implicit Euler diffusion. Both parts conserve
// sum_i m_i w_i exactly. Throws std::runtime_error if mass or positivity is
// lost beyond roundoff.
FpkSolution solve_forward(const ForwardProblem& problem);

// max over steps and test fields phi of
// |(<phi, m^{n+1}> - <phi, m^n>) / dt - <nu Lap_g phi + B^n . grad phi, m^{n+1}>|
// with volume inner products and central-difference gradients.
double weak_form_residual(const ForwardProblem& problem, const std::vector<Vector>& m,
                          const std::vector<Vector>& tests);

struct TimeRegularity {
    std::vector<double> lags;
    std::vector<double> distances;  // block-level W1(m_0, m_lag)
    double exponent = 0.0;
    double r_squared = 0.0;
};

// Fits W1(m_0, m_t) ~ C t^p over the given step indices.
TimeRegularity time_regularity(const DensityTransport& transport, const std::vector<Vector>& m, double dt,
                               const std::vector<int>& step_indices);

}  // namespace mfgeo
