#pragma once

#include "mfgeo/grid.hpp"
#include "mfgeo/stats.hpp"
#include "mfgeo/transport.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace mfgeo {

// Time-dependent chart drift given on grid slices k * dt (k = 0..K). A slice
// holds on [k dt, (k+1) dt), matching the forward solver's explicit step;
// space is interpolated multilinearly, falling back to the nearest node
// where a cell corner is missing (disk rim).
class DriftTrajectory {
public:
    DriftTrajectory(std::shared_ptr<const Grid> grid, double dt, std::vector<VectorField> slices);

    const Grid& grid() const { return *grid_; }
    double dt() const { return dt_; }
    int slice_count() const { return static_cast<int>(slices_.size()); }
    int slice_at(double t) const;
    Vector operator()(double t, std::span<const double> x) const;

private:
    std::shared_ptr<const Grid> grid_;
    double dt_;
    std::vector<VectorField> slices_;
};

struct SimulationSpec {
    std::shared_ptr<const ChartGeometry> geometry;
    double horizon = 1.0;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    // generator B . grad + nu Lap_g, noise with Sigma Sigma^T = 2 nu g^{-1}
    double diffusion = 1.0;
    // store every k-th step (the final step is always stored)
    int record_every = 1;
    std::shared_ptr<const DriftTrajectory> drift;  // null for zero drift

    int steps() const;
    void validate() const;
};

struct ParticleTrajectory {
    std::vector<double> times;
    std::vector<Matrix> positions;  // one N x dim snapshot per recorded time
    long long reflections = 0;      // disk only
    long long particle_steps = 0;
    // more than 0.1% of particle steps needed a reflection
    bool excess_reflections = false;
};

// Per-particle Euler-Maruyama in the chart:
//   X <- X + (B - nu g^{ij} Gamma^k_ij) dt + sqrt(2 nu) g^{-1/2} dW.
// Every particle draws from its own counter-based stream, so the result is
// independent of the thread count. Torus positions wrap; disk positions
// crossing r_max are reflected radially and counted.
ParticleTrajectory simulate(const SimulationSpec& spec, const Matrix& initial);

// Noise factor Sigma and Ito drift correction at x for the chosen diffusion
// constant, from the generic generator coefficients.
struct NoiseCoeffs {
    Matrix sigma;
    Vector correction;
};
NoiseCoeffs noise_coeffs_at(const ChartGeometry& geometry, const Vector& x, double diffusion = 1.0);

// N chart points from a grid density: a node is drawn with probability
// m_i w_i, then the point is spread uniformly over that node's chart cell.
Matrix sample_grid_density(const Grid& grid, const Vector& density, int count, std::uint64_t seed);

struct EmpiricalDistance {
    double time = 0.0;
    double coarse = 0.0;  // W1 between block-aggregated measures
    double lower = 0.0;   // certified bracket on the full W1
    double upper = 0.0;
};

// W1 between the empirical measure of a particle snapshot and a grid density.
EmpiricalDistance empirical_distance(const DensityTransport& transport, const Matrix& particles,
                                     const Vector& density);

// Compares each recorded snapshot with the density slice at the same time.
// Density slices sit at k * density_dt; every recorded time must hit one.
std::vector<EmpiricalDistance> empirical_vs_fpk(const DensityTransport& transport, const ParticleTrajectory& traj,
                                                const std::vector<Vector>& density, double density_dt);

struct EmpiricalRegularity {
    std::vector<double> lags;
    std::vector<double> distances;
    PowerLawFit fit;
};

// Fits coarse W1(empirical_0, empirical_t) ~ C t^p over the recorded times.
EmpiricalRegularity empirical_time_regularity(const DensityTransport& transport, const ParticleTrajectory& traj);

}  // namespace mfgeo
