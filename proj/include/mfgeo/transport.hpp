#pragma once

#include "mfgeo/grid.hpp"

#include <memory>
#include <vector>

namespace mfgeo {

struct PlanEntry {
    int source = 0;
    int target = 0;
    double mass = 0.0;
};

struct TransportResult {
    double cost = 0.0;
    std::vector<PlanEntry> plan;
    // Kantorovich potentials with f_i + g_j <= c_ij (indices of the input).
    Vector source_potential;
    Vector target_potential;
    double marginal_defect = 0.0;   // max |row/column sum - weight|
    double slackness_defect = 0.0;  // max |c_ij - f_i - g_j| over the plan support
    double dual_infeasibility = 0.0;
    double duality_gap = 0.0;  // primal cost - dual objective
};

struct TransportOptions {
    // When the cost is a metric on a shared support (square, zero diagonal),
    // mass common to both measures stays in place before solving.
    bool cancel_common_mass = false;
};

// Exact earth mover's distance between finite measures by the primal
// network simplex, returning the optimal plan and potentials. Weights must be
// nonnegative with equal totals (relative 1e-12); the cost finite and
// nonnegative.
TransportResult w1_exact(const Vector& source, const Vector& target, const Matrix& cost,
                         const TransportOptions& options = {});

struct W1Bracket {
    double lower = 0.0;
    double upper = 0.0;
    double coarse = 0.0;  // W1 between the block-aggregated measures
};

// Certified W1 bracket for two densities on one grid. Nodes are grouped into
// blocks (blocks_per_axis^n chart boxes); each block is represented by the
// centroid of its nodes. With E = sum_i |m1_i - m2_i| w_i d(x_i, rep(i)):
//   coarse - E <= W1 <= min(coarse + E, diameter * TV).
// Block distances and node offsets are computed once per instance.
class DensityTransport {
public:
    DensityTransport(std::shared_ptr<const Grid> grid, int blocks_per_axis);

    const Grid& grid() const { return *grid_; }
    int block_count() const { return static_cast<int>(representatives_.rows()); }
    int blocks_per_axis() const { return blocks_per_axis_; }
    const Matrix& representatives() const { return representatives_; }
    const Matrix& block_cost() const { return block_cost_; }
    int block_of(int node) const { return node_block_[node]; }
    // d(x_i, representative of block(i)) per grid node
    const Vector& node_offsets() const { return offset_; }

    // Block masses sum_{i in b} m_i w_i.
    Vector block_masses(const Vector& density) const;
    // Block index of an arbitrary admissible chart point (nearest grid node's block).
    int block_of_point(std::span<const double> x) const;

    double coarse_w1(const Vector& masses_a, const Vector& masses_b) const;
    W1Bracket bracket(const Vector& m1, const Vector& m2) const;

private:
    std::shared_ptr<const Grid> grid_;
    int blocks_per_axis_ = 0;
    std::vector<int> node_block_;
    Matrix representatives_;
    Matrix block_cost_;
    Vector offset_;  // d(x_i, rep(block(i)))
};

// Convenience wrapper for one-off comparisons.
W1Bracket w1_between_densities(std::shared_ptr<const Grid> grid, const Vector& m1, const Vector& m2,
                               int blocks_per_axis = 16);

}  // namespace mfgeo
