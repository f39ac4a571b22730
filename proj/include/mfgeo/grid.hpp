#pragma once

#include "mfgeo/geometry.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace mfgeo {

using SparseMatrix = Eigen::SparseMatrix<double>;
// One row per grid node, one column per chart axis.
using VectorField = Eigen::MatrixXd;

enum class FieldKind { value, density };

// Tensor-product chart grid. Tori use nodes at i*h with periodic wrap; the
// disk uses cell centres of a Cartesian grid on [-r_max, r_max]^n, keeping
// the cells whose centre lies inside r_max. Disk boundary nodes carry the
// metric volume of every cell fragment inside the truncation ball, so the
// weights sum to the truncated volume.
class Grid {
public:
    Grid(std::shared_ptr<const ChartGeometry> geometry, int resolution);

    const ChartGeometry& geometry() const { return *geometry_; }
    const std::shared_ptr<const ChartGeometry>& geometry_ptr() const { return geometry_; }
    int dimension() const { return dim_; }
    int size() const { return static_cast<int>(weights_.size()); }
    int resolution() const { return resolution_; }
    double spacing(int axis) const { return spacing_[axis]; }
    double min_spacing() const;

    std::span<const double> node(int i) const {
        return {coords_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
    }
    Vector node_vector(int i) const;
    // size() x dimension() copy of the node coordinates
    Matrix coordinate_matrix() const;

    const Vector& weights() const { return weights_; }
    double total_volume() const { return weights_.sum(); }
    // g^{kk} at each node (the metric is conformal, so one value per node)
    const Vector& inverse_metric() const { return inv_metric_; }

    // Neighbour along axis in direction dir (+1 / -1), or -1 when absent.
    int neighbor(int i, int axis, int dir) const {
        return neighbors_[static_cast<std::size_t>(i) * 2 * dim_ + 2 * axis + (dir > 0 ? 1 : 0)];
    }
    bool on_boundary(int i) const { return boundary_[i] != 0; }
    bool periodic() const { return geometry_->periodic(); }

    // Nearest node to a chart point.
    int locate(std::span<const double> x) const;

    // Symmetric stiffness matrix K with W * Lap_h = -K (W = diag(weights)).
    const SparseMatrix& stiffness() const { return stiffness_; }
    // sqrt(det g) at the face midpoint between i and its + neighbour along
    // axis, times the face area; zero when that neighbour is absent.
    double face_flux_coef(int i, int axis) const { return face_coef_[static_cast<std::size_t>(i) * dim_ + axis]; }

private:
    std::shared_ptr<const ChartGeometry> geometry_;
    int dim_ = 0;
    int resolution_ = 0;
    std::vector<double> spacing_;
    std::vector<double> coords_;
    Vector weights_;
    Vector inv_metric_;
    std::vector<int> neighbors_;
    std::vector<char> boundary_;
    std::vector<int> cell_to_node_;
    std::vector<int> cell_fallback_;
    SparseMatrix stiffness_;
    std::vector<double> face_coef_;

    std::int64_t cell_count() const;
    std::vector<int> cell_index(std::int64_t c) const;
    std::int64_t cell_of(const std::vector<int>& idx) const;
};

// A scalar field tied to a grid. Density fields are nonnegative and
// normalized against the volume weights.
struct DiscreteField {
    std::shared_ptr<const Grid> grid;
    Vector values;
    FieldKind kind = FieldKind::value;

    static DiscreteField value_field(std::shared_ptr<const Grid> grid, Vector values);
    // Rejects negative entries; rescales so that sum(values * weights) = 1.
    static DiscreteField density_field(std::shared_ptr<const Grid> grid, Vector values);
};

Vector sample_on_grid(const Grid& grid, const std::function<double(std::span<const double>)>& f);

// Rescales a nonnegative field to unit mass; throws on negative or zero-mass input.
Vector normalize_density(const Grid& grid, Vector m);

double integrate_volume(const Grid& grid, const Vector& field);

// Lap_g u with the flux-form stencil (1/sqrt G) d_i (sqrt G g^{ij} d_j u);
// homogeneous Neumann / no-flux on the disk boundary.
Vector apply_laplace_beltrami(const Grid& grid, const Vector& u);

// Implicit Euler step of d_t f = Lap_g f over a step tau: f -> (W + tau K)^{-1} W f.
// The system matrix is an M-matrix, so the step preserves positivity, the
// discrete maximum principle and sum_i f_i w_i.
class ImplicitDiffusion {
public:
    ImplicitDiffusion(const Grid& grid, double tau);
    double tau() const { return tau_; }
    Vector apply(const Vector& f) const;

private:
    double tau_;
    Vector weights_;
    Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

enum class AdvectionForm { gradient, divergence };

// gradient form:   B . grad u, first-order upwind on face-averaged drift
//                  (a Markov-generator stencil)
// divergence form: div_g(B m), defined as -W^{-1} D^T W m where D is the
//                  gradient-form matrix, hence exactly conservative.
// drift holds chart vector components B^k per node.
Vector apply_advection(const Grid& grid, const Vector& field, const VectorField& drift, AdvectionForm form);

// Largest total jump rate out of a node in the gradient-form stencil.
double max_upwind_rate(const Grid& grid, const VectorField& drift);

// Chart partial derivatives d_k u by central differences (one-sided on the
// disk boundary).
VectorField chart_gradient(const Grid& grid, const Vector& u);
// Vector components g^{kj} d_j u of grad_g u.
VectorField metric_gradient(const Grid& grid, const Vector& u);
// |grad u|_g^2 = g^{ij} d_i u d_j u
Vector grad_norm_sq(const Grid& grid, const Vector& u);

struct AdjointDefect {
    double absolute = 0.0;
    double scaled = 0.0;  // absolute / (sum |terms| of both inner products)
};

// max over random smooth probe pairs (u, m) of
// |<L u, m>_vol - <u, L* m>_vol| with L = B.grad + Lap_g and
// L* m = Lap_g m - div_g(B m).
AdjointDefect adjoint_pair_check(const Grid& grid, const VectorField& drift, int probes = 10,
                                 std::uint64_t seed = 1);

// (d_i d_j f - Gamma^k_ij d_k f) v^i v^j at x, derivatives of f by Richardson-
// extrapolated central differences. v must be g-unit.
double covariant_hessian_quadratic(const ChartGeometry& geom, const std::function<double(const Vector&)>& f,
                                   const Vector& x, const Vector& v, double step = 1e-3);
// Same quadratic form for a grid field at node i, with grid differences.
double covariant_hessian_quadratic(const Grid& grid, const Vector& field, int node, const Vector& v);
// g^{ij}(d_i d_j f - Gamma^k_ij d_k f) at x.
double laplace_beltrami_at(const ChartGeometry& geom, const std::function<double(const Vector&)>& f,
                           const Vector& x, double step = 1e-3);

}  // namespace mfgeo
