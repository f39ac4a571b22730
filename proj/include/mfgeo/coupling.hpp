#pragma once

#include "mfgeo/grid.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mfgeo {

// Interaction weight as a function of geodesic distance.
struct InteractionKernel {
    enum class Shape { constant, gaussian, exponential, inverse };
    Shape shape = Shape::exponential;
    double scale = 0.25;
    double amplitude = 1.0;

    // constant: a;  gaussian: a exp(-d^2 / 2s^2);  exponential: a exp(-d / s);
    // inverse: a / (1 + d / s), a bounded stand-in for 1/d.
    double operator()(double d) const;
    double sup() const { return amplitude; }
    double lipschitz() const;
    void validate() const;
};

InteractionKernel::Shape kernel_shape_from_name(const std::string& name);
std::string kernel_shape_name(InteractionKernel::Shape shape);

// c + sum_t a_t cos(theta_t) + b_t sin(theta_t), theta_t = 2 pi (kx x / L1 + ky y / L2)
// in chart coordinates.
struct ScalarProfile {
    double constant = 0.0;
    std::vector<FourierTerm> terms;
    std::array<double, 2> periods{1.0, 1.0};

    double operator()(std::span<const double> x) const;
    double sup_bound() const;  // |c| + sum |a| + |b|
    bool is_constant() const { return terms.empty(); }
};

enum class CouplingKind { kernel, anchored };

// kernel:   F(m)(x) = strength * int k(d(x, y)) f(y) m(dy)
// anchored: F(m)(x) = anchor(x) + strength * int k(d(x, y)) f(y) m(dy)
// With renormalize, the integral is divided by int k(d(x, y)) m(dy).
struct CouplingSpec {
    CouplingKind kind = CouplingKind::kernel;
    InteractionKernel kernel;
    ScalarProfile payoff{1.0, {}, {1.0, 1.0}};
    ScalarProfile anchor;
    double strength = 1.0;
    bool renormalize = false;
    // Coarse interpolation lattice cells per axis (>= 4); 0 evaluates exact node pairs.
    int lattice = 16;
};

// A coupling bound to a grid. Non-exact evaluation goes through tensor cubic
// B-splines P on a coarse lattice: F = anchor + strength * P^T K P (f m w),
// with K the kernel matrix of the lattice points. The quadratic form is then
// (P dm)^T K (P dm), so a positive semidefinite K gives an exactly monotone
// coupling, and translation invariance on the torus is preserved.
class Coupling {
public:
    Coupling(std::shared_ptr<const Grid> grid, CouplingSpec spec);

    const CouplingSpec& spec() const { return spec_; }
    const Grid& grid() const { return *grid_; }

    Vector evaluate(const Vector& density) const;
    std::vector<Vector> evaluate_flow(const std::vector<Vector>& densities) const;

    // sup |F(m)| over probability densities.
    double bound() const { return bound_; }
    // Lipschitz constant of F in W1, when the payoff is constant and there
    // is no renormalization; otherwise infinity.
    double w1_lipschitz() const;
    // False when F(m) cannot depend on m.
    bool depends_on_measure() const;
    // Smallest eigenvalue of the kernel matrix between evaluation points.
    double min_kernel_eigenvalue() const;
    int evaluation_points() const { return static_cast<int>(kernel_matrix_.rows()); }

private:
    std::shared_ptr<const Grid> grid_;
    CouplingSpec spec_;
    Vector payoff_;
    Vector anchor_;
    double bound_ = 0.0;
    bool exact_ = false;
    Matrix kernel_matrix_;
    // node -> (lattice point, basis weight) pairs
    std::vector<std::vector<std::pair<int, double>>> hats_;
};

// int (F(mu) - F(nu)) d(mu - nu) with the volume measure.
double monotonicity_gap(const Coupling& coupling, const Vector& mu, const Vector& nu);
double monotonicity_gap(const Grid& grid, const std::function<Vector(const Vector&)>& coupling, const Vector& mu,
                        const Vector& nu);

}  // namespace mfgeo
