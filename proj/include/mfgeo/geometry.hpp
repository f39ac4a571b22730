#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgeo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline std::span<const double> view(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

// Raised for chart points outside the admissible domain and for inputs that
// violate an operation's preconditions.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class GeometryKind { poincare_disk, flat_torus, conformal_torus };

// a*cos(theta) + b*sin(theta), theta = 2*pi*(kx*x/L1 + ky*y/L2).
struct FourierTerm {
    int kx = 0;
    int ky = 0;
    double cos_coef = 0.0;
    double sin_coef = 0.0;
};

struct MetricData {
    Matrix g;
    Matrix g_inv;
    double vol_weight = 0.0;
};

// Second-order part g^{ij} and first-order Christoffel part -g^{ij}Gamma^k_ij
// of the Laplace-Beltrami operator in the chart.
struct GeneratorCoeffs {
    Matrix diffusion;
    Vector drift_correction;
};

struct CurvatureData {
    double scalar = 0.0;
    std::optional<double> ricci;  // Ric(v, v) when a unit direction was given
    double ricci_lower_bound = 0.0;
};

namespace detail {
struct DistanceLattice;
}

// A model Riemannian manifold presented in one global chart. All three
// supported metrics are conformal, g = lambda(x)^2 * delta, which every
// evaluator below exploits; Christoffel symbols and generator coefficients
// are nevertheless assembled from the generic chart formulas.
class ChartGeometry {
public:
    // Unit ball of R^n with g = 4 delta / (1 - |x|^2)^2, truncated to |x| < r_max.
    static ChartGeometry poincare_disk(int dimension, double r_max = 0.95);
    // [0, L_1) x ... x [0, L_n) with the Euclidean metric.
    static ChartGeometry flat_torus(std::vector<double> periods);
    // 2-D torus with g = exp(2 phi) delta, phi a finite Fourier series.
    // Distances come from a shortest-path lattice with distance_resolution
    // nodes per axis.
    static ChartGeometry conformal_torus(std::array<double, 2> periods, std::vector<FourierTerm> exponent,
                                         int distance_resolution = 256);

    GeometryKind kind() const { return kind_; }
    std::string name() const;
    int dimension() const { return dim_; }
    bool periodic() const { return kind_ != GeometryKind::poincare_disk; }
    const std::vector<double>& periods() const { return periods_; }
    double r_max() const { return r_max_; }
    int distance_resolution() const { return distance_resolution_; }
    const std::vector<FourierTerm>& exponent_terms() const { return terms_; }

    bool admissible(std::span<const double> x) const noexcept;
    void require_admissible(std::span<const double> x) const;
    // Canonical representative: torus coordinates reduced to [0, L).
    Vector wrap(const Vector& x) const;

    // phi = log(lambda) and its flat-chart derivatives.
    double log_conformal(std::span<const double> x) const;
    void grad_log_conformal(std::span<const double> x, std::span<double> out) const;
    double flat_laplacian_log_conformal(std::span<const double> x) const;
    double conformal_factor(std::span<const double> x) const;
    double vol_weight(std::span<const double> x) const;

    MetricData metric_data_at(const Vector& x) const;
    // d[k](i, j) = d_k g_ij
    std::vector<Matrix> metric_derivatives(const Vector& x) const;
    // G[k](i, j) = Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    std::vector<Matrix> christoffel(const Vector& x) const;
    GeneratorCoeffs generator_coeffs_at(const Vector& x) const;
    double grad_norm_sq_at(const Vector& x, const Vector& p) const;

    double geodesic_distance(std::span<const double> x, std::span<const double> y) const;
    double geodesic_distance(const Vector& x, const Vector& y) const {
        return geodesic_distance(view(x), view(y));
    }
    // Distances from x to each row of targets (rows are chart points).
    std::vector<double> distances_from(const Vector& x, const Matrix& targets) const;
    // Upper bound on the distance between any two admissible points.
    double diameter() const;

    double scalar_curvature(const Vector& x) const;
    CurvatureData curvature_data_at(const Vector& x, const std::optional<Vector>& v = std::nullopt) const;
    // K2 >= 0 with Ric >= -K2 g everywhere.
    double ricci_lower_bound() const { return ricci_lower_bound_; }

    // Closed-form exponential map and geodesic translations exist for the disk
    // and the flat torus only.
    bool has_closed_form_isometries() const { return kind_ != GeometryKind::conformal_torus; }
    Vector exp_map(const Vector& x, const Vector& v) const;
    // The isometry translating along the geodesic from x in direction v by
    // |v|_g, applied to p. Maps x to exp_map(x, v).
    Vector translate(const Vector& x, const Vector& v, const Vector& p) const;

private:
    ChartGeometry() = default;

    GeometryKind kind_ = GeometryKind::flat_torus;
    int dim_ = 2;
    std::vector<double> periods_;
    double r_max_ = 0.0;
    std::vector<FourierTerm> terms_;
    int distance_resolution_ = 0;
    double ricci_lower_bound_ = 0.0;
    std::shared_ptr<const detail::DistanceLattice> lattice_;
};

// Moebius addition on the unit ball; z -> a (+) z is the hyperbolic isometry
// sending 0 to a.
Vector mobius_add(const Vector& a, const Vector& z);

}  // namespace mfgeo
