#include "mfgeo/coupling.hpp"

#include "mfgeo/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace mfgeo {

double InteractionKernel::operator()(double d) const {
    switch (shape) {
    case Shape::constant: return amplitude;
    case Shape::gaussian: return amplitude * std::exp(-d * d / (2.0 * scale * scale));
    case Shape::exponential: return amplitude * std::exp(-d / scale);
    case Shape::inverse: return amplitude / (1.0 + d / scale);
    }
    return 0.0;
}

double InteractionKernel::lipschitz() const {
    switch (shape) {
    case Shape::constant: return 0.0;
    case Shape::gaussian: return amplitude * std::exp(-0.5) / scale;  // max of |d/dd| at d = s
    case Shape::exponential:
    case Shape::inverse: return amplitude / scale;
    }
    return 0.0;
}

void InteractionKernel::validate() const {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw DomainError("kernel amplitude must be finite and nonnegative");
    if (shape != Shape::constant && (!(scale > 0.0) || !std::isfinite(scale)))
        throw DomainError("kernel scale must be positive");
}

InteractionKernel::Shape kernel_shape_from_name(const std::string& name) {
    if (name == "constant") return InteractionKernel::Shape::constant;
    if (name == "gaussian") return InteractionKernel::Shape::gaussian;
    if (name == "exponential") return InteractionKernel::Shape::exponential;
    if (name == "inverse") return InteractionKernel::Shape::inverse;
    throw DomainError("unknown kernel shape '" + name + "'");
}

std::string kernel_shape_name(InteractionKernel::Shape shape) {
    switch (shape) {
    case InteractionKernel::Shape::constant: return "constant";
    case InteractionKernel::Shape::gaussian: return "gaussian";
    case InteractionKernel::Shape::exponential: return "exponential";
    case InteractionKernel::Shape::inverse: return "inverse";
    }
    return "?";
}

double ScalarProfile::operator()(std::span<const double> x) const {
    double v = constant;
    for (const auto& t : terms) {
        double theta = 2.0 * std::numbers::pi * t.kx * x[0] / periods[0];
        if (x.size() > 1) theta += 2.0 * std::numbers::pi * t.ky * x[1] / periods[1];
        v += t.cos_coef * std::cos(theta) + t.sin_coef * std::sin(theta);
    }
    return v;
}

double ScalarProfile::sup_bound() const {
    double s = std::abs(constant);
    for (const auto& t : terms) s += std::abs(t.cos_coef) + std::abs(t.sin_coef);
    return s;
}

namespace {

struct Lattice {
    std::vector<Vector> points;
    std::vector<std::vector<std::pair<int, double>>> hats;
};

// Uniform cubic B-spline weights for lattice offsets -1, 0, 1, 2 at fraction f.
std::array<double, 4> cubic_bspline(double f) {
    const double g = 1.0 - f;
    return {g * g * g / 6.0, (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0,
            (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0, f * f * f / 6.0};
}

// Tensor cubic B-splines on a coarse lattice: periodic on tori, on the box
// [-R, R]^n padded by one cell for the disk (lattice points outside the ball
// are pulled radially inside for distance evaluation). The basis is a
// nonnegative C^2 partition of unity.
Lattice build_lattice(const Grid& grid, int cells) {
    const ChartGeometry& geom = grid.geometry();
    const int dim = grid.dimension();
    const bool periodic = geom.periodic();
    if (periodic && cells < 4) throw DomainError("coupling: periodic lattices need at least 4 cells per axis");
    // lattice index a sits at origin + a * step; the disk uses a in [-1, cells + 1]
    const int per_axis = periodic ? cells : cells + 3;
    const int shift = periodic ? 0 : 1;
    std::vector<double> origin(dim), step(dim);
    for (int k = 0; k < dim; ++k) {
        origin[k] = periodic ? 0.0 : -geom.r_max();
        step[k] = (periodic ? geom.periods()[k] : 2.0 * geom.r_max()) / cells;
    }

    std::map<long, int> used;
    Lattice lat;
    lat.hats.resize(grid.size());
    std::vector<int> base(dim);
    std::vector<std::array<double, 4>> taps(dim);
    for (int i = 0; i < grid.size(); ++i) {
        const auto x = grid.node(i);
        for (int k = 0; k < dim; ++k) {
            const double t = (x[k] - origin[k]) / step[k];
            base[k] = std::clamp(static_cast<int>(std::floor(t)), 0, cells - 1);
            taps[k] = cubic_bspline(std::clamp(t - base[k], 0.0, 1.0));
        }
        int corners = 1;
        for (int k = 0; k < dim; ++k) corners *= 4;
        for (int c = 0; c < corners; ++c) {
            double weight = 1.0;
            long key = 0;
            int rest = c;
            std::vector<int> off(dim);
            for (int k = 0; k < dim; ++k) {
                off[k] = rest % 4;
                rest /= 4;
            }
            for (int k = dim - 1; k >= 0; --k) {
                weight *= taps[k][off[k]];
                int idx = base[k] + off[k] - 1 + shift;
                if (periodic) idx = ((idx % per_axis) + per_axis) % per_axis;
                key = key * per_axis + idx;
            }
            if (weight <= 0.0) continue;
            auto [it, fresh] = used.try_emplace(key, static_cast<int>(used.size()));
            lat.hats[i].emplace_back(it->second, weight);
        }
    }
    lat.points.assign(used.size(), Vector());
    for (const auto& [key, slot] : used) {
        Vector p(dim);
        long rest = key;
        for (int k = 0; k < dim; ++k) {
            p[k] = origin[k] + static_cast<double>(rest % per_axis - shift) * step[k];
            rest /= per_axis;
        }
        if (!periodic) {
            const double limit = geom.r_max() * (1.0 - 1e-9);
            const double r = p.norm();
            if (r >= limit) p *= limit / r;
        }
        lat.points[slot] = p;
    }
    return lat;
}

Matrix kernel_matrix(const ChartGeometry& geom, const InteractionKernel& kernel, const std::vector<Vector>& pts) {
    const int n = static_cast<int>(pts.size());
    Matrix targets(n, geom.dimension());
    for (int i = 0; i < n; ++i) targets.row(i) = pts[i].transpose();
    Matrix k(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (auto i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
            const auto d = geom.distances_from(pts[i], targets);
            for (int j = 0; j < n; ++j) k(i, j) = kernel(d[j]);
        }
    });
    // symmetrize away lattice-distance asymmetries
    return 0.5 * (k + k.transpose());
}

constexpr int exact_limit = 3000;

}  // namespace

Coupling::Coupling(std::shared_ptr<const Grid> grid, CouplingSpec spec) : grid_(std::move(grid)), spec_(std::move(spec)) {
    if (!grid_) throw DomainError("coupling: missing grid");
    spec_.kernel.validate();
    if (!std::isfinite(spec_.strength)) throw DomainError("coupling: strength must be finite");
    if (spec_.lattice < 0 || (spec_.lattice > 0 && spec_.lattice < 4)) throw DomainError("coupling: lattice must be 0 or at least 4");
    const Grid& g = *grid_;
    payoff_ = sample_on_grid(g, [&](auto x) { return spec_.payoff(x); });
    anchor_ = spec_.kind == CouplingKind::anchored ? sample_on_grid(g, [&](auto x) { return spec_.anchor(x); })
                                                  : Vector::Zero(g.size());
    if (spec_.renormalize && spec_.kernel.amplitude <= 0.0)
        throw DomainError("coupling: renormalization needs a positive kernel");

    exact_ = spec_.lattice == 0;
    if (exact_) {
        if (g.size() > exact_limit) throw DomainError("coupling: exact pairwise evaluation is limited to small grids");
        std::vector<Vector> pts;
        for (int i = 0; i < g.size(); ++i) pts.push_back(g.node_vector(i));
        kernel_matrix_ = kernel_matrix(g.geometry(), spec_.kernel, pts);
    } else {
        Lattice lat = build_lattice(g, spec_.lattice);
        kernel_matrix_ = kernel_matrix(g.geometry(), spec_.kernel, lat.points);
        hats_ = std::move(lat.hats);
    }
    if (!kernel_matrix_.allFinite()) throw DomainError("coupling: kernel is not finite on the domain");

    const double payoff_sup = payoff_.lpNorm<Eigen::Infinity>();
    const double anchor_sup = anchor_.size() ? anchor_.lpNorm<Eigen::Infinity>() : 0.0;
    bound_ = anchor_sup + std::abs(spec_.strength) * payoff_sup * (spec_.renormalize ? 1.0 : spec_.kernel.sup());
}

Vector Coupling::evaluate(const Vector& density) const {
    const Grid& g = *grid_;
    if (density.size() != g.size()) throw DomainError("coupling: density does not match the grid");
    const Vector& w = g.weights();
    auto smooth = [&](const Vector& source) -> Vector {
        // source holds node masses; returns int k(d(x_i, y)) source(dy) at nodes
        if (exact_) return kernel_matrix_ * source;
        Vector coarse = Vector::Zero(kernel_matrix_.rows());
        for (int i = 0; i < g.size(); ++i)
            for (const auto& [p, h] : hats_[i]) coarse[p] += h * source[i];
        const Vector field = kernel_matrix_ * coarse;
        Vector out(g.size());
        parallel_for(static_cast<std::size_t>(g.size()), [&](std::size_t lo, std::size_t hi) {
            for (auto i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
                double s = 0.0;
                for (const auto& [p, h] : hats_[i]) s += h * field[p];
                out[i] = s;
            }
        });
        return out;
    };
    const Vector mass = (density.array() * w.array()).matrix();
    Vector f = smooth((payoff_.array() * mass.array()).matrix());
    if (spec_.renormalize) {
        const Vector norm = smooth(mass);
        for (int i = 0; i < g.size(); ++i) f[i] = norm[i] > 0.0 ? f[i] / norm[i] : 0.0;
    }
    return anchor_ + spec_.strength * f;
}

std::vector<Vector> Coupling::evaluate_flow(const std::vector<Vector>& densities) const {
    std::vector<Vector> out;
    out.reserve(densities.size());
    for (const auto& m : densities) out.push_back(evaluate(m));
    return out;
}

double Coupling::w1_lipschitz() const {
    if (spec_.renormalize || !spec_.payoff.is_constant()) return std::numeric_limits<double>::infinity();
    return std::abs(spec_.strength * spec_.payoff.constant) * spec_.kernel.lipschitz();
}

bool Coupling::depends_on_measure() const {
    if (spec_.strength == 0.0 || spec_.kernel.amplitude == 0.0) return false;
    const bool flat_kernel = spec_.kernel.shape == InteractionKernel::Shape::constant;
    return !(flat_kernel && spec_.payoff.is_constant());
}

double Coupling::min_kernel_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(kernel_matrix_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double monotonicity_gap(const Grid& grid, const std::function<Vector(const Vector&)>& coupling, const Vector& mu,
                        const Vector& nu) {
    if (mu.size() != grid.size() || nu.size() != grid.size())
        throw DomainError("monotonicity_gap: density does not match the grid");
    const Vector df = coupling(mu) - coupling(nu);
    return integrate_volume(grid, (df.array() * (mu - nu).array()).matrix());
}

double monotonicity_gap(const Coupling& coupling, const Vector& mu, const Vector& nu) {
    return monotonicity_gap(coupling.grid(), [&](const Vector& m) { return coupling.evaluate(m); }, mu, nu);
}

}  // namespace mfgeo
