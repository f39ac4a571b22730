#include "mfgeo/grid.hpp"

#include "mfgeo/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace mfgeo {

namespace {

// 3-point Gauss-Legendre on [-1/2, 1/2].
constexpr std::array<double, 3> gauss_nodes{-0.3872983346207417, 0.0, 0.3872983346207417};
constexpr std::array<double, 3> gauss_weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
constexpr int boundary_refinement = 7;

// Iterates the tensor product of `per_axis` points in `dim` dimensions.
template <class F>
void for_each_tensor_index(int dim, int per_axis, F&& f) {
    std::vector<int> idx(dim, 0);
    while (true) {
        f(idx);
        int k = 0;
        while (k < dim && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == dim) return;
    }
}

double cell_gauss_volume(const ChartGeometry& geom, const std::vector<double>& centre,
                         const std::vector<double>& h) {
    const int dim = static_cast<int>(centre.size());
    std::vector<double> x(dim);
    double total = 0.0;
    for_each_tensor_index(dim, 3, [&](const std::vector<int>& q) {
        double w = 1.0;
        for (int k = 0; k < dim; ++k) {
            x[k] = centre[k] + gauss_nodes[q[k]] * h[k];
            w *= gauss_weights[q[k]] * h[k];
        }
        total += w * geom.vol_weight(x);
    });
    return total;
}

// Metric volume of the cell intersected with the ball of radius r: cells
// straddling the sphere are bisected along every axis up to `depth` times,
// the finest level uses the midpoint indicator.
double cell_clipped_volume(const ChartGeometry& geom, const std::vector<double>& centre,
                           const std::vector<double>& h, double r, int depth) {
    const int dim = static_cast<int>(centre.size());
    double near = 0.0, far = 0.0;
    for (int k = 0; k < dim; ++k) {
        const double lo = std::max(0.0, std::abs(centre[k]) - 0.5 * h[k]);
        const double hi = std::abs(centre[k]) + 0.5 * h[k];
        near += lo * lo;
        far += hi * hi;
    }
    if (near >= r * r) return 0.0;
    if (far < r * r) return cell_gauss_volume(geom, centre, h);
    if (depth == 0) {
        double s = 0.0;
        for (double c : centre) s += c * c;
        return s < r * r ? cell_gauss_volume(geom, centre, h) : 0.0;
    }
    std::vector<double> half(h);
    for (double& v : half) v *= 0.5;
    std::vector<double> sub(dim);
    double total = 0.0;
    for_each_tensor_index(dim, 2, [&](const std::vector<int>& q) {
        for (int k = 0; k < dim; ++k) sub[k] = centre[k] + (q[k] - 0.5) * half[k];
        total += cell_clipped_volume(geom, sub, half, r, depth - 1);
    });
    return total;
}

void require_size(const Grid& grid, const Vector& f, const char* what) {
    if (f.size() != grid.size())
        throw DomainError(std::string(what) + ": field has " + std::to_string(f.size()) + " entries, grid has " +
                          std::to_string(grid.size()));
}

void require_drift(const Grid& grid, const VectorField& b) {
    if (b.rows() != grid.size() || b.cols() != grid.dimension())
        throw DomainError("drift field must have one row per node and one column per axis");
}

void require_unit(const ChartGeometry& geom, const Vector& x, const Vector& v) {
    if (v.size() != geom.dimension()) throw DomainError("tangent vector has wrong dimension");
    const double lam = geom.conformal_factor(view(x));
    const double norm2 = lam * lam * v.squaredNorm();
    if (std::abs(norm2 - 1.0) > 1e-10) throw DomainError("tangent vector is not unit length in the metric");
}

}  // namespace

Grid::Grid(std::shared_ptr<const ChartGeometry> geometry, int resolution)
    : geometry_(std::move(geometry)), resolution_(resolution) {
    if (!geometry_) throw std::invalid_argument("grid needs a geometry");
    if (resolution < 8) throw std::invalid_argument("grid resolution must be at least 8 per axis");
    const ChartGeometry& geom = *geometry_;
    dim_ = geom.dimension();
    const int n = resolution;
    const std::int64_t cells = cell_count();
    spacing_.resize(dim_);
    cell_to_node_.assign(static_cast<std::size_t>(cells), -1);

    if (geom.periodic()) {
        for (int k = 0; k < dim_; ++k) spacing_[k] = geom.periods()[k] / n;
        for (std::int64_t c = 0; c < cells; ++c) cell_to_node_[c] = static_cast<int>(c);
    } else {
        const double r = geom.r_max();
        for (int k = 0; k < dim_; ++k) spacing_[k] = 2.0 * r / n;
        int active = 0;
        for (std::int64_t c = 0; c < cells; ++c) {
            auto idx = cell_index(c);
            double s = 0.0;
            for (int k = 0; k < dim_; ++k) {
                double x = -r + (idx[k] + 0.5) * spacing_[k];
                s += x * x;
            }
            if (s < r * r) cell_to_node_[c] = active++;
        }
        if (active < (1 << dim_)) throw std::invalid_argument("truncation radius too small for the grid spacing");
    }

    const int nodes = static_cast<int>(std::count_if(cell_to_node_.begin(), cell_to_node_.end(), [](int v) {
        return v >= 0;
    }));
    coords_.resize(static_cast<std::size_t>(nodes) * dim_);
    weights_ = Vector::Zero(nodes);
    inv_metric_.resize(nodes);
    neighbors_.assign(static_cast<std::size_t>(nodes) * 2 * dim_, -1);
    boundary_.assign(nodes, 0);

    const double origin = geom.periodic() ? 0.0 : -geom.r_max();
    const double offset = geom.periodic() ? 0.0 : 0.5;
    for (std::int64_t c = 0; c < cells; ++c) {
        const int node = cell_to_node_[c];
        if (node < 0) continue;
        auto idx = cell_index(c);
        for (int k = 0; k < dim_; ++k) coords_[static_cast<std::size_t>(node) * dim_ + k] = origin + (idx[k] + offset) * spacing_[k];
        for (int k = 0; k < dim_; ++k)
            for (int dir : {-1, 1}) {
                auto j = idx;
                j[k] += dir;
                int target = -1;
                if (geom.periodic()) {
                    j[k] = (j[k] + n) % n;
                    target = cell_to_node_[cell_of(j)];
                } else if (j[k] >= 0 && j[k] < n) {
                    target = cell_to_node_[cell_of(j)];
                }
                neighbors_[static_cast<std::size_t>(node) * 2 * dim_ + 2 * k + (dir > 0 ? 1 : 0)] = target;
                if (target < 0) boundary_[node] = 1;
            }
    }

    // Volume weights: cell integrals of sqrt(det g).
    const double r = geom.r_max();
    std::vector<double> cell_volume(static_cast<std::size_t>(cells), 0.0);
    parallel_for(static_cast<std::size_t>(cells), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> centre(dim_);
        for (std::size_t c = lo; c < hi; ++c) {
            auto idx = cell_index(static_cast<std::int64_t>(c));
            for (int k = 0; k < dim_; ++k) centre[k] = origin + (idx[k] + offset) * spacing_[k];
            if (geom.periodic()) {
                cell_volume[c] = cell_gauss_volume(geom, centre, spacing_);
                continue;
            }
            cell_volume[c] = cell_clipped_volume(geom, centre, spacing_, r, boundary_refinement);
        }
    });

    cell_fallback_.assign(static_cast<std::size_t>(cells), -1);
    for (std::int64_t c = 0; c < cells; ++c) {
        int node = cell_to_node_[c];
        if (node >= 0) {
            cell_fallback_[c] = node;
            weights_[node] += cell_volume[c];
            continue;
        }
        // Inactive cell: nearest active node by chart distance between centres.
        auto idx = cell_index(c);
        double best = std::numeric_limits<double>::infinity();
        int best_node = -1;
        for (int i = 0; i < nodes; ++i) {
            if (!boundary_[i]) continue;
            double s = 0.0;
            for (int k = 0; k < dim_; ++k) {
                double d = coords_[static_cast<std::size_t>(i) * dim_ + k] - (origin + (idx[k] + offset) * spacing_[k]);
                s += d * d;
            }
            if (s < best) {
                best = s;
                best_node = i;
            }
        }
        cell_fallback_[c] = best_node;
        if (cell_volume[c] > 0.0) weights_[best_node] += cell_volume[c];
    }

    for (int i = 0; i < nodes; ++i) {
        double lam = geom.conformal_factor(node(i));
        inv_metric_[i] = 1.0 / (lam * lam);
    }

    // Stiffness: one entry per face, coefficient lambda(face)^(n-2) * face area / h.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nodes) * (2 * dim_ + 1));
    std::vector<double> face(dim_);
    face_coef_.assign(static_cast<std::size_t>(nodes) * dim_, 0.0);
    for (int i = 0; i < nodes; ++i) {
        for (int k = 0; k < dim_; ++k) {
            int j = neighbor(i, k, +1);
            if (j < 0) continue;
            for (int l = 0; l < dim_; ++l) face[l] = coords_[static_cast<std::size_t>(i) * dim_ + l];
            face[k] += 0.5 * spacing_[k];
            double area = 1.0;
            for (int l = 0; l < dim_; ++l)
                if (l != k) area *= spacing_[l];
            const double lam = geom.conformal_factor(face);
            const double a = std::pow(lam, dim_ - 2) * area / spacing_[k];
            face_coef_[static_cast<std::size_t>(i) * dim_ + k] = std::pow(lam, dim_) * area;
            trips.emplace_back(i, i, a);
            trips.emplace_back(j, j, a);
            trips.emplace_back(i, j, -a);
            trips.emplace_back(j, i, -a);
        }
    }
    stiffness_.resize(nodes, nodes);
    stiffness_.setFromTriplets(trips.begin(), trips.end());
    stiffness_.makeCompressed();
}

std::int64_t Grid::cell_count() const {
    std::int64_t c = 1;
    for (int k = 0; k < dim_; ++k) c *= resolution_;
    return c;
}

std::vector<int> Grid::cell_index(std::int64_t c) const {
    std::vector<int> idx(dim_);
    for (int k = 0; k < dim_; ++k) {
        idx[k] = static_cast<int>(c % resolution_);
        c /= resolution_;
    }
    return idx;
}

std::int64_t Grid::cell_of(const std::vector<int>& idx) const {
    std::int64_t c = 0;
    for (int k = dim_ - 1; k >= 0; --k) c = c * resolution_ + idx[k];
    return c;
}

double Grid::min_spacing() const { return *std::min_element(spacing_.begin(), spacing_.end()); }

Vector Grid::node_vector(int i) const {
    auto p = node(i);
    return Eigen::Map<const Vector>(p.data(), dim_);
}

Matrix Grid::coordinate_matrix() const {
    Matrix m(size(), dim_);
    for (int i = 0; i < size(); ++i)
        for (int k = 0; k < dim_; ++k) m(i, k) = coords_[static_cast<std::size_t>(i) * dim_ + k];
    return m;
}

int Grid::locate(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim_) throw DomainError("point has wrong dimension");
    std::vector<int> idx(dim_);
    if (periodic()) {
        for (int k = 0; k < dim_; ++k) {
            const double period = geometry_->periods()[k];
            double u = x[k] - period * std::floor(x[k] / period);
            idx[k] = static_cast<int>(std::lround(u / spacing_[k])) % resolution_;
        }
        return cell_to_node_[cell_of(idx)];
    }
    const double r = geometry_->r_max();
    for (int k = 0; k < dim_; ++k)
        idx[k] = std::clamp(static_cast<int>(std::floor((x[k] + r) / spacing_[k])), 0, resolution_ - 1);
    return cell_fallback_[cell_of(idx)];
}

DiscreteField DiscreteField::value_field(std::shared_ptr<const Grid> grid, Vector values) {
    require_size(*grid, values, "value field");
    return {std::move(grid), std::move(values), FieldKind::value};
}

DiscreteField DiscreteField::density_field(std::shared_ptr<const Grid> grid, Vector values) {
    Vector m = normalize_density(*grid, std::move(values));
    return {std::move(grid), std::move(m), FieldKind::density};
}

Vector sample_on_grid(const Grid& grid, const std::function<double(std::span<const double>)>& f) {
    Vector out(grid.size());
    for (int i = 0; i < grid.size(); ++i) out[i] = f(grid.node(i));
    return out;
}

Vector normalize_density(const Grid& grid, Vector m) {
    require_size(grid, m, "density");
    for (int i = 0; i < m.size(); ++i)
        if (!(m[i] >= 0.0) || !std::isfinite(m[i])) throw DomainError("density has a negative or non-finite entry");
    const double mass = integrate_volume(grid, m);
    if (!(mass > 0.0)) throw DomainError("density has zero mass");
    return m / mass;
}

double integrate_volume(const Grid& grid, const Vector& field) {
    require_size(grid, field, "integrate_volume");
    long double s = 0.0L;
    const Vector& w = grid.weights();
    for (int i = 0; i < field.size(); ++i) s += static_cast<long double>(field[i]) * w[i];
    return static_cast<double>(s);
}

Vector apply_laplace_beltrami(const Grid& grid, const Vector& u) {
    require_size(grid, u, "laplace_beltrami");
    Vector ku = grid.stiffness() * u;
    return -(ku.array() / grid.weights().array()).matrix();
}

namespace {

// Jump rate from i across the face shared with neighbour j = neighbor(i, k, dir)
// (0 if absent). The face drift is the mean of the two node drifts.
inline double jump_rate(const Grid& grid, const VectorField& drift, int i, int k, int dir) {
    const int j = grid.neighbor(i, k, dir);
    if (j < 0) return 0.0;
    const double b = 0.5 * (drift(i, k) + drift(j, k));
    const double along = dir > 0 ? b : -b;
    if (along <= 0.0) return 0.0;
    const int lower = dir > 0 ? i : j;
    return along * grid.face_flux_coef(lower, k) / grid.weights()[i];
}

}  // namespace

ImplicitDiffusion::ImplicitDiffusion(const Grid& grid, double tau) : tau_(tau), weights_(grid.weights()) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("implicit diffusion: step must be positive");
    SparseMatrix a = tau * grid.stiffness();
    for (int i = 0; i < grid.size(); ++i) a.coeffRef(i, i) += weights_[i];
    solver_.compute(a);
    if (solver_.info() != Eigen::Success) throw std::runtime_error("implicit diffusion: factorization failed");
}

Vector ImplicitDiffusion::apply(const Vector& f) const {
    if (f.size() != weights_.size()) throw DomainError("implicit diffusion: field does not match the grid");
    return solver_.solve((weights_.array() * f.array()).matrix());
}

Vector apply_advection(const Grid& grid, const Vector& field, const VectorField& drift, AdvectionForm form) {
    require_size(grid, field, "advection");
    require_drift(grid, drift);
    const int n = grid.size();
    const int dim = grid.dimension();
    Vector out = Vector::Zero(n);
    if (form == AdvectionForm::gradient) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
            for (auto i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
                double s = 0.0;
                for (int k = 0; k < dim; ++k)
                    for (int dir : {-1, 1}) {
                        const double rate = jump_rate(grid, drift, i, k, dir);
                        if (rate > 0.0) s += rate * (field[grid.neighbor(i, k, dir)] - field[i]);
                    }
                out[i] = s;
            }
        });
        return out;
    }
    // div(B m) = -W^{-1} D^T W m: outgoing minus incoming mass flux.
    const Vector& w = grid.weights();
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        for (auto i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
            double outflow = 0.0;
            double inflow = 0.0;
            for (int k = 0; k < dim; ++k)
                for (int dir : {-1, 1}) {
                    outflow += jump_rate(grid, drift, i, k, dir) * w[i] * field[i];
                    const int j = grid.neighbor(i, k, dir);
                    if (j >= 0) inflow += jump_rate(grid, drift, j, k, -dir) * w[j] * field[j];
                }
            out[i] = (outflow - inflow) / w[i];
        }
    });
    return out;
}

double max_upwind_rate(const Grid& grid, const VectorField& drift) {
    require_drift(grid, drift);
    double best = 0.0;
    for (int i = 0; i < grid.size(); ++i) {
        double s = 0.0;
        for (int k = 0; k < grid.dimension(); ++k)
            for (int dir : {-1, 1}) s += jump_rate(grid, drift, i, k, dir);
        best = std::max(best, s);
    }
    return best;
}

VectorField chart_gradient(const Grid& grid, const Vector& u) {
    require_size(grid, u, "gradient");
    const int n = grid.size();
    const int dim = grid.dimension();
    VectorField g(n, dim);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < dim; ++k) {
            const int lo = grid.neighbor(i, k, -1);
            const int hi = grid.neighbor(i, k, +1);
            const double h = grid.spacing(k);
            if (lo >= 0 && hi >= 0)
                g(i, k) = (u[hi] - u[lo]) / (2.0 * h);
            else if (hi >= 0)
                g(i, k) = (u[hi] - u[i]) / h;
            else if (lo >= 0)
                g(i, k) = (u[i] - u[lo]) / h;
            else
                g(i, k) = 0.0;
        }
    return g;
}

VectorField metric_gradient(const Grid& grid, const Vector& u) {
    VectorField g = chart_gradient(grid, u);
    for (int k = 0; k < grid.dimension(); ++k) g.col(k).array() *= grid.inverse_metric().array();
    return g;
}

Vector grad_norm_sq(const Grid& grid, const Vector& u) {
    VectorField g = chart_gradient(grid, u);
    return (g.rowwise().squaredNorm().array() * grid.inverse_metric().array()).matrix();
}

AdjointDefect adjoint_pair_check(const Grid& grid, const VectorField& drift, int probes, std::uint64_t seed) {
    require_drift(grid, drift);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int dim = grid.dimension();
    const Matrix xs = grid.coordinate_matrix();
    const Vector& w = grid.weights();

    auto probe = [&]() {
        Vector f = Vector::Constant(grid.size(), unif(rng));
        for (int t = 0; t < 3; ++t) {
            Vector freq(dim);
            for (int k = 0; k < dim; ++k) {
                const double base = grid.periodic() ? 2.0 * std::numbers::pi / grid.geometry().periods()[k] : 1.0;
                freq[k] = base * std::floor(unif(rng) * 4.0 - 1.5);
            }
            const double amp = unif(rng) - 0.5;
            const double phase = 2.0 * std::numbers::pi * unif(rng);
            f.array() += amp * ((xs * freq).array() + phase).sin();
        }
        return f;
    };

    AdjointDefect worst;
    for (int p = 0; p < probes; ++p) {
        const Vector u = probe();
        const Vector m = probe().array().abs() + 0.1;
        const Vector lu = apply_advection(grid, u, drift, AdvectionForm::gradient) + apply_laplace_beltrami(grid, u);
        const Vector lsm =
            apply_laplace_beltrami(grid, m) - apply_advection(grid, m, drift, AdvectionForm::divergence);
        long double lhs = 0.0L, rhs = 0.0L, scale = 0.0L;
        for (int i = 0; i < grid.size(); ++i) {
            const long double a = static_cast<long double>(lu[i]) * m[i] * w[i];
            const long double b = static_cast<long double>(u[i]) * lsm[i] * w[i];
            lhs += a;
            rhs += b;
            scale += std::abs(a) + std::abs(b);
        }
        const double abs_defect = static_cast<double>(std::abs(lhs - rhs));
        worst.absolute = std::max(worst.absolute, abs_defect);
        if (scale > 0.0L) worst.scaled = std::max(worst.scaled, static_cast<double>(abs_defect / scale));
    }
    return worst;
}

namespace {

// Richardson-extrapolated first and second chart derivatives of f at x.
void chart_derivatives(const std::function<double(const Vector&)>& f, const Vector& x, double step, Vector& grad,
                       Matrix& hess) {
    const int dim = static_cast<int>(x.size());
    auto at = [&](double h, auto&& build) {
        Vector g(dim);
        Matrix H(dim, dim);
        build(h, g, H);
        return std::pair{g, H};
    };
    auto build = [&](double h, Vector& g, Matrix& H) {
        const double f0 = f(x);
        for (int i = 0; i < dim; ++i) {
            Vector e = Vector::Zero(dim);
            e[i] = h;
            const double fp = f(x + e);
            const double fm = f(x - e);
            g[i] = (fp - fm) / (2.0 * h);
            H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
            for (int j = 0; j < i; ++j) {
                Vector d = Vector::Zero(dim);
                d[j] = h;
                const double v = (f(x + e + d) - f(x + e - d) - f(x - e + d) + f(x - e - d)) / (4.0 * h * h);
                H(i, j) = v;
                H(j, i) = v;
            }
        }
    };
    auto [g1, h1] = at(step, build);
    auto [g2, h2] = at(0.5 * step, build);
    grad = (4.0 * g2 - g1) / 3.0;
    hess = (4.0 * h2 - h1) / 3.0;
}

double covariant_form(const ChartGeometry& geom, const Vector& x, const Vector& grad, const Matrix& hess,
                      const Matrix& weight) {
    const std::vector<Matrix> gamma = geom.christoffel(x);
    Matrix cov = hess;
    for (int k = 0; k < geom.dimension(); ++k) cov -= grad[k] * gamma[k];
    return cov.cwiseProduct(weight).sum();
}

}  // namespace

double covariant_hessian_quadratic(const ChartGeometry& geom, const std::function<double(const Vector&)>& f,
                                   const Vector& x, const Vector& v, double step) {
    geom.require_admissible(view(x));
    require_unit(geom, x, v);
    Vector grad;
    Matrix hess;
    chart_derivatives(f, x, step, grad, hess);
    return covariant_form(geom, x, grad, hess, v * v.transpose());
}

double laplace_beltrami_at(const ChartGeometry& geom, const std::function<double(const Vector&)>& f,
                           const Vector& x, double step) {
    const MetricData md = geom.metric_data_at(x);
    Vector grad;
    Matrix hess;
    chart_derivatives(f, x, step, grad, hess);
    return covariant_form(geom, x, grad, hess, md.g_inv);
}

double covariant_hessian_quadratic(const Grid& grid, const Vector& field, int node, const Vector& v) {
    require_size(grid, field, "covariant_hessian");
    if (node < 0 || node >= grid.size()) throw DomainError("node index out of range");
    const Vector x = grid.node_vector(node);
    require_unit(grid.geometry(), x, v);
    const int dim = grid.dimension();
    auto step = [&](int i, int k, int dir) {
        const int j = i < 0 ? -1 : grid.neighbor(i, k, dir);
        return j;
    };
    Vector grad(dim);
    Matrix hess(dim, dim);
    for (int k = 0; k < dim; ++k) {
        const int lo = step(node, k, -1);
        const int hi = step(node, k, +1);
        if (lo < 0 || hi < 0) throw DomainError("covariant Hessian needs an interior node");
        const double h = grid.spacing(k);
        grad[k] = (field[hi] - field[lo]) / (2.0 * h);
        hess(k, k) = (field[hi] - 2.0 * field[node] + field[lo]) / (h * h);
    }
    for (int k = 0; k < dim; ++k)
        for (int l = 0; l < k; ++l) {
            const int pp = step(step(node, k, +1), l, +1);
            const int pm = step(step(node, k, +1), l, -1);
            const int mp = step(step(node, k, -1), l, +1);
            const int mm = step(step(node, k, -1), l, -1);
            if (pp < 0 || pm < 0 || mp < 0 || mm < 0) throw DomainError("covariant Hessian needs an interior node");
            const double val =
                (field[pp] - field[pm] - field[mp] + field[mm]) / (4.0 * grid.spacing(k) * grid.spacing(l));
            hess(k, l) = val;
            hess(l, k) = val;
        }
    return covariant_form(grid.geometry(), x, grad, hess, v * v.transpose());
}

}  // namespace mfgeo
