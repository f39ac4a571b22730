#include "mfgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

namespace mfgeo {

namespace detail {

// Shortest-path lattice approximating conformal-torus distances. Nodes sit at
// (i*hx, j*hy); each node links to 16 neighbours (axis, diagonal and knight
// moves) with metric lengths integrated by Simpson's rule. The knight moves
// keep the lattice metric within ~2.7% of the continuum one in every
// direction; on top of that the error is O(h).
struct DistanceLattice {
    int m = 0;
    double hx = 0.0;
    double hy = 0.0;
    std::vector<double> node_lambda;
    std::vector<double> edge_length;  // m*m*16

    static constexpr std::array<std::array<int, 2>, 16> offsets{{{1, 0},
                                                                 {0, 1},
                                                                 {-1, 0},
                                                                 {0, -1},
                                                                 {1, 1},
                                                                 {1, -1},
                                                                 {-1, 1},
                                                                 {-1, -1},
                                                                 {1, 2},
                                                                 {2, 1},
                                                                 {-1, 2},
                                                                 {-2, 1},
                                                                 {1, -2},
                                                                 {2, -1},
                                                                 {-1, -2},
                                                                 {-2, -1}}};

    int index(int i, int j) const { return ((i % m + m) % m) * m + ((j % m + m) % m); }

    int snap(std::span<const double> x, double lx, double ly) const {
        double u = x[0] - lx * std::floor(x[0] / lx);
        double v = x[1] - ly * std::floor(x[1] / ly);
        return index(static_cast<int>(std::lround(u / hx)), static_cast<int>(std::lround(v / hy)));
    }

    // Dijkstra from source; stops early once target (if >= 0) is settled.
    std::vector<double> run(int source, int target) const {
        const int n = m * m;
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        std::vector<char> done(n, 0);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[source] = 0.0;
        heap.emplace(0.0, source);
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            heap.pop();
            if (done[u]) continue;
            done[u] = 1;
            if (u == target) break;
            const int i = u / m;
            const int j = u % m;
            for (int k = 0; k < 16; ++k) {
                int v = index(i + offsets[k][0], j + offsets[k][1]);
                double nd = d + edge_length[static_cast<std::size_t>(u) * 16 + k];
                if (nd < dist[v]) {
                    dist[v] = nd;
                    heap.emplace(nd, v);
                }
            }
        }
        return dist;
    }
};

}  // namespace detail

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double sq_norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
}

double wrapped_delta(double a, double b, double period) {
    double d = std::fmod(std::abs(a - b), period);
    return std::min(d, period - d);
}

}  // namespace

ChartGeometry ChartGeometry::poincare_disk(int dimension, double r_max) {
    if (dimension < 1) throw DomainError("poincare_disk: dimension must be positive");
    if (!(r_max > 0.0 && r_max < 1.0)) throw DomainError("poincare_disk: r_max must lie in (0, 1)");
    ChartGeometry g;
    g.kind_ = GeometryKind::poincare_disk;
    g.dim_ = dimension;
    g.r_max_ = r_max;
    g.ricci_lower_bound_ = static_cast<double>(dimension - 1);
    return g;
}

ChartGeometry ChartGeometry::flat_torus(std::vector<double> periods) {
    if (periods.empty()) throw DomainError("flat_torus: need at least one period");
    for (double p : periods)
        if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("flat_torus: periods must be positive");
    ChartGeometry g;
    g.kind_ = GeometryKind::flat_torus;
    g.dim_ = static_cast<int>(periods.size());
    g.periods_ = std::move(periods);
    return g;
}

ChartGeometry ChartGeometry::conformal_torus(std::array<double, 2> periods, std::vector<FourierTerm> exponent,
                                             int distance_resolution) {
    for (double p : periods)
        if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("conformal_torus: periods must be positive");
    if (distance_resolution < 8) throw DomainError("conformal_torus: distance_resolution must be >= 8");
    ChartGeometry g;
    g.kind_ = GeometryKind::conformal_torus;
    g.dim_ = 2;
    g.periods_ = {periods[0], periods[1]};
    g.terms_ = std::move(exponent);
    g.distance_resolution_ = distance_resolution;

    auto lattice = std::make_shared<detail::DistanceLattice>();
    const int m = distance_resolution;
    lattice->m = m;
    lattice->hx = periods[0] / m;
    lattice->hy = periods[1] / m;
    lattice->node_lambda.resize(static_cast<std::size_t>(m) * m);
    lattice->edge_length.resize(static_cast<std::size_t>(m) * m * 16);
    double min_r = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const std::array<double, 2> p{i * lattice->hx, j * lattice->hy};
            const double lam = g.conformal_factor(p);
            const int u = i * m + j;
            lattice->node_lambda[u] = lam;
            min_r = std::min(min_r, -2.0 * std::exp(-2.0 * g.log_conformal(p)) * g.flat_laplacian_log_conformal(p));
            for (int k = 0; k < 16; ++k) {
                const double dx = detail::DistanceLattice::offsets[k][0] * lattice->hx;
                const double dy = detail::DistanceLattice::offsets[k][1] * lattice->hy;
                const std::array<double, 2> mid{p[0] + 0.5 * dx, p[1] + 0.5 * dy};
                const std::array<double, 2> end{p[0] + dx, p[1] + dy};
                const double simpson =
                    (lam + 4.0 * g.conformal_factor(mid) + g.conformal_factor(end)) / 6.0;
                lattice->edge_length[static_cast<std::size_t>(u) * 16 + k] = simpson * std::hypot(dx, dy);
            }
        }
    }
    // 2-D: Ric = (R/2) g
    g.ricci_lower_bound_ = std::max(0.0, -0.5 * min_r);
    g.lattice_ = std::move(lattice);
    return g;
}

std::string ChartGeometry::name() const {
    std::ostringstream os;
    switch (kind_) {
        case GeometryKind::poincare_disk: os << "poincare_disk(n=" << dim_ << ", r_max=" << r_max_ << ")"; break;
        case GeometryKind::flat_torus: os << "flat_torus(n=" << dim_ << ")"; break;
        case GeometryKind::conformal_torus: os << "conformal_torus(terms=" << terms_.size() << ")"; break;
    }
    return os.str();
}

bool ChartGeometry::admissible(std::span<const double> x) const noexcept {
    if (static_cast<int>(x.size()) != dim_) return false;
    for (double v : x)
        if (!std::isfinite(v)) return false;
    if (kind_ == GeometryKind::poincare_disk) return sq_norm(x) < r_max_ * r_max_;
    return true;
}

void ChartGeometry::require_admissible(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim_) throw DomainError("chart point has wrong dimension");
    for (double v : x)
        if (!std::isfinite(v)) throw DomainError("chart point is not finite");
    if (kind_ == GeometryKind::poincare_disk) {
        const double r2 = sq_norm(x);
        if (r2 >= 1.0) throw DomainError("point outside the unit ball: disk metric is not finite there");
        if (r2 >= r_max_ * r_max_) throw DomainError("point outside the truncation radius r_max");
    }
}

Vector ChartGeometry::wrap(const Vector& x) const {
    if (!periodic()) return x;
    Vector y = x;
    for (int i = 0; i < dim_; ++i) y[i] = x[i] - periods_[i] * std::floor(x[i] / periods_[i]);
    return y;
}

double ChartGeometry::log_conformal(std::span<const double> x) const {
    switch (kind_) {
        case GeometryKind::poincare_disk: return std::log(2.0 / (1.0 - sq_norm(x)));
        case GeometryKind::flat_torus: return 0.0;
        case GeometryKind::conformal_torus: {
            double s = 0.0;
            for (const auto& t : terms_) {
                const double th = two_pi * (t.kx * x[0] / periods_[0] + t.ky * x[1] / periods_[1]);
                s += t.cos_coef * std::cos(th) + t.sin_coef * std::sin(th);
            }
            return s;
        }
    }
    return 0.0;
}

void ChartGeometry::grad_log_conformal(std::span<const double> x, std::span<double> out) const {
    switch (kind_) {
        case GeometryKind::poincare_disk: {
            const double f = 2.0 / (1.0 - sq_norm(x));
            for (int i = 0; i < dim_; ++i) out[i] = f * x[i];
            return;
        }
        case GeometryKind::flat_torus:
            for (int i = 0; i < dim_; ++i) out[i] = 0.0;
            return;
        case GeometryKind::conformal_torus: {
            out[0] = out[1] = 0.0;
            for (const auto& t : terms_) {
                const double wx = two_pi * t.kx / periods_[0];
                const double wy = two_pi * t.ky / periods_[1];
                const double th = wx * x[0] + wy * x[1];
                const double d = -t.cos_coef * std::sin(th) + t.sin_coef * std::cos(th);
                out[0] += d * wx;
                out[1] += d * wy;
            }
            return;
        }
    }
}

double ChartGeometry::flat_laplacian_log_conformal(std::span<const double> x) const {
    switch (kind_) {
        case GeometryKind::poincare_disk: {
            const double r2 = sq_norm(x);
            const double s = 1.0 - r2;
            // phi = log 2 - log(1 - r^2)
            return 2.0 * dim_ / s + 4.0 * r2 / (s * s);
        }
        case GeometryKind::flat_torus: return 0.0;
        case GeometryKind::conformal_torus: {
            double s = 0.0;
            for (const auto& t : terms_) {
                const double wx = two_pi * t.kx / periods_[0];
                const double wy = two_pi * t.ky / periods_[1];
                const double th = wx * x[0] + wy * x[1];
                s -= (t.cos_coef * std::cos(th) + t.sin_coef * std::sin(th)) * (wx * wx + wy * wy);
            }
            return s;
        }
    }
    return 0.0;
}

double ChartGeometry::conformal_factor(std::span<const double> x) const {
    if (kind_ == GeometryKind::poincare_disk) return 2.0 / (1.0 - sq_norm(x));
    if (kind_ == GeometryKind::flat_torus) return 1.0;
    return std::exp(log_conformal(x));
}

double ChartGeometry::vol_weight(std::span<const double> x) const {
    return std::pow(conformal_factor(x), dim_);
}

MetricData ChartGeometry::metric_data_at(const Vector& x) const {
    require_admissible(view(x));
    const double lam = conformal_factor(view(x));
    const double lam2 = lam * lam;
    if (!std::isfinite(lam2) || !(lam2 > 0.0)) throw DomainError("metric is not finite at this point");
    MetricData md;
    md.g = lam2 * Matrix::Identity(dim_, dim_);
    md.g_inv = (1.0 / lam2) * Matrix::Identity(dim_, dim_);
    md.vol_weight = std::sqrt(md.g.determinant());
    return md;
}

std::vector<Matrix> ChartGeometry::metric_derivatives(const Vector& x) const {
    require_admissible(view(x));
    const double lam = conformal_factor(view(x));
    std::vector<double> dphi(dim_);
    grad_log_conformal(view(x), dphi);
    std::vector<Matrix> d(dim_);
    for (int k = 0; k < dim_; ++k) d[k] = 2.0 * lam * lam * dphi[k] * Matrix::Identity(dim_, dim_);
    return d;
}

std::vector<Matrix> ChartGeometry::christoffel(const Vector& x) const {
    const MetricData md = metric_data_at(x);
    const std::vector<Matrix> dg = metric_derivatives(x);
    std::vector<Matrix> gamma(dim_, Matrix::Zero(dim_, dim_));
    for (int k = 0; k < dim_; ++k)
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) {
                double s = 0.0;
                for (int l = 0; l < dim_; ++l)
                    s += md.g_inv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                gamma[k](i, j) = 0.5 * s;
            }
    return gamma;
}

GeneratorCoeffs ChartGeometry::generator_coeffs_at(const Vector& x) const {
    const MetricData md = metric_data_at(x);
    const std::vector<Matrix> gamma = christoffel(x);
    GeneratorCoeffs c;
    c.diffusion = md.g_inv;
    c.drift_correction = Vector::Zero(dim_);
    for (int k = 0; k < dim_; ++k) c.drift_correction[k] = -(md.g_inv.cwiseProduct(gamma[k])).sum();
    return c;
}

double ChartGeometry::grad_norm_sq_at(const Vector& x, const Vector& p) const {
    if (p.size() != dim_) throw DomainError("covector has wrong dimension");
    const MetricData md = metric_data_at(x);
    return p.dot(md.g_inv * p);
}

double ChartGeometry::geodesic_distance(std::span<const double> x, std::span<const double> y) const {
    require_admissible(x);
    require_admissible(y);
    switch (kind_) {
        case GeometryKind::poincare_disk: {
            double diff2 = 0.0;
            for (int i = 0; i < dim_; ++i) diff2 += (x[i] - y[i]) * (x[i] - y[i]);
            // cosh d = 1 + 2 s^2, i.e. d = 2 asinh(s); stable for nearby points
            const double s = std::sqrt(diff2 / ((1.0 - sq_norm(x)) * (1.0 - sq_norm(y))));
            return 2.0 * std::asinh(s);
        }
        case GeometryKind::flat_torus: {
            double s = 0.0;
            for (int i = 0; i < dim_; ++i) {
                const double d = wrapped_delta(x[i], y[i], periods_[i]);
                s += d * d;
            }
            return std::sqrt(s);
        }
        case GeometryKind::conformal_torus: {
            const auto& lat = *lattice_;
            const int a = lat.snap(x, periods_[0], periods_[1]);
            const int b = lat.snap(y, periods_[0], periods_[1]);
            if (a == b) {
                const double dx = wrapped_delta(x[0], y[0], periods_[0]);
                const double dy = wrapped_delta(x[1], y[1], periods_[1]);
                return lat.node_lambda[a] * std::hypot(dx, dy);
            }
            const int s = std::min(a, b);
            const int t = std::max(a, b);
            return lat.run(s, t)[t];
        }
    }
    return 0.0;
}

std::vector<double> ChartGeometry::distances_from(const Vector& x, const Matrix& targets) const {
    if (targets.cols() != dim_) throw DomainError("distances_from: target rows have wrong dimension");
    std::vector<double> out(static_cast<std::size_t>(targets.rows()));
    if (kind_ != GeometryKind::conformal_torus) {
        Vector y(dim_);
        for (Eigen::Index r = 0; r < targets.rows(); ++r) {
            y = targets.row(r).transpose();
            out[r] = geodesic_distance(x, y);
        }
        return out;
    }
    require_admissible(view(x));
    const auto& lat = *lattice_;
    const int a = lat.snap(view(x), periods_[0], periods_[1]);
    const std::vector<double> field = lat.run(a, -1);
    for (Eigen::Index r = 0; r < targets.rows(); ++r) {
        const std::array<double, 2> y{targets(r, 0), targets(r, 1)};
        const int b = lat.snap(y, periods_[0], periods_[1]);
        if (b == a) {
            out[r] = lat.node_lambda[a] * std::hypot(wrapped_delta(x[0], y[0], periods_[0]),
                                                     wrapped_delta(x[1], y[1], periods_[1]));
        } else {
            out[r] = field[b];
        }
    }
    return out;
}

double ChartGeometry::diameter() const {
    switch (kind_) {
        case GeometryKind::poincare_disk: return 4.0 * std::atanh(r_max_);
        case GeometryKind::flat_torus: {
            double s = 0.0;
            for (double p : periods_) s += 0.25 * p * p;
            return std::sqrt(s);
        }
        case GeometryKind::conformal_torus: {
            const double lam_max = *std::max_element(lattice_->node_lambda.begin(), lattice_->node_lambda.end());
            // lattice anisotropy plus snapping stay well below 10%
            return 1.1 * lam_max * 0.5 * std::hypot(periods_[0], periods_[1]);
        }
    }
    return 0.0;
}

double ChartGeometry::scalar_curvature(const Vector& x) const {
    require_admissible(view(x));
    switch (kind_) {
        case GeometryKind::poincare_disk: return -static_cast<double>(dim_) * (dim_ - 1);
        case GeometryKind::flat_torus: return 0.0;
        case GeometryKind::conformal_torus:
            return -2.0 * std::exp(-2.0 * log_conformal(view(x))) * flat_laplacian_log_conformal(view(x));
    }
    return 0.0;
}

CurvatureData ChartGeometry::curvature_data_at(const Vector& x, const std::optional<Vector>& v) const {
    CurvatureData c;
    c.scalar = scalar_curvature(x);
    c.ricci_lower_bound = ricci_lower_bound_;
    if (v) {
        const MetricData md = metric_data_at(x);
        const double norm2 = v->dot(md.g * *v);
        if (std::abs(norm2 - 1.0) > 1e-10) throw DomainError("curvature_data_at: direction is not g-unit");
        switch (kind_) {
            case GeometryKind::poincare_disk: c.ricci = -static_cast<double>(dim_ - 1); break;
            case GeometryKind::flat_torus: c.ricci = 0.0; break;
            case GeometryKind::conformal_torus: c.ricci = 0.5 * c.scalar; break;
        }
    }
    return c;
}

Vector mobius_add(const Vector& a, const Vector& z) {
    const double az = a.dot(z);
    const double a2 = a.squaredNorm();
    const double z2 = z.squaredNorm();
    const double den = 1.0 + 2.0 * az + a2 * z2;
    return ((1.0 + 2.0 * az + z2) * a + (1.0 - a2) * z) / den;
}

Vector ChartGeometry::exp_map(const Vector& x, const Vector& v) const {
    if (v.size() != dim_) throw DomainError("exp_map: tangent vector has wrong dimension");
    switch (kind_) {
        case GeometryKind::poincare_disk: {
            require_admissible(view(x));
            const double e = v.norm();
            if (e == 0.0) return x;
            const double len = conformal_factor(view(x)) * e;
            const Vector step = std::tanh(0.5 * len) * (v / e);
            return mobius_add(x, step);
        }
        case GeometryKind::flat_torus: return wrap(x + v);
        case GeometryKind::conformal_torus: break;
    }
    throw DomainError("exp_map: no closed form on the conformal torus");
}

Vector ChartGeometry::translate(const Vector& x, const Vector& v, const Vector& p) const {
    if (v.size() != dim_ || p.size() != dim_) throw DomainError("translate: wrong dimension");
    switch (kind_) {
        case GeometryKind::poincare_disk: {
            require_admissible(view(x));
            const double e = v.norm();
            if (e == 0.0) return p;
            const double len = conformal_factor(view(x)) * e;
            const Vector a = std::tanh(0.5 * len) * (v / e);
            return mobius_add(x, mobius_add(a, mobius_add(-x, p)));
        }
        case GeometryKind::flat_torus: return wrap(p + v);
        case GeometryKind::conformal_torus: break;
    }
    throw DomainError("translate: no closed-form isometries on the conformal torus");
}

}  // namespace mfgeo
