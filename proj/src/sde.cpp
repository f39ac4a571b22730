#include "mfgeo/sde.hpp"

#include "mfgeo/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <atomic>
#include <cmath>

namespace mfgeo {

namespace {

// Chart origin of the node lattice: torus nodes sit at i h, disk nodes at
// cell centres -r + (i + 1/2) h.
double lattice_origin(const Grid& g, int axis) {
    return g.periodic() ? 0.0 : -g.geometry().r_max() + 0.5 * g.spacing(axis);
}

void reflect_into_disk(Eigen::Ref<Vector> x, double r_max) {
    const double r = x.norm();
    double target = 2.0 * r_max - r;
    // a jump past the centre is folded back inside; the radius stays strictly below r_max
    target = std::clamp(target, 0.0, std::nextafter(r_max, 0.0));
    x *= target / r;
}

}  // namespace

DriftTrajectory::DriftTrajectory(std::shared_ptr<const Grid> grid, double dt, std::vector<VectorField> slices)
    : grid_(std::move(grid)), dt_(dt), slices_(std::move(slices)) {
    if (!grid_) throw DomainError("drift trajectory: missing grid");
    if (!(dt_ > 0.0)) throw DomainError("drift trajectory: dt must be positive");
    if (slices_.empty()) throw DomainError("drift trajectory: no slices");
    for (const auto& s : slices_)
        if (s.rows() != grid_->size() || s.cols() != grid_->dimension())
            throw DomainError("drift trajectory: slice does not match the grid");
}

int DriftTrajectory::slice_at(double t) const {
    const int k = static_cast<int>(std::floor(t / dt_ + 1e-9));
    return std::clamp(k, 0, slice_count() - 1);
}

Vector DriftTrajectory::operator()(double t, std::span<const double> x) const {
    const Grid& g = *grid_;
    const VectorField& b = slices_[static_cast<std::size_t>(slice_at(t))];
    const int dim = g.dimension();

    // lower corner of the enclosing lattice cell and the fractional offsets
    std::vector<double> frac(static_cast<std::size_t>(dim));
    Vector corner(dim);
    for (int k = 0; k < dim; ++k) {
        const double h = g.spacing(k), o = lattice_origin(g, k);
        double u = (x[k] - o) / h;
        const double base = std::floor(u);
        frac[static_cast<std::size_t>(k)] = u - base;
        corner[k] = o + base * h;
        if (g.periodic()) {
            const double p = g.geometry().periods()[static_cast<std::size_t>(k)];
            corner[k] -= p * std::floor(corner[k] / p);
        }
    }
    const int nearest = g.locate(x);
    const int base = g.locate(view(corner));
    bool complete = true;
    for (int k = 0; k < dim && complete; ++k)
        complete = std::abs(g.node(base)[k] - corner[k]) < 1e-9 * (1.0 + std::abs(corner[k]));
    if (!complete) return b.row(nearest).transpose();

    Vector out = Vector::Zero(dim);
    const int corners = 1 << dim;
    for (int c = 0; c < corners; ++c) {
        int node = base;
        double weight = 1.0;
        for (int k = 0; k < dim; ++k) {
            const bool up = (c >> k) & 1;
            weight *= up ? frac[static_cast<std::size_t>(k)] : 1.0 - frac[static_cast<std::size_t>(k)];
            if (up) node = g.neighbor(node, k, +1);
            if (node < 0) return b.row(nearest).transpose();
        }
        out += weight * b.row(node).transpose();
    }
    return out;
}

int SimulationSpec::steps() const {
    const double s = horizon / dt;
    const long n = std::lround(s);
    if (n < 1 || std::abs(static_cast<double>(n) - s) > 1e-9 * s)
        throw DomainError("simulation: horizon must be a whole number of steps");
    return static_cast<int>(n);
}

void SimulationSpec::validate() const {
    if (!geometry) throw DomainError("simulation: missing geometry");
    if (!(horizon > 0.0)) throw DomainError("simulation: horizon must be positive");
    if (!(dt > 0.0)) throw DomainError("simulation: dt must be positive");
    if (!(diffusion > 0.0)) throw DomainError("simulation: diffusion constant must be positive");
    if (record_every < 1) throw DomainError("simulation: record_every must be positive");
    if (drift && drift->grid().geometry_ptr() != geometry)
        throw DomainError("simulation: drift lives on a different geometry");
    steps();
}

NoiseCoeffs noise_coeffs_at(const ChartGeometry& geometry, const Vector& x, double diffusion) {
    const GeneratorCoeffs gc = geometry.generator_coeffs_at(x);
    NoiseCoeffs out;
    Eigen::LLT<Matrix> llt(2.0 * diffusion * gc.diffusion);
    if (llt.info() != Eigen::Success) throw DomainError("noise coefficients: inverse metric not positive definite");
    out.sigma = llt.matrixL();
    out.correction = diffusion * gc.drift_correction;
    return out;
}

ParticleTrajectory simulate(const SimulationSpec& spec, const Matrix& initial) {
    spec.validate();
    const ChartGeometry& geom = *spec.geometry;
    const int dim = geom.dimension();
    if (initial.cols() != dim || initial.rows() < 1) throw DomainError("simulation: initial positions have wrong shape");
    const int count = static_cast<int>(initial.rows());
    for (int p = 0; p < count; ++p) {
        const Vector x = initial.row(p).transpose();
        geom.require_admissible(view(x));
    }
    const int steps = spec.steps();

    ParticleTrajectory out;
    std::vector<int> slot(static_cast<std::size_t>(steps) + 1, -1);
    slot[0] = 0;
    out.times.push_back(0.0);
    for (int s = 1; s <= steps; ++s) {
        if (s % spec.record_every == 0 || s == steps) {
            slot[static_cast<std::size_t>(s)] = static_cast<int>(out.times.size());
            out.times.push_back(s * spec.dt);
        }
    }
    out.positions.assign(out.times.size(), Matrix(count, dim));
    out.positions[0] = initial;

    // Every supported metric is conformal, g = lambda^2 delta: the noise is
    // sqrt(2 nu) / lambda per axis and the Ito correction nu (n - 2) lambda^-2 grad phi.
    const double root = std::sqrt(2.0 * spec.diffusion);
    const double sqdt = std::sqrt(spec.dt);
    const int pairs = (dim + 1) / 2;
    std::atomic<long long> reflections{0};

    parallel_for(static_cast<std::size_t>(count), [&](std::size_t first, std::size_t last) {
        long long local = 0;
        Vector x(dim), grad_phi(dim), noise(2 * pairs);
        for (std::size_t p = first; p < last; ++p) {
            const std::uint64_t key = stream_key(spec.seed, p);
            x = initial.row(static_cast<Eigen::Index>(p)).transpose();
            for (int s = 0; s < steps; ++s) {
                const double t = s * spec.dt;
                const double lam = geom.conformal_factor(view(x));
                Vector drift = spec.drift ? (*spec.drift)(t, view(x)) : Vector::Zero(dim);
                if (dim != 2) {
                    geom.grad_log_conformal(view(x), {grad_phi.data(), static_cast<std::size_t>(dim)});
                    drift += spec.diffusion * (dim - 2) / (lam * lam) * grad_phi;
                }
                for (int q = 0; q < pairs; ++q) {
                    const auto [z0, z1] =
                        counter_normal_pair(key, static_cast<std::uint64_t>(s) * pairs + static_cast<std::uint64_t>(q));
                    noise[2 * q] = z0;
                    noise[2 * q + 1] = z1;
                }
                x += drift * spec.dt + (root / lam * sqdt) * noise.head(dim);
                if (geom.periodic()) {
                    x = geom.wrap(x);
                } else if (!geom.admissible(view(x))) {
                    reflect_into_disk(x, geom.r_max());
                    ++local;
                }
                const int r = slot[static_cast<std::size_t>(s) + 1];
                if (r >= 0) out.positions[static_cast<std::size_t>(r)].row(static_cast<Eigen::Index>(p)) = x.transpose();
            }
        }
        reflections += local;
    });

    out.reflections = reflections.load();
    out.particle_steps = static_cast<long long>(count) * steps;
    out.excess_reflections = out.reflections * 1000 > out.particle_steps;
    return out;
}

Matrix sample_grid_density(const Grid& grid, const Vector& density, int count, std::uint64_t seed) {
    if (density.size() != grid.size()) throw DomainError("sample_grid_density: density does not match the grid");
    if (count < 1) throw DomainError("sample_grid_density: count must be positive");
    std::vector<double> cdf(static_cast<std::size_t>(grid.size()));
    double acc = 0.0;
    for (int i = 0; i < grid.size(); ++i) {
        if (density[i] < 0.0) throw DomainError("sample_grid_density: negative density");
        acc += density[i] * grid.weights()[i];
        cdf[static_cast<std::size_t>(i)] = acc;
    }
    if (!(acc > 0.0)) throw DomainError("sample_grid_density: zero mass");
    const ChartGeometry& geom = grid.geometry();
    const int dim = grid.dimension();
    Matrix out(count, dim);
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t first, std::size_t last) {
        Vector x(dim);
        for (std::size_t p = first; p < last; ++p) {
            const std::uint64_t key = stream_key(seed, p);
            const double u = counter_uniform(key, 0) * acc;
            const int node = static_cast<int>(
                std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), grid.size() - 1));
            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                for (int k = 0; k < dim; ++k)
                    x[k] = grid.node(node)[k] +
                           (counter_uniform(key, 1 + static_cast<std::uint64_t>(attempt * dim + k)) - 0.5) * grid.spacing(k);
                if (geom.periodic()) x = geom.wrap(x);
                placed = geom.admissible(view(x));
            }
            if (!placed) x = grid.node_vector(node);
            out.row(static_cast<Eigen::Index>(p)) = x.transpose();
        }
    });
    return out;
}

EmpiricalDistance empirical_distance(const DensityTransport& transport, const Matrix& particles,
                                     const Vector& density) {
    const Grid& g = transport.grid();
    if (particles.cols() != g.dimension() || particles.rows() < 1)
        throw DomainError("empirical distance: particle snapshot has wrong shape");
    const int count = static_cast<int>(particles.rows());
    Vector emp = Vector::Zero(transport.block_count());
    long double offset = 0.0L;
    for (int p = 0; p < count; ++p) {
        const Vector x = particles.row(p).transpose();
        const int blk = transport.block_of_point(view(x));
        emp[blk] += 1.0 / count;
        const Vector rep = transport.representatives().row(blk).transpose();
        offset += g.geometry().geodesic_distance(x, rep) / count;
    }
    const Vector pde = transport.block_masses(density);
    const Vector& w = g.weights();
    for (int i = 0; i < g.size(); ++i) offset += static_cast<long double>(density[i] * w[i]) * transport.node_offsets()[i];

    EmpiricalDistance out;
    out.coarse = transport.coarse_w1(emp * pde.sum(), pde);
    out.lower = std::max(0.0, out.coarse - static_cast<double>(offset));
    out.upper = out.coarse + static_cast<double>(offset);
    return out;
}

std::vector<EmpiricalDistance> empirical_vs_fpk(const DensityTransport& transport, const ParticleTrajectory& traj,
                                                const std::vector<Vector>& density, double density_dt) {
    if (!(density_dt > 0.0)) throw DomainError("empirical_vs_fpk: density dt must be positive");
    std::vector<EmpiricalDistance> out;
    for (std::size_t r = 0; r < traj.times.size(); ++r) {
        const double t = traj.times[r];
        const long k = std::lround(t / density_dt);
        if (std::abs(static_cast<double>(k) * density_dt - t) > 1e-9 * std::max(1.0, t) || k < 0 ||
            k >= static_cast<long>(density.size()))
            throw DomainError("empirical_vs_fpk: mismatched configurations (no density slice at t = " +
                              std::to_string(t) + ")");
        EmpiricalDistance d = empirical_distance(transport, traj.positions[r], density[static_cast<std::size_t>(k)]);
        d.time = t;
        out.push_back(d);
    }
    return out;
}

EmpiricalRegularity empirical_time_regularity(const DensityTransport& transport, const ParticleTrajectory& traj) {
    if (traj.times.size() < 3) throw DomainError("empirical regularity: need at least two recorded times after t = 0");
    auto masses = [&](const Matrix& snap) {
        Vector m = Vector::Zero(transport.block_count());
        for (int p = 0; p < snap.rows(); ++p) {
            const Vector x = snap.row(p).transpose();
            m[transport.block_of_point(view(x))] += 1.0 / static_cast<double>(snap.rows());
        }
        return m;
    };
    const Vector m0 = masses(traj.positions.front());
    EmpiricalRegularity out;
    for (std::size_t r = 1; r < traj.times.size(); ++r) {
        out.lags.push_back(traj.times[r] - traj.times.front());
        out.distances.push_back(transport.coarse_w1(m0, masses(traj.positions[r])));
    }
    out.fit = fit_power_law(out.lags, out.distances);
    return out;
}

}  // namespace mfgeo
