#include "mfgeo/geograph.hpp"

#include "mfgeo/grid.hpp"
#include "mfgeo/io.hpp"
#include "mfgeo/parallel.hpp"
#include "mfgeo/transport.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <queue>
#include <sstream>

namespace mfgeo {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Closed balls tolerate roundoff in path sums.
bool within(double d, double radius) { return d <= radius * (1.0 + 1e-12); }

struct Dijkstra {
    using Item = std::pair<double, int>;
    const std::vector<std::vector<GraphEdge>>& adj;
    std::vector<double> dist;
    std::vector<char> done;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;

    Dijkstra(const std::vector<std::vector<GraphEdge>>& a, int source)
        : adj(a), dist(a.size(), inf), done(a.size(), 0) {
        dist[static_cast<std::size_t>(source)] = 0.0;
        heap.emplace(0.0, source);
    }

    // Settles the next node; -1 when exhausted or the next distance exceeds cutoff.
    int step(double cutoff) {
        while (!heap.empty()) {
            auto [d, u] = heap.top();
            if (done[static_cast<std::size_t>(u)]) {
                heap.pop();
                continue;
            }
            if (d > cutoff) return -1;
            heap.pop();
            done[static_cast<std::size_t>(u)] = 1;
            for (const GraphEdge& e : adj[static_cast<std::size_t>(u)]) {
                const double nd = d + e.weight;
                if (nd < dist[static_cast<std::size_t>(e.to)]) {
                    dist[static_cast<std::size_t>(e.to)] = nd;
                    heap.emplace(nd, e.to);
                }
            }
            return u;
        }
        return -1;
    }
};

// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Matrix jac = Matrix::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        jac(k, k - 1) = jac(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        nodes[static_cast<std::size_t>(k)] = 0.5 * (es.eigenvalues()[k] + 1.0);
        const double v0 = es.eigenvectors()(0, k);
        weights[static_cast<std::size_t>(k)] = v0 * v0;  // 2 v0^2 on [-1, 1], halved
    }
}

void require_unit(const ChartGeometry& geometry, const Vector& x, const Vector& v, const char* what) {
    if (v.size() != geometry.dimension()) throw DomainError(std::string(what) + ": direction has wrong dimension");
    const double n2 = v.dot(geometry.metric_data_at(x).g * v);
    if (std::abs(n2 - 1.0) > 1e-10) throw DomainError(std::string(what) + ": direction is not g-unit");
}

}  // namespace

GeometricGraph GeometricGraph::from_points(std::shared_ptr<const ChartGeometry> geometry, Matrix points,
                                           double epsilon) {
    if (!geometry) throw DomainError("build_graph: missing geometry");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("build_graph: epsilon must be positive");
    if (points.rows() < 2) throw DomainError("build_graph: need at least two nodes");
    if (points.cols() != geometry->dimension()) throw DomainError("build_graph: points have wrong dimension");

    GeometricGraph g;
    const int n = static_cast<int>(points.rows());
    for (int i = 0; i < n; ++i) {
        const Vector p = points.row(i).transpose();
        geometry->require_admissible(view(p));
    }
    // row-major copy so each point is a contiguous span
    std::vector<double> flat(static_cast<std::size_t>(n) * geometry->dimension());
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < geometry->dimension(); ++k)
            flat[static_cast<std::size_t>(i) * geometry->dimension() + k] = points(i, k);
    const auto dim = static_cast<std::size_t>(geometry->dimension());
    auto at = [&](int i) { return std::span<const double>(flat.data() + i * dim, dim); };

    std::vector<std::vector<GraphEdge>> upper(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            for (int j = static_cast<int>(i) + 1; j < n; ++j) {
                const double d = geometry->geodesic_distance(at(static_cast<int>(i)), at(j));
                if (d <= epsilon) upper[i].push_back({j, d});
            }
        }
    });
    g.adjacency_.assign(static_cast<std::size_t>(n), {});
    for (int i = 0; i < n; ++i) {
        for (const GraphEdge& e : upper[static_cast<std::size_t>(i)]) {
            if (e.weight <= 0.0) throw DomainError("build_graph: duplicate points " + std::to_string(i) + " and " +
                                                   std::to_string(e.to));
            g.adjacency_[static_cast<std::size_t>(i)].push_back(e);
            g.adjacency_[static_cast<std::size_t>(e.to)].push_back({i, e.weight});
            ++g.edge_count_;
        }
    }
    g.geometry_ = std::move(geometry);
    g.positions_ = std::move(points);
    g.epsilon_ = epsilon;
    g.finish();
    return g;
}

GeometricGraph GeometricGraph::from_edges(int node_count, const std::vector<EdgeRecord>& edges) {
    if (node_count < 2) throw DomainError("build_graph: need at least two nodes");
    GeometricGraph g;
    g.adjacency_.assign(static_cast<std::size_t>(node_count), {});
    std::vector<std::pair<int, int>> seen;
    for (const EdgeRecord& e : edges) {
        if (e.a < 0 || e.b < 0 || e.a >= node_count || e.b >= node_count)
            throw DomainError("build_graph: edge endpoint out of range");
        if (e.a == e.b) throw DomainError("build_graph: self loop at node " + std::to_string(e.a));
        if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw DomainError("build_graph: edge weights must be positive");
        seen.emplace_back(std::min(e.a, e.b), std::max(e.a, e.b));
        g.adjacency_[static_cast<std::size_t>(e.a)].push_back({e.b, e.weight});
        g.adjacency_[static_cast<std::size_t>(e.b)].push_back({e.a, e.weight});
        ++g.edge_count_;
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) throw DomainError("build_graph: repeated edge");
    for (auto& list : g.adjacency_)
        std::sort(list.begin(), list.end(), [](const GraphEdge& a, const GraphEdge& b) { return a.to < b.to; });
    g.finish();
    return g;
}

void GeometricGraph::finish() {
    const auto n = adjacency_.size();
    component_.assign(n, -1);
    component_count_ = 0;
    std::vector<int> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (component_[s] >= 0) continue;
        stack.push_back(static_cast<int>(s));
        component_[s] = component_count_;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (const GraphEdge& e : adjacency_[static_cast<std::size_t>(u)]) {
                if (component_[static_cast<std::size_t>(e.to)] < 0) {
                    component_[static_cast<std::size_t>(e.to)] = component_count_;
                    stack.push_back(e.to);
                }
            }
        }
        ++component_count_;
    }
}

std::vector<EdgeRecord> GeometricGraph::edges() const {
    std::vector<EdgeRecord> out;
    out.reserve(edge_count_);
    for (int i = 0; i < node_count(); ++i)
        for (const GraphEdge& e : adjacency_[static_cast<std::size_t>(i)])
            if (i < e.to) out.push_back({i, e.to, e.weight});
    std::sort(out.begin(), out.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
        return a.a != b.a ? a.a < b.a : a.b < b.b;
    });
    return out;
}

const ChartGeometry& GeometricGraph::geometry() const {
    if (!geometry_) throw DomainError("graph has no node positions");
    return *geometry_;
}

int GeometricGraph::nearest_node(const Vector& x) const {
    const ChartGeometry& geom = geometry();
    const std::vector<double> d = geom.distances_from(x, positions_);
    return static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin());
}

std::vector<double> GeometricGraph::distances_from(int source, double cutoff) const {
    if (source < 0 || source >= node_count()) throw DomainError("distances_from: node out of range");
    Dijkstra run(adjacency_, source);
    while (run.step(cutoff) >= 0) {
    }
    for (std::size_t i = 0; i < run.dist.size(); ++i)
        if (!run.done[i]) run.dist[i] = inf;
    return run.dist;
}

std::vector<double> GeometricGraph::distances_to(int source, const std::vector<int>& targets) const {
    if (source < 0 || source >= node_count()) throw DomainError("distances_to: node out of range");
    std::vector<char> wanted(adjacency_.size(), 0);
    std::size_t remaining = 0;
    for (int t : targets) {
        if (t < 0 || t >= node_count()) throw DomainError("distances_to: target out of range");
        if (!wanted[static_cast<std::size_t>(t)] && component(t) == component(source)) {
            wanted[static_cast<std::size_t>(t)] = 1;
            ++remaining;
        }
    }
    Dijkstra run(adjacency_, source);
    while (remaining > 0) {
        const int u = run.step(inf);
        if (u < 0) break;
        if (wanted[static_cast<std::size_t>(u)]) --remaining;
    }
    std::vector<double> out;
    out.reserve(targets.size());
    for (int t : targets) out.push_back(run.done[static_cast<std::size_t>(t)] ? run.dist[static_cast<std::size_t>(t)] : inf);
    return out;
}

double GeometricGraph::distance(int a, int b) const { return distances_to(a, {b}).front(); }

Matrix sample_points(const ChartGeometry& geometry, int count, const ChartDensity& density, std::uint64_t seed) {
    if (count < 1) throw DomainError("sample_points: count must be positive");
    const int dim = geometry.dimension();
    // proposal box
    Vector lo(dim), hi(dim);
    for (int k = 0; k < dim; ++k) {
        if (geometry.periodic()) {
            lo[k] = 0.0;
            hi[k] = geometry.periods()[static_cast<std::size_t>(k)];
        } else {
            lo[k] = -geometry.r_max();
            hi[k] = geometry.r_max();
        }
    }
    auto target = [&](const Vector& x) {
        const double mu = density ? density(x) : 1.0;
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("sample_points: density must be finite and nonnegative");
        return mu * geometry.vol_weight(view(x));
    };
    // envelope from a scan of the domain, with headroom; a sample above it
    // means the scan missed a peak and the draw would be biased
    const int scan = dim == 2 ? 200 : 40;
    double envelope = 0.0;
    {
        std::vector<int> idx(static_cast<std::size_t>(dim), 0);
        Vector x(dim);
        for (bool more = true; more;) {
            for (int k = 0; k < dim; ++k) x[k] = lo[k] + (idx[static_cast<std::size_t>(k)] + 0.5) / scan * (hi[k] - lo[k]);
            if (geometry.admissible(view(x))) envelope = std::max(envelope, target(x));
            more = false;
            for (int k = 0; k < dim; ++k) {
                if (++idx[static_cast<std::size_t>(k)] < scan) {
                    more = true;
                    break;
                }
                idx[static_cast<std::size_t>(k)] = 0;
            }
        }
    }
    if (!(envelope > 0.0)) throw DomainError("sample_points: density vanishes on the domain");
    envelope *= 1.5;

    Matrix out(count, dim);
    std::uint64_t counter = 0;
    Vector x(dim);
    const std::uint64_t budget = 100000ULL * static_cast<std::uint64_t>(count) + 1000000ULL;
    for (int i = 0; i < count;) {
        if (counter > budget) throw DomainError("sample_points: rejection sampler exhausted its budget");
        for (int k = 0; k < dim; ++k) x[k] = lo[k] + counter_uniform(seed, counter++) * (hi[k] - lo[k]);
        const double u = counter_uniform(seed, counter++);
        if (!geometry.admissible(view(x))) continue;
        const double t = target(x);
        if (t > envelope) throw DomainError("sample_points: density exceeds the scanned envelope");
        if (u * envelope < t) out.row(i++) = x.transpose();
    }
    return out;
}

BallMeasure ball_measure(const GeometricGraph& graph, int x, double radius) {
    if (x < 0 || x >= graph.node_count()) throw DomainError("ball_measure: node out of range");
    if (!(radius >= 0.0)) throw DomainError("ball_measure: radius must be nonnegative");
    const std::vector<double> d = graph.distances_from(x, radius * (1.0 + 1e-12));
    BallMeasure b;
    for (int i = 0; i < graph.node_count(); ++i)
        if (within(d[static_cast<std::size_t>(i)], radius)) b.nodes.push_back(i);
    b.weight = 1.0 / static_cast<double>(b.nodes.size());
    return b;
}

OllivierResult ollivier_edge(const GeometricGraph& graph, int x, int y, double radius) {
    if (x == y) throw DomainError("ollivier_edge: nodes must differ");
    if (x < 0 || y < 0 || x >= graph.node_count() || y >= graph.node_count())
        throw DomainError("ollivier_edge: node out of range");
    if (graph.component(x) != graph.component(y))
        throw DomainError("ollivier_edge: nodes " + std::to_string(x) + " and " + std::to_string(y) +
                          " lie in different components");
    if (!(radius > 0.0)) throw DomainError("ollivier_edge: radius must be positive");

    OllivierResult r;
    r.distance = graph.distance(x, y);
    const BallMeasure bx = ball_measure(graph, x, radius), by = ball_measure(graph, y, radius);
    r.ball_x = static_cast<int>(bx.nodes.size());
    r.ball_y = static_cast<int>(by.nodes.size());

    // W1 depends only on the signed difference; shared nodes keep only
    // their excess, which shrinks the transport problem.
    std::vector<std::pair<int, double>> diff;
    {
        std::size_t i = 0, j = 0;
        while (i < bx.nodes.size() || j < by.nodes.size()) {
            const int a = i < bx.nodes.size() ? bx.nodes[i] : std::numeric_limits<int>::max();
            const int b = j < by.nodes.size() ? by.nodes[j] : std::numeric_limits<int>::max();
            if (a == b) {
                diff.emplace_back(a, bx.weight - by.weight);
                ++i, ++j;
            } else if (a < b) {
                diff.emplace_back(a, bx.weight);
                ++i;
            } else {
                diff.emplace_back(b, -by.weight);
                ++j;
            }
        }
    }
    std::vector<int> src, dst;
    std::vector<double> ws, wd;
    for (auto [node, m] : diff) {
        if (m > 0.0) src.push_back(node), ws.push_back(m);
        if (m < 0.0) dst.push_back(node), wd.push_back(-m);
    }
    if (src.empty() || dst.empty()) {
        r.w1 = 0.0;
        r.kappa = 1.0;
        return r;
    }
    // d_G is symmetric: search from the smaller side
    const bool flip = src.size() > dst.size();
    const std::vector<int>& from = flip ? dst : src;
    const std::vector<int>& to = flip ? src : dst;
    Matrix cost(static_cast<Eigen::Index>(src.size()), static_cast<Eigen::Index>(dst.size()));
    parallel_for(from.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const std::vector<double> d = graph.distances_to(from[i], to);
            for (std::size_t j = 0; j < to.size(); ++j) {
                const auto r = static_cast<Eigen::Index>(flip ? j : i), c = static_cast<Eigen::Index>(flip ? i : j);
                cost(r, c) = d[j];
            }
        }
    });
    const Vector vs = Eigen::Map<const Vector>(ws.data(), static_cast<Eigen::Index>(ws.size()));
    const Vector vd = Eigen::Map<const Vector>(wd.data(), static_cast<Eigen::Index>(wd.size()));
    r.w1 = w1_exact(vs, vd, cost).cost;
    r.kappa = 1.0 - r.w1 / r.distance;
    return r;
}

ContinuousCurvature coarse_curvature_continuous(const ChartGeometry& geometry, const Vector& x, const Vector& v,
                                                double eps, double delta, const ContinuousQuadrature& quad) {
    if (geometry.dimension() != 2) throw DomainError("coarse_curvature_continuous: needs a 2-D geometry");
    if (!geometry.has_closed_form_isometries())
        throw DomainError("coarse_curvature_continuous: geometry " + geometry.name() + " has no closed-form isometries");
    geometry.require_admissible(view(x));
    if (!(eps > 0.0)) throw DomainError("coarse_curvature_continuous: epsilon must be positive");
    if (!(delta > 0.0)) throw DomainError("coarse_curvature_continuous: coincident centres (delta must be positive)");
    if (quad.radial < 2 || quad.angular < 4) throw DomainError("coarse_curvature_continuous: quadrature too coarse");
    require_unit(geometry, x, v, "coarse_curvature_continuous");
    if (geometry.periodic()) {
        const double pmin = *std::min_element(geometry.periods().begin(), geometry.periods().end());
        if (eps >= 0.25 * pmin || delta > eps)
            throw DomainError("coarse_curvature_continuous: balls wrap around the torus");
    }

    std::vector<double> gs, gw;
    gauss_legendre(quad.radial, gs, gw);
    const bool disk = geometry.kind() == GeometryKind::poincare_disk;
    const int count = quad.radial * quad.angular;
    Matrix px(count, 2), py(count, 2);
    Vector w(count);
    const double dtheta = 2.0 * std::numbers::pi / quad.angular;
    int k = 0;
    for (int i = 0; i < quad.radial; ++i) {
        const double s = eps * gs[static_cast<std::size_t>(i)];
        // geodesic polar Jacobian: sinh(s) at curvature -1, s when flat
        const double jac = disk ? std::sinh(s) : s;
        for (int j = 0; j < quad.angular; ++j, ++k) {
            const double th = (j + 0.5) * dtheta;
            Vector dir(2);
            dir << std::cos(th), std::sin(th);
            Vector p = disk ? mobius_add(x, std::tanh(0.5 * s) * dir) : geometry.wrap(x + s * dir);
            if (!geometry.admissible(view(p))) throw DomainError("coarse_curvature_continuous: ball exits the domain");
            const Vector q = geometry.translate(x, delta * v, p);
            if (!geometry.admissible(view(q))) throw DomainError("coarse_curvature_continuous: ball exits the domain");
            px.row(k) = p.transpose();
            py.row(k) = q.transpose();
            w[k] = jac * eps * gw[static_cast<std::size_t>(i)] * dtheta;
        }
    }
    w /= w.sum();

    Matrix cost(count, count);
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vector p = px.row(static_cast<Eigen::Index>(i)).transpose();
            const std::vector<double> d = geometry.distances_from(p, py);
            for (int j = 0; j < count; ++j) cost(static_cast<Eigen::Index>(i), j) = d[static_cast<std::size_t>(j)];
        }
    });

    ContinuousCurvature out;
    out.support = count;
    out.distance = geometry.geodesic_distance(x, geometry.exp_map(x, delta * v));
    out.w1 = w1_exact(w, w, cost).cost;
    out.kappa = 1.0 - out.w1 / out.distance;
    out.rescaled = 2.0 * (geometry.dimension() + 2) * out.kappa / (eps * eps);
    return out;
}

WeightedRicci weighted_ricci_target(const ChartGeometry& geometry, const ChartDensity& density, const Vector& x,
                                    const Vector& v) {
    geometry.require_admissible(view(x));
    if (!density) throw DomainError("weighted_ricci_target: missing density");
    auto log_mu = [&](const Vector& p) {
        const double mu = density(p);
        if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("weighted_ricci_target: density must be positive");
        return std::log(mu);
    };
    log_mu(x);
    const CurvatureData c = geometry.curvature_data_at(x, v);
    WeightedRicci out;
    out.ricci = *c.ricci;
    out.scalar = c.scalar;
    out.hessian = covariant_hessian_quadratic(geometry, log_mu, x, v);
    out.laplacian = laplace_beltrami_at(geometry, log_mu, x);
    out.weighted = out.ricci - out.hessian;
    out.weighted_scalar = out.scalar - out.laplacian;
    return out;
}

double EpsilonRule::operator()(int n, int dim) const {
    if (!(scale > 0.0)) throw DomainError("epsilon rule: scale must be positive");
    const double p = exponent != 0.0 ? exponent : -1.0 / (2.0 * dim + 4.0);
    return scale * std::pow(static_cast<double>(n), p);
}

ConvergenceReport convergence_experiment(std::shared_ptr<const ChartGeometry> geometry, const ChartDensity& density,
                                         const ConvergenceSettings& settings) {
    if (!geometry) throw DomainError("convergence_experiment: missing geometry");
    if (!geometry->has_closed_form_isometries())
        throw DomainError("convergence_experiment: needs a geometry with a closed-form exponential map");
    if (settings.sizes.empty()) throw DomainError("convergence_experiment: empty size list");
    for (std::size_t i = 0; i < settings.sizes.size(); ++i) {
        if (settings.sizes[i] <= 2) throw DomainError("convergence_experiment: every N must exceed 2");
        if (i > 0 && settings.sizes[i] <= settings.sizes[i - 1])
            throw DomainError("convergence_experiment: sizes must increase");
    }
    if (settings.seeds.empty()) throw DomainError("convergence_experiment: no seeds");
    if (settings.trials < 1) throw DomainError("convergence_experiment: trials must be positive");
    if (!(settings.separation > 0.0 && settings.separation <= 1.0))
        throw DomainError("convergence_experiment: separation must lie in (0, 1]");
    require_unit(*geometry, settings.target, settings.direction, "convergence_experiment");

    const ChartDensity mu = density ? density : ChartDensity([](const Vector&) { return 1.0; });
    ConvergenceReport report;
    report.target = weighted_ricci_target(*geometry, mu, settings.target, settings.direction);
    const int dim = geometry->dimension();

    for (int n : settings.sizes) {
        const double eps = settings.epsilon(n, dim);
        ConvergenceSummary sum;
        sum.n = n;
        sum.epsilon = eps;
        std::vector<double> values;
        for (std::uint64_t seed : settings.seeds) {
            for (int t = 0; t < settings.trials; ++t) {
                ConvergenceRow row;
                row.n = n;
                row.seed = seed;
                row.trial = t;
                row.epsilon = eps;
                const std::uint64_t stream =
                    stream_key(seed, static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t));
                // the edge endpoints are pinned at the target and its translate;
                // the remaining N - 2 nodes are sampled
                const Vector aim = geometry->exp_map(settings.target, settings.separation * eps * settings.direction);
                if (!geometry->admissible(view(aim)))
                    throw DomainError("convergence_experiment: second endpoint leaves the domain");
                Matrix points(n, dim);
                points.row(0) = settings.target.transpose();
                points.row(1) = aim.transpose();
                points.bottomRows(n - 2) = sample_points(*geometry, n - 2, mu, stream);
                const GeometricGraph graph = GeometricGraph::from_points(geometry, std::move(points), eps);
                const int x = 0, y = 1;
                if (graph.component(x) != graph.component(y)) {
                    row.skipped = true;
                    row.note = "nodes disconnected";
                } else {
                    const OllivierResult o = ollivier_edge(graph, x, y, eps);
                    row.kappa = o.kappa;
                    row.distance = o.distance;
                    row.ball_x = o.ball_x;
                    row.ball_y = o.ball_y;
                    if (o.ball_x < 2 || o.ball_y < 2) {
                        row.skipped = true;
                        row.note = "empty ball";
                    } else {
                        row.rescaled = 2.0 * (dim + 2) * o.kappa / (eps * eps);
                        values.push_back(row.rescaled);
                    }
                }
                if (row.skipped) ++sum.skipped;
                report.rows.push_back(row);
            }
        }
        if (values.size() >= 2) {
            sum.interval = mean_interval(values);
            sum.bias = sum.interval.mean - report.target.weighted;
        } else {
            sum.interval.count = static_cast<int>(values.size());
            sum.interval.mean = values.empty() ? std::nan("") : values.front();
            sum.bias = sum.interval.mean - report.target.weighted;
        }
        report.summary.push_back(sum);
    }
    report.bias_nonincreasing = true;
    for (std::size_t i = 1; i < report.summary.size(); ++i)
        if (!(std::abs(report.summary[i].bias) <= std::abs(report.summary[i - 1].bias)))
            report.bias_nonincreasing = false;
    return report;
}

std::vector<EdgeRecord> read_edge_list(std::istream& in) {
    std::vector<EdgeRecord> out;
    std::string line;
    int lineno = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (!header_checked) {
            header_checked = true;
            if (!cells.empty() && !cells[0].empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0]))) continue;
        }
        if (cells.size() != 3) throw DomainError("edge list line " + std::to_string(lineno) + ": expected a,b,weight");
        EdgeRecord r;
        auto parse_int = [&](const std::string& s, int& v) {
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size())
                throw DomainError("edge list line " + std::to_string(lineno) + ": bad node index '" + s + "'");
        };
        parse_int(cells[0], r.a);
        parse_int(cells[1], r.b);
        auto [p, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), r.weight);
        if (ec != std::errc() || p != cells[2].data() + cells[2].size())
            throw DomainError("edge list line " + std::to_string(lineno) + ": bad weight '" + cells[2] + "'");
        out.push_back(r);
    }
    return out;
}

std::vector<EdgeRecord> read_edge_list_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open edge list " + path);
    return read_edge_list(f);
}

void write_edge_list(std::ostream& out, const GeometricGraph& graph) {
    out << "a,b,weight\n";
    for (const EdgeRecord& e : graph.edges()) out << e.a << ',' << e.b << ',' << format_number(e.weight) << '\n';
}

}  // namespace mfgeo
