#include "mfgeo/transport.hpp"

#include "mfgeo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mfgeo {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

struct ReducedProblem {
    std::vector<int> rows;  // original source indices with positive weight
    std::vector<int> cols;
    std::vector<double> supply;
    std::vector<double> demand;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Primal network simplex on the complete bipartite graph plus an artificial
// root joined to every node by a big-M arc (the initial tree). Pricing scans
// arcs in blocks; the leaving arc follows the strongly feasible rule, which
// rules out cycling on degenerate pivots. The tree and its potentials are
// rebuilt from the root after each pivot, which keeps potentials free of
// accumulated roundoff and costs O(n + m).
class NetworkSimplex {
public:
    NetworkSimplex(const ReducedProblem& p, const RowMatrix& cost)
        : n_(static_cast<int>(p.rows.size())), m_(static_cast<int>(p.cols.size())), cost_(cost) {
        nodes_ = n_ + m_ + 1;
        root_ = n_ + m_;
        real_arcs_ = static_cast<long>(n_) * m_;
        big_m_ = (1.0 + cost_.cwiseAbs().maxCoeff()) * static_cast<double>(nodes_);
        tol_ = 1e-12 * (1.0 + cost_.cwiseAbs().maxCoeff());

        parent_.assign(nodes_, -1);
        pred_.assign(nodes_, -1);
        up_.assign(nodes_, 0);
        depth_.assign(nodes_, 0);
        flow_.assign(nodes_, 0.0);
        potential_.assign(nodes_, 0.0);
        for (int i = 0; i < n_; ++i) {
            pred_[i] = real_arcs_ + i;  // i -> root
            flow_[i] = p.supply[i];
        }
        for (int j = 0; j < m_; ++j) {
            pred_[n_ + j] = real_arcs_ + n_ + j;  // root -> sink
            flow_[n_ + j] = p.demand[j];
        }
        rebuild();
    }

    void solve() {
        const long total = real_arcs_ + n_ + m_;
        block_ = std::max<long>(10, static_cast<long>(std::sqrt(static_cast<double>(total))));
        const long limit = 200L * nodes_ + 100000L;
        for (long pivots = 0;; ++pivots) {
            if (pivots > limit) throw std::runtime_error("w1_exact: pivot limit exceeded");
            const long entering = price();
            if (entering < 0) return;
            pivot(entering);
        }
    }

    RowMatrix flow() const {
        RowMatrix f = RowMatrix::Zero(n_, m_);
        for (int u = 0; u < root_; ++u)
            if (pred_[u] < real_arcs_) f(pred_[u] / m_, pred_[u] % m_) = flow_[u];
        return f;
    }
    double source_potential(int i) const { return -potential_[i]; }
    double target_potential(int j) const { return potential_[n_ + j]; }

private:
    int n_, m_, nodes_ = 0, root_ = 0;
    long real_arcs_ = 0;
    const RowMatrix& cost_;
    double big_m_ = 0.0, tol_ = 0.0;
    long block_ = 1, next_arc_ = 0;

    // Tree: every non-root node u has parent_[u] and tree arc pred_[u];
    // up_[u] = 1 when that arc points u -> parent. flow_[u] is its flow.
    std::vector<int> parent_;
    std::vector<long> pred_;
    std::vector<char> up_;
    std::vector<int> depth_;
    std::vector<double> flow_;
    std::vector<double> potential_;
    // scratch for rebuild
    std::vector<int> head_, next_, order_;
    std::vector<long> arc_of_;
    std::vector<double> arc_flow_;
    std::vector<char> seen_;

    int tail(long a) const {
        if (a < real_arcs_) return static_cast<int>(a / m_);
        const long k = a - real_arcs_;
        return k < n_ ? static_cast<int>(k) : root_;
    }
    int head(long a) const {
        if (a < real_arcs_) return n_ + static_cast<int>(a % m_);
        const long k = a - real_arcs_;
        return k < n_ ? root_ : static_cast<int>(k);
    }
    double arc_cost(long a) const {
        if (a < real_arcs_) return cost_.data()[a];
        return big_m_;
    }
    double reduced(long a) const { return arc_cost(a) + potential_[tail(a)] - potential_[head(a)]; }

    // Most negative reduced cost within the first block that has one. Real
    // arcs are walked row by row so each step is one load and two adds.
    long price() {
        const long total = real_arcs_ + n_ + m_;
        long best = -1;
        double best_rc = -tol_;
        long in_block = 0;
        long a = next_arc_;
        for (long k = 0; k < total;) {
            if (a < real_arcs_) {
                const int i = static_cast<int>(a / m_);
                const int j0 = static_cast<int>(a % m_);
                const double* row = cost_.data() + static_cast<std::ptrdiff_t>(i) * m_;
                const double* pt = potential_.data() + n_;
                const double pi = potential_[i];
                for (int j = j0; j < m_ && k < total; ++j, ++a, ++k) {
                    const double rc = row[j] + pi - pt[j];
                    if (rc < best_rc) {
                        best_rc = rc;
                        best = a;
                    }
                    if (++in_block == block_) {
                        if (best >= 0) {
                            next_arc_ = a + 1 == total ? 0 : a + 1;
                            return best;
                        }
                        in_block = 0;
                    }
                }
            } else {
                const double rc = reduced(a);
                if (rc < best_rc) {
                    best_rc = rc;
                    best = a;
                }
                ++a;
                ++k;
                if (++in_block == block_) {
                    if (best >= 0) {
                        next_arc_ = a == total ? 0 : a;
                        return best;
                    }
                    in_block = 0;
                }
            }
            if (a == total) a = 0;
        }
        next_arc_ = a;
        return best;
    }

    void pivot(long entering) {
        const int first = tail(entering), second = head(entering);
        int a = first, b = second;
        while (a != b) {
            if (depth_[a] >= depth_[b]) a = parent_[a];
            else b = parent_[b];
        }
        const int join = a;

        // Flow travels join -> ... -> first -> second -> ... -> join.
        double delta = std::numeric_limits<double>::infinity();
        int out = -1;
        for (int u = first; u != join; u = parent_[u])
            if (up_[u] && flow_[u] < delta) {  // arc u -> parent carries flow against the cycle
                delta = flow_[u];
                out = u;
            }
        for (int u = second; u != join; u = parent_[u])
            if (!up_[u] && flow_[u] <= delta) {
                delta = flow_[u];
                out = u;
            }
        if (out < 0) throw std::runtime_error("w1_exact: unbounded pivot");

        for (int u = first; u != join; u = parent_[u]) flow_[u] += up_[u] ? -delta : delta;
        for (int u = second; u != join; u = parent_[u]) flow_[u] += up_[u] ? delta : -delta;

        // Swap the leaving arc for the entering one and rebuild the tree.
        arc_of_.assign(pred_.begin(), pred_.end());
        arc_flow_.assign(flow_.begin(), flow_.end());
        arc_of_[out] = entering;
        arc_flow_[out] = delta;
        rebuild();
    }

    // Recomputes parent/depth/orientation/potentials from the arc list
    // arc_of_ (one arc per non-root node slot) by a traversal from the root.
    void rebuild() {
        if (arc_of_.empty()) {
            arc_of_.assign(pred_.begin(), pred_.end());
            arc_flow_.assign(flow_.begin(), flow_.end());
        }
        head_.assign(nodes_, -1);
        next_.assign(2 * nodes_, -1);
        // incidence lists: entry 2k and 2k+1 belong to arc slot k
        for (int k = 0; k < root_; ++k) {
            const long arc = arc_of_[k];
            const int ends[2] = {tail(arc), head(arc)};
            for (int e = 0; e < 2; ++e) {
                next_[2 * k + e] = head_[ends[e]];
                head_[ends[e]] = 2 * k + e;
            }
        }
        order_.clear();
        order_.push_back(root_);
        parent_[root_] = -1;
        depth_[root_] = 0;
        potential_[root_] = 0.0;
        seen_.assign(nodes_, 0);
        std::vector<char>& seen = seen_;
        seen[root_] = 1;
        for (std::size_t q = 0; q < order_.size(); ++q) {
            const int u = order_[q];
            for (int e = head_[u]; e >= 0; e = next_[e]) {
                const int k = e / 2;
                const long arc = arc_of_[k];
                const int v = tail(arc) == u ? head(arc) : tail(arc);
                if (seen[v]) continue;
                seen[v] = 1;
                parent_[v] = u;
                pred_[v] = arc;
                flow_[v] = arc_flow_[k];
                up_[v] = tail(arc) == v;
                depth_[v] = depth_[u] + 1;
                potential_[v] = up_[v] ? potential_[u] - arc_cost(arc) : potential_[u] + arc_cost(arc);
                order_.push_back(v);
            }
        }
        if (static_cast<int>(order_.size()) != nodes_) throw std::logic_error("w1_exact: spanning tree broken");
        arc_of_.clear();
    }
};

void validate(const Vector& source, const Vector& target, const Matrix& cost) {
    if (cost.rows() != source.size() || cost.cols() != target.size())
        throw std::invalid_argument("w1_exact: cost matrix shape does not match the measures");
    if (source.size() == 0 || target.size() == 0) throw std::invalid_argument("w1_exact: empty measure");
    for (double v : source)
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("w1_exact: negative or non-finite source weight");
    for (double v : target)
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("w1_exact: negative or non-finite target weight");
    const double a = source.sum();
    const double b = target.sum();
    if (!(a > 0.0)) throw std::invalid_argument("w1_exact: zero total mass");
    if (std::abs(a - b) > 1e-12 * std::max(1.0, a))
        throw std::invalid_argument("w1_exact: unbalanced masses");
    for (Eigen::Index i = 0; i < cost.size(); ++i)
        if (!(cost.data()[i] >= 0.0) || !std::isfinite(cost.data()[i]))
            throw std::invalid_argument("w1_exact: cost entries must be finite and nonnegative");
}

}  // namespace

TransportResult w1_exact(const Vector& source, const Vector& target, const Matrix& cost,
                         const TransportOptions& options) {
    validate(source, target, cost);
    Vector a = source;
    Vector b = target;
    TransportResult result;
    result.source_potential = Vector::Zero(source.size());
    result.target_potential = Vector::Zero(target.size());

    if (options.cancel_common_mass) {
        if (cost.rows() != cost.cols()) throw std::invalid_argument("w1_exact: common-mass cancellation needs a square cost");
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            const double c = std::min(a[k], b[k]);
            if (c > 0.0) {
                result.plan.push_back({static_cast<int>(k), static_cast<int>(k), c});
                a[k] -= c;
                b[k] -= c;
            }
        }
    }

    ReducedProblem rp;
    const double scale = std::max(a.sum(), b.sum());
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) {
            rp.rows.push_back(static_cast<int>(i));
            rp.supply.push_back(a[i]);
        }
    for (Eigen::Index j = 0; j < b.size(); ++j)
        if (b[j] > 0.0) {
            rp.cols.push_back(static_cast<int>(j));
            rp.demand.push_back(b[j]);
        }

    if (!rp.rows.empty() && !rp.cols.empty() && scale > 0.0) {
        const int n = static_cast<int>(rp.rows.size());
        const int m = static_cast<int>(rp.cols.size());
        RowMatrix c(n, m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) c(i, j) = cost(rp.rows[i], rp.cols[j]);

        RowMatrix flow;
        Vector f(n), g(m);
        if (n == 1 || m == 1) {
            // A single point on one side fixes the plan.
            flow.resize(n, m);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) flow(i, j) = n == 1 ? rp.demand[j] : rp.supply[i];
            if (n == 1) {
                g = c.row(0).transpose();
                f.setZero();
            } else {
                f = c.col(0);
                g.setZero();
            }
        } else {
            NetworkSimplex solver(rp, c);
            solver.solve();
            flow = solver.flow();
            for (int i = 0; i < n; ++i) f[i] = solver.source_potential(i);
            for (int j = 0; j < m; ++j) g[j] = solver.target_potential(j);
            // Shift so that min f = 0 (potentials are defined up to a constant).
            const double shift = f.minCoeff();
            f.array() -= shift;
            g.array() += shift;
        }

        long double dual = 0.0L;
        for (int i = 0; i < n; ++i) {
            result.source_potential[rp.rows[i]] = f[i];
            dual += static_cast<long double>(rp.supply[i]) * f[i];
        }
        for (int j = 0; j < m; ++j) {
            result.target_potential[rp.cols[j]] = g[j];
            dual += static_cast<long double>(rp.demand[j]) * g[j];
        }
        long double primal = 0.0L;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double reduced = c(i, j) - f[i] - g[j];
                result.dual_infeasibility = std::max(result.dual_infeasibility, -reduced);
                if (flow(i, j) > 0.0) {
                    result.plan.push_back({rp.rows[i], rp.cols[j], flow(i, j)});
                    primal += static_cast<long double>(flow(i, j)) * c(i, j);
                    result.slackness_defect = std::max(result.slackness_defect, std::abs(reduced));
                }
            }
        result.cost = static_cast<double>(primal);
        result.duality_gap = static_cast<double>(primal - dual);
    }

    std::sort(result.plan.begin(), result.plan.end(), [](const PlanEntry& x, const PlanEntry& y) {
        return x.source != y.source ? x.source < y.source : x.target < y.target;
    });
    Vector rows = Vector::Zero(source.size());
    Vector cols = Vector::Zero(target.size());
    for (const auto& e : result.plan) {
        rows[e.source] += e.mass;
        cols[e.target] += e.mass;
    }
    result.marginal_defect = std::max((rows - source).lpNorm<Eigen::Infinity>(), (cols - target).lpNorm<Eigen::Infinity>());
    return result;
}

DensityTransport::DensityTransport(std::shared_ptr<const Grid> grid, int blocks_per_axis)
    : grid_(std::move(grid)), blocks_per_axis_(blocks_per_axis) {
    if (!grid_) throw std::invalid_argument("DensityTransport: null grid");
    if (blocks_per_axis < 1) throw std::invalid_argument("DensityTransport: blocks_per_axis must be positive");
    const Grid& g = *grid_;
    const ChartGeometry& geom = g.geometry();
    const int dim = g.dimension();
    const int b = std::min(blocks_per_axis, g.resolution());
    blocks_per_axis_ = b;

    std::vector<double> lo(dim), extent(dim);
    for (int k = 0; k < dim; ++k) {
        lo[k] = geom.periodic() ? 0.0 : -geom.r_max();
        extent[k] = geom.periodic() ? geom.periods()[k] : 2.0 * geom.r_max();
    }
    // Map each node to a raw block id, then compact to occupied blocks in raw order.
    std::vector<long> raw(g.size());
    for (int i = 0; i < g.size(); ++i) {
        auto x = g.node(i);
        long id = 0;
        for (int k = dim - 1; k >= 0; --k) {
            int c = static_cast<int>(std::floor((x[k] - lo[k]) / extent[k] * b));
            c = std::clamp(c, 0, b - 1);
            id = id * b + c;
        }
        raw[i] = id;
    }
    std::vector<long> ids(raw);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    node_block_.resize(g.size());
    std::vector<std::vector<int>> members(ids.size());
    for (int i = 0; i < g.size(); ++i) {
        const int blk = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), raw[i]) - ids.begin());
        node_block_[i] = blk;
        members[blk].push_back(i);
    }
    const int nb = static_cast<int>(ids.size());
    representatives_ = Matrix::Zero(nb, dim);
    for (int blk = 0; blk < nb; ++blk) {
        for (int i : members[blk]) representatives_.row(blk) += g.node_vector(i).transpose();
        representatives_.row(blk) /= static_cast<double>(members[blk].size());
    }

    block_cost_ = Matrix::Zero(nb, nb);
    offset_ = Vector::Zero(g.size());
    parallel_for(static_cast<std::size_t>(nb), [&](std::size_t first, std::size_t last) {
        for (std::size_t blk = first; blk < last; ++blk) {
            const auto& mem = members[blk];
            Matrix targets(nb + static_cast<int>(mem.size()), dim);
            targets.topRows(nb) = representatives_;
            for (std::size_t t = 0; t < mem.size(); ++t) targets.row(nb + static_cast<int>(t)) = g.node_vector(mem[t]).transpose();
            const Vector rep = representatives_.row(static_cast<Eigen::Index>(blk)).transpose();
            const std::vector<double> d = geom.distances_from(rep, targets);
            for (int other = 0; other < nb; ++other) block_cost_(static_cast<Eigen::Index>(blk), other) = d[other];
            for (std::size_t t = 0; t < mem.size(); ++t) offset_[mem[t]] = d[nb + t];
        }
    });
    // Exact symmetry: keep the value computed from the smaller block index.
    for (int i = 0; i < nb; ++i) {
        block_cost_(i, i) = 0.0;
        for (int j = i + 1; j < nb; ++j) block_cost_(j, i) = block_cost_(i, j);
    }
}

Vector DensityTransport::block_masses(const Vector& density) const {
    if (density.size() != grid_->size()) throw DomainError("block_masses: density does not match the grid");
    Vector masses = Vector::Zero(block_count());
    const Vector& w = grid_->weights();
    for (int i = 0; i < grid_->size(); ++i) masses[node_block_[i]] += density[i] * w[i];
    return masses;
}

int DensityTransport::block_of_point(std::span<const double> x) const { return node_block_[grid_->locate(x)]; }

double DensityTransport::coarse_w1(const Vector& masses_a, const Vector& masses_b) const {
    if (masses_a.size() != block_count() || masses_b.size() != block_count())
        throw DomainError("coarse_w1: block mass vectors have the wrong size");
    // Rescale b to a's total so rounding-level imbalances are tolerated.
    const double ta = masses_a.sum();
    const double tb = masses_b.sum();
    if (std::abs(ta - tb) > 1e-9 * std::max(ta, tb)) throw DomainError("coarse_w1: measures have different masses");
    TransportOptions opt;
    opt.cancel_common_mass = true;
    return w1_exact(masses_a, masses_b * (ta / tb), block_cost_, opt).cost;
}

W1Bracket DensityTransport::bracket(const Vector& m1, const Vector& m2) const {
    if (m1.size() != grid_->size() || m2.size() != grid_->size()) throw DomainError("w1 bracket: density/grid mismatch");
    W1Bracket out;
    out.coarse = coarse_w1(block_masses(m1), block_masses(m2));
    const Vector& w = grid_->weights();
    long double e = 0.0L, tv = 0.0L;
    for (int i = 0; i < grid_->size(); ++i) {
        const double diff = std::abs(m1[i] - m2[i]) * w[i];
        e += static_cast<long double>(diff) * offset_[i];
        tv += diff;
    }
    const double err = static_cast<double>(e);
    const double tv_bound = grid_->geometry().diameter() * static_cast<double>(0.5L * tv);
    out.lower = std::max(0.0, out.coarse - err);
    out.upper = std::min(out.coarse + err, tv_bound);
    out.lower = std::min(out.lower, out.upper);
    return out;
}

W1Bracket w1_between_densities(std::shared_ptr<const Grid> grid, const Vector& m1, const Vector& m2,
                               int blocks_per_axis) {
    DensityTransport dt(std::move(grid), blocks_per_axis);
    return dt.bracket(m1, m2);
}

}  // namespace mfgeo
