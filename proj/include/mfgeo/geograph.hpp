#pragma once

#include "mfgeo/geometry.hpp"
#include "mfgeo/stats.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace mfgeo {

struct GraphEdge {
    int to = 0;
    double weight = 0.0;
};

struct EdgeRecord {
    int a = 0;
    int b = 0;
    double weight = 0.0;
};

// Weighted undirected graph whose shortest-path metric d_G drives ball
// measures and transport costs. Built either from chart points with the
// epsilon rule (edge iff base distance <= epsilon, weight = that distance)
// or from an explicit edge list.
class GeometricGraph {
public:
    static GeometricGraph from_points(std::shared_ptr<const ChartGeometry> geometry, Matrix points, double epsilon);
    static GeometricGraph from_edges(int node_count, const std::vector<EdgeRecord>& edges);

    int node_count() const { return static_cast<int>(adjacency_.size()); }
    std::size_t edge_count() const { return edge_count_; }
    double mean_degree() const { return node_count() ? 2.0 * static_cast<double>(edge_count_) / node_count() : 0.0; }
    // Connecting radius used at construction; 0 for explicit edge lists.
    double epsilon() const { return epsilon_; }

    const std::vector<GraphEdge>& neighbors(int i) const { return adjacency_.at(static_cast<std::size_t>(i)); }
    std::vector<EdgeRecord> edges() const;

    bool has_positions() const { return geometry_ != nullptr; }
    const ChartGeometry& geometry() const;
    const Matrix& positions() const { return positions_; }
    Vector position(int i) const { return positions_.row(i).transpose(); }
    // Index of the node closest to x in the base distance.
    int nearest_node(const Vector& x) const;

    bool connected() const { return component_count_ == 1; }
    int component_count() const { return component_count_; }
    int component(int i) const { return component_[static_cast<std::size_t>(i)]; }

    // Shortest-path distances from source; entries beyond cutoff are +inf.
    std::vector<double> distances_from(int source, double cutoff = std::numeric_limits<double>::infinity()) const;
    // d_G from source to each target; stops once every target is settled.
    std::vector<double> distances_to(int source, const std::vector<int>& targets) const;
    double distance(int a, int b) const;

private:
    GeometricGraph() = default;
    void finish();

    std::shared_ptr<const ChartGeometry> geometry_;
    Matrix positions_;
    double epsilon_ = 0.0;
    std::vector<std::vector<GraphEdge>> adjacency_;
    std::size_t edge_count_ = 0;
    std::vector<int> component_;
    int component_count_ = 0;
};

// Node density relative to the Riemannian volume; need not be normalized.
using ChartDensity = std::function<double(const Vector&)>;

// N points drawn by rejection against density * volume weight on the chart
// domain. Counter-based randomness: the result depends only on the seed.
Matrix sample_points(const ChartGeometry& geometry, int count, const ChartDensity& density, std::uint64_t seed);

struct BallMeasure {
    std::vector<int> nodes;  // ascending
    double weight = 0.0;     // common mass 1 / nodes.size()
};

// Uniform probability on the closed ball {y : d_G(x, y) <= radius}.
BallMeasure ball_measure(const GeometricGraph& graph, int x, double radius);

struct OllivierResult {
    double kappa = 0.0;
    double w1 = 0.0;
    double distance = 0.0;
    int ball_x = 0;
    int ball_y = 0;
};

// kappa_G(x, y) = 1 - W1_G(ball(x), ball(y)) / d_G(x, y), W1 solved exactly
// with ground cost d_G.
OllivierResult ollivier_edge(const GeometricGraph& graph, int x, int y, double radius);

struct ContinuousQuadrature {
    int radial = 8;
    int angular = 24;
};

struct ContinuousCurvature {
    double kappa = 0.0;
    double w1 = 0.0;
    double distance = 0.0;
    // 2(n + 2) kappa / eps^2, the estimate of Ric(v, v)
    double rescaled = 0.0;
    int support = 0;
};

// Coarse curvature between x and exp_x(delta v) of the normalized volume
// restricted to geodesic eps-balls. The ball at x is discretized by a
// Gauss-Legendre (geodesic radius) x uniform (angle) rule and carried to
// the second centre by the isometry along the geodesic, so the two measures
// are exact isometric copies. Needs a 2-D geometry with closed-form
// isometries; v must be g-unit.
ContinuousCurvature coarse_curvature_continuous(const ChartGeometry& geometry, const Vector& x, const Vector& v,
                                                double eps, double delta, const ContinuousQuadrature& quad = {});

struct WeightedRicci {
    double ricci = 0.0;        // Ric^g(v, v)
    double hessian = 0.0;      // Hess(log mu)(v, v)
    double weighted = 0.0;     // Ric^g(v, v) - Hess(log mu)(v, v)
    double scalar = 0.0;       // R^g
    double laplacian = 0.0;    // Lap_g log mu
    double weighted_scalar = 0.0;  // R^g - Lap_g log mu
};

WeightedRicci weighted_ricci_target(const ChartGeometry& geometry, const ChartDensity& density, const Vector& x,
                                    const Vector& v);

// epsilon(N) = scale * N^exponent; the default exponent is -1 / (2 dim + 4).
struct EpsilonRule {
    double scale = 0.5;
    double exponent = 0.0;  // 0 selects the dimension default
    double operator()(int n, int dim) const;
};

struct ConvergenceSettings {
    std::vector<int> sizes;
    EpsilonRule epsilon;
    Vector target;     // chart point
    Vector direction;  // g-unit at target
    // distance to the second node, as a multiple of epsilon
    double separation = 0.5;
    std::vector<std::uint64_t> seeds;
    int trials = 1;
};

struct ConvergenceRow {
    int n = 0;
    std::uint64_t seed = 0;
    int trial = 0;
    double epsilon = 0.0;
    double kappa = 0.0;
    double rescaled = 0.0;
    double distance = 0.0;
    int ball_x = 0;
    int ball_y = 0;
    bool skipped = false;
    std::string note;
};

struct ConvergenceSummary {
    int n = 0;
    double epsilon = 0.0;
    MeanInterval interval;
    double bias = 0.0;  // mean - target
    int skipped = 0;
};

struct ConvergenceReport {
    WeightedRicci target;
    std::vector<ConvergenceRow> rows;
    std::vector<ConvergenceSummary> summary;
    bool bias_nonincreasing = false;
};

ConvergenceReport convergence_experiment(std::shared_ptr<const ChartGeometry> geometry, const ChartDensity& density,
                                         const ConvergenceSettings& settings);

// "a,b,weight" rows with a header; node count = 1 + largest index.
std::vector<EdgeRecord> read_edge_list(std::istream& in);
std::vector<EdgeRecord> read_edge_list_file(const std::string& path);
void write_edge_list(std::ostream& out, const GeometricGraph& graph);

}  // namespace mfgeo
