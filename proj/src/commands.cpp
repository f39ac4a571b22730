#include "mfgeo/commands.hpp"

#include "mfgeo/curvature_mfg.hpp"
#include "mfgeo/fpk.hpp"
#include "mfgeo/geograph.hpp"
#include "mfgeo/io.hpp"
#include "mfgeo/mfg.hpp"
#include "mfgeo/parallel.hpp"
#include "mfgeo/sde.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace mfgeo {

using nlohmann::json;

std::vector<std::string> RunResult::failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
        if (!c.passed) out.push_back(c.name);
    return out;
}

namespace {

constexpr const char* version = "0.1.0";

// Collects artifacts and checks while a command runs.
class Run {
public:
    Run(const RunConfig& config, std::filesystem::path dir, std::ostream& log)
        : config_(config), dir_(std::move(dir)), log_(log) {}

    const RunConfig& config() const { return config_; }
    std::ostream& log() { return log_; }
    json& observed() { return observed_; }

    void save(const std::string& name, const CsvTable& table) {
        table.save(dir_ / name);
        result_.artifacts.push_back(name);
    }
    void save(const std::string& name, const std::string& text) {
        write_text_file(dir_ / name, text);
        result_.artifacts.push_back(name);
    }

    void check(std::string name, bool passed, double value, double bound, std::string detail = {}) {
        log_ << (passed ? "  ok    " : "  FAIL  ") << name << ": " << format_significant(value, 6);
        if (std::isfinite(bound)) log_ << " (bound " << format_significant(bound, 6) << ")";
        if (!detail.empty()) log_ << " - " << detail;
        log_ << '\n';
        result_.checks.push_back({std::move(name), passed, value, bound, std::move(detail)});
    }

    RunResult finish(double elapsed, const std::string& error = {}) {
        json checks = json::array();
        for (const auto& c : result_.checks)
            checks.push_back({{"name", c.name},
                              {"passed", c.passed},
                              {"value", finite_or_string(c.value)},
                              {"bound", finite_or_string(c.bound)},
                              {"detail", c.detail}});
        const auto failed = result_.failures();
        const bool ok = error.empty() && failed.empty();
        json& m = result_.manifest;
        m["command"] = command_name(config_.command);
        m["config"] = config_.settings;
        m["versions"] = {{"mfgeo", version},
                         {"compiler", __VERSION__},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                       "." + std::to_string(EIGEN_MINOR_VERSION)},
                         {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                               std::to_string(NLOHMANN_JSON_VERSION_MINOR)}};
        m["seed"] = config_.seed();
        m["threads"] = thread_count();
        m["observed"] = observed_;
        m["checks"] = checks;
        m["violations"] = failed;
        if (!error.empty()) m["error"] = error;
        m["status"] = ok ? "ok" : "failed";
        m["elapsed_seconds"] = elapsed;
        result_.artifacts.push_back("manifest.json");
        m["artifacts"] = result_.artifacts;
        write_text_file(dir_ / "manifest.json", m.dump(2) + "\n");
        result_.exit_code = ok ? 0 : 1;
        return std::move(result_);
    }

    static json finite_or_string(double x) {
        if (std::isfinite(x)) return x;
        return format_number(x);
    }

private:
    const RunConfig& config_;
    std::filesystem::path dir_;
    std::ostream& log_;
    json observed_ = json::object();
    RunResult result_;
};

// ---- shared helpers ----

Vector initial_density(const Grid& grid, const json& block) {
    if (block.at("shape").get<std::string>() == "uniform") return normalize_density(grid, Vector::Ones(grid.size()));
    const auto c = block.at("center").get<std::vector<double>>();
    const double width = block.at("width").get<double>();
    const Vector centre = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
    grid.geometry().require_admissible(view(centre));
    return normalize_density(grid, sample_on_grid(grid, [&](std::span<const double> x) {
                                 const double d = grid.geometry().geodesic_distance(x, view(centre));
                                 return std::exp(-d * d / (2.0 * width * width));
                             }));
}

// Row-major raster of a 2-D grid field, NaN where the disk has no node.
std::vector<double> raster(const Grid& grid, const Vector& field) {
    const int n = grid.resolution();
    std::vector<double> out(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());
    const double r = grid.periodic() ? 0.0 : grid.geometry().r_max();
    for (int i = 0; i < grid.size(); ++i) {
        int idx[2];
        for (int k = 0; k < 2; ++k) {
            const double h = grid.spacing(k);
            const double origin = grid.periodic() ? 0.0 : -r + 0.5 * h;
            idx[k] = static_cast<int>(std::lround((grid.node(i)[k] - origin) / h));
        }
        if (idx[0] >= 0 && idx[0] < n && idx[1] >= 0 && idx[1] < n)
            out[static_cast<std::size_t>(idx[1]) * n + idx[0]] = field[i];
    }
    return out;
}

void save_heatmap(Run& run, const std::string& name, const Grid& grid, const Vector& field, const std::string& title) {
    if (grid.dimension() != 2) return;
    const auto values = raster(grid, field);
    const int px = std::max(2, 384 / grid.resolution());
    run.save(name, svg_heatmap(values, {title, grid.resolution(), grid.resolution(), px}));
}

CsvTable node_table(const Grid& grid, std::vector<std::string> extra) {
    std::vector<std::string> header{"node"};
    for (int k = 0; k < grid.dimension(); ++k) header.push_back("x" + std::to_string(k));
    for (auto& e : extra) header.push_back(std::move(e));
    return CsvTable(std::move(header));
}

void add_node(CsvTable& t, const Grid& grid, int i) {
    t.row().add(i);
    for (int k = 0; k < grid.dimension(); ++k) t.add(grid.node(i)[k]);
}

std::vector<std::uint64_t> seed_list(const RunConfig& config, const json& experiment) {
    std::vector<std::uint64_t> out;
    const int count = experiment.at("seed_count").get<int>();
    for (int i = 0; i < count; ++i) out.push_back(config.seed() + static_cast<std::uint64_t>(i));
    return out;
}

// ---- mfg-solve ----

void run_mfg(Run& run) {
    const RunConfig& cfg = run.config();
    const json& num = cfg.at("numerics");
    auto geom = make_geometry(cfg.at("geometry"));
    auto grid = std::make_shared<Grid>(geom, num.at("grid").get<int>());

    MfgProblem problem;
    problem.grid = grid;
    problem.horizon = num.at("horizon").get<double>();
    problem.steps = num.at("steps").get<int>();
    problem.initial = initial_density(*grid, cfg.at("initial"));
    const json& coupling = cfg.at("coupling");
    problem.running = std::make_shared<Coupling>(grid, make_coupling_spec(coupling.at("running"), *geom));
    if (coupling.at("terminal").at("enabled").get<bool>())
        problem.terminal = std::make_shared<Coupling>(grid, make_coupling_spec(coupling.at("terminal"), *geom));

    PicardOptions options;
    options.damping = num.at("damping").get<double>();
    options.min_damping = num.at("min_damping").get<double>();
    options.tolerance = num.at("tolerance").get<double>();
    options.max_iters = num.at("max_iters").get<int>();
    options.method = num.at("hjb_method").get<std::string>() == "direct" ? HjbMethod::direct : HjbMethod::cole_hopf;
    options.transport_blocks = num.at("transport_blocks").get<int>();
    options.metric_stride = num.at("metric_stride").get<int>();

    run.log() << "mfg-solve: " << geom->name() << ", " << grid->size() << " nodes, " << problem.steps << " steps\n";
    const MfgSolution sol = picard_solve(problem, options);
    const bool solved = !sol.u.empty();

    json& obs = run.observed();
    obs["iterations"] = sol.iterations;
    obs["diagnostic"] = sol.diagnostic;
    obs["coupling_bound"] = sol.bound;
    obs["sup_abs_u"] = sol.hjb.sup_abs_u;
    obs["sup_bound"] = sol.hjb.sup_bound;
    obs["barrier_ratio"] = sol.hjb.barrier_ratio;
    obs["min_w"] = sol.hjb.min_w;
    obs["max_w"] = sol.hjb.max_w;
    obs["max_mass_defect"] = sol.fpk.max_mass_defect;
    obs["min_density"] = sol.fpk.min_density;
    if (solved) {
        const EquilibriumResidual res = equilibrium_residual(sol, problem);
        obs["residuals"] = {{"hjb", res.hjb}, {"fpk", res.fpk}, {"fixed_point", res.fixed_point}};
    }

    run.check("converged", sol.converged, sol.iterations, options.max_iters, sol.diagnostic);
    if (solved) {
        run.check("sup |u| <= C0 (T + 1)", sol.hjb.sup_abs_u <= sol.hjb.sup_bound * (1.0 + 1e-12), sol.hjb.sup_abs_u,
                  sol.hjb.sup_bound);
        run.check("barrier bounds on w", sol.hjb.barrier_violations == 0, sol.hjb.barrier_ratio, 1.0,
                  std::to_string(sol.hjb.barrier_violations) + " violations");
        run.check("mass defect per step", sol.fpk.max_mass_defect <= 1e-10, sol.fpk.max_mass_defect, 1e-10);
        run.check("density nonnegative", sol.fpk.min_density >= 0.0, sol.fpk.min_density, 0.0);
    }

    CsvTable history({"iteration", "w1_residual", "w1_lower", "sup_change_m", "sup_change_u", "damping"});
    for (std::size_t k = 0; k < sol.history.size(); ++k) {
        const auto& h = sol.history[k];
        history.row().add(k + 1).add(h.w1_residual).add(h.w1_lower).add(h.sup_change_m).add(h.sup_change_u).add(
            h.damping);
    }
    run.save("history.csv", history);
    if (!solved) return;

    CsvTable series({"step", "time", "mass", "min_density", "max_density", "sup_abs_u"});
    for (int n = 0; n <= problem.steps; ++n) {
        const Vector& m = sol.m[static_cast<std::size_t>(n)];
        series.row()
            .add(n)
            .add(n * problem.dt())
            .add(m.dot(grid->weights()))
            .add(m.minCoeff())
            .add(m.maxCoeff())
            .add(sol.u[static_cast<std::size_t>(n)].cwiseAbs().maxCoeff());
    }
    run.save("time_series.csv", series);

    CsvTable fields = node_table(*grid, {"m_initial", "m_final", "u_initial", "u_final"});
    for (int i = 0; i < grid->size(); ++i) {
        add_node(fields, *grid, i);
        fields.add(sol.m.front()[i]).add(sol.m.back()[i]).add(sol.u.front()[i]).add(sol.u.back()[i]);
    }
    run.save("fields.csv", fields);
    save_heatmap(run, "density_final.svg", *grid, sol.m.back(), "density at t = T");
    save_heatmap(run, "value_initial.svg", *grid, sol.u.front(), "value function at t = 0");
    CurveSeries curve{"W1 residual", {}, {}};
    for (std::size_t k = 0; k < sol.history.size(); ++k) {
        curve.x.push_back(static_cast<double>(k + 1));
        curve.y.push_back(sol.history[k].w1_residual);
    }
    run.save("residuals.svg", svg_curves({curve}, {"Picard fixed-point residual", "iteration", "W1 upper bound",
                                                   false, true}));
}

// ---- curvature-mfg ----

void run_curvature_mfg(Run& run) {
    const RunConfig& cfg = run.config();
    const json& num = cfg.at("numerics");
    auto geom = make_geometry(cfg.at("geometry"));
    auto grid = std::make_shared<Grid>(geom, num.at("grid").get<int>());
    StationaryProblem problem;
    problem.grid = grid;
    problem.discount = num.at("discount").get<double>();
    problem.reduction_coefficient = num.at("reduction_coefficient").get<double>();
    problem.tolerance = num.at("tolerance").get<double>();
    problem.max_newton = num.at("max_newton").get<int>();

    run.log() << "curvature-mfg: " << geom->name() << ", " << grid->size() << " nodes, r = "
              << format_significant(problem.discount, 6) << '\n';
    const StationarySolution sol = solve_stationary(problem);
    const FullSystemResidual full = verify_full_system(problem, sol.v, sol.m);

    int mode = 0, flattest = 0;
    sol.m.maxCoeff(&mode);
    sol.scalar_curvature.minCoeff(&flattest);
    json& obs = run.observed();
    obs["newton_iterations"] = sol.newton_iterations;
    obs["fixed_point_iterations"] = sol.fixed_point_iterations;
    obs["used_fallback"] = sol.used_fallback;
    obs["reduced_residual"] = sol.residual;
    obs["full_system"] = {{"fpk", full.fpk}, {"hjb", full.hjb}};
    obs["sup_abs_v"] = sol.v.cwiseAbs().maxCoeff();
    obs["curvature_range"] = {sol.scalar_curvature.minCoeff(), sol.scalar_curvature.maxCoeff()};
    obs["mode_to_min_curvature_distance"] = geom->geodesic_distance(grid->node(mode), grid->node(flattest));

    run.check("converged", sol.converged, sol.residual, problem.tolerance, sol.diagnostic);
    run.check("reduced residual", sol.residual <= problem.tolerance, sol.residual, problem.tolerance);
    if (problem.reduction_coefficient == 2.0)
        run.check("full-system value equation residual", full.hjb <= 1e-8, full.hjb, 1e-8);

    CsvTable t = node_table(*grid, {"v", "m", "scalar_curvature", "mean_field_curvature"});
    for (int i = 0; i < grid->size(); ++i) {
        add_node(t, *grid, i);
        t.add(sol.v[i]).add(sol.m[i]).add(sol.scalar_curvature[i]).add(full.mean_field_curvature[i]);
    }
    run.save("solution.csv", t);
    CsvTable h({"iteration", "residual"});
    for (std::size_t k = 0; k < sol.history.size(); ++k) h.row().add(k + 1).add(sol.history[k]);
    run.save("history.csv", h);
    save_heatmap(run, "value.svg", *grid, sol.v, "stationary value v");
    save_heatmap(run, "density.svg", *grid, sol.m, "stationary density m");
    save_heatmap(run, "scalar_curvature.svg", *grid, sol.scalar_curvature, "scalar curvature");
}

// ---- graph-curvature ----

void run_graph_curvature(Run& run) {
    const RunConfig& cfg = run.config();
    const json& g = cfg.at("graph");
    const auto path = resolve_input(cfg, g.at("edges").get<std::string>());
    const auto edges = read_edge_list_file(path.string());
    int nodes = 0;
    for (const auto& e : edges) nodes = std::max({nodes, e.a + 1, e.b + 1});
    const GeometricGraph graph = GeometricGraph::from_edges(nodes, edges);
    const double radius = g.at("radius").get<double>();

    std::vector<std::pair<int, int>> chosen;
    for (const auto& s : g.at("selected")) chosen.emplace_back(s[0].get<int>(), s[1].get<int>());
    if (chosen.empty())
        for (const auto& e : graph.edges()) chosen.emplace_back(e.a, e.b);

    run.log() << "graph-curvature: " << path.string() << ", " << graph.node_count() << " nodes, "
              << graph.edge_count() << " edges, radius " << format_significant(radius, 6) << '\n';
    run.observed()["nodes"] = graph.node_count();
    run.observed()["edges"] = graph.edge_count();
    run.observed()["connected"] = graph.connected();

    CsvTable t({"a", "b", "distance", "w1", "kappa", "ball_a", "ball_b"});
    double max_kappa = -std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : chosen) {
        if (a >= graph.node_count() || b >= graph.node_count() || a == b)
            throw DomainError("graph-curvature: selected pair " + std::to_string(a) + "-" + std::to_string(b) +
                              " is not a pair of distinct nodes");
        const OllivierResult r = ollivier_edge(graph, a, b, radius);
        run.log() << "edge " << a << "-" << b << ": kappa = " << format_significant(r.kappa, 10) << '\n';
        t.row().add(a).add(b).add(r.distance).add(r.w1).add(r.kappa).add(r.ball_x).add(r.ball_y);
        max_kappa = std::max(max_kappa, r.kappa);
    }
    run.save("curvature.csv", t);
    run.check("kappa <= 1 on every edge", max_kappa <= 1.0 + 1e-12, max_kappa, 1.0);
}

// ---- graph-converge ----

void run_graph_converge(Run& run) {
    const RunConfig& cfg = run.config();
    auto geom = make_geometry(cfg.at("geometry"));
    const json& ex = cfg.at("experiment");
    const int dim = geom->dimension();

    std::array<double, 2> periods{1.0, 1.0};
    if (geom->periodic() && dim == 2) periods = {geom->periods()[0], geom->periods()[1]};
    std::vector<FourierTerm> terms;
    for (const auto& t : cfg.at("density").at("log_terms"))
        terms.push_back({t.value("kx", 0), t.value("ky", 0), t.value("cos", 0.0), t.value("sin", 0.0)});
    if (!terms.empty() && dim != 2) throw DomainError("graph-converge: density terms need a two-dimensional chart");
    const ScalarProfile log_density{0.0, terms, periods};
    const ChartDensity density = [log_density](const Vector& x) { return std::exp(log_density(view(x))); };

    ConvergenceSettings s;
    s.sizes = ex.at("sizes").get<std::vector<int>>();
    s.epsilon.scale = ex.at("epsilon").at("scale").get<double>();
    s.epsilon.exponent = ex.at("epsilon").at("exponent").get<double>();
    const auto target = ex.at("target").get<std::vector<double>>();
    s.target = Eigen::Map<const Vector>(target.data(), dim);
    geom->require_admissible(view(s.target));
    const auto dir = ex.at("direction").get<std::vector<double>>();
    Vector v = Eigen::Map<const Vector>(dir.data(), dim);
    const double norm = std::sqrt(v.dot(geom->metric_data_at(s.target).g * v));
    if (!(norm > 0.0)) throw DomainError("graph-converge: direction must be nonzero");
    s.direction = v / norm;
    s.separation = ex.at("separation").get<double>();
    s.seeds = seed_list(cfg, ex);
    s.trials = ex.at("trials").get<int>();

    run.log() << "graph-converge: " << geom->name() << ", sizes";
    for (int n : s.sizes) run.log() << ' ' << n;
    run.log() << ", " << s.seeds.size() << " seeds x " << s.trials << " trials\n";
    const ConvergenceReport report = convergence_experiment(geom, density, s);

    json& obs = run.observed();
    obs["target"] = {{"ricci", report.target.ricci},
                     {"hessian_log_density", report.target.hessian},
                     {"weighted_ricci", report.target.weighted}};
    json summary = json::array();
    CsvTable st({"n", "epsilon", "mean", "stddev", "ci_lower", "ci_upper", "count", "bias", "skipped"});
    CurveSeries bias{"|bias|", {}, {}};
    for (const auto& row : report.summary) {
        st.row()
            .add(row.n)
            .add(row.epsilon)
            .add(row.interval.mean)
            .add(row.interval.stddev)
            .add(row.interval.lower)
            .add(row.interval.upper)
            .add(row.interval.count)
            .add(row.bias)
            .add(row.skipped);
        summary.push_back({{"n", row.n},
                           {"epsilon", row.epsilon},
                           {"mean", row.interval.mean},
                           {"ci", {row.interval.lower, row.interval.upper}},
                           {"bias", row.bias},
                           {"skipped", row.skipped}});
        bias.x.push_back(row.n);
        bias.y.push_back(std::abs(row.bias));
        run.log() << "  N = " << row.n << ": rescaled kappa " << format_significant(row.interval.mean, 5) << " ["
                  << format_significant(row.interval.lower, 5) << ", " << format_significant(row.interval.upper, 5)
                  << "], bias " << format_significant(row.bias, 5) << '\n';
    }
    obs["summary"] = summary;
    run.save("summary.csv", st);

    CsvTable rows({"n", "seed", "trial", "epsilon", "kappa", "rescaled", "distance", "ball_x", "ball_y", "skipped",
                   "note"});
    for (const auto& r : report.rows)
        rows.row()
            .add(r.n)
            .add(std::to_string(r.seed))
            .add(r.trial)
            .add(r.epsilon)
            .add(r.kappa)
            .add(r.rescaled)
            .add(r.distance)
            .add(r.ball_x)
            .add(r.ball_y)
            .add(r.skipped ? 1 : 0)
            .add(r.note);
    run.save("samples.csv", rows);
    run.save("bias.svg", svg_curves({bias}, {"rescaled graph curvature bias", "nodes N", "|mean - target|", true,
                                             true}));

    const auto& last = report.summary.back();
    run.check("largest-N interval contains the target", last.interval.contains(report.target.weighted),
              last.interval.mean, report.target.weighted,
              "[" + format_significant(last.interval.lower, 6) + ", " + format_significant(last.interval.upper, 6) + "]");
    run.check("|bias| nonincreasing in N", report.bias_nonincreasing, std::abs(last.bias),
              std::abs(report.summary.front().bias));
}

// ---- sde-validate ----

void run_sde(Run& run) {
    const RunConfig& cfg = run.config();
    const json& num = cfg.at("numerics");
    auto geom = make_geometry(cfg.at("geometry"));
    auto grid = std::make_shared<Grid>(geom, num.at("grid").get<int>());
    DensityTransport transport(grid, num.at("transport_blocks").get<int>());
    const double horizon = num.at("horizon").get<double>();
    const int steps = num.at("steps").get<int>();
    const int substeps = num.at("substeps").get<int>();
    const double dt = horizon / steps;
    const Vector m0 = initial_density(*grid, cfg.at("initial"));
    const json& dr = cfg.at("drift");
    const bool mfg = dr.at("kind").get<std::string>() == "mfg";

    run.log() << "sde-validate: " << geom->name() << ", " << (mfg ? "game drift" : "zero drift") << ", T = "
              << format_significant(horizon, 6) << '\n';
    std::vector<Vector> density;
    std::shared_ptr<const DriftTrajectory> drift;
    double mass_defect = 0.0;
    if (mfg) {
        MfgProblem p;
        p.grid = grid;
        p.horizon = horizon;
        p.steps = steps;
        p.initial = m0;
        p.running = std::make_shared<Coupling>(grid, make_coupling_spec(dr.at("coupling"), *geom));
        PicardOptions o;
        o.tolerance = dr.at("tolerance").get<double>();
        o.damping = dr.at("damping").get<double>();
        o.max_iters = dr.at("max_iters").get<int>();
        o.transport_blocks = num.at("transport_blocks").get<int>();
        MfgSolution sol = picard_solve(p, o);
        run.check("game solve converged", sol.converged, sol.iterations, o.max_iters, sol.diagnostic);
        double sup_drift = 0.0;
        for (const auto& b : sol.drift) sup_drift = std::max(sup_drift, b.cwiseAbs().maxCoeff());
        run.observed()["sup_drift"] = sup_drift;
        mass_defect = sol.fpk.max_mass_defect;
        density = std::move(sol.m);
        drift = std::make_shared<DriftTrajectory>(grid, dt, std::move(sol.drift));
    } else {
        ForwardProblem fp;
        fp.grid = grid;
        fp.horizon = horizon;
        fp.steps = steps;
        fp.initial = m0;
        FpkSolution sol = solve_forward(fp);
        mass_defect = sol.report.max_mass_defect;
        density = std::move(sol.m);
    }
    run.check("forward mass defect", mass_defect <= 1e-10, mass_defect, 1e-10);

    const json& ex = cfg.at("experiment");
    const auto counts = ex.at("particles").get<std::vector<int>>();
    const auto seeds = seed_list(cfg, ex);
    const int stride = std::max(1, steps / 10);
    CsvTable table({"particles", "seed", "time", "coarse", "lower", "upper", "reflections"});
    CsvTable summary({"particles", "time", "mean_coarse"});
    std::vector<double> final_mean;
    long long reflections = 0, particle_steps = 0;
    bool excess = false;
    std::vector<CurveSeries> curves;
    for (int count : counts) {
        std::vector<double> times, sum;
        for (std::uint64_t seed : seeds) {
            const Matrix start = sample_grid_density(*grid, m0, count, stream_key(seed, 2ULL * count));
            SimulationSpec spec;
            spec.geometry = geom;
            spec.horizon = horizon;
            spec.dt = dt / substeps;
            spec.seed = stream_key(seed, 2ULL * count + 1);
            spec.record_every = substeps * stride;
            spec.drift = drift;
            const ParticleTrajectory traj = simulate(spec, start);
            reflections += traj.reflections;
            particle_steps += traj.particle_steps;
            excess = excess || traj.excess_reflections;
            const auto report = empirical_vs_fpk(transport, traj, density, dt);
            if (sum.empty()) sum.assign(report.size(), 0.0);
            times.clear();
            for (std::size_t r = 0; r < report.size(); ++r) {
                const auto& d = report[r];
                table.row().add(count).add(std::to_string(seed)).add(d.time).add(d.coarse).add(d.lower).add(d.upper).add(
                    traj.reflections);
                sum[r] += d.coarse / static_cast<double>(seeds.size());
                times.push_back(d.time);
            }
            if (count == counts.back() && seed == seeds.front()) {
                CsvTable snap({"particle", "x0", "x1"});
                const Matrix& end = traj.positions.back();
                for (int p = 0; p < end.rows(); ++p) snap.row().add(p).add(end(p, 0)).add(end(p, end.cols() > 1 ? 1 : 0));
                run.save("particles_final.csv", snap);
            }
        }
        for (std::size_t r = 0; r < sum.size(); ++r) summary.row().add(count).add(times[r]).add(sum[r]);
        final_mean.push_back(sum.back());
        curves.push_back({"N = " + std::to_string(count), times, sum});
        run.log() << "  N = " << count << ": mean coarse W1 at T = " << format_significant(sum.back(), 5) << '\n';
    }
    run.save("discrepancy.csv", table);
    run.save("discrepancy_summary.csv", summary);
    run.save("discrepancy.svg", svg_curves(curves, {"empirical vs PDE coarse W1", "time", "W1", false, false}));

    const auto band = ex.at("ratio_band").get<std::vector<double>>();
    const double ratio = final_mean[1] / final_mean[0];
    run.observed()["final_mean_coarse_w1"] = final_mean;
    run.observed()["ratio"] = ratio;
    run.observed()["reflections"] = reflections;
    run.observed()["particle_steps"] = particle_steps;
    run.check("W1 ratio at T within band", band[0] <= ratio && ratio <= band[1], ratio, band[1],
              "band [" + format_significant(band[0], 4) + ", " + format_significant(band[1], 4) + "]");
    run.check("reflections <= 0.1% of particle steps", !excess, static_cast<double>(reflections),
              1e-3 * static_cast<double>(particle_steps));

    // Time regularity of the forward flow from a point mass.
    const json& reg = cfg.at("regularity");
    auto fine = std::make_shared<Grid>(geom, reg.at("grid").get<int>());
    ForwardProblem heat;
    heat.grid = fine;
    heat.horizon = reg.at("horizon").get<double>();
    heat.steps = reg.at("steps").get<int>();
    Vector point = Vector::Zero(fine->size());
    const auto c = cfg.at("initial").at("center").get<std::vector<double>>();
    point[fine->locate(c)] = 1.0;
    heat.initial = normalize_density(*fine, point);
    const FpkSolution flow = solve_forward(heat);
    DensityTransport fine_transport(fine, reg.at("transport_blocks").get<int>());
    const TimeRegularity tr =
        time_regularity(fine_transport, flow.m, heat.dt(), reg.at("lag_steps").get<std::vector<int>>());
    CsvTable rt({"lag", "w1"});
    for (std::size_t k = 0; k < tr.lags.size(); ++k) rt.row().add(tr.lags[k]).add(tr.distances[k]);
    run.save("regularity.csv", rt);
    run.save("regularity.svg", svg_curves({{"W1(m_0, m_t)", tr.lags, tr.distances}},
                                          {"forward flow from a point mass", "t", "W1", true, true}));
    const auto eb = reg.at("exponent_band").get<std::vector<double>>();
    run.observed()["hoelder_exponent"] = tr.exponent;
    run.observed()["hoelder_r_squared"] = tr.r_squared;
    run.check("Hoelder exponent of the forward flow within band", eb[0] <= tr.exponent && tr.exponent <= eb[1],
              tr.exponent, eb[1], "band [" + format_significant(eb[0], 4) + ", " + format_significant(eb[1], 4) + "]");
}

// ---- self-check ----

void run_self_check(Run& run) {
    CsvTable t({"module", "case", "passed", "value", "bound", "detail"});
    int failed = 0;
    for (const auto& c : self_check_cases()) {
        Check r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = std::string("threw: ") + e.what();
        }
        r.name = c.module + ": " + c.name;
        failed += r.passed ? 0 : 1;
        t.row().add(c.module).add(c.name).add(r.passed ? 1 : 0).add(r.value).add(r.bound).add(r.detail);
        run.check(r.name, r.passed, r.value, r.bound, r.detail);
    }
    run.observed()["cases"] = self_check_cases().size();
    run.observed()["failed"] = failed;
    run.save("self_check.csv", t);
}

}  // namespace

RunResult run_command(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log) {
    if (config.threads() > 0 && !std::getenv("MFGEO_THREADS")) set_thread_count(config.threads());
    std::filesystem::create_directories(out_dir);
    Run run(config, out_dir, log);
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    try {
        switch (config.command) {
            case CommandKind::mfg_solve: run_mfg(run); break;
            case CommandKind::curvature_mfg: run_curvature_mfg(run); break;
            case CommandKind::graph_curvature: run_graph_curvature(run); break;
            case CommandKind::graph_converge: run_graph_converge(run); break;
            case CommandKind::sde_validate: run_sde(run); break;
            case CommandKind::self_check: run_self_check(run); break;
        }
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return run.finish(elapsed(), e.what());
    }
    RunResult result = run.finish(elapsed());
    log << (result.ok() ? "all checks passed" : "violated: ");
    const auto failed = result.failures();
    for (std::size_t i = 0; i < failed.size(); ++i) log << (i ? "; " : "") << failed[i];
    log << '\n';
    return result;
}

}  // namespace mfgeo
