// Acceptance run: one PASS/FAIL line per criterion, with the measured value,
// the threshold and the wall time against its budget.

#include "mfgeo/commands.hpp"
#include "mfgeo/curvature_mfg.hpp"
#include "mfgeo/geograph.hpp"
#include "mfgeo/io.hpp"
#include "mfgeo/mfg.hpp"
#include "mfgeo/parallel.hpp"
#include "mfgeo/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

using namespace mfgeo;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Verdict {
    bool passed = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;
    std::function<Verdict()> run;
};

std::string num(double x) { return format_significant(x, 4); }

std::shared_ptr<const ChartGeometry> flat_torus() {
    return std::make_shared<ChartGeometry>(ChartGeometry::flat_torus({1.0, 1.0}));
}
std::shared_ptr<const ChartGeometry> disk() {
    return std::make_shared<ChartGeometry>(ChartGeometry::poincare_disk(2));
}

Vector bump(const Grid& g, double cx, double cy, double width) {
    return normalize_density(g, sample_on_grid(g, [=, &g](auto x) {
        double dx = x[0] - cx, dy = x[1] - cy;
        if (g.periodic()) {
            dx = std::remainder(dx, 1.0);
            dy = std::remainder(dy, 1.0);
        }
        return std::exp(-(dx * dx + dy * dy) / (2 * width * width));
    }));
}

// Worst mass defect and lowest density seen by any forward solve in the run.
struct ForwardLedger {
    double mass_defect = 0.0;
    double min_density = 1.0;
    int runs = 0;
    void record(const FpkReport& r) {
        mass_defect = std::max(mass_defect, r.max_mass_defect);
        min_density = std::min(min_density, r.min_density);
        ++runs;
    }
};
ForwardLedger forward_ledger;

fs::path out_root() {
    const fs::path p = fs::current_path() / "acceptance_out";
    fs::create_directories(p);
    return p;
}

// Random games on both geometries, drawn from a counter-based stream.
Verdict randomized_bounds() {
    int violations = 0, converged = 0;
    double worst_ratio = 0.0;
    for (int run = 0; run < 20; ++run) {
        const std::uint64_t key = stream_key(2024, static_cast<std::uint64_t>(run));
        std::uint64_t c = 0;
        auto u = [&] { return counter_uniform(key, c++); };
        const bool torus = run % 2 == 0;
        auto grid = std::make_shared<Grid>(torus ? flat_torus() : disk(), 64);
        CouplingSpec spec;
        const InteractionKernel::Shape shapes[] = {InteractionKernel::Shape::exponential,
                                                   InteractionKernel::Shape::gaussian,
                                                   InteractionKernel::Shape::inverse};
        spec.kernel.shape = shapes[static_cast<int>(3 * u()) % 3];
        spec.kernel.scale = 0.1 + 0.4 * u();
        spec.strength = 0.2 + 1.8 * u();
        if (u() < 0.5) {
            spec.kind = CouplingKind::anchored;
            spec.anchor.terms = {FourierTerm{1, 0, u() - 0.5, 0.0}, FourierTerm{0, 1, 0.0, u() - 0.5}};
        }
        MfgProblem p;
        p.grid = grid;
        p.horizon = 1.0;
        p.steps = 100;
        const double cx = torus ? u() : 1.2 * u() - 0.6, cy = torus ? u() : 1.2 * u() - 0.6;
        p.initial = bump(*grid, cx, cy, 0.08 + 0.22 * u());
        p.running = std::make_shared<Coupling>(grid, spec);
        if (u() < 0.5) {
            CouplingSpec terminal = spec;
            terminal.strength *= 0.5;
            p.terminal = std::make_shared<Coupling>(grid, terminal);
        }
        PicardOptions opt;
        opt.max_iters = 30;
        const MfgSolution sol = picard_solve(p, opt);
        forward_ledger.record(sol.fpk);
        if (sol.converged) ++converged;
        if (sol.hjb.sup_abs_u > sol.hjb.sup_bound * (1.0 + 1e-12)) ++violations;
        violations += sol.hjb.barrier_violations;
        worst_ratio = std::max(worst_ratio, sol.hjb.barrier_ratio);
    }
    return {violations == 0, "20 runs (10 torus, 10 disk, 64^2 x 100), violations " + std::to_string(violations) +
                                 ", worst barrier ratio " + num(worst_ratio) + ", converged " +
                                 std::to_string(converged) + "/20"};
}

Verdict cole_hopf_vs_direct() {
    auto grid = std::make_shared<Grid>(flat_torus(), 64);
    const double amp = 0.05;
    BackwardProblem p;
    p.grid = grid;
    p.horizon = 1.0;
    p.steps = 100;
    for (int n = 0; n <= p.steps; ++n) {
        const double t = p.time(n);
        p.source.push_back(sample_on_grid(*grid, [&](auto x) {
            return amp * (std::cos(2 * pi * x[0]) * (1 + 0.5 * t) + 0.5 * std::sin(2 * pi * x[1]));
        }));
    }
    p.terminal = sample_on_grid(*grid, [&](auto x) { return 0.02 * amp * std::sin(2 * pi * (x[0] + x[1])); });
    p.bound = 2.0 * amp;
    const auto a = solve_hjb(p, HjbMethod::cole_hopf);
    const auto b = solve_hjb(p, HjbMethod::direct);
    double gap = 0.0;
    for (int n = 0; n <= p.steps; ++n) gap = std::max(gap, (a.u[n] - b.u[n]).lpNorm<Eigen::Infinity>());
    return {gap <= 1e-4, "sup gap " + num(gap) + " (bound 1e-4, amplitude 0.05, 64^2 x 100)"};
}

Verdict mass_and_positivity() {
    const bool ok = forward_ledger.mass_defect <= 1e-10 && forward_ledger.min_density >= 0.0;
    return {ok, std::to_string(forward_ledger.runs) + " forward solves, max mass defect " +
                    num(forward_ledger.mass_defect) + " (bound 1e-10), min density " + num(forward_ledger.min_density)};
}

VectorField smooth_drift(const Grid& grid, std::uint64_t seed) {
    std::uint64_t c = 0;
    auto u = [&] { return 2.0 * counter_uniform(stream_key(seed, 0), c++) - 1.0; };
    const double a = u(), b = u(), phase = u();
    VectorField drift(grid.size(), grid.dimension());
    for (int i = 0; i < grid.size(); ++i) {
        const auto x = grid.node(i);
        drift(i, 0) = 2.0 * a * std::sin(2 * pi * x[1] + phase) + b;
        drift(i, 1) = 1.5 * b * std::cos(2 * pi * x[0]) - a * std::sin(2 * pi * (x[0] + x[1]));
    }
    return drift;
}

Verdict adjoint_pairs() {
    const std::vector<std::pair<std::string, std::shared_ptr<const ChartGeometry>>> cases{
        {"flat torus", flat_torus()},
        {"disk", disk()},
        {"conformal torus", std::make_shared<ChartGeometry>(ChartGeometry::conformal_torus(
                                {1.0, 1.0}, {FourierTerm{1, 0, 0.15, 0.0}, FourierTerm{0, 1, 0.1, 0.05}}, 64))}};
    bool ok = true;
    std::string detail;
    std::uint64_t seed = 7;
    for (const auto& [name, geometry] : cases) {
        Grid grid(geometry, 64);
        const AdjointDefect d = adjoint_pair_check(grid, smooth_drift(grid, seed), 100, seed);
        ++seed;
        ok = ok && d.scaled <= 1e-12;
        detail += name + " scaled " + num(d.scaled) + " absolute " + num(d.absolute) + "; ";
    }
    return {ok, detail + "bound 1e-12 scaled, 100 probes"};
}

Verdict monotone_uniqueness() {
    auto grid = std::make_shared<Grid>(flat_torus(), 64);
    CouplingSpec spec;
    spec.kind = CouplingKind::anchored;
    spec.kernel.shape = InteractionKernel::Shape::exponential;
    spec.kernel.scale = 0.1;
    spec.anchor.terms = {FourierTerm{1, 0, 0.5, 0.0}, FourierTerm{0, 1, 0.0, 0.3}};
    MfgProblem p;
    p.grid = grid;
    p.horizon = 1.0;
    p.steps = 100;
    p.initial = bump(*grid, 0.3, 0.5, 0.1);
    auto coupling = std::make_shared<Coupling>(grid, spec);
    p.running = coupling;
    const double lambda_min = coupling->min_kernel_eigenvalue();
    PicardOptions opt;
    opt.tolerance = 1e-6;
    const MfgSolution a = picard_solve(p, opt);
    opt.initial_guess.assign(p.steps + 1, normalize_density(*grid, Vector::Ones(grid->size())));
    const MfgSolution b = picard_solve(p, opt);
    forward_ledger.record(a.fpk);
    forward_ledger.record(b.fpk);
    DensityTransport transport(grid, 16);
    const double dist = flow_distance(transport, a.m, b.m, 1);
    const bool ok = lambda_min > 0.0 && a.converged && b.converged && dist <= 1e-4;
    return {ok, "sup_t W1 between equilibria " + num(dist) + " (bound 1e-4), kernel lambda_min " + num(lambda_min) +
                    ", iterations " + std::to_string(a.iterations) + " / " + std::to_string(b.iterations)};
}

Verdict stationary_curvature() {
    auto flat_grid = std::make_shared<Grid>(flat_torus(), 64);
    double flat_v = 0.0;
    bool ok = true;
    for (double r : {0.5, 1.0, 2.0}) {
        StationaryProblem p;
        p.grid = flat_grid;
        p.discount = r;
        const auto sol = solve_stationary(p);
        ok = ok && sol.converged;
        flat_v = std::max(flat_v, sol.v.lpNorm<Eigen::Infinity>());
    }
    StationaryProblem constant;
    constant.grid = std::make_shared<Grid>(
        std::make_shared<ChartGeometry>(ChartGeometry::conformal_torus({1.0, 1.0}, {FourierTerm{0, 0, 0.4, 0.0}}, 64)),
        64);
    const auto cs = solve_stationary(constant);
    const double constant_v = cs.v.lpNorm<Eigen::Infinity>();

    auto bumpy = std::make_shared<Grid>(
        std::make_shared<ChartGeometry>(ChartGeometry::conformal_torus(
            {1.0, 1.0}, {FourierTerm{1, 0, 0.15, 0.0}, FourierTerm{0, 1, 0.1, 0.05}}, 64)),
        64);
    StationaryProblem curved;
    curved.grid = bumpy;
    const auto sol = solve_stationary(curved);
    Eigen::Index mode = 0, low = 0;
    sol.m.maxCoeff(&mode);
    sol.scalar_curvature.minCoeff(&low);
    const double sep =
        bumpy->geometry().geodesic_distance(bumpy->node(static_cast<int>(mode)), bumpy->node(static_cast<int>(low)));
    const double sep_bound = 3.0 * bumpy->spacing(0) * std::exp(0.3);
    ok = ok && cs.converged && sol.converged && flat_v <= 1e-8 && constant_v <= 1e-8 && sol.residual <= 1e-8 &&
         sep <= sep_bound;
    return {ok, "flat sup|v| " + num(flat_v) + ", constant factor sup|v| " + num(constant_v) + " (bound 1e-8); curved residual " +
                    num(sol.residual) + " (bound 1e-8), mode to argmin R distance " + num(sep) + " (bound " +
                    num(sep_bound) + ")"};
}

// Exhaustive dual of W1 on a unit-weight graph: an optimal 1-Lipschitz
// potential can be taken integer valued with f(0) = 0.
double dual_w1(const GeometricGraph& g, const std::vector<double>& mu, const std::vector<double>& nu) {
    const int n = g.node_count();
    std::vector<std::vector<double>> d(n);
    int diam = 0;
    for (int i = 0; i < n; ++i) {
        d[i] = g.distances_from(i);
        for (double x : d[i]) diam = std::max(diam, static_cast<int>(std::lround(x)));
    }
    std::vector<int> f(n, 0);
    double best = -1e300;
    std::function<void(int)> extend = [&](int k) {
        if (k == n) {
            double v = 0.0;
            for (int i = 0; i < n; ++i) v += f[i] * (mu[i] - nu[i]);
            best = std::max(best, v);
            return;
        }
        for (int val = -diam; val <= diam; ++val) {
            bool lipschitz = true;
            for (int i = 0; i < k && lipschitz; ++i) lipschitz = std::abs(val - f[i]) <= d[k][i] + 1e-12;
            if (!lipschitz) continue;
            f[k] = val;
            extend(k + 1);
        }
    };
    extend(1);
    return best;
}

double oracle_kappa(const GeometricGraph& g, int x, int y) {
    auto ball = [&](int c) {
        const auto d = g.distances_from(c);
        std::vector<double> m(g.node_count(), 0.0);
        int count = 0;
        for (double v : d) count += v <= 1.0 + 1e-12;
        for (int i = 0; i < g.node_count(); ++i)
            if (d[i] <= 1.0 + 1e-12) m[i] = 1.0 / count;
        return m;
    };
    return 1.0 - dual_w1(g, ball(x), ball(y)) / g.distance(x, y);
}

Verdict small_graphs() {
    std::vector<EdgeRecord> k5;
    for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 5; ++b) k5.push_back({a, b, 1.0});
    const auto complete = GeometricGraph::from_edges(5, k5);
    const auto p3 = GeometricGraph::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    const auto c4 = GeometricGraph::from_edges(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 0, 1.0}});
    const double kk5 = ollivier_edge(complete, 0, 1, 1.0).kappa;
    const double kp3 = ollivier_edge(p3, 0, 1, 1.0).kappa;
    const double kc4 = ollivier_edge(c4, 0, 1, 1.0).kappa;
    const double ok5 = oracle_kappa(complete, 0, 1), op3 = oracle_kappa(p3, 0, 1), oc4 = oracle_kappa(c4, 0, 1);
    const bool ok = kk5 == 1.0 && std::abs(kp3 - op3) <= 1e-9 && std::abs(kc4 - oc4) <= 1e-9 &&
                    std::abs(op3 - 0.5) <= 1e-12 && std::abs(oc4 - 2.0 / 3.0) <= 1e-12 && std::abs(ok5 - 1.0) <= 1e-12;
    return {ok, "K5 " + format_significant(kk5, 12) + ", P3 " + format_significant(kp3, 12) + " (oracle " +
                    format_significant(op3, 12) + "), C4 " + format_significant(kc4, 12) + " (oracle " +
                    format_significant(oc4, 12) + "), tolerance 1e-9"};
}

Verdict continuous_curvature() {
    const std::vector<double> eps{0.2, 0.1, 0.05};
    Vector centre(2), e1(2);
    centre << 0.5, 0.5;
    e1 << 1.0, 0.0;
    double flat_worst = 0.0;
    std::vector<double> values;
    for (double e : eps) {
        flat_worst = std::max(flat_worst, std::abs(coarse_curvature_continuous(*flat_torus(), centre, e1, e, e / 2).rescaled));
        // at the disk origin the metric is 4 delta, so e1 / 2 is g-unit
        values.push_back(coarse_curvature_continuous(*disk(), Vector::Zero(2), 0.5 * e1, e, e / 2).rescaled);
    }
    double extrapolated = 0.0;
    for (int i = 0; i < 3; ++i) {
        double l = 1.0;
        for (int j = 0; j < 3; ++j)
            if (j != i) l *= -eps[j] / (eps[i] - eps[j]);
        extrapolated += l * values[i];
    }
    const bool ok = std::abs(extrapolated + 1.0) <= 0.1 && flat_worst <= 0.05;
    return {ok, "disk extrapolated " + num(extrapolated) + " (target -1 within 10%; eps 0.2/0.1/0.05 give " +
                    num(values[0]) + ", " + num(values[1]) + ", " + num(values[2]) + "), flat torus worst |value| " +
                    num(flat_worst) + " (bound 0.05)"};
}

RunResult run_config(const fs::path& config_path, const fs::path& out) {
    std::ostringstream log;
    return run_command(load_config(config_path), out, log);
}

const Check* find_check(const RunResult& r, const std::string& prefix) {
    for (const auto& c : r.checks)
        if (c.name.rfind(prefix, 0) == 0) return &c;
    return nullptr;
}

Verdict graph_convergence() {
    const RunResult r = run_config(fs::path(MFGEO_SOURCE_DIR) / "configs/graph_converge.json", out_root() / "graph_converge");
    const Check* ci = find_check(r, "largest-N interval");
    const Check* bias = find_check(r, "|bias|");
    if (!ci || !bias) return {false, "run failed: " + r.manifest.value("error", std::string("missing checks"))};
    std::string detail;
    for (const auto& row : r.manifest["observed"]["summary"])
        detail += "N=" + std::to_string(row["n"].get<int>()) + " mean " + num(row["mean"].get<double>()) + " [" +
                  num(row["ci"][0].get<double>()) + ", " + num(row["ci"][1].get<double>()) + "]; ";
    return {ci->passed && bias->passed, detail + "CI contains 0: " + (ci->passed ? "yes" : "no") +
                                            ", |bias| nonincreasing: " + (bias->passed ? "yes" : "no")};
}

Verdict sde_consistency() {
    bool ok = true;
    std::string detail;
    for (const char* name : {"sde_heat", "sde_game"}) {
        const RunResult r = run_config(fs::path(MFGEO_SOURCE_DIR) / "configs" / (std::string(name) + ".json"),
                                       out_root() / name);
        const Check* ratio = find_check(r, "W1 ratio");
        const Check* holder = find_check(r, "Hoelder exponent");
        const Check* mass = find_check(r, "forward mass defect");
        if (!ratio || !holder || !mass) {
            ok = false;
            detail += std::string(name) + " failed: " + r.manifest.value("error", std::string("missing checks")) + "; ";
            continue;
        }
        forward_ledger.mass_defect = std::max(forward_ledger.mass_defect, mass->value);
        ok = ok && r.ok();
        detail += std::string(name) + " ratio " + num(ratio->value) + ", exponent " + num(holder->value) +
                  (r.ok() ? "" : " (failed: " + r.failures().front() + ")") + "; ";
    }
    return {ok, detail + "bands [0.35, 0.65] and [0.4, 0.6]"};
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out[e.path().filename().string()] = read_text_file(e.path());
    return out;
}

Verdict determinism() {
    using nlohmann::json;
    const std::vector<json> docs{
        {{"command", "mfg-solve"}, {"geometry", {{"kind", "poincare_disk"}}}, {"numerics", {{"grid", 32}, {"steps", 40}}}},
        {{"command", "curvature-mfg"},
         {"geometry", {{"kind", "conformal_torus"}, {"exponent", {{{"kx", 1}, {"ky", 0}, {"cos", 0.15}, {"sin", 0.0}}}}}},
         {"numerics", {{"grid", 32}}}},
        {{"command", "graph-converge"}, {"experiment", {{"sizes", {200, 400, 800}}, {"seed_count", 2}, {"trials", 2}}}},
        {{"command", "sde-validate"},
         {"numerics", {{"grid", 16}, {"steps", 10}, {"transport_blocks", 4}}},
         {"experiment", {{"particles", {500, 2000}}, {"seed_count", 2}}},
         {"regularity", {{"grid", 32}, {"steps", 20}, {"transport_blocks", 8}, {"lag_steps", {5, 10, 20}}}}}};
    const int saved = thread_count();
    int compared = 0, mismatched = 0;
    std::string detail;
    for (std::size_t k = 0; k < docs.size(); ++k) {
        const RunConfig config = parse_config(docs[k]);
        std::vector<std::map<std::string, std::string>> outputs;
        for (int threads : {1, 1, 4, 4}) {
            set_thread_count(threads);
            const fs::path dir = out_root() / ("determinism_" + std::to_string(k) + "_" + std::to_string(outputs.size()));
            fs::remove_all(dir);
            std::ostringstream log;
            run_command(config, dir, log);
            outputs.push_back(csv_files(dir));
        }
        for (std::size_t i = 1; i < outputs.size(); ++i) {
            ++compared;
            if (outputs[i] != outputs[0] || outputs[0].empty()) {
                ++mismatched;
                detail += command_name(config.command) + " run " + std::to_string(i) + " differs; ";
            }
        }
    }
    set_thread_count(saved);
    return {mismatched == 0, detail + std::to_string(compared) + " comparisons over 4 commands (threads 1, 1, 4, 4), " +
                                 std::to_string(mismatched) + " mismatched"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "value bounds on randomized games", 120, randomized_bounds},
        {2, "Cole-Hopf and direct HJB agree", 10, cole_hopf_vs_direct},
        {4, "discrete adjoint pairing", 5, adjoint_pairs},
        {5, "monotone coupling has a unique equilibrium", 300, monotone_uniqueness},
        {6, "stationary curvature game", 60, stationary_curvature},
        {7, "Ollivier curvature of small graphs", 1, small_graphs},
        {8, "continuous coarse curvature limits", 120, continuous_curvature},
        {9, "graph curvature convergence", 300, graph_convergence},
        {10, "particle and density flows agree", 300, sde_consistency},
        {3, "mass conservation and positivity", 1, mass_and_positivity},
        {11, "byte-identical outputs across runs and threads", 600, determinism},
    };
    std::map<int, std::string> lines;
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds <= c.budget_seconds;
        const bool passed = v.passed && in_time;
        if (!passed) ++failures;
        std::string line = std::string(passed ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + ": " +
                           c.title + " - " + v.detail + " [" + num(seconds) + " s of " + num(c.budget_seconds) + " s" +
                           (in_time ? "" : ", over budget") + "]";
        std::cout << line << std::endl;
        lines[c.id] = line;
    }
    std::cout << "\nsummary in criterion order:\n";
    for (const auto& [id, line] : lines) std::cout << line << '\n';
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
