#include "mfgeo/config.hpp"

#include "mfgeo/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mfgeo {

using nlohmann::json;

namespace {

struct CommandEntry {
    CommandKind kind;
    const char* name;
};

constexpr std::array<CommandEntry, 6> commands{{
    {CommandKind::mfg_solve, "mfg-solve"},
    {CommandKind::curvature_mfg, "curvature-mfg"},
    {CommandKind::graph_curvature, "graph-curvature"},
    {CommandKind::graph_converge, "graph-converge"},
    {CommandKind::sde_validate, "sde-validate"},
    {CommandKind::self_check, "self-check"},
}};

json geometry_defaults() {
    return {{"kind", "flat_torus"},
            {"periods", {1.0, 1.0}},
            {"dimension", 2},
            {"r_max", 0.95},
            {"exponent", json::array()},
            {"distance_resolution", 256}};
}

json coupling_defaults() {
    return {{"kind", "kernel"},
            {"kernel", {{"shape", "exponential"}, {"scale", 0.25}, {"amplitude", 1.0}}},
            {"payoff", {{"constant", 1.0}, {"terms", json::array()}}},
            {"anchor", {{"constant", 0.0}, {"terms", json::array()}}},
            {"strength", 1.0},
            {"renormalize", false},
            {"lattice", 16}};
}

json initial_defaults(double cx, double cy, double width) {
    return {{"shape", "bump"}, {"center", {cx, cy}}, {"width", width}};
}

// "a.b.c" -> "/a/b/c"
json::json_pointer pointer(const std::string& path) {
    std::string p = "/" + path;
    std::replace(p.begin(), p.end(), '.', '/');
    return json::json_pointer(p);
}

std::string type_word(const json& v) {
    if (v.is_boolean()) return "a boolean";
    if (v.is_number_integer()) return "an integer";
    if (v.is_number()) return "a number";
    if (v.is_string()) return "a string";
    if (v.is_array()) return "an array";
    if (v.is_object()) return "an object";
    return "null";
}

bool same_kind(const json& expected, const json& given) {
    if (expected.is_number_integer()) return given.is_number_integer();
    if (expected.is_number()) return given.is_number();
    return expected.type() == given.type();
}

// Overlays `given` on `schema`, recording unknown keys and type mismatches.
void overlay(json& schema, const json& given, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) {
            out.push_back(path + ": unknown key");
            continue;
        }
        json& slot = schema[it.key()];
        if (slot.is_object()) {
            if (!it->is_object()) {
                out.push_back(path + ": expected an object, got " + type_word(*it));
                continue;
            }
            overlay(slot, *it, path, out);
        } else if (!same_kind(slot, *it)) {
            out.push_back(path + ": expected " + type_word(slot) + ", got " + type_word(*it));
        } else {
            slot = *it;
        }
    }
}

// Range and shape checks on the merged settings.
class Checker {
public:
    Checker(const json& settings, std::vector<std::string>& out) : s_(settings), out_(out) {}

    const json& at(const std::string& path) const { return s_.at(pointer(path)); }
    double num(const std::string& path) const { return at(path).get<double>(); }
    long long integer(const std::string& path) const { return at(path).get<long long>(); }
    std::string str(const std::string& path) const { return at(path).get<std::string>(); }

    void fail(const std::string& path, const std::string& message) { out_.push_back(path + ": " + message); }

    void positive(const std::string& path) {
        const double v = num(path);
        if (!(v > 0.0) || !std::isfinite(v)) fail(path, "must be positive, got " + format_number(v));
    }
    void nonnegative(const std::string& path) {
        const double v = num(path);
        if (!(v >= 0.0) || !std::isfinite(v)) fail(path, "must be nonnegative, got " + format_number(v));
    }
    void in_range(const std::string& path, double lo, double hi, bool open_lo = false) {
        const double v = num(path);
        if (!(open_lo ? v > lo : v >= lo) || !(v <= hi))
            fail(path, "must lie in " + std::string(open_lo ? "(" : "[") + format_number(lo) + ", " +
                           format_number(hi) + "], got " + format_number(v));
    }
    void int_range(const std::string& path, long long lo, long long hi) {
        const long long v = integer(path);
        if (v < lo || v > hi)
            fail(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(v));
    }
    void one_of(const std::string& path, std::initializer_list<const char*> options) {
        const std::string v = str(path);
        std::string list;
        for (const char* o : options) {
            if (v == o) return;
            list += (list.empty() ? "" : ", ") + std::string(o);
        }
        fail(path, "must be one of {" + list + "}, got \"" + v + "\"");
    }
    // numbers, optionally of fixed length, optionally all positive
    bool numbers(const std::string& path, int length = -1, bool positive = false) {
        const json& a = at(path);
        if (length >= 0 && static_cast<int>(a.size()) != length) {
            fail(path, "expected " + std::to_string(length) + " entries, got " + std::to_string(a.size()));
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number()) {
                fail(path + "[" + std::to_string(i) + "]", "expected a number, got " + type_word(a[i]));
                return false;
            }
            if (positive && !(a[i].get<double>() > 0.0)) {
                fail(path + "[" + std::to_string(i) + "]", "must be positive");
                return false;
            }
        }
        return true;
    }
    bool integers(const std::string& path, long long lo, long long hi) {
        const json& a = at(path);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number_integer() || a[i].get<long long>() < lo || a[i].get<long long>() > hi) {
                fail(path + "[" + std::to_string(i) + "]",
                     "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
                return false;
            }
        }
        return true;
    }
    void fourier_terms(const std::string& path) {
        const json& a = at(path);
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string p = path + "[" + std::to_string(i) + "]";
            if (!a[i].is_object()) {
                fail(p, "expected an object {kx, ky, cos, sin}");
                continue;
            }
            for (auto it = a[i].begin(); it != a[i].end(); ++it) {
                const std::string k = it.key();
                const bool integral = k == "kx" || k == "ky";
                if (!integral && k != "cos" && k != "sin") {
                    fail(p + "." + k, "unknown key");
                } else if (integral ? !it->is_number_integer() : !it->is_number()) {
                    fail(p + "." + k, integral ? "expected an integer" : "expected a number");
                }
            }
        }
    }

private:
    const json& s_;
    std::vector<std::string>& out_;
};

void check_geometry(Checker& c) {
    c.one_of("geometry.kind", {"flat_torus", "conformal_torus", "poincare_disk"});
    const std::string kind = c.str("geometry.kind");
    c.int_range("geometry.dimension", 2, 3);
    if (kind == "flat_torus") c.numbers("geometry.periods", static_cast<int>(c.integer("geometry.dimension")), true);
    if (kind == "conformal_torus") {
        c.numbers("geometry.periods", 2, true);
        if (c.integer("geometry.dimension") != 2) c.fail("geometry.dimension", "the conformal torus is two-dimensional");
    }
    if (kind == "poincare_disk") c.in_range("geometry.r_max", 0.0, 0.999, true);
    c.fourier_terms("geometry.exponent");
    if (kind != "conformal_torus" && !c.at("geometry.exponent").empty())
        c.fail("geometry.exponent", "only the conformal torus takes an exponent");
    c.int_range("geometry.distance_resolution", 16, 4096);
}

void check_coupling(Checker& c, const std::string& p) {
    c.one_of(p + ".kind", {"kernel", "anchored"});
    c.one_of(p + ".kernel.shape", {"constant", "gaussian", "exponential", "inverse"});
    c.positive(p + ".kernel.scale");
    c.nonnegative(p + ".kernel.amplitude");
    c.fourier_terms(p + ".payoff.terms");
    c.fourier_terms(p + ".anchor.terms");
    c.int_range(p + ".lattice", 0, 256);
    if (c.integer(p + ".lattice") > 0 && c.integer(p + ".lattice") < 4) c.fail(p + ".lattice", "must be 0 or at least 4");
}

void check_initial(Checker& c, int dim) {
    c.one_of("initial.shape", {"uniform", "bump"});
    c.numbers("initial.center", dim);
    c.positive("initial.width");
}

void check(CommandKind kind, const json& s, std::vector<std::string>& out) {
    Checker c(s, out);
    c.int_range("threads", 0, 1024);
    if (!s["seed"].is_number_unsigned() && s["seed"].get<long long>() < 0) c.fail("seed", "must be nonnegative");
    if (c.str("output").empty()) c.fail("output", "must not be empty");
    const bool has_geometry = s.contains("geometry");
    if (has_geometry) check_geometry(c);
    const int dim = has_geometry ? static_cast<int>(c.integer("geometry.dimension")) : 2;

    switch (kind) {
        case CommandKind::mfg_solve:
            c.int_range("numerics.grid", 4, 1024);
            c.positive("numerics.horizon");
            c.int_range("numerics.steps", 1, 1000000);
            c.positive("numerics.tolerance");
            c.in_range("numerics.damping", 0.0, 1.0, true);
            c.in_range("numerics.min_damping", 0.0, 1.0, true);
            c.int_range("numerics.max_iters", 0, 100000);
            c.one_of("numerics.hjb_method", {"cole_hopf", "direct"});
            c.int_range("numerics.transport_blocks", 1, 128);
            c.int_range("numerics.metric_stride", 1, 1000000);
            check_coupling(c, "coupling.running");
            check_coupling(c, "coupling.terminal");
            check_initial(c, dim);
            break;
        case CommandKind::curvature_mfg:
            if (c.str("geometry.kind") == "poincare_disk")
                c.fail("geometry.kind", "the stationary curvature game needs a compact (torus) geometry");
            c.int_range("numerics.grid", 4, 1024);
            c.positive("numerics.discount");
            c.positive("numerics.reduction_coefficient");
            c.positive("numerics.tolerance");
            c.int_range("numerics.max_newton", 1, 10000);
            break;
        case CommandKind::graph_curvature:
            if (c.str("graph.edges").empty()) c.fail("graph.edges", "an edge-list path is required");
            c.positive("graph.radius");
            for (std::size_t i = 0; i < s.at("graph").at("selected").size(); ++i) {
                const json& e = s["graph"]["selected"][i];
                if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
                    e[0].get<long long>() < 0 || e[1].get<long long>() < 0)
                    c.fail("graph.selected[" + std::to_string(i) + "]", "expected a pair of node indices");
            }
            break;
        case CommandKind::graph_converge: {
            c.fourier_terms("density.log_terms");
            if (c.integers("experiment.sizes", 3, 1000000)) {
                const json& n = s["experiment"]["sizes"];
                if (n.empty()) c.fail("experiment.sizes", "must not be empty");
                for (std::size_t i = 1; i < n.size(); ++i)
                    if (n[i].get<long long>() <= n[i - 1].get<long long>())
                        c.fail("experiment.sizes", "must be strictly increasing");
            }
            c.int_range("experiment.seed_count", 1, 1000);
            c.int_range("experiment.trials", 1, 1000);
            c.positive("experiment.epsilon.scale");
            c.in_range("experiment.epsilon.exponent", -1.0, 0.0);
            c.numbers("experiment.target", dim);
            c.numbers("experiment.direction", dim);
            c.in_range("experiment.separation", 0.0, 1.0, true);
            break;
        }
        case CommandKind::sde_validate:
            c.int_range("numerics.grid", 4, 1024);
            c.positive("numerics.horizon");
            c.int_range("numerics.steps", 1, 1000000);
            c.int_range("numerics.substeps", 1, 1000);
            c.int_range("numerics.transport_blocks", 1, 128);
            check_initial(c, dim);
            c.one_of("drift.kind", {"zero", "mfg"});
            check_coupling(c, "drift.coupling");
            c.positive("drift.tolerance");
            c.in_range("drift.damping", 0.0, 1.0, true);
            c.int_range("drift.max_iters", 1, 100000);
            if (c.integers("experiment.particles", 2, 100000000) && s["experiment"]["particles"].size() != 2)
                c.fail("experiment.particles", "expected two particle counts");
            c.int_range("experiment.seed_count", 1, 1000);
            if (c.numbers("experiment.ratio_band", 2) && c.num("experiment.ratio_band/0") > c.num("experiment.ratio_band/1"))
                c.fail("experiment.ratio_band", "lower end exceeds upper end");
            c.int_range("regularity.grid", 4, 1024);
            c.positive("regularity.horizon");
            c.int_range("regularity.steps", 1, 1000000);
            c.int_range("regularity.transport_blocks", 1, 128);
            if (c.integers("regularity.lag_steps", 1, 1000000)) {
                const json& lags = s["regularity"]["lag_steps"];
                if (lags.size() < 2) c.fail("regularity.lag_steps", "need at least two lags");
                for (const auto& l : lags)
                    if (l.get<long long>() > c.integer("regularity.steps"))
                        c.fail("regularity.lag_steps", "lags cannot exceed regularity.steps");
            }
            if (c.numbers("regularity.exponent_band", 2) &&
                c.num("regularity.exponent_band/0") > c.num("regularity.exponent_band/1"))
                c.fail("regularity.exponent_band", "lower end exceeds upper end");
            break;
        case CommandKind::self_check:
            break;
    }
}

}  // namespace

std::string command_name(CommandKind kind) {
    for (const auto& c : commands)
        if (c.kind == kind) return c.name;
    return "unknown";
}

CommandKind command_from_name(const std::string& name) {
    for (const auto& c : commands)
        if (name == c.name) return c.kind;
    throw std::invalid_argument("unknown command \"" + name + "\"");
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& c : commands) out.emplace_back(c.name);
        return out;
    }();
    return names;
}

namespace {

std::string join_violations(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  " + s;
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

json default_settings(CommandKind kind) {
    json s = {{"command", command_name(kind)}, {"output", "out"}, {"seed", 1}, {"threads", 0}};
    switch (kind) {
        case CommandKind::mfg_solve: {
            s["geometry"] = geometry_defaults();
            s["numerics"] = {{"grid", 64},           {"horizon", 1.0},        {"steps", 100},
                             {"tolerance", 1e-5},    {"damping", 0.5},        {"min_damping", 1.0 / 64.0},
                             {"max_iters", 200},     {"hjb_method", "cole_hopf"}, {"transport_blocks", 16},
                             {"metric_stride", 20}};
            json terminal = coupling_defaults();
            terminal["enabled"] = false;
            s["coupling"] = {{"running", coupling_defaults()}, {"terminal", terminal}};
            s["initial"] = initial_defaults(0.5, 0.5, 0.15);
            break;
        }
        case CommandKind::curvature_mfg:
            s["geometry"] = geometry_defaults();
            s["numerics"] = {{"grid", 64},
                             {"discount", 1.0},
                             {"reduction_coefficient", 2.0},
                             {"tolerance", 1e-10},
                             {"max_newton", 50}};
            break;
        case CommandKind::graph_curvature:
            s["graph"] = {{"edges", ""}, {"radius", 1.0}, {"selected", json::array()}};
            break;
        case CommandKind::graph_converge:
            s["geometry"] = geometry_defaults();
            s["density"] = {{"log_terms", json::array()}};
            s["experiment"] = {{"sizes", {500, 2000, 8000}},
                               {"seed_count", 5},
                               {"trials", 8},
                               {"epsilon", {{"scale", 0.5}, {"exponent", -0.125}}},
                               {"target", {0.5, 0.5}},
                               {"direction", {1.0, 0.0}},
                               {"separation", 0.5}};
            break;
        case CommandKind::sde_validate: {
            s["geometry"] = geometry_defaults();
            s["numerics"] = {{"grid", 32}, {"horizon", 0.1}, {"steps", 50}, {"substeps", 4}, {"transport_blocks", 8}};
            s["initial"] = initial_defaults(0.35, 0.5, 0.12);
            json running = coupling_defaults();
            running["kind"] = "anchored";
            running["anchor"]["terms"] = json::array({{{"kx", 1}, {"ky", 0}, {"cos", 2.0}, {"sin", 0.0}}});
            s["drift"] = {{"kind", "zero"}, {"coupling", running}, {"tolerance", 1e-5}, {"damping", 0.5}, {"max_iters", 200}};
            s["experiment"] = {{"particles", {1000, 4000}}, {"seed_count", 3}, {"ratio_band", {0.35, 0.65}}};
            s["regularity"] = {{"grid", 64},
                               {"horizon", 0.02},
                               {"steps", 100},
                               {"transport_blocks", 32},
                               {"lag_steps", {5, 10, 20, 40, 70, 100}},
                               {"exponent_band", {0.4, 0.6}}};
            break;
        }
        case CommandKind::self_check:
            break;
    }
    return s;
}

RunConfig parse_config(const json& document, std::filesystem::path base_dir) {
    if (!document.is_object()) throw ConfigError({"<root>: expected a JSON object"});
    if (!document.contains("command") || !document["command"].is_string()) {
        std::string names;
        for (const auto& n : command_names()) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError({"command: required, one of {" + names + "}"});
    }
    CommandKind kind;
    try {
        kind = command_from_name(document["command"].get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError({std::string("command: ") + e.what()});
    }

    std::vector<std::string> violations;
    json settings = default_settings(kind);
    overlay(settings, document, "", violations);
    // mistyped values were not overlaid, so the range checks see well-typed defaults there
    check(kind, settings, violations);
    if (!violations.empty()) throw ConfigError(std::move(violations));

    RunConfig out;
    out.command = kind;
    out.settings = std::move(settings);
    out.base_dir = std::move(base_dir);
    return out;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw ConfigError({std::string("<file>: ") + e.what()});
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError({"<file>: " + path.string() + " is not valid JSON (" + e.what() + ")"});
    }
    return parse_config(doc, path.parent_path());
}

namespace {

std::vector<FourierTerm> terms_of(const json& a) {
    std::vector<FourierTerm> out;
    for (const auto& t : a)
        out.push_back(FourierTerm{t.value("kx", 0), t.value("ky", 0), t.value("cos", 0.0), t.value("sin", 0.0)});
    return out;
}

}  // namespace

std::shared_ptr<const ChartGeometry> make_geometry(const json& g) {
    const std::string kind = g.at("kind").get<std::string>();
    if (kind == "poincare_disk")
        return std::make_shared<ChartGeometry>(
            ChartGeometry::poincare_disk(g.at("dimension").get<int>(), g.at("r_max").get<double>()));
    const auto periods = g.at("periods").get<std::vector<double>>();
    if (kind == "flat_torus") return std::make_shared<ChartGeometry>(ChartGeometry::flat_torus(periods));
    if (periods.size() != 2) throw DomainError("conformal torus needs two periods");
    return std::make_shared<ChartGeometry>(ChartGeometry::conformal_torus(
        {periods[0], periods[1]}, terms_of(g.at("exponent")), g.at("distance_resolution").get<int>()));
}

CouplingSpec make_coupling_spec(const json& c, const ChartGeometry& geometry) {
    CouplingSpec spec;
    spec.kind = c.at("kind").get<std::string>() == "anchored" ? CouplingKind::anchored : CouplingKind::kernel;
    spec.kernel.shape = kernel_shape_from_name(c.at("kernel").at("shape").get<std::string>());
    spec.kernel.scale = c.at("kernel").at("scale").get<double>();
    spec.kernel.amplitude = c.at("kernel").at("amplitude").get<double>();
    std::array<double, 2> periods{1.0, 1.0};
    if (geometry.periodic() && geometry.dimension() == 2) periods = {geometry.periods()[0], geometry.periods()[1]};
    spec.payoff = ScalarProfile{c.at("payoff").at("constant").get<double>(), terms_of(c.at("payoff").at("terms")), periods};
    spec.anchor = ScalarProfile{c.at("anchor").at("constant").get<double>(), terms_of(c.at("anchor").at("terms")), periods};
    spec.strength = c.at("strength").get<double>();
    spec.renormalize = c.at("renormalize").get<bool>();
    spec.lattice = c.at("lattice").get<int>();
    return spec;
}

std::filesystem::path resolve_input(const RunConfig& config, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute() || std::filesystem::exists(p) || config.base_dir.empty()) return p;
    return config.base_dir / p;
}

}  // namespace mfgeo
