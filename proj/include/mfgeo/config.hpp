#pragma once

#include "mfgeo/coupling.hpp"
#include "mfgeo/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgeo {

enum class CommandKind { mfg_solve, curvature_mfg, graph_curvature, graph_converge, sde_validate, self_check };

std::string command_name(CommandKind kind);
// Throws std::invalid_argument for an unknown name.
CommandKind command_from_name(const std::string& name);
const std::vector<std::string>& command_names();

// Every schema violation found in one pass, one message per field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

// A validated run description. `settings` holds every field of the command's
// schema with defaults filled in, so it can be echoed verbatim.
struct RunConfig {
    CommandKind command = CommandKind::self_check;
    nlohmann::json settings;
    std::filesystem::path base_dir;  // relative input paths resolve against this

    std::uint64_t seed() const { return settings.at("seed").get<std::uint64_t>(); }
    int threads() const { return settings.at("threads").get<int>(); }
    std::string output() const { return settings.at("output").get<std::string>(); }
    const nlohmann::json& at(const std::string& key) const { return settings.at(key); }
};

// The full schema of a command with its defaults.
nlohmann::json default_settings(CommandKind kind);

// Validates a parsed document. Unknown keys, wrong types and out-of-range
// values are all collected before throwing ConfigError.
RunConfig parse_config(const nlohmann::json& document, std::filesystem::path base_dir = {});
// Reads and validates a JSON file; syntax errors also surface as ConfigError.
RunConfig load_config(const std::filesystem::path& path);

// Builders from validated blocks.
std::shared_ptr<const ChartGeometry> make_geometry(const nlohmann::json& block);
CouplingSpec make_coupling_spec(const nlohmann::json& block, const ChartGeometry& geometry);
std::filesystem::path resolve_input(const RunConfig& config, const std::string& path);

}  // namespace mfgeo
