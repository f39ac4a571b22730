#pragma once

#include "mfgeo/config.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace mfgeo {

// One declared invariant of a run and what was observed.
struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double bound = 0.0;
    std::string detail;
};

struct RunResult {
    int exit_code = 0;  // 0 only when every check passed
    std::vector<Check> checks;
    nlohmann::json manifest;
    std::vector<std::string> artifacts;  // file names written under the output directory

    bool ok() const { return exit_code == 0; }
    std::vector<std::string> failures() const;
};

// Runs a validated configuration, writing manifest.json, CSV and SVG files
// into out_dir. Progress and results go to log.
RunResult run_command(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

// The quick closed-form example suite behind the self-check command.
struct SelfCheckCase {
    std::string module;
    std::string name;
    std::function<Check()> run;
};
const std::vector<SelfCheckCase>& self_check_cases();

}  // namespace mfgeo
