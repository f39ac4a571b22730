#include "mfgeo/commands.hpp"
#include "mfgeo/io.hpp"
#include "mfgeo/parallel.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

int dispatch(const std::string& command, const std::string& config_path, const std::optional<std::string>& out,
             const std::optional<std::uint64_t>& seed, const std::optional<int>& threads) {
    using namespace mfgeo;
    try {
        nlohmann::json doc = nlohmann::json::object();
        std::filesystem::path base;
        if (!config_path.empty()) {
            try {
                doc = nlohmann::json::parse(read_text_file(config_path));
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError({"<file>: " + config_path + " is not valid JSON (" + e.what() + ")"});
            }
            base = std::filesystem::path(config_path).parent_path();
        }
        if (doc.contains("command") && doc["command"] != command) {
            std::cerr << "error: config is for \"" << doc["command"].get<std::string>() << "\", not \"" << command
                      << "\"\n";
            return 2;
        }
        doc["command"] = command;
        if (seed) doc["seed"] = *seed;
        if (out) doc["output"] = *out;
        RunConfig config = parse_config(doc, base);
        if (threads) {
            set_thread_count(*threads);
        } else if (!std::getenv("MFGEO_THREADS") && config.threads() > 0) {
            set_thread_count(config.threads());
        }
        nlohmann::json& s = config.settings;
        s["threads"] = thread_count();
        const RunResult result = run_command(config, config.output(), std::cout);
        std::cout << "manifest: " << (std::filesystem::path(config.output()) / "manifest.json").string() << '\n';
        return result.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field games and curvature on model geometries"};
    app.require_subcommand(1);
    std::string selected;
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    for (const auto& name : mfgeo::command_names()) {
        auto* sub = app.add_subcommand(name, "run " + name);
        if (name == "self-check")
            sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        else
            sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "base random seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads (overrides MFGEO_THREADS and the config)")
            ->check(CLI::PositiveNumber);
        sub->callback([&selected, name] { selected = name; });
    }
    CLI11_PARSE(app, argc, argv);
    return dispatch(selected, config_path, out, seed, threads);
}
