// effham: run propagation, phase, resonance and variational scenarios from
// JSON configs.
//
// Exit status: 0 all checks pass, 1 some check failed, 2 usage or config
// error, 3 engine error.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "effham/scenario.hpp"

namespace {

using effham::cli::json;

std::vector<std::string> split_list(const std::string& list) {
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void print_summary(const json& report, std::ostream& os) {
    os << report["scenario"]["name"].get<std::string>() << " [" << report["engine"].get<std::string>()
       << "]: " << report["status"].get<std::string>() << "\n";
    for (const auto& c : report["checks"]) {
        os << "  " << c["status"].get<std::string>() << "  " << c["name"].get<std::string>();
        if (c["status"] != "skipped") os << "  " << c["value"].dump() << " " << c["comparison"].get<std::string>() << " " << c["threshold"].dump();
        os << "\n";
    }
}

int run_engine(const std::string& engine, const std::string& config, const std::string& sweep,
               const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    if (!config.empty()) paths.push_back(config);
    for (const auto& p : split_list(sweep)) paths.push_back(p);
    if (paths.empty()) {
        std::cerr << "error [usage]: give --config <path> or --sweep <a.json,b.json,...>\n";
        return 2;
    }

    std::vector<effham::cli::ScenarioConfig> configs;
    try {
        std::set<std::string> names;
        for (const auto& p : paths) {
            configs.push_back(effham::cli::load_config(p, engine));
            if (!names.insert(configs.back().name).second) {
                throw effham::ConfigError(p, "duplicate scenario name '" + configs.back().name + "' in sweep");
            }
        }
    } catch (const effham::ConfigError& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return 2;
    } catch (const effham::Error& e) {
        std::cerr << "error [config]: " << e.what() << "\n";
        return 2;
    }

    if (config.empty() || !sweep.empty()) {
        const auto items = effham::cli::run_sweep(configs, paths, out_dir, effham::cli::sweep_threads());
        json merged = json::array();
        bool all_pass = true, engine_error = false;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            json e{{"index", i}, {"config", it.config_path}, {"name", it.name}, {"pass", it.pass}};
            if (!it.error.empty()) {
                e["error"] = {{"category", it.error_category}, {"message", it.error}};
                std::cerr << "error [" << it.error_category << "] in " << it.config_path << ": " << it.error << "\n";
                engine_error = true;
            } else {
                e["status"] = it.report["status"];
                print_summary(it.report, std::cout);
            }
            all_pass = all_pass && it.pass;
            merged.push_back(std::move(e));
        }
        effham::cli::write_text(fs::path(out_dir) / "sweep.report.json", json{{"runs", merged}}.dump(2) + "\n");
        if (engine_error) return 3;
        return all_pass ? 0 : 1;
    }

    try {
        const auto report = effham::cli::run(configs.front());
        effham::cli::write_outputs(report, configs.front().name, out_dir);
        print_summary(report.report, std::cout);
        return report.pass ? 0 : 1;
    } catch (const effham::Error& e) {
        std::cerr << "error [" << e.category() << "]: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Effective-Hamiltonian scenarios: spin propagation, geometric phase, resonances, variational checks"};
    app.require_subcommand(1);

    std::string config, sweep, out_dir = ".";
    auto add_engine = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "scenario JSON file");
        sub->add_option("--out", out_dir, "output directory (default: current directory)");
        sub->add_option("--sweep", sweep, "comma-separated config list run concurrently (EFFHAM_THREADS caps workers)");
        return sub;
    };
    add_engine("propagate", "integrate the mu equations and reconstruct U(t)");
    add_engine("phase", "split the accumulated phase into dynamical and geometric parts");
    add_engine("resonance", "locate resonances of a preset model and cross-check widths in time");
    add_engine("varcheck", "verify the evolution-operator identity and the variational correction");
    add_engine("run", "run configs with the engine named inside each config");
    app.add_subcommand("presets", "list resonance model presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    CLI::App* chosen = app.get_subcommands().front();
    if (chosen->get_name() == "presets") {
        effham::cli::print_presets(std::cout);
        return 0;
    }
    const std::string engine = chosen->get_name() == "run" ? "" : chosen->get_name();
    return run_engine(engine, config, sweep, out_dir);
}
