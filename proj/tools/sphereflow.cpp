// Command-line experiment runner.
//
//   sphereflow <experiment> [--config <file>] [--key value ...] [--validate]
//   sphereflow --list
//
// Keys from --config files apply in order, later flags override earlier
// values. Exit 0 on success, 1 on an invalid config (single-line
// diagnostic), 2 on a numerical guard failure (message carries the guard
// name).

#include <iostream>
#include <string>
#include <vector>

#include "sphereflow/experiments.hpp"

namespace {

void print_usage(std::ostream& os) {
    os << "usage: sphereflow <experiment> [--config <file>] [--key value ...] [--validate]\n"
          "       sphereflow --list\n"
          "experiments:";
    for (const auto& name : sphereflow::experiment_names()) os << ' ' << name;
    os << "\nevery config key can be given in the file or as a --key value flag;\n"
          "SPHEREFLOW_SEED is used when no seed key is present.\n";
}

} // namespace

int main(int argc, char** argv) {
    using sphereflow::Error;
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        print_usage(std::cerr);
        return 1;
    }
    if (args[0] == "--help" || args[0] == "-h") {
        print_usage(std::cout);
        return 0;
    }
    if (args[0] == "--list") {
        for (const auto& name : sphereflow::experiment_names()) std::cout << name << "\n";
        return 0;
    }

    sphereflow::ExperimentConfig cfg;
    cfg.experiment = args[0];
    bool validate_only = false;
    try {
        for (std::size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            if (a == "--validate") {
                validate_only = true;
                continue;
            }
            if (a.rfind("--", 0) != 0 || a.size() == 2)
                throw sphereflow::InvalidArgument("unexpected argument '" + a + "'");
            if (i + 1 == args.size())
                throw sphereflow::InvalidArgument("flag '" + a + "' needs a value");
            const std::string key = a.substr(2);
            const std::string& value = args[++i];
            if (key == "config") {
                for (const auto& [k, v] : sphereflow::parse_config_file(value))
                    cfg.values.set(k, v);
            } else {
                cfg.values.set(key, value);
            }
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    const std::vector<std::string> diags = sphereflow::validate_config(cfg);
    if (validate_only) {
        for (const auto& d : diags) std::cout << d << "\n";
        return diags.empty() ? 0 : 1;
    }
    if (!diags.empty()) {
        std::cerr << diags.front() << "\n";
        return 1;
    }
    try {
        sphereflow::run_experiment(cfg);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    std::cout << "outputs written to "
              << cfg.values.get_string("out_dir", "out") << "/" << cfg.experiment << "\n";
    return 0;
}
