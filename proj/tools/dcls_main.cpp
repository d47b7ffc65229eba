// dcls command-line pipeline driver.
//
// Usage: dcls <subcommand> [--config PATH] [--key value ...]
// Any config key can be overridden on the command line with a flag of the
// same dotted name, e.g. --schedule.T 16 --train.use_da false.
// DCLS_SEED in the environment overrides the master seed.
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dcls/common.hpp"
#include "dcls/config.hpp"
#include "dcls/pipeline.hpp"

namespace {

void print_usage() {
    std::fprintf(stderr,
                 "usage: dcls <subcommand> [--config PATH] [--key value ...]\n"
                 "\n"
                 "subcommands:\n"
                 "  synth-data        write synthetic train/test JSONL files\n"
                 "  train-proxy       fine-tune the proxy classifier, build the vocabulary\n"
                 "  train-generator   train the diffusion LM sample generator\n"
                 "  augment           emit pseudo samples (policy.kind = balance|n_each)\n"
                 "  train-classifier  noise-resistant training of the TC model\n"
                 "  evaluate          macro-F1/accuracy of the classifier on the test set\n"
                 "  sweep-groups      classifier runs per diffusion step group (CSV)\n"
                 "  ablation          full / -D.A. / -L.A.P. / -N.R.T. / raw grid\n"
                 "  project           2D projection of original and pseudo representations\n"
                 "\n"
                 "config keys double as override flags, e.g. --schedule.T 16\n");
}

} // namespace

int main(int argc, char** argv) {
    using CmdFn = std::function<void(const dcls::Config&)>;
    const std::map<std::string, CmdFn> commands = {
        {"synth-data", dcls::cmd_synth_data},
        {"train-proxy", dcls::cmd_train_proxy},
        {"train-generator", dcls::cmd_train_generator},
        {"augment", dcls::cmd_augment},
        {"train-classifier", dcls::cmd_train_classifier},
        {"evaluate", dcls::cmd_evaluate},
        {"sweep-groups", dcls::cmd_sweep_groups},
        {"ablation", dcls::cmd_ablation},
        {"project", dcls::cmd_project},
    };

    if (argc < 2) {
        print_usage();
        return 1;
    }
    std::string sub = argv[1];
    if (sub == "-h" || sub == "--help" || sub == "help") {
        print_usage();
        return 0;
    }
    auto it = commands.find(sub);
    if (it == commands.end()) {
        std::fprintf(stderr, "dcls: unknown subcommand '%s'\n", sub.c_str());
        print_usage();
        return 1;
    }

    try {
        std::string config_path;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (int i = 2; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg.size() < 3 || arg.rfind("--", 0) != 0)
                throw dcls::ConfigError("expected --key value, got '" + arg + "'");
            std::string key = arg.substr(2);
            std::string value;
            size_t eq = key.find('=');
            if (eq != std::string::npos) {
                value = key.substr(eq + 1);
                key = key.substr(0, eq);
            } else {
                if (i + 1 >= argc)
                    throw dcls::ConfigError("flag --" + key + " is missing a value");
                value = argv[++i];
            }
            if (key == "config")
                config_path = value;
            else
                overrides.emplace_back(key, value);
        }

        dcls::Config cfg = config_path.empty() ? dcls::Config::defaults()
                                               : dcls::Config::from_file(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);

        it->second(cfg);
        return 0;
    } catch (const dcls::ConfigError& e) {
        std::fprintf(stderr, "dcls %s: %s\n", sub.c_str(), e.what());
        return 1;
    } catch (const dcls::RuntimeError& e) {
        std::fprintf(stderr, "dcls %s: %s\n", sub.c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "dcls %s: unexpected error: %s\n", sub.c_str(), e.what());
        return 2;
    }
}
