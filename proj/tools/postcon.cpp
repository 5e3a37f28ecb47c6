// Command-line front end for the scenario runner.
//
//   postcon run <config> [--seed S] [--replicates R] [--out DIR] [--set key=value]...
//   postcon validate <config>
//   postcon equipartition|klrate|posterior|predictive|sieve [--config FILE] [--scenario NAME]
//                        [--n a,b,c] [--replicates R] [--seed S] [--out DIR] [--set key=value]...
//
// Exit status: 0 success, 2 invalid configuration or command line, 3 runtime failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "postcon/errors.hpp"
#include "postcon/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kRuntime = 3;

struct Common {
    std::string config;
    std::string scenario;
    std::string n;
    std::optional<std::size_t> replicates;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;
};

void add_overrides(CLI::App* app, Common& c, bool with_n) {
    if (with_n) app->add_option("--n", c.n, "comma-separated sample-size schedule for this stage");
    app->add_option("--replicates", c.replicates, "number of replicates");
    app->add_option("--seed", c.seed, "base seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--set", c.sets, "extra override, key=value (repeatable)");
}

postcon::ConfigOverrides collect(const Common& c, const std::string& n_key) {
    postcon::ConfigOverrides o;
    if (!c.scenario.empty()) o.emplace_back("scenario", c.scenario);
    if (!c.n.empty()) o.emplace_back(n_key, c.n);
    if (c.replicates) o.emplace_back("replicates", std::to_string(*c.replicates));
    if (c.seed) o.emplace_back("seed", std::to_string(*c.seed));
    if (!c.out.empty()) o.emplace_back("output.dir", c.out);
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw postcon::ConfigError("--set expects key=value, got '" + s + "'");
        o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return o;
}

postcon::ScenarioConfig load(const Common& c, const std::string& n_key) {
    const std::string text = c.config.empty() ? std::string() : postcon::read_config_file(c.config);
    return postcon::parse_config(text, collect(c, n_key));
}

int run(const postcon::ScenarioConfig& cfg, const std::set<postcon::Stage>& stages) {
    const int workers = postcon::configure_workers_from_env();
    std::cerr << "scenario " << postcon::to_string(cfg.scenario) << ", config hash " << postcon::config_hash(cfg)
              << ", " << workers << " worker(s), output " << cfg.output_dir << "\n";
    postcon::RunOptions opt;
    opt.stages = stages;
    const auto m = postcon::run_scenario(cfg, opt);
    for (const auto& f : m.files) std::cout << f.name << "\t" << f.bytes << " bytes\n";
    std::cout << "manifest.json\n";
    std::cerr << "finished in " << m.wall_clock_seconds << " s\n";
    if (!m.ok()) {
        std::cerr << "stage '" << *m.failed_stage << "' failed: " << m.error << "\n";
        return kRuntime;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Posterior consistency experiments for nonparametric regression"};
    app.require_subcommand(1);

    Common run_opts;
    auto* run_cmd = app.add_subcommand("run", "run every stage of a scenario");
    run_cmd->add_option("config", run_opts.config, "configuration file")->required()->check(CLI::ExistingFile);
    add_overrides(run_cmd, run_opts, false);

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "check a configuration and print it fully resolved");
    validate_cmd->add_option("config", validate_path, "configuration file")->required()->check(CLI::ExistingFile);

    struct StageCommand {
        const char* name;
        const char* help;
        std::set<postcon::Stage> stages;
        const char* n_key;
    };
    const std::vector<StageCommand> stage_commands{
        {"equipartition", "equipartition traces and the uniform gap", {postcon::Stage::Equipartition}, "equipartition.n"},
        {"klrate", "h on a grid of parameters and h over the model", {postcon::Stage::KlRate}, ""},
        {"posterior", "discrete-surrogate rates and the N_eps posterior mass",
         {postcon::Stage::Rate, postcon::Stage::NEpsilon}, "posterior.n"},
        {"predictive", "posterior predictive Hellinger and total variation distances", {postcon::Stage::Predictive},
         "posterior.n"},
        {"sieve", "prior mass outside the sieves", {postcon::Stage::Sieve}, "sieve.n"},
    };
    std::vector<Common> stage_opts(stage_commands.size());
    std::vector<CLI::App*> stage_apps;
    for (std::size_t i = 0; i < stage_commands.size(); ++i) {
        auto* sub = app.add_subcommand(stage_commands[i].name, stage_commands[i].help);
        sub->add_option("--config", stage_opts[i].config, "configuration file")->check(CLI::ExistingFile);
        sub->add_option("--scenario", stage_opts[i].scenario, "scenario name");
        add_overrides(sub, stage_opts[i], *stage_commands[i].n_key != '\0');
        stage_apps.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*validate_cmd) {
            const auto r = postcon::validate_config(postcon::read_config_file(validate_path));
            if (!r.ok()) {
                for (const auto& e : r.errors) std::cerr << e.format() << "\n";
                return kInvalid;
            }
            std::cout << postcon::render_config(*r.config) << "# config hash " << postcon::config_hash(*r.config)
                      << "\n";
            return kOk;
        }
        if (*run_cmd) return run(load(run_opts, ""), {postcon::all_stages().begin(), postcon::all_stages().end()});
        for (std::size_t i = 0; i < stage_apps.size(); ++i)
            if (*stage_apps[i]) return run(load(stage_opts[i], stage_commands[i].n_key), stage_commands[i].stages);
    } catch (const postcon::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kInvalid;
}
