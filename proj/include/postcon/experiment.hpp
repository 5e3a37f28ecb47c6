#pragma once

// Scenario orchestration: a strict `key = value` configuration format, the
// four canonical scenarios, and a runner that writes every trace as CSV and
// every scalar summary as JSON into one output directory.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "postcon/domain.hpp"
#include "postcon/gp_prior.hpp"
#include "postcon/kl_rate.hpp"
#include "postcon/posterior.hpp"

namespace postcon {

enum class Scenario { WellSpecifiedNormal, StepTruthNormal, LaplaceErrors, CrossFamilyMisspec };

std::string to_string(Scenario s);
std::optional<Scenario> scenario_from_string(std::string_view name);
const std::vector<Scenario>& all_scenarios();

/// Where a resolved value came from. ScenarioDefault marks defaults that
/// differ from the well_specified_normal baseline.
enum class Provenance { Default, ScenarioDefault, File, Override };
std::string to_string(Provenance p);

struct ScenarioConfig {
    Scenario scenario = Scenario::WellSpecifiedNormal;
    std::uint64_t seed = 1;
    std::size_t replicates = 20;
    std::string output_dir;

    int dim = 1;
    DesignKind design = DesignKind::IidFromQ;

    struct Truth {
        std::string eta0 = "cosine";  // cosine | sine | step | constant
        double amplitude = 0.5;
        double frequency = 1.0;
        double breakpoint = 0.5;
        double low = 0.0;
        double high = 1.0;
        double constant = 0.0;
        std::string family = "normal";  // normal | laplace | logistic | hyperbolic_secant
        double sigma0 = 0.5;
    } truth;

    std::string model_family = "normal";

    struct Prior {
        std::string kernel = "se";  // se | matern
        double amplitude = 1.0;
        double lengthscale = 0.2;
        double nu = 2.5;
        std::size_t K = 16;
        std::string basis = "cosine";  // cosine | fourier
        std::uint64_t feature_seed = 7;
        std::string sigma_family = "lognormal";  // lognormal | inverse_gamma
        double sigma_location = 0.0;
        double sigma_scale = 1.0;
        double sigma_shape = 2.0;
        double sigma_rate = 1.0;
    } prior;

    std::vector<std::size_t> equipartition_n{500, 5000, 50000};
    double equipartition_shift = 0.0;        // in units of sigma0
    double equipartition_sigma_ratio = 2.0;  // sigma / sigma0
    std::size_t uniform_grid = 5;

    double rate_J = 0.5;
    std::size_t rate_n_min = 1000;
    std::size_t rate_n_max = 10000;
    std::size_t rate_points = 37;

    std::vector<std::size_t> posterior_n{50, 200, 2000};
    ChainConfig chain;
    std::vector<double> x_new{0.3};
    std::size_t predictive_max_draws = 500;
    double neps_exponent = 0.5;
    std::size_t neps_max_draws = 200;

    double sieve_beta = 1.0;
    std::vector<double> sieve_n{1.0, 4.0, 16.0};
    std::size_t sieve_draws = 100000;

    std::map<std::string, Provenance> provenance;

    CompactDomain domain() const;
    MeasureQ measure() const;
    TrueModel truth_model() const;
    /// Postulated family at unit scale.
    NoiseModel family() const;
    CoefficientPrior coefficient_prior() const;
    SigmaPrior sigma_prior() const;
};

/// Canonical `key = value` lines for every key the scenario uses, in key order.
std::vector<std::pair<std::string, std::string>> canonical_entries(const ScenarioConfig& config);

/// Canonical text annotated with provenance; parses back to the same config.
std::string render_config(const ScenarioConfig& config);

/// FNV-1a over the canonical entries, output.dir excluded, as 16 hex digits.
std::string config_hash(const ScenarioConfig& config);

struct ConfigIssue {
    std::string key;  // dotted path, or "" for syntax errors
    std::string message;
    std::size_t line = 0;  // 1-based line in the config text, 0 when not from the text
    std::string format() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

struct ConfigResult {
    std::optional<ScenarioConfig> config;
    std::vector<ConfigIssue> errors;
    bool ok() const { return config.has_value(); }
};

/// Parses, fills defaults, applies overrides and checks every invariant.
/// Unknown or repeated keys are errors. All problems are collected.
ConfigResult validate_config(std::string_view text, const ConfigOverrides& overrides = {});

/// Like validate_config but throws ConfigError listing every issue.
ScenarioConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});

/// Reads a whole file; throws ConfigError when it cannot be opened.
std::string read_config_file(const std::string& path);

enum class Stage { Equipartition, KlRate, Rate, NEpsilon, Predictive, Sieve };
std::string to_string(Stage s);
const std::vector<Stage>& all_stages();

struct RunOptions {
    std::set<Stage> stages{all_stages().begin(), all_stages().end()};
};

struct ArtifactFile {
    std::string name;  // relative to the output directory
    std::string stage;
    std::uintmax_t bytes = 0;
    std::string fnv1a;  // content hash
};

struct RunManifest {
    std::string scenario;
    std::string config_hash;
    std::string code_version;
    std::vector<ArtifactFile> files;
    double wall_clock_seconds = 0.0;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::string> completed_stages;
    std::optional<std::string> failed_stage;
    std::string error;
    nlohmann::json summary;
    bool ok() const { return !failed_stage.has_value(); }
};

nlohmann::json to_json(const RunManifest& m);

/// Runs the requested stages in a fixed order. A failing stage stops the run;
/// the manifest then names it and lists the files already written. Nothing is
/// written outside config.output_dir.
RunManifest run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

std::string code_version();

/// Applies POSTCON_WORKERS (a positive integer) to the OpenMP thread count.
/// Returns the count in effect.
int configure_workers_from_env();

std::string fnv1a_hex(std::string_view bytes);

}  // namespace postcon
