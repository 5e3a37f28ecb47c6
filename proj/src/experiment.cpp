#include "postcon/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include <omp.h>

#include "postcon/csv.hpp"
#include "postcon/equipartition.hpp"
#include "postcon/errors.hpp"
#include "postcon/sieve.hpp"

#ifndef POSTCON_CODE_VERSION
#define POSTCON_CODE_VERSION "unknown"
#endif

namespace postcon {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Names

namespace {

constexpr std::pair<Scenario, const char*> kScenarioNames[] = {
    {Scenario::WellSpecifiedNormal, "well_specified_normal"},
    {Scenario::StepTruthNormal, "step_truth_normal"},
    {Scenario::LaplaceErrors, "laplace_errors"},
    {Scenario::CrossFamilyMisspec, "cross_family_misspec"},
};

constexpr std::pair<Stage, const char*> kStageNames[] = {
    {Stage::Equipartition, "equipartition"}, {Stage::KlRate, "klrate"},         {Stage::Rate, "rate"},
    {Stage::NEpsilon, "neps"},               {Stage::Predictive, "predictive"}, {Stage::Sieve, "sieve"},
};

}  // namespace

std::string to_string(Scenario s) {
    for (const auto& [k, name] : kScenarioNames)
        if (k == s) return name;
    return "unknown";
}

std::optional<Scenario> scenario_from_string(std::string_view name) {
    for (const auto& [k, n] : kScenarioNames)
        if (name == n) return k;
    return std::nullopt;
}

const std::vector<Scenario>& all_scenarios() {
    static const std::vector<Scenario> v{Scenario::WellSpecifiedNormal, Scenario::StepTruthNormal,
                                         Scenario::LaplaceErrors, Scenario::CrossFamilyMisspec};
    return v;
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Default: return "default";
        case Provenance::ScenarioDefault: return "scenario default";
        case Provenance::File: return "config file";
        case Provenance::Override: return "override";
    }
    return "unknown";
}

std::string to_string(Stage s) {
    for (const auto& [k, name] : kStageNames)
        if (k == s) return name;
    return "unknown";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> v{Stage::Equipartition, Stage::KlRate,     Stage::Rate,
                                      Stage::NEpsilon,      Stage::Predictive, Stage::Sieve};
    return v;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string code_version() { return POSTCON_CODE_VERSION; }

int configure_workers_from_env() {
    if (const char* v = std::getenv("POSTCON_WORKERS"); v && *v) {
        int n = 0;
        const std::string_view s(v);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec != std::errc() || p != s.data() + s.size() || n < 1)
            throw ConfigError("POSTCON_WORKERS must be a positive integer, got '" + std::string(s) + "'");
        omp_set_num_threads(n);
    }
    return omp_get_max_threads();
}

// ---------------------------------------------------------------------------
// Model builders

CompactDomain ScenarioConfig::domain() const { return CompactDomain::unit(dim); }

TrueModel ScenarioConfig::truth_model() const {
    const auto d = domain();
    std::optional<RegressionFunction> eta0;
    if (truth.eta0 == "cosine")
        eta0 = RegressionFunction::sine(d, truth.amplitude, truth.frequency, std::numbers::pi / 2);
    else if (truth.eta0 == "sine")
        eta0 = RegressionFunction::sine(d, truth.amplitude, truth.frequency);
    else if (truth.eta0 == "step")
        eta0 = RegressionFunction::step(d, {truth.breakpoint}, {truth.low, truth.high});
    else if (truth.eta0 == "constant")
        eta0 = RegressionFunction::constant(d, truth.constant);
    else
        throw ConfigError("truth.eta0: unknown form '" + truth.eta0 + "'");
    NoiseModel noise = truth.family == "normal"    ? NoiseModel::normal(truth.sigma0)
                       : truth.family == "laplace" ? NoiseModel::laplace(truth.sigma0)
                                                   : NoiseModel::general(StandardPhi::by_name(truth.family), truth.sigma0);
    return {*eta0, noise};
}

MeasureQ ScenarioConfig::measure() const {
    return MeasureQ::uniform(domain()).with_discontinuities(truth_model().eta0.discontinuities());
}

NoiseModel ScenarioConfig::family() const {
    if (model_family == "normal") return NoiseModel::normal(1.0);
    if (model_family == "laplace") return NoiseModel::laplace(1.0);
    return NoiseModel::general(StandardPhi::by_name(model_family), 1.0);
}

CoefficientPrior ScenarioConfig::coefficient_prior() const {
    GpSpec spec;
    spec.kernel.type = prior.kernel == "matern" ? Kernel::Type::Matern : Kernel::Type::SquaredExponential;
    spec.kernel.amplitude = prior.amplitude;
    spec.kernel.lengthscale = prior.lengthscale;
    spec.kernel.nu = prior.nu;
    const auto choice = prior.basis == "fourier" ? BasisChoice::FourierFeatures : BasisChoice::Cosine;
    return CoefficientPrior::from_gp(spec, domain(), prior.K, choice, prior.feature_seed);
}

SigmaPrior ScenarioConfig::sigma_prior() const {
    if (prior.sigma_family == "inverse_gamma")
        return SigmaPrior::inverse_gamma_on_variance(prior.sigma_shape, prior.sigma_rate);
    return SigmaPrior::log_normal(prior.sigma_location, prior.sigma_scale);
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        if constexpr (std::is_floating_point_v<T>)
            s += format_number(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s;
}

std::string design_name(DesignKind k) { return k == DesignKind::IidFromQ ? "iid" : "partition"; }

}  // namespace

std::vector<std::pair<std::string, std::string>> canonical_entries(const ScenarioConfig& c) {
    std::map<std::string, std::string> e;
    const auto num = [](double v) { return format_number(v); };
    e["scenario"] = to_string(c.scenario);
    e["seed"] = std::to_string(c.seed);
    e["replicates"] = std::to_string(c.replicates);
    e["output.dir"] = c.output_dir;
    e["domain.dim"] = std::to_string(c.dim);
    e["design.kind"] = design_name(c.design);

    e["truth.eta0"] = c.truth.eta0;
    if (c.truth.eta0 == "cosine" || c.truth.eta0 == "sine") {
        e["truth.amplitude"] = num(c.truth.amplitude);
        e["truth.frequency"] = num(c.truth.frequency);
    } else if (c.truth.eta0 == "step") {
        e["truth.breakpoint"] = num(c.truth.breakpoint);
        e["truth.low"] = num(c.truth.low);
        e["truth.high"] = num(c.truth.high);
    } else {
        e["truth.constant"] = num(c.truth.constant);
    }
    e["truth.family"] = c.truth.family;
    e["truth.sigma0"] = num(c.truth.sigma0);
    e["model.family"] = c.model_family;

    e["prior.kernel"] = c.prior.kernel;
    e["prior.amplitude"] = num(c.prior.amplitude);
    e["prior.lengthscale"] = num(c.prior.lengthscale);
    if (c.prior.kernel == "matern") e["prior.nu"] = num(c.prior.nu);
    e["prior.K"] = std::to_string(c.prior.K);
    e["prior.basis"] = c.prior.basis;
    if (c.prior.basis == "fourier") e["prior.feature_seed"] = std::to_string(c.prior.feature_seed);
    e["prior.sigma.family"] = c.prior.sigma_family;
    if (c.prior.sigma_family == "lognormal") {
        e["prior.sigma.location"] = num(c.prior.sigma_location);
        e["prior.sigma.scale"] = num(c.prior.sigma_scale);
    } else {
        e["prior.sigma.shape"] = num(c.prior.sigma_shape);
        e["prior.sigma.rate"] = num(c.prior.sigma_rate);
    }

    e["equipartition.n"] = join(c.equipartition_n);
    e["equipartition.shift"] = num(c.equipartition_shift);
    e["equipartition.sigma_ratio"] = num(c.equipartition_sigma_ratio);
    e["uniform.grid"] = std::to_string(c.uniform_grid);

    e["rate.J"] = num(c.rate_J);
    e["rate.n_min"] = std::to_string(c.rate_n_min);
    e["rate.n_max"] = std::to_string(c.rate_n_max);
    e["rate.points"] = std::to_string(c.rate_points);

    e["posterior.n"] = join(c.posterior_n);
    e["chain.length"] = std::to_string(c.chain.length);
    e["chain.burnin"] = std::to_string(c.chain.burnin);
    e["chain.thin"] = std::to_string(c.chain.thin);
    e["chain.step"] = num(c.chain.step);
    e["predictive.x_new"] = join(c.x_new);
    e["predictive.max_draws"] = std::to_string(c.predictive_max_draws);
    e["neps.exponent"] = num(c.neps_exponent);
    e["neps.max_draws"] = std::to_string(c.neps_max_draws);

    e["sieve.beta"] = num(c.sieve_beta);
    e["sieve.n"] = join(c.sieve_n);
    e["sieve.draws"] = std::to_string(c.sieve_draws);
    return {e.begin(), e.end()};
}

std::string render_config(const ScenarioConfig& config) {
    std::ostringstream out;
    out << "# resolved configuration for " << to_string(config.scenario) << "\n";
    for (const auto& [k, v] : canonical_entries(config)) {
        out << k << " = " << v;
        if (auto it = config.provenance.find(k); it != config.provenance.end())
            out << "  # " << to_string(it->second);
        out << "\n";
    }
    return out.str();
}

std::string config_hash(const ScenarioConfig& config) {
    std::string text;
    for (const auto& [k, v] : canonical_entries(config)) {
        if (k == "output.dir") continue;
        text += k;
        text += '=';
        text += v;
        text += '\n';
    }
    return fnv1a_hex(text);
}

// ---------------------------------------------------------------------------
// Parsing and validation

std::string ConfigIssue::format() const {
    std::string s;
    if (line) s += "line " + std::to_string(line) + ": ";
    if (!key.empty()) s += key + ": ";
    return s + message;
}

namespace {

std::map<std::string, std::string> defaults_for(Scenario s) {
    std::map<std::string, std::string> d{
        {"scenario", "well_specified_normal"},
        {"seed", "1"},
        {"replicates", "20"},
        {"output.dir", "out/well_specified_normal"},
        {"domain.dim", "1"},
        {"design.kind", "iid"},
        {"truth.eta0", "cosine"},
        {"truth.amplitude", "0.5"},
        {"truth.frequency", "1"},
        {"truth.breakpoint", "0.5"},
        {"truth.low", "0"},
        {"truth.high", "1"},
        {"truth.constant", "0"},
        {"truth.family", "normal"},
        {"truth.sigma0", "0.5"},
        {"model.family", "normal"},
        {"prior.kernel", "se"},
        {"prior.amplitude", "1"},
        {"prior.lengthscale", "0.2"},
        {"prior.nu", "2.5"},
        {"prior.K", "16"},
        {"prior.basis", "cosine"},
        {"prior.feature_seed", "7"},
        {"prior.sigma.family", "lognormal"},
        {"prior.sigma.location", "0"},
        {"prior.sigma.scale", "1"},
        {"prior.sigma.shape", "2"},
        {"prior.sigma.rate", "1"},
        {"equipartition.n", "500,5000,50000"},
        {"equipartition.shift", "0"},
        {"equipartition.sigma_ratio", "2"},
        {"uniform.grid", "5"},
        {"rate.J", "0.5"},
        {"rate.n_min", "1000"},
        {"rate.n_max", "10000"},
        {"rate.points", "37"},
        {"posterior.n", "50,200,2000"},
        {"chain.length", "20000"},
        {"chain.burnin", "2000"},
        {"chain.thin", "10"},
        {"chain.step", "1"},
        {"predictive.x_new", "0.3"},
        {"predictive.max_draws", "500"},
        {"neps.exponent", "0.5"},
        {"neps.max_draws", "200"},
        {"sieve.beta", "1"},
        {"sieve.n", "1,4,16"},
        {"sieve.draws", "100000"},
    };
    d["scenario"] = to_string(s);
    d["output.dir"] = "out/" + to_string(s);
    switch (s) {
        case Scenario::WellSpecifiedNormal: break;
        case Scenario::StepTruthNormal:
            d["truth.eta0"] = "step";
            d["prior.K"] = "32";
            d["prior.kernel"] = "matern";
            break;
        case Scenario::LaplaceErrors:
            d["truth.family"] = "laplace";
            d["model.family"] = "laplace";
            d["equipartition.shift"] = "1";
            d["equipartition.sigma_ratio"] = "1";
            break;
        case Scenario::CrossFamilyMisspec:
            d["truth.family"] = "laplace";
            d["model.family"] = "normal";
            break;
    }
    return d;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool valid_key(const std::string& k) {
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    return std::all_of(k.begin(), k.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    });
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

struct RawEntry {
    std::string value;
    std::size_t line = 0;
    Provenance source = Provenance::File;
};

class Reader {
public:
    Reader(const std::map<std::string, RawEntry>& values, std::vector<ConfigIssue>& errors)
        : values_(values), errors_(errors) {}

    void fail(const std::string& key, const std::string& message) {
        const auto it = values_.find(key);
        errors_.push_back({key, message, it == values_.end() ? 0 : it->second.line});
    }

    const std::string& text(const std::string& key) const { return values_.at(key).value; }

    double real(const std::string& key) {
        const auto v = parse_real(text(key));
        if (!v) fail(key, "expected a number, got '" + text(key) + "'");
        return v.value_or(0.0);
    }

    std::uint64_t u64(const std::string& key) {
        const auto v = parse_count(text(key));
        if (!v) fail(key, "expected a non-negative integer, got '" + text(key) + "'");
        return v.value_or(0);
    }

    std::size_t count(const std::string& key) { return static_cast<std::size_t>(u64(key)); }

    std::string choice(const std::string& key, std::initializer_list<const char*> options) {
        const std::string& v = text(key);
        for (const char* o : options)
            if (v == o) return v;
        std::string list;
        for (const char* o : options) list += (list.empty() ? "" : " | ") + std::string(o);
        fail(key, "expected one of {" + list + "}, got '" + v + "'");
        return *options.begin();
    }

    std::vector<double> reals(const std::string& key) {
        std::vector<double> out;
        for (const auto& item : split(text(key))) {
            const auto v = parse_real(item);
            if (!v) {
                fail(key, "expected a comma-separated list of numbers, got '" + text(key) + "'");
                return {};
            }
            out.push_back(*v);
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key) {
        std::vector<std::size_t> out;
        for (const auto& item : split(text(key))) {
            const auto v = parse_count(item);
            if (!v) {
                fail(key, "expected a comma-separated list of non-negative integers, got '" + text(key) + "'");
                return {};
            }
            out.push_back(static_cast<std::size_t>(*v));
        }
        return out;
    }

private:
    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto pos = s.find(',', start);
            out.push_back(trim(std::string_view(s).substr(start, pos == std::string::npos ? s.npos : pos - start)));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    }

    static std::optional<double> parse_real(const std::string& s) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    }

    /// Integers, also written in exponent form such as 1e5.
    static std::optional<std::uint64_t> parse_count(const std::string& s) {
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc() && p == s.data() + s.size()) return v;
        const auto r = parse_real(s);
        if (r && *r >= 0.0 && *r <= 0x1p53 && std::floor(*r) == *r) return static_cast<std::uint64_t>(*r);
        return std::nullopt;
    }

    const std::map<std::string, RawEntry>& values_;
    std::vector<ConfigIssue>& errors_;
};

template <class T>
bool strictly_increasing(const std::vector<T>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
    return true;
}

}  // namespace

ConfigResult validate_config(std::string_view text, const ConfigOverrides& overrides) {
    ConfigResult result;
    auto& errors = result.errors;
    std::map<std::string, RawEntry> given;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            errors.push_back({"", "expected 'key = value', got '" + body + "'", line_no});
            continue;
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        if (!valid_key(key)) {
            errors.push_back({key, "malformed key", line_no});
            continue;
        }
        if (value.empty()) {
            errors.push_back({key, "empty value", line_no});
            continue;
        }
        if (const auto it = given.find(key); it != given.end()) {
            errors.push_back({key, "duplicate key (first set on line " + std::to_string(it->second.line) + ")", line_no});
            continue;
        }
        given[key] = {value, line_no, Provenance::File};
    }
    for (const auto& [key, value] : overrides) {
        const std::string v = trim(value);
        if (!valid_key(key) || v.empty()) {
            errors.push_back({key, "malformed override", 0});
            continue;
        }
        given[key] = {v, 0, Provenance::Override};
    }

    Scenario scenario = Scenario::WellSpecifiedNormal;
    if (const auto it = given.find("scenario"); it != given.end()) {
        if (const auto s = scenario_from_string(it->second.value))
            scenario = *s;
        else
            errors.push_back({"scenario", "unknown scenario '" + it->second.value + "'", it->second.line});
    }
    const auto defaults = defaults_for(scenario);
    const auto baseline = defaults_for(Scenario::WellSpecifiedNormal);

    for (const auto& [key, entry] : given) {
        if (defaults.count(key)) continue;
        std::string message = "unknown key";
        std::size_t best = 3;
        for (const auto& [known, unused] : defaults) {
            const std::size_t d = edit_distance(key, known);
            if (d < best) {
                best = d;
                message = "unknown key (did you mean '" + known + "'?)";
            }
        }
        errors.push_back({key, message, entry.line});
    }

    std::map<std::string, RawEntry> merged;
    std::map<std::string, Provenance> provenance;
    for (const auto& [key, def] : defaults) {
        if (const auto it = given.find(key); it != given.end()) {
            merged[key] = it->second;
            provenance[key] = it->second.source;
        } else {
            const bool scenario_specific = key != "scenario" && key != "output.dir" && baseline.at(key) != def;
            merged[key] = {def, 0, scenario_specific ? Provenance::ScenarioDefault : Provenance::Default};
            provenance[key] = merged[key].source;
        }
    }

    Reader r(merged, errors);
    ScenarioConfig c;
    c.scenario = scenario;
    c.seed = r.u64("seed");
    c.replicates = r.count("replicates");
    if (c.replicates < 1) r.fail("replicates", "must be >= 1");
    c.output_dir = r.text("output.dir");

    c.dim = static_cast<int>(r.count("domain.dim"));
    if (c.dim < 1 || c.dim > 3) r.fail("domain.dim", "must be 1, 2 or 3");
    c.design = r.choice("design.kind", {"iid", "partition"}) == "iid" ? DesignKind::IidFromQ
                                                                     : DesignKind::DeterministicPartition;

    c.truth.eta0 = r.choice("truth.eta0", {"cosine", "sine", "step", "constant"});
    c.truth.amplitude = r.real("truth.amplitude");
    c.truth.frequency = r.real("truth.frequency");
    c.truth.breakpoint = r.real("truth.breakpoint");
    if (c.truth.eta0 == "step" && !(c.truth.breakpoint > 0.0 && c.truth.breakpoint < 1.0))
        r.fail("truth.breakpoint", "must lie strictly inside (0, 1)");
    c.truth.low = r.real("truth.low");
    c.truth.high = r.real("truth.high");
    c.truth.constant = r.real("truth.constant");
    c.truth.family = r.choice("truth.family", {"normal", "laplace", "logistic", "hyperbolic_secant"});
    c.truth.sigma0 = r.real("truth.sigma0");
    if (!(c.truth.sigma0 > 0.0)) r.fail("truth.sigma0", "must be > 0");
    c.model_family = r.choice("model.family", {"normal", "laplace", "logistic", "hyperbolic_secant"});

    c.prior.kernel = r.choice("prior.kernel", {"se", "matern"});
    c.prior.amplitude = r.real("prior.amplitude");
    if (!(c.prior.amplitude > 0.0)) r.fail("prior.amplitude", "must be > 0");
    c.prior.lengthscale = r.real("prior.lengthscale");
    if (!(c.prior.lengthscale > 0.0)) r.fail("prior.lengthscale", "must be > 0");
    c.prior.nu = r.real("prior.nu");
    if (c.prior.kernel == "matern" && c.prior.nu != 2.5 && c.prior.nu != 3.5)
        r.fail("prior.nu", "must be 2.5 or 3.5");
    c.prior.K = r.count("prior.K");
    if (c.prior.K < 1 || c.prior.K > 4096) r.fail("prior.K", "must be between 1 and 4096");
    c.prior.basis = r.choice("prior.basis", {"cosine", "fourier"});
    c.prior.feature_seed = r.u64("prior.feature_seed");
    c.prior.sigma_family = r.choice("prior.sigma.family", {"lognormal", "inverse_gamma"});
    c.prior.sigma_location = r.real("prior.sigma.location");
    c.prior.sigma_scale = r.real("prior.sigma.scale");
    if (!(c.prior.sigma_scale > 0.0)) r.fail("prior.sigma.scale", "must be > 0");
    c.prior.sigma_shape = r.real("prior.sigma.shape");
    if (!(c.prior.sigma_shape > 0.0)) r.fail("prior.sigma.shape", "must be > 0");
    c.prior.sigma_rate = r.real("prior.sigma.rate");
    if (!(c.prior.sigma_rate > 0.0)) r.fail("prior.sigma.rate", "must be > 0");

    auto check_schedule = [&](const std::string& key, const auto& v) {
        if (v.empty()) return;
        if (!strictly_increasing(v)) r.fail(key, "not strictly increasing");
        if (!(v.front() >= 1)) r.fail(key, "entries must be >= 1");
    };
    c.equipartition_n = r.counts("equipartition.n");
    check_schedule("equipartition.n", c.equipartition_n);
    c.equipartition_shift = r.real("equipartition.shift");
    c.equipartition_sigma_ratio = r.real("equipartition.sigma_ratio");
    if (!(c.equipartition_sigma_ratio > 0.0)) r.fail("equipartition.sigma_ratio", "must be > 0");
    c.uniform_grid = r.count("uniform.grid");
    if (c.uniform_grid < 1 || c.uniform_grid > 50) r.fail("uniform.grid", "must be between 1 and 50");

    c.rate_J = r.real("rate.J");
    if (!(c.rate_J > 0.0)) r.fail("rate.J", "must be > 0");
    c.rate_n_min = r.count("rate.n_min");
    c.rate_n_max = r.count("rate.n_max");
    c.rate_points = r.count("rate.points");
    if (c.rate_n_min < 1) r.fail("rate.n_min", "must be >= 1");
    if (c.rate_n_max <= c.rate_n_min) r.fail("rate.n_max", "must exceed rate.n_min");
    if (c.rate_points < 2 || (c.rate_n_max > c.rate_n_min && c.rate_points > c.rate_n_max - c.rate_n_min + 1))
        r.fail("rate.points", "must be >= 2 and at most rate.n_max - rate.n_min + 1");

    c.posterior_n = r.counts("posterior.n");
    check_schedule("posterior.n", c.posterior_n);
    c.chain.length = r.count("chain.length");
    c.chain.burnin = r.count("chain.burnin");
    c.chain.thin = r.count("chain.thin");
    c.chain.step = r.real("chain.step");
    if (c.chain.length < 10 * c.chain.burnin || c.chain.length == 0)
        r.fail("chain.length", "must be positive and at least 10 * chain.burnin");
    if (c.chain.thin < 1 || c.chain.thin > c.chain.length) r.fail("chain.thin", "must be between 1 and chain.length");
    if (!(c.chain.step > 0.0)) r.fail("chain.step", "must be > 0");

    c.x_new = r.reals("predictive.x_new");
    if (provenance["predictive.x_new"] != Provenance::File && provenance["predictive.x_new"] != Provenance::Override &&
        c.x_new.size() == 1 && c.dim > 1)
        c.x_new.assign(static_cast<std::size_t>(c.dim), c.x_new.front());
    if (c.x_new.size() != static_cast<std::size_t>(std::max(c.dim, 1)))
        r.fail("predictive.x_new", "needs one coordinate per domain dimension");
    for (double x : c.x_new)
        if (!(x >= 0.0 && x <= 1.0)) r.fail("predictive.x_new", "coordinates must lie in [0, 1]");
    c.predictive_max_draws = r.count("predictive.max_draws");
    if (c.predictive_max_draws < 1) r.fail("predictive.max_draws", "must be >= 1");
    c.neps_exponent = r.real("neps.exponent");
    if (!(c.neps_exponent > 0.0 && c.neps_exponent < 1.0))
        r.fail("neps.exponent", "must lie in (0, 1) so that eps_n -> 0 and n eps_n -> infinity");
    c.neps_max_draws = r.count("neps.max_draws");
    if (c.neps_max_draws < 1) r.fail("neps.max_draws", "must be >= 1");

    c.sieve_beta = r.real("sieve.beta");
    if (!(c.sieve_beta > 0.0)) r.fail("sieve.beta", "must be > 0");
    c.sieve_n = r.reals("sieve.n");
    check_schedule("sieve.n", c.sieve_n);
    c.sieve_draws = r.count("sieve.draws");
    if (c.sieve_draws < 10000) r.fail("sieve.draws", "must be >= 10000");

    for (const char* key : {"equipartition.n", "posterior.n", "sieve.n"})
        if (merged.at(key).value.empty()) r.fail(key, "must not be empty");

    if (!errors.empty()) return result;
    c.provenance = std::move(provenance);
    result.config = std::move(c);
    return result;
}

ScenarioConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
    auto r = validate_config(text, overrides);
    if (r.ok()) return *r.config;
    std::string msg = "invalid configuration:";
    for (const auto& e : r.errors) msg += "\n  " + e.format();
    throw ConfigError(msg);
}

std::string read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------
// Runner

namespace {

class OutputDir {
public:
    OutputDir(const fs::path& root, RunManifest& manifest) : root_(root), manifest_(manifest) {
        fs::create_directories(root_);
    }

    void write(const std::string& name, const std::string& stage, const std::string& content) {
        if (name.empty() || name.find('/') != std::string::npos || name.find('\\') != std::string::npos ||
            name.find("..") != std::string::npos)
            throw InvalidArgument("output file names must be plain names, got '" + name + "'");
        const fs::path path = root_ / name;
        {
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write " + path.string());
            out << content;
            if (!out) throw Error("write failed for " + path.string());
        }
        auto& files = manifest_.files;
        files.erase(std::remove_if(files.begin(), files.end(), [&](const auto& f) { return f.name == name; }),
                    files.end());
        files.push_back({name, stage, content.size(), fnv1a_hex(content)});
    }

private:
    fs::path root_;
    RunManifest& manifest_;
};

/// Runs body(i) for i in [0, count) across workers; rethrows the first failure.
template <class Body>
void parallel_tasks(std::size_t count, const Body& body) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(postcon_task_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

template <class T>
std::vector<T> every_kth(const std::vector<T>& v, std::size_t keep) {
    if (keep >= v.size()) return v;
    std::vector<T> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(v[i * v.size() / keep]);
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

class Runner {
public:
    Runner(const ScenarioConfig& cfg, RunManifest& manifest)
        : cfg_(cfg),
          manifest_(manifest),
          out_(cfg.output_dir, manifest),
          domain_(cfg.domain()),
          q_(cfg.measure()),
          truth_(cfg.truth_model()),
          family_(cfg.family()),
          prior_(cfg.coefficient_prior()),
          sigma_prior_(cfg.sigma_prior()) {}

    std::uint64_t seed_for(Stage s) {
        const auto idx = static_cast<std::uint64_t>(std::find(all_stages().begin(), all_stages().end(), s) -
                                                    all_stages().begin());
        const std::uint64_t seed = derive_seed(cfg_.seed, idx + 1);
        manifest_.seeds[to_string(s)] = seed;
        return seed;
    }

    void write_config() { out_.write("config.resolved.txt", "setup", render_config(cfg_)); }

    const HInfResult& hinf() {
        if (!hinf_) {
            HInfOptions opt;
            opt.seed = derive_seed(cfg_.seed, 0x68696e66);
            manifest_.seeds["h_inf"] = opt.seed;
            hinf_ = h_inf_estimate(family_, prior_.basis(), truth_, q_, opt);
        }
        return *hinf_;
    }

    Theta theta0() const { return {truth_.eta0, cfg_.truth.sigma0}; }

    Theta theta_eq() const {
        const double s0 = cfg_.truth.sigma0;
        return {truth_.eta0.shifted(cfg_.equipartition_shift * s0), cfg_.equipartition_sigma_ratio * s0};
    }

    std::vector<Theta> uniform_grid() const {
        const std::size_t g = cfg_.uniform_grid;
        const double s0 = cfg_.truth.sigma0;
        std::vector<Theta> grid;
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < g; ++j) {
                const double u = g == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(g - 1);
                const double v = g == 1 ? 1.0 / 3.0 : static_cast<double>(j) / static_cast<double>(g - 1);
                grid.push_back({truth_.eta0.shifted(s0 * (u - 0.5)), s0 * (0.75 + 0.75 * v)});
            }
        return grid;
    }

    nlohmann::json equipartition() {
        const auto seed = seed_for(Stage::Equipartition);
        const TraceOptions opt{cfg_.design, Execution::Parallel};
        const auto& ns = cfg_.equipartition_n;
        const auto tr = equipartition_trace(theta_eq(), family_, truth_, q_, ns, cfg_.replicates, seed, opt);
        const auto tr0 = equipartition_trace(theta0(), family_, truth_, q_, ns, cfg_.replicates, seed, opt);
        const auto ug = uniform_gap_on_compact(uniform_grid(), family_, truth_, q_, ns, cfg_.replicates, seed, opt);
        std::ostringstream a, b, c;
        write_equipartition_csv(a, tr);
        write_equipartition_csv(b, tr0);
        write_uniform_gap_csv(c, ug);
        out_.write("equipartition.csv", "equipartition", a.str());
        out_.write("equipartition_theta0.csv", "equipartition", b.str());
        out_.write("uniform_gap.csv", "equipartition", c.str());

        nlohmann::json j;
        j["h_theta"] = tr.h;
        j["h_theta0"] = tr0.h;
        std::vector<double> medians;
        for (std::size_t n : ns) {
            std::vector<double> gaps, abs_gaps, abs0, sup;
            for (const auto& row : tr.at(n)) {
                gaps.push_back(row.gap);
                abs_gaps.push_back(std::fabs(row.gap));
            }
            for (const auto& row : tr0.at(n)) abs0.push_back(std::fabs(row.gap));
            for (const auto& row : ug)
                if (row.n == n) sup.push_back(row.sup_gap);
            medians.push_back(median(abs_gaps));
            j["by_n"].push_back({{"n", n},
                                 {"mean_gap", mean(gaps)},
                                 {"median_abs_gap", medians.back()},
                                 {"max_abs_gap_theta0", *std::max_element(abs0.begin(), abs0.end())},
                                 {"median_uniform_sup_gap", median(sup)}});
        }
        j["median_abs_gap_strictly_decreasing"] = strictly_decreasing(medians);
        return j;
    }

    nlohmann::json klrate() {
        const auto& hi = hinf();
        std::vector<HGridRow> rows;
        rows.push_back({"theta0", cfg_.truth.sigma0, kl_rate(theta0(), family_, truth_, q_, hi.h)});
        rows.push_back({"theta_eq", theta_eq().sigma, kl_rate(theta_eq(), family_, truth_, q_, hi.h)});
        rows.push_back({"argmin", hi.argmin.sigma, kl_rate(hi.argmin, family_, truth_, q_, hi.h)});
        const auto grid = uniform_grid();
        std::vector<KLRateReport> reports(grid.size());
        parallel_tasks(grid.size(), [&](std::size_t i) { reports[i] = kl_rate(grid[i], family_, truth_, q_, hi.h); });
        for (std::size_t i = 0; i < grid.size(); ++i)
            rows.push_back({"grid_" + std::to_string(i / cfg_.uniform_grid) + "_" + std::to_string(i % cfg_.uniform_grid),
                            grid[i].sigma, reports[i]});
        std::ostringstream s;
        write_h_grid_csv(s, rows);
        out_.write("h_grid.csv", "klrate", s.str());

        nlohmann::json j{{"h_inf", hi.h},
                         {"error", hi.error},
                         {"method", hi.method},
                         {"converged", hi.converged},
                         {"sigma_star", hi.argmin.sigma},
                         {"K", prior_.size()},
                         {"basis", prior_.basis()->label()},
                         {"family", family_.family_name()},
                         {"truth", describe(truth_)},
                         {"coefficients", hi.coefficients}};
        out_.write("h_inf.json", "klrate", j.dump(2) + "\n");
        return {{"h_inf", hi.h}, {"sigma_star", hi.argmin.sigma}, {"h_theta_eq", rows[1].report.h}};
    }

    /// Shift c > 0 with h(eta* + c, sigma*) - h(eta*, sigma*) = J, by bisection.
    double shift_for_J(const Theta& star, double h_star, double J) const {
        auto excess = [&](double c) {
            return kl_rate({star.eta.shifted(c), star.sigma}, family_, truth_, q_).h - h_star - J;
        };
        double lo = 0.0, hi = 0.5 * star.sigma;
        for (int i = 0; i < 80 && excess(hi) < 0.0; ++i) {
            lo = hi;
            hi *= 2.0;
        }
        if (excess(hi) < 0.0) throw Error("rate stage: cannot reach the requested J by shifting the minimizer");
        for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            (excess(mid) < 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    nlohmann::json rate() {
        const auto seed = seed_for(Stage::Rate);
        const auto& hi = hinf();
        const Theta star = hi.argmin;
        const double h_star = kl_rate(star, family_, truth_, q_).h;
        const double c = shift_for_J(star, h_star, cfg_.rate_J);
        const auto space = DiscreteThetaSpace::with_rates({star, {star.eta.shifted(c), star.sigma}}, {0.5, 0.5},
                                                          family_, truth_, q_);
        std::vector<std::size_t> ns;
        const double span = static_cast<double>(cfg_.rate_n_max - cfg_.rate_n_min);
        for (std::size_t k = 0; k < cfg_.rate_points; ++k) {
            const auto n = cfg_.rate_n_min + static_cast<std::size_t>(std::llround(
                                                 span * static_cast<double>(k) / static_cast<double>(cfg_.rate_points - 1)));
            if (ns.empty() || n > ns.back()) ns.push_back(n);
        }
        std::vector<RateDiagnostic> diags(cfg_.replicates);
        parallel_tasks(cfg_.replicates, [&](std::size_t r) {
            const auto rs = derive_seed(seed, r);
            const auto data =
                simulate(truth_, make_design(q_, DesignKind::IidFromQ, ns.back(), derive_seed(rs, 1)), derive_seed(rs, 2));
            diags[r] = posterior_rate_diagnostic(space, data, family_, truth_, {1}, ns);
        });
        std::ostringstream s;
        CsvWriter csv(s, {"replicate", "n", "log_mass", "statistic", "target"});
        std::vector<double> slopes;
        for (std::size_t r = 0; r < diags.size(); ++r) {
            for (std::size_t i = 0; i < diags[r].n.size(); ++i) {
                csv.row_begin();
                csv.field(r).field(diags[r].n[i]).field(diags[r].log_mass[i]).field(diags[r].statistic[i]).field(
                    diags[r].target);
                csv.row_end();
            }
            slopes.push_back(diags[r].slope);
        }
        out_.write("rate.csv", "rate", s.str());
        double var = 0.0;
        const double m = mean(slopes);
        for (double v : slopes) var += (v - m) * (v - m);
        var = slopes.size() > 1 ? var / static_cast<double>(slopes.size() - 1) : 0.0;
        nlohmann::json j{{"J", space.J({1})},
                         {"target", -space.J({1})},
                         {"shift", c},
                         {"mean_slope", m},
                         {"slope_std_error", std::sqrt(var / static_cast<double>(slopes.size()))},
                         {"slopes", slopes},
                         {"n_min", ns.front()},
                         {"n_max", ns.back()},
                         {"replicates", cfg_.replicates}};
        out_.write("rate_summary.json", "rate", j.dump(2) + "\n");
        return {{"J", j["J"]}, {"mean_slope", m}};
    }

    struct ChainTask {
        std::size_t n = 0, replicate = 0;
        double acceptance = 0.0, sigma_acceptance = 0.0;
        std::string warning;
        double epsilon = 0.0;
        SetMass mass;
        PredictiveReport predictive;
    };

    nlohmann::json chains(bool want_neps, bool want_predictive) {
        // the N_eps and predictive stages read the same chains
        const auto seed = derive_seed(cfg_.seed, 0x636861696e73);
        manifest_.seeds["chains"] = seed;
        const double h_inf = hinf().h;
        const auto& ns = cfg_.posterior_n;
        const std::size_t R = cfg_.replicates;
        std::vector<ChainTask> tasks(ns.size() * R);
        parallel_tasks(tasks.size(), [&](std::size_t t) {
            const std::size_t i = t / R, r = t % R;
            auto& task = tasks[t];
            task.n = ns[i];
            task.replicate = r;
            const auto rs = derive_seed(seed, r);
            const Dataset data =
                cfg_.design == DesignKind::IidFromQ
                    ? simulate(truth_, make_design(q_, cfg_.design, ns.back(), derive_seed(rs, 1)), derive_seed(rs, 2))
                          .prefix(ns[i])
                    : simulate(truth_, make_design(q_, cfg_.design, ns[i], derive_seed(rs, 1)), derive_seed(rs, 2));
            const auto smp = mcmc_posterior(prior_, sigma_prior_, data, family_, cfg_.chain, derive_seed(rs, 16 + i));
            task.acceptance = smp.acceptance_rate;
            task.sigma_acceptance = smp.sigma_acceptance_rate;
            task.warning = smp.tuning_warning.value_or("");
            if (want_neps) {
                task.epsilon = std::pow(static_cast<double>(ns[i]), -cfg_.neps_exponent);
                PosteriorSamples sub = smp;
                sub.draws = every_kth(smp.draws, cfg_.neps_max_draws);
                sub.weights.clear();
                task.mass = posterior_set_mass(sub, [&](const PosteriorDraw& d) {
                    const Theta th{RegressionFunction::expansion(smp.domain, smp.basis, d.w, smp.offset), d.sigma};
                    return n_epsilon_member(kl_rate(th, family_, truth_, q_, h_inf).h, h_inf, task.epsilon);
                });
            }
            if (want_predictive) {
                PosteriorSamples sub = smp;
                sub.draws = every_kth(smp.draws, cfg_.predictive_max_draws);
                sub.weights.clear();
                task.predictive = predictive_distance(truth_, cfg_.x_new, predictive_components(sub, cfg_.x_new), family_);
                task.predictive.n = ns[i];
            }
        });

        std::ostringstream diag;
        CsvWriter dcsv(diag, {"n", "replicate", "acceptance", "sigma_acceptance", "warning"});
        for (const auto& t : tasks) {
            dcsv.row_begin();
            std::string w = t.warning;
            std::replace(w.begin(), w.end(), ',', ';');
            dcsv.field(t.n).field(t.replicate).field(t.acceptance).field(t.sigma_acceptance).field(w);
            dcsv.row_end();
        }
        out_.write("chain_diagnostics.csv", want_neps ? "neps" : "predictive", diag.str());

        nlohmann::json j;
        if (want_neps) {
            std::ostringstream s;
            CsvWriter csv(s, {"n", "replicate", "epsilon", "mass", "mc_error"});
            std::vector<double> med;
            for (std::size_t i = 0; i < ns.size(); ++i) {
                std::vector<double> masses;
                for (std::size_t r = 0; r < R; ++r) {
                    const auto& t = tasks[i * R + r];
                    csv.row_begin();
                    csv.field(t.n).field(t.replicate).field(t.epsilon).field(t.mass.probability).field(t.mass.mc_error);
                    csv.row_end();
                    masses.push_back(t.mass.probability);
                }
                med.push_back(median(masses));
                j["neps"]["by_n"].push_back({{"n", ns[i]}, {"median_mass", med.back()}, {"mean_mass", mean(masses)}});
            }
            out_.write("neps_mass.csv", "neps", s.str());
        }
        if (want_predictive) {
            std::vector<PredictiveRow> rows;
            std::vector<double> med_rho, med_rho2;
            for (std::size_t i = 0; i < ns.size(); ++i) {
                std::vector<double> rho, rho2, tv;
                for (std::size_t r = 0; r < R; ++r) {
                    const auto& t = tasks[i * R + r];
                    rows.push_back({t.replicate, t.predictive});
                    rho2.push_back(t.predictive.hellinger_sq);
                    rho.push_back(std::sqrt(std::max(0.0, t.predictive.hellinger_sq)));
                    tv.push_back(t.predictive.tv);
                }
                med_rho.push_back(median(rho));
                med_rho2.push_back(median(rho2));
                j["predictive"]["by_n"].push_back({{"n", ns[i]},
                                                   {"median_hellinger", med_rho.back()},
                                                   {"median_hellinger_sq", med_rho2.back()},
                                                   {"median_tv", median(tv)}});
            }
            std::ostringstream s;
            write_predictive_csv(s, rows);
            out_.write("predictive.csv", "predictive", s.str());
            j["predictive"]["median_hellinger_strictly_decreasing"] = strictly_decreasing(med_rho);
            j["predictive"]["h_inf"] = h_inf;
            j["predictive"]["large_n_within_h_inf_plus_0.05"] = med_rho2.back() <= h_inf + 0.05;
        }
        return j;
    }

    nlohmann::json sieve() {
        const auto seed = seed_for(Stage::Sieve);
        nlohmann::json j;
        j["beta"] = cfg_.sieve_beta;
        std::vector<double> est;
        for (double n : cfg_.sieve_n) {
            const auto rep = prior_sieve_complement_mass(prior_, sigma_prior_, sieve_thresholds(cfg_.sieve_beta, n),
                                                         cfg_.sieve_draws, seed);
            j["reports"].push_back(to_json(rep));
            est.push_back(rep.estimate);
        }
        bool nonincreasing = true;
        for (std::size_t i = 1; i < est.size(); ++i) nonincreasing = nonincreasing && est[i] <= est[i - 1];
        j["nonincreasing_in_n"] = nonincreasing;
        const double h = hinf().h;
        j["h_inf"] = h;
        j["beta_exceeds_two_h_inf"] = cfg_.sieve_beta > 2.0 * h;
        out_.write("sieve.json", "sieve", j.dump(2) + "\n");
        return {{"nonincreasing_in_n", nonincreasing}, {"beta_exceeds_two_h_inf", cfg_.sieve_beta > 2.0 * h}};
    }

    OutputDir& out() { return out_; }

private:
    const ScenarioConfig& cfg_;
    RunManifest& manifest_;
    OutputDir out_;
    CompactDomain domain_;
    MeasureQ q_;
    TrueModel truth_;
    NoiseModel family_;
    CoefficientPrior prior_;
    SigmaPrior sigma_prior_;
    std::optional<HInfResult> hinf_;
};

}  // namespace

nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json j;
    j["scenario"] = m.scenario;
    j["config_hash"] = m.config_hash;
    j["code_version"] = m.code_version;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    j["seeds"] = m.seeds;
    j["completed_stages"] = m.completed_stages;
    j["failed_stage"] = m.failed_stage ? nlohmann::json(*m.failed_stage) : nlohmann::json(nullptr);
    if (m.failed_stage) j["error"] = m.error;
    for (const auto& f : m.files)
        j["files"].push_back({{"name", f.name}, {"stage", f.stage}, {"bytes", f.bytes}, {"fnv1a", f.fnv1a}});
    if (m.files.empty()) j["files"] = nlohmann::json::array();
    return j;
}

RunManifest run_scenario(const ScenarioConfig& config, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    RunManifest m;
    m.scenario = to_string(config.scenario);
    m.config_hash = config_hash(config);
    m.code_version = code_version();
    m.seeds["base"] = config.seed;
    m.summary["scenario"] = m.scenario;
    m.summary["config_hash"] = m.config_hash;

    std::string current = "setup";
    std::optional<Runner> runner;
    try {
        runner.emplace(config, m);
        runner->write_config();
        const auto& st = options.stages;
        for (Stage s : {Stage::Equipartition, Stage::KlRate, Stage::Rate}) {
            if (!st.count(s)) continue;
            current = to_string(s);
            m.summary[current] = s == Stage::Equipartition ? runner->equipartition()
                                 : s == Stage::KlRate      ? runner->klrate()
                                                           : runner->rate();
            m.completed_stages.push_back(current);
        }
        const bool neps = st.count(Stage::NEpsilon) > 0, pred = st.count(Stage::Predictive) > 0;
        if (neps || pred) {
            current = neps ? "neps" : "predictive";
            const auto j = runner->chains(neps, pred);
            for (const auto& [k, v] : j.items()) m.summary[k] = v;
            if (neps) m.completed_stages.push_back("neps");
            if (pred) m.completed_stages.push_back("predictive");
        }
        if (st.count(Stage::Sieve)) {
            current = "sieve";
            m.summary["sieve"] = runner->sieve();
            m.completed_stages.push_back(current);
        }
    } catch (const std::exception& e) {
        m.failed_stage = current;
        m.error = e.what();
    }

    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
        if (!runner) fs::create_directories(config.output_dir);
        OutputDir out(config.output_dir, m);
        if (runner) out.write("summary.json", "summary", m.summary.dump(2) + "\n");
        const fs::path path = fs::path(config.output_dir) / "manifest.json";
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << to_json(m).dump(2) << "\n";
    } catch (const std::exception& e) {
        if (!m.failed_stage) {
            m.failed_stage = "manifest";
            m.error = e.what();
        }
    }
    return m;
}

}  // namespace postcon
