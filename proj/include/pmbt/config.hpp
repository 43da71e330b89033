#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmbt/harness.hpp"

namespace pmbt {

/// Full experiment configuration, parsed from sectioned key=value text.
/// Unknown sections or keys are rejected; missing keys keep their defaults.
struct CliConfig {
    ScenarioConfig scenario;
    AmplitudeModel measurement;
    FilterParams pmb_cm;
    FilterParams pmb_am;
    FilterParams pmb;
    double pmb_am_sigma_p_sq = 1.0 / 12.0;
    double pmb_sigma_p_sq = 1.0 / 12.0;
    bool pmb_am_uniform_cell = false;
    bool pmb_uniform_cell = false;
    // harness
    int runs = 100;
    std::vector<double> etas{2.0, 4.0, 6.0};
    std::vector<FilterKind> filters{FilterKind::PmbCm, FilterKind::PmbAm, FilterKind::Pmb};
    int threads = 0;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    bool snapshots = false;
    bool full_scale = false;

    /// Switches run count and particle budgets to the full experiment scale.
    void apply_full_scale() {
        full_scale = true;
        runs = 1000;
        for (FilterParams* p : {&pmb_cm, &pmb_am, &pmb}) {
            p->particles_per_bernoulli = 3000;
            p->phd_particle_budget = 50000;
        }
    }

    ExperimentSpec to_spec() const;
};

namespace detail {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key " + key + ": expected true/false, got '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& v) {
    std::vector<double> out;
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

inline std::vector<FilterKind> parse_filter_list(const std::string& v) {
    std::vector<FilterKind> out;
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        if (tok == "all")
            return {FilterKind::PmbCm, FilterKind::PmbAm, FilterKind::Pmb};
        out.push_back(filter_from_name(tok));
    }
    return out;
}

}  // namespace detail

inline ExperimentSpec CliConfig::to_spec() const {
    ExperimentSpec spec;
    spec.scenario = scenario;
    spec.model = measurement;
    spec.filters = filters;
    spec.etas = etas;
    spec.runs = runs;
    spec.threads = threads;
    spec.master_seed = seed;
    spec.params_cm = pmb_cm;
    spec.params_am = pmb_am;
    spec.params_pmb = pmb;
    spec.sigma_p_sq_am = pmb_am_sigma_p_sq;
    spec.sigma_p_sq_pmb = pmb_sigma_p_sq;
    spec.uniform_cell_am = pmb_am_uniform_cell;
    spec.uniform_cell_pmb = pmb_uniform_cell;
    spec.out_dir = out_dir;
    spec.snapshots = snapshots;
    return spec;
}

/// Parses the sectioned key=value config format. Lines starting with '#' are
/// comments. Throws ConfigError naming the offending line.
inline CliConfig parse_config(std::istream& is) {
    CliConfig cfg;
    std::string line, section;
    int lineno = 0;

    auto filter_section = [&](const std::string& sec) -> FilterParams* {
        if (sec == "pmb_cm") return &cfg.pmb_cm;
        if (sec == "pmb_am") return &cfg.pmb_am;
        if (sec == "pmb") return &cfg.pmb;
        return nullptr;
    };

    while (std::getline(is, line)) {
        ++lineno;
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw detail::ConfigError("config: line " + std::to_string(lineno) +
                                          ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "scenario" && section != "measurement" && section != "harness" &&
                !filter_section(section))
                throw detail::ConfigError("config: line " + std::to_string(lineno) +
                                          ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw detail::ConfigError("config: line " + std::to_string(lineno) +
                                      ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const std::string where = section + "." + key;

        try {
            if (section == "scenario") {
                auto& s = cfg.scenario;
                if (key == "rows") s.roi.n_rows = std::stoi(value);
                else if (key == "cols") s.roi.n_cols = std::stoi(value);
                else if (key == "cell_side") s.roi.cell_side = std::stod(value);
                else if (key == "n_objects") s.n_objects = std::stoi(value);
                else if (key == "n_steps") s.n_steps = std::stoi(value);
                else if (key == "birth_last_step") s.birth_last_step = std::stoi(value);
                else if (key == "death_first_step") s.death_first_step = std::stoi(value);
                else if (key == "sigma_v_sq") s.sigma_v_sq = std::stod(value);
                else if (key == "process_noise_var") s.process_noise_var = std::stod(value);
                else if (key == "initial_gamma") s.initial_gamma = std::stod(value);
                else if (key == "dt") s.dt = std::stod(value);
                else throw detail::ConfigError("unknown key");
            } else if (section == "measurement") {
                if (key == "sigma_n_sq") cfg.measurement.sigma_n_sq = std::stod(value);
                else throw detail::ConfigError("unknown key");
            } else if (FilterParams* p = filter_section(section)) {
                if (key == "particles_per_bernoulli") p->particles_per_bernoulli = std::stoi(value);
                else if (key == "phd_particle_budget") p->phd_particle_budget = std::stoi(value);
                else if (key == "survival_prob") p->survival_prob = std::stod(value);
                else if (key == "recycle_threshold") p->recycle_threshold = std::stod(value);
                else if (key == "birth_mass") p->birth_mass = std::stod(value);
                else if (key == "birth_velocity_var") p->birth_velocity_var = std::stod(value);
                else if (key == "birth_gamma_max") p->birth_gamma_max = std::stod(value);
                else if (key == "gamma_jitter_var") p->gamma_jitter_var = std::stod(value);
                else if (key == "extract_threshold") p->extract_threshold = std::stod(value);
                else if (key == "bp_tol") p->bp_tol = std::stod(value);
                else if (key == "bp_max_iter") p->bp_max_iter = std::stoi(value);
                else if (key == "roi_exit_death") p->roi_exit_death = detail::parse_bool(value, where);
                else if (key == "sigma_p_sq" && section == "pmb_am") cfg.pmb_am_sigma_p_sq = std::stod(value);
                else if (key == "sigma_p_sq" && section == "pmb") cfg.pmb_sigma_p_sq = std::stod(value);
                else if (key == "uniform_cell_likelihood" && section == "pmb_am")
                    cfg.pmb_am_uniform_cell = detail::parse_bool(value, where);
                else if (key == "uniform_cell_likelihood" && section == "pmb")
                    cfg.pmb_uniform_cell = detail::parse_bool(value, where);
                else throw detail::ConfigError("unknown key");
            } else if (section == "harness") {
                if (key == "runs") cfg.runs = std::stoi(value);
                else if (key == "etas") cfg.etas = detail::parse_double_list(value);
                else if (key == "filters") cfg.filters = detail::parse_filter_list(value);
                else if (key == "threads") cfg.threads = std::stoi(value);
                else if (key == "seed") cfg.seed = std::stoull(value);
                else if (key == "out_dir") cfg.out_dir = value;
                else if (key == "snapshots") cfg.snapshots = detail::parse_bool(value, where);
                else if (key == "full_scale") { if (detail::parse_bool(value, where)) cfg.apply_full_scale(); }
                else throw detail::ConfigError("unknown key");
            } else {
                throw detail::ConfigError("key outside any section");
            }
        } catch (const detail::ConfigError& e) {
            const std::string msg = e.what();
            throw detail::ConfigError("config: line " + std::to_string(lineno) + ": " + where +
                                      ": " + (msg.rfind("config:", 0) == 0 ? "invalid value" : msg));
        } catch (const std::exception&) {
            throw detail::ConfigError("config: line " + std::to_string(lineno) + ": " + where +
                                      ": invalid value '" + value + "'");
        }
    }
    return cfg;
}

inline CliConfig parse_config_string(const std::string& text) {
    std::istringstream ss(text);
    return parse_config(ss);
}

/// Serializes a config with every key present; parse(serialize(c)) == c.
inline void serialize_config(const CliConfig& cfg, std::ostream& os) {
    os.precision(17);
    os << "[scenario]\n";
    os << "rows = " << cfg.scenario.roi.n_rows << "\n";
    os << "cols = " << cfg.scenario.roi.n_cols << "\n";
    os << "cell_side = " << cfg.scenario.roi.cell_side << "\n";
    os << "n_objects = " << cfg.scenario.n_objects << "\n";
    os << "n_steps = " << cfg.scenario.n_steps << "\n";
    os << "birth_last_step = " << cfg.scenario.birth_last_step << "\n";
    os << "death_first_step = " << cfg.scenario.death_first_step << "\n";
    os << "sigma_v_sq = " << cfg.scenario.sigma_v_sq << "\n";
    os << "process_noise_var = " << cfg.scenario.process_noise_var << "\n";
    os << "initial_gamma = " << cfg.scenario.initial_gamma << "\n";
    os << "dt = " << cfg.scenario.dt << "\n";
    os << "\n[measurement]\n";
    os << "sigma_n_sq = " << cfg.measurement.sigma_n_sq << "\n";
    const auto dump_filter = [&](const char* name, const FilterParams& p) {
        os << "\n[" << name << "]\n";
        os << "particles_per_bernoulli = " << p.particles_per_bernoulli << "\n";
        os << "phd_particle_budget = " << p.phd_particle_budget << "\n";
        os << "survival_prob = " << p.survival_prob << "\n";
        os << "recycle_threshold = " << p.recycle_threshold << "\n";
        os << "birth_mass = " << p.birth_mass << "\n";
        os << "birth_velocity_var = " << p.birth_velocity_var << "\n";
        os << "birth_gamma_max = " << p.birth_gamma_max << "\n";
        os << "gamma_jitter_var = " << p.gamma_jitter_var << "\n";
        os << "extract_threshold = " << p.extract_threshold << "\n";
        os << "bp_tol = " << p.bp_tol << "\n";
        os << "bp_max_iter = " << p.bp_max_iter << "\n";
        os << "roi_exit_death = " << (p.roi_exit_death ? "true" : "false") << "\n";
    };
    dump_filter("pmb_cm", cfg.pmb_cm);
    dump_filter("pmb_am", cfg.pmb_am);
    os << "sigma_p_sq = " << cfg.pmb_am_sigma_p_sq << "\n";
    os << "uniform_cell_likelihood = " << (cfg.pmb_am_uniform_cell ? "true" : "false") << "\n";
    dump_filter("pmb", cfg.pmb);
    os << "sigma_p_sq = " << cfg.pmb_sigma_p_sq << "\n";
    os << "uniform_cell_likelihood = " << (cfg.pmb_uniform_cell ? "true" : "false") << "\n";
    os << "\n[harness]\n";
    os << "runs = " << cfg.runs << "\n";
    os << "etas = ";
    for (std::size_t i = 0; i < cfg.etas.size(); ++i) os << (i ? "," : "") << cfg.etas[i];
    os << "\n";
    os << "filters = ";
    for (std::size_t i = 0; i < cfg.filters.size(); ++i)
        os << (i ? "," : "") << filter_name(cfg.filters[i]);
    os << "\n";
    os << "threads = " << cfg.threads << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "snapshots = " << (cfg.snapshots ? "true" : "false") << "\n";
    os << "full_scale = " << (cfg.full_scale ? "true" : "false") << "\n";
}

}  // namespace pmbt
