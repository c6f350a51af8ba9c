#pragma once

// Run-configuration files: one INI file per experiment run with sections
// [species], [resonator], [pulse], [counter], [simulation], [output].
// Every physical value carries an explicit unit suffix; keys outside the
// known vocabulary are configuration errors. load_recipe resolves the file
// into SI quantities (angular frequencies in rad/s) against a recipe kind.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bloch.hpp"
#include "counter.hpp"
#include "detail/ini.hpp"
#include "errors.hpp"
#include "fluorescence.hpp"
#include "species.hpp"
#include "units.hpp"

namespace fdepr {

enum class RecipeKind {
    spectrum,
    rotation_pattern,
    fluorescence,
    count_sweep,
    snr_compare,
    rabi,
    bath_rabi,
};

inline const char* recipe_name(RecipeKind kind) {
    switch (kind) {
        case RecipeKind::spectrum: return "spectrum";
        case RecipeKind::rotation_pattern: return "rotation_pattern";
        case RecipeKind::fluorescence: return "fluorescence";
        case RecipeKind::count_sweep: return "count_sweep";
        case RecipeKind::snr_compare: return "snr_compare";
        case RecipeKind::rabi: return "rabi";
        case RecipeKind::bath_rabi: return "bath_rabi";
    }
    return "?";
}

struct SpeciesRun {
    std::string id;
    double spins = 1e6;  // spin count represented by the coupling distribution
};

struct OutputSpec {
    std::string csv;
    std::string manifest;
    std::string clicks;            // binary click-stream file
    std::string histogram_prefix;  // per-point count histograms
};

struct ExperimentRecipe {
    RecipeKind kind = RecipeKind::spectrum;
    std::string config_path;

    std::string database_path;
    SpeciesDatabase database;
    std::vector<SpeciesRun> species;
    std::string sites_path;  // nuclear-bath site table
    double gamma_w = 1.8e6;  // Hz/T

    ResonatorParams resonator;
    bool has_resonator = false;

    Pulse pulse;
    bool has_pulse = false;
    double attenuation_db = 0.0;
    bool has_attenuation = false;

    CounterConfig counter;
    bool has_counter = false;

    // ensemble model
    double gamma_nr = 0.0;    // 1/s
    double efficiency = 1.0;  // eta
    double gbar = 0.0;        // rad/s; 0 -> 2*pi*50
    double g_min = 0.0;       // rad/s; 0 -> purcell_g0_limit/4000
    double g_max = 0.0;       // rad/s; 0 -> 2*pi*100e3
    int n_g_bins = 60;
    int n_delta_bins = 41;
    double line_width = 0.0;  // rad/s; 0 -> kappa
    LineShape::Kind line_kind = LineShape::Kind::lorentzian;
    bool quasi_static = true;

    // acquisition
    double t_int = 0.0;   // s, counting window
    double t_meas = 0.0;  // s, simulated-curve extent; 0 -> t_rep or t_int
    int n_time_points = 400;
    bool background_subtract = false;
    bool sample_clicks = false;
    int n_sequences = 200;
    std::optional<std::uint64_t> seed;

    // field scan / rotation
    double b_start = 0.0, b_stop = 0.0, b_step = 0.0;  // T
    double phi_deg = 0.0, theta_c_deg = 0.0;
    double b_min = 0.0, b_max = 0.0;  // transition search window, T
    double phi_start = 0.0, phi_stop = 90.0;
    int n_phi = 91;

    // pulse-strength sweep
    double eps_start = 0.0, eps_stop = 0.0;  // s^1/2
    int n_eps = 0;
    double power_start_dbm = 0.0, power_stop_dbm = 0.0;
    bool has_power = false;

    // Rabi / bath
    double n_bar = 0.0;
    double g0 = 0.0;  // rad/s
    int n_detunings = 21;
    double omega_drive = 0.0;  // rad/s
    double bath_abundance = 0.14;
    int bath_max_occupied = 3;
    double t_stop = 0.0;       // s
    double line_center = 0.0;  // rad/s, fluorescence-curve line offset

    OutputSpec output;

    bool stochastic() const {
        return kind == RecipeKind::snr_compare || sample_clicks;
    }
};

namespace detail {

inline double opt_quantity(const IniDocument& doc, const IniSection& sec, const char* key,
                           Unit unit, double fallback) {
    const IniEntry* e = sec.find(key);
    return e ? parse_quantity(doc, *e, unit) : fallback;
}

inline int opt_int(const IniDocument& doc, const IniSection& sec, const char* key, int fallback) {
    const IniEntry* e = sec.find(key);
    if (!e) return fallback;
    const double v = parse_quantity(doc, *e, Unit::none);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) fail_at(doc.origin, e->line, "'" + e->key + "': expected an integer");
    return i;
}

inline bool opt_bool(const IniDocument& doc, const IniSection& sec, const char* key,
                     bool fallback) {
    const IniEntry* e = sec.find(key);
    return e ? parse_bool(doc, *e) : fallback;
}

inline std::string opt_string(const IniSection& sec, const char* key, std::string fallback = "") {
    const IniEntry* e = sec.find(key);
    return e ? e->value : std::move(fallback);
}

inline void parse_species_section(const IniDocument& doc, const IniSection& sec,
                                  ExperimentRecipe& r) {
    if (const IniEntry* e = sec.find("database")) {
        if (!r.database_path.empty() && r.database_path != e->value)
            fail_at(doc.origin, e->line, "conflicting species database paths");
        r.database_path = e->value;
    }
    SpeciesRun run;
    run.id = opt_string(sec, "id");
    run.spins = opt_quantity(doc, sec, "spins", Unit::none, 1e6);
    if (run.spins < 0.0) fail_at(doc.origin, sec.line, "spins must be >= 0");
    if (!run.id.empty() || sec.find("spins")) r.species.push_back(run);
    r.sites_path = opt_string(sec, "sites", r.sites_path);
    r.gamma_w = opt_quantity(doc, sec, "gamma_w", Unit::gyro, r.gamma_w);
}

inline void parse_resonator_section(const IniDocument& doc, const IniSection& sec,
                                    ExperimentRecipe& r) {
    r.resonator.omega0 =
        units::angular(parse_quantity(doc, require_key(doc, sec, "frequency"), Unit::frequency));
    r.resonator.kappa_c = parse_quantity(doc, require_key(doc, sec, "kappa_c"), Unit::rate);
    r.resonator.kappa_i = parse_quantity(doc, require_key(doc, sec, "kappa_i"), Unit::rate);
    r.resonator.z0 = opt_quantity(doc, sec, "z0", Unit::none, 50.0);
    r.has_resonator = true;
}

inline void parse_pulse_section(const IniDocument& doc, const IniSection& sec,
                                ExperimentRecipe& r) {
    r.pulse.duration = parse_quantity(doc, require_key(doc, sec, "duration"), Unit::time);
    const IniEntry* beta = sec.find("beta");
    const IniEntry* eps = sec.find("epsilon");
    if (beta && eps) fail_at(doc.origin, eps->line, "give either 'beta' or 'epsilon', not both");
    if (beta) r.pulse.beta = parse_quantity(doc, *beta, Unit::amplitude);
    if (eps) r.pulse.beta = parse_quantity(doc, *eps, Unit::strength) / r.pulse.duration;
    r.pulse.carrier_detuning =
        units::angular(opt_quantity(doc, sec, "carrier_detuning", Unit::frequency, 0.0));
    if (const IniEntry* a = sec.find("attenuation_db")) {
        r.attenuation_db = parse_quantity(doc, *a, Unit::none);
        r.has_attenuation = true;
    }
    r.has_pulse = true;
}

inline void parse_counter_section(const IniDocument& doc, const IniSection& sec,
                                  ExperimentRecipe& r) {
    r.counter.cycle_duration =
        parse_quantity(doc, require_key(doc, sec, "cycle_duration"), Unit::time);
    r.counter.dark_rate = opt_quantity(doc, sec, "dark_rate", Unit::rate, 0.0);
    r.counter.dead_time = opt_quantity(doc, sec, "dead_time", Unit::time, 0.0);
    r.counter.t_rep = opt_quantity(doc, sec, "t_rep", Unit::time, 0.0);
    r.has_counter = true;
}

inline void parse_simulation_section(const IniDocument& doc, const IniSection& sec,
                                     ExperimentRecipe& r) {
    r.gamma_nr = opt_quantity(doc, sec, "gamma_nr", Unit::rate, r.gamma_nr);
    r.efficiency = opt_quantity(doc, sec, "efficiency", Unit::none, r.efficiency);
    r.gbar = units::angular(opt_quantity(doc, sec, "gbar", Unit::frequency, 0.0));
    r.g_min = units::angular(opt_quantity(doc, sec, "g_min", Unit::frequency, 0.0));
    r.g_max = units::angular(opt_quantity(doc, sec, "g_max", Unit::frequency, 0.0));
    r.n_g_bins = opt_int(doc, sec, "n_g_bins", r.n_g_bins);
    r.n_delta_bins = opt_int(doc, sec, "n_delta_bins", r.n_delta_bins);
    r.line_width = units::angular(opt_quantity(doc, sec, "line_width", Unit::frequency, 0.0));
    if (const IniEntry* e = sec.find("line_shape")) {
        if (e->value == "lorentzian") r.line_kind = LineShape::Kind::lorentzian;
        else if (e->value == "gaussian") r.line_kind = LineShape::Kind::gaussian;
        else fail_at(doc.origin, e->line, "line_shape must be lorentzian or gaussian");
    }
    r.quasi_static = opt_bool(doc, sec, "quasi_static", r.quasi_static);

    r.t_int = opt_quantity(doc, sec, "t_int", Unit::time, r.t_int);
    r.t_meas = opt_quantity(doc, sec, "t_meas", Unit::time, r.t_meas);
    r.n_time_points = opt_int(doc, sec, "n_time_points", r.n_time_points);
    r.background_subtract = opt_bool(doc, sec, "background_subtract", r.background_subtract);
    r.sample_clicks = opt_bool(doc, sec, "sample_clicks", r.sample_clicks);
    r.n_sequences = opt_int(doc, sec, "n_sequences", r.n_sequences);
    if (const IniEntry* e = sec.find("seed")) {
        const double v = parse_quantity(doc, *e, Unit::none);
        if (v < 0.0 || static_cast<double>(static_cast<std::uint64_t>(v)) != v)
            fail_at(doc.origin, e->line, "'seed': expected a non-negative integer");
        r.seed = static_cast<std::uint64_t>(v);
    }

    r.b_start = opt_quantity(doc, sec, "b_start", Unit::field, r.b_start);
    r.b_stop = opt_quantity(doc, sec, "b_stop", Unit::field, r.b_stop);
    r.b_step = opt_quantity(doc, sec, "b_step", Unit::field, r.b_step);
    r.phi_deg = opt_quantity(doc, sec, "phi", Unit::angle, r.phi_deg);
    r.theta_c_deg = opt_quantity(doc, sec, "theta_c", Unit::angle, r.theta_c_deg);
    r.b_min = opt_quantity(doc, sec, "b_min", Unit::field, r.b_min);
    r.b_max = opt_quantity(doc, sec, "b_max", Unit::field, r.b_max);
    r.phi_start = opt_quantity(doc, sec, "phi_start", Unit::angle, r.phi_start);
    r.phi_stop = opt_quantity(doc, sec, "phi_stop", Unit::angle, r.phi_stop);
    r.n_phi = opt_int(doc, sec, "n_phi", r.n_phi);

    r.eps_start = opt_quantity(doc, sec, "eps_start", Unit::strength, r.eps_start);
    r.eps_stop = opt_quantity(doc, sec, "eps_stop", Unit::strength, r.eps_stop);
    r.n_eps = opt_int(doc, sec, "n_eps", r.n_eps);
    if (sec.find("power_start_dbm") || sec.find("power_stop_dbm")) {
        r.power_start_dbm = opt_quantity(doc, sec, "power_start_dbm", Unit::none, 0.0);
        r.power_stop_dbm = opt_quantity(doc, sec, "power_stop_dbm", Unit::none, 0.0);
        r.has_power = true;
    }

    r.n_bar = opt_quantity(doc, sec, "n_bar", Unit::none, r.n_bar);
    r.g0 = units::angular(opt_quantity(doc, sec, "g0", Unit::frequency, 0.0));
    r.n_detunings = opt_int(doc, sec, "n_detunings", r.n_detunings);
    r.omega_drive = units::angular(opt_quantity(doc, sec, "omega_drive", Unit::frequency, 0.0));
    r.bath_abundance = opt_quantity(doc, sec, "abundance", Unit::none, r.bath_abundance);
    r.bath_max_occupied = opt_int(doc, sec, "max_occupied", r.bath_max_occupied);
    r.t_stop = opt_quantity(doc, sec, "t_stop", Unit::time, r.t_stop);
    r.line_center = units::angular(opt_quantity(doc, sec, "detuning", Unit::frequency, 0.0));
}

inline void parse_output_section(const IniSection& sec, ExperimentRecipe& r) {
    r.output.csv = opt_string(sec, "csv", r.output.csv);
    r.output.manifest = opt_string(sec, "manifest", r.output.manifest);
    r.output.clicks = opt_string(sec, "clicks", r.output.clicks);
    r.output.histogram_prefix = opt_string(sec, "histogram_prefix", r.output.histogram_prefix);
}

}  // namespace detail

/// Parses and resolves a run-configuration file for the given recipe kind.
/// Throws ConfigError (with file:line context) on malformed input, unknown
/// keys, unresolvable species references, or a missing seed for stochastic
/// recipes.
inline ExperimentRecipe load_recipe(const std::string& path, RecipeKind kind) {
    const detail::IniDocument doc = detail::parse_ini_file(path);
    ExperimentRecipe r;
    r.kind = kind;
    r.config_path = path;

    for (const auto& sec : doc.sections) {
        if (sec.kind == "species") detail::parse_species_section(doc, sec, r);
        else if (sec.kind == "resonator") detail::parse_resonator_section(doc, sec, r);
        else if (sec.kind == "pulse") detail::parse_pulse_section(doc, sec, r);
        else if (sec.kind == "counter") detail::parse_counter_section(doc, sec, r);
        else if (sec.kind == "simulation") detail::parse_simulation_section(doc, sec, r);
        else if (sec.kind == "output") detail::parse_output_section(sec, r);
        else detail::fail_at(doc.origin, sec.line, "unknown section [" + sec.kind + "]");
        detail::require_all_used(doc, sec);
    }

    if (!r.database_path.empty()) r.database = load_species_database(r.database_path);
    for (const auto& run : r.species) {
        if (run.id.empty()) continue;
        if (r.database_path.empty())
            throw ConfigError(path + ": species '" + run.id + "' referenced without a database");
        if (!r.database.find(run.id) && !r.database.find_doublet(run.id))
            throw ConfigError(path + ": species '" + run.id + "' not found in " + r.database_path);
    }
    if (r.stochastic() && !r.seed)
        throw ConfigError(path + ": stochastic recipe '" + std::string(recipe_name(kind)) +
                          "' needs a seed");
    if (r.has_counter) r.counter.validate();
    if (r.has_resonator) r.resonator.validate();
    return r;
}

}  // namespace fdepr
