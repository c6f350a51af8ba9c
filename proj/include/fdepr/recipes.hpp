#pragma once

// Experiment-recipe runners: compose the physics modules into the named
// experiments (field-swept spectrum, rotation pattern, fluorescence decay,
// pulse-strength count sweep, detection-mode SNR comparison, Rabi traces
// with and without the nuclear bath). Each runner consumes a resolved
// ExperimentRecipe, writes deterministic CSV plus a JSON manifest of every
// resolved parameter, and reports a machine-readable summary.
//
// Stochastic runners derive all randomness from the recipe seed through
// per-task sub-seeds, so identical recipes produce bit-identical CSV.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "bath.hpp"
#include "bloch.hpp"
#include "counter.hpp"
#include "errors.hpp"
#include "fit.hpp"
#include "fluorescence.hpp"
#include "resonator.hpp"
#include "runconfig.hpp"
#include "species.hpp"
#include "units.hpp"

namespace fdepr {

inline constexpr const char* library_version = "0.1.0";

struct RunResult {
    std::vector<std::string> outputs;  // files written, CSV first
    int rows = 0;
    double wall_seconds = 0.0;
    nlohmann::json summary;
};

/// Converts source power through a known line attenuation into the drive
/// amplitude beta = sqrt(photon flux) at the resonator input.
inline double drive_amplitude_from_power(double power_dbm, double attenuation_db, double omega0) {
    if (!(omega0 > 0.0))
        throw std::invalid_argument("drive_amplitude_from_power: omega0 must be positive");
    const double watts = 1.0e-3 * std::pow(10.0, (power_dbm - attenuation_db) / 10.0);
    return std::sqrt(watts / (constants::hbar * omega0));
}

namespace detail {

inline std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    return out;
}

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / double(n - 1);
    return v;
}

inline std::vector<double> geomspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = a * std::pow(b / a, i / double(n - 1));
    return v;
}

[[noreturn]] inline void rethrow_with_context(const std::string& context) {
    try {
        throw;
    } catch (const ComputeError& e) {
        throw ComputeError(context + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(context + ": " + e.what());
    } catch (const std::exception& e) {
        throw ConfigError(context + ": " + e.what());
    }
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

// resolved ensemble defaults shared by the spectrum/sweep/fluorescence runners
struct EnsembleModel {
    double gbar = 0.0;
    double g_min = 0.0;
    double g_max = 0.0;
};

inline EnsembleModel resolve_ensemble(const ExperimentRecipe& r) {
    require(r.has_resonator, r.config_path + ": missing [resonator] section");
    require(r.gamma_nr > 0.0, r.config_path + ": gamma_nr must be set (> 0)");
    EnsembleModel m;
    m.gbar = r.gbar > 0.0 ? r.gbar : constants::two_pi * 50.0;
    m.g_max = r.g_max > 0.0 ? r.g_max : constants::two_pi * 100e3;
    m.g_min = r.g_min > 0.0 ? r.g_min
                            : purcell_g0_limit(r.gamma_nr, r.resonator.kappa()) / 4000.0;
    require(m.g_min < m.g_max, r.config_path + ": g_min must be below g_max");
    return m;
}

inline SimulationConfig base_simulation(const ExperimentRecipe& r, const EnsembleModel& m) {
    SimulationConfig cfg;
    cfg.resonator = r.resonator;
    cfg.gamma_nr = r.gamma_nr;
    cfg.efficiency = r.efficiency;
    cfg.n_delta_bins = r.n_delta_bins;
    cfg.quasi_static = r.quasi_static;
    cfg.t_rep = r.has_counter ? r.counter.t_rep : 0.0;
    cfg.line.kind = r.line_kind;
    cfg.line.width = r.line_width > 0.0 ? r.line_width : r.resonator.kappa();
    cfg.coupling = analytic_thin_wire_distribution(m.gbar, m.g_min, m.g_max, r.n_g_bins);
    return cfg;
}

// rescales the coupling distribution so that it represents `spins` packets
inline void scale_distribution(CouplingDistribution& dist, double spins) {
    const double total = dist.total();
    if (!(total > 0.0)) throw ComputeError("coupling distribution carries no spins");
    const double f = spins / total;
    for (double& d : dist.density) d *= f;
}

// local slope of the transition frequency vs field, rad/s per tesla
inline double transition_slope(const SpinSpecies& sp, const Transition& t, double phi_deg,
                               double theta_c_deg) {
    const double h = 1e-5;  // tesla
    auto gap_hz = [&](double b) {
        FieldConfig fc;
        fc.b0 = b;
        fc.phi_deg = phi_deg;
        fc.theta_c_deg = theta_c_deg;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(build_hamiltonian(sp, fc));
        if (es.info() != Eigen::Success)
            throw ComputeError("transition_slope: eigendecomposition failed");
        return es.eigenvalues()(t.upper) - es.eigenvalues()(t.lower);
    };
    return units::angular((gap_hz(t.b_res + h) - gap_hz(t.b_res - h)) / (2.0 * h));
}

struct SpectralLine {
    std::string species_id;
    double b_res = 0.0;     // T
    double slope = 0.0;     // rad/s per T
    double gbar_eff = 0.0;  // rad/s, matrix-element-scaled coupling scale
    double spins = 0.0;
};

inline std::vector<SpectralLine> collect_lines(const ExperimentRecipe& r,
                                               const EnsembleModel& m) {
    const double freq_hz = units::ordinary(r.resonator.omega0);
    const double b_lo = r.b_min > 0.0 ? r.b_min : std::max(r.b_start - 5e-3, 1e-4);
    const double b_hi = r.b_max > 0.0 ? r.b_max : r.b_stop + 5e-3;
    std::vector<SpectralLine> lines;
    for (const auto& run : r.species) {
        if (run.spins == 0.0) continue;
        require(!run.id.empty(), r.config_path + ": spectrum species needs an id");
        const SpinSpecies* sp = r.database.find(run.id);
        require(sp != nullptr, r.config_path + ": '" + run.id +
                                   "' is not a spin species (doublets are rotation-only)");
        const auto transitions =
            transition_fields(*sp, freq_hz, r.phi_deg, r.theta_c_deg, b_lo, b_hi);
        for (const auto& t : transitions) {
            SpectralLine line;
            line.species_id = run.id;
            line.b_res = t.b_res;
            line.slope = transition_slope(*sp, t, r.phi_deg, r.theta_c_deg);
            line.gbar_eff = m.gbar * 2.0 * t.matrix_element;
            line.spins = run.spins * sp->abundance / sp->nuclear_dim();
            lines.push_back(line);
        }
    }
    return lines;
}

inline nlohmann::json recipe_parameters(const ExperimentRecipe& r) {
    nlohmann::json j;
    j["config"] = r.config_path;
    if (!r.database_path.empty()) j["species_database"] = r.database_path;
    if (!r.sites_path.empty()) j["site_table"] = r.sites_path;
    for (const auto& s : r.species)
        j["species"].push_back({{"id", s.id}, {"spins", s.spins}});
    if (r.has_resonator)
        j["resonator"] = {{"omega0_rad_s", r.resonator.omega0},
                          {"kappa_c_per_s", r.resonator.kappa_c},
                          {"kappa_i_per_s", r.resonator.kappa_i}};
    if (r.has_pulse)
        j["pulse"] = {{"beta_per_sqrt_s", r.pulse.beta},
                      {"duration_s", r.pulse.duration},
                      {"carrier_detuning_rad_s", r.pulse.carrier_detuning}};
    if (r.has_attenuation) j["pulse"]["attenuation_db"] = r.attenuation_db;
    if (r.has_counter)
        j["counter"] = {{"cycle_duration_s", r.counter.cycle_duration},
                        {"dark_rate_per_s", r.counter.dark_rate},
                        {"dead_time_s", r.counter.dead_time},
                        {"t_rep_s", r.counter.t_rep}};
    nlohmann::json sim;
    sim["gamma_nr_per_s"] = r.gamma_nr;
    sim["efficiency"] = r.efficiency;
    sim["n_g_bins"] = r.n_g_bins;
    sim["n_delta_bins"] = r.n_delta_bins;
    sim["quasi_static"] = r.quasi_static;
    if (r.gbar > 0.0) sim["gbar_rad_s"] = r.gbar;
    if (r.g_min > 0.0) sim["g_min_rad_s"] = r.g_min;
    if (r.g_max > 0.0) sim["g_max_rad_s"] = r.g_max;
    if (r.line_width > 0.0) sim["line_width_rad_s"] = r.line_width;
    if (r.t_int > 0.0) sim["t_int_s"] = r.t_int;
    if (r.t_meas > 0.0) sim["t_meas_s"] = r.t_meas;
    sim["n_time_points"] = r.n_time_points;
    sim["background_subtract"] = r.background_subtract;
    sim["sample_clicks"] = r.sample_clicks;
    if (r.stochastic()) sim["n_sequences"] = r.n_sequences;
    j["simulation"] = std::move(sim);
    if (r.seed) j["seed"] = *r.seed;
    return j;
}

inline void write_manifest(const ExperimentRecipe& r, const RunResult& result) {
    if (r.output.manifest.empty()) return;
    nlohmann::json j;
    j["recipe"] = recipe_name(r.kind);
    j["versions"] = {{"fdepr", library_version},
                     {"click_format", "FDCLICK1"},
                     {"config_format", "ini-v1"}};
    j["parameters"] = recipe_parameters(r);
    j["outputs"] = result.outputs;
    j["rows"] = result.rows;
    j["wall_time_s"] = result.wall_seconds;
    if (!result.summary.is_null()) j["summary"] = result.summary;
    std::ofstream out = open_output(r.output.manifest);
    out << j.dump(2) << "\n";
}

class WallClock {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Field-swept spectrum: at each field point every species line contributes
/// a fluorescence curve whose lineshape is displaced by the local transition
/// slope; the run emits raw counts <C> (spin + dark) and the spin estimate
/// <C_spin> (dark- or background-subtracted) per point.
inline RunResult run_spectrum(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_pulse, r.config_path + ": missing [pulse] section");
    detail::require(r.b_step > 0.0 && r.b_stop >= r.b_start,
                    r.config_path + ": field grid needs b_start <= b_stop and b_step > 0");
    detail::require(r.t_int > 0.0, r.config_path + ": t_int must be set (> 0)");
    const detail::EnsembleModel model = detail::resolve_ensemble(r);
    const SimulationConfig base = detail::base_simulation(r, model);

    const double t_rep = r.has_counter ? r.counter.t_rep : 0.0;
    double t_meas = r.t_meas;
    if (t_meas <= 0.0) {
        if (t_rep > 0.0) t_meas = t_rep;
        else if (r.has_counter)
            t_meas = r.t_int + r.counter.dead_time + r.counter.cycle_duration;
        else t_meas = r.t_int;
    }
    detail::require(t_meas >= r.t_int, r.config_path + ": t_meas must cover t_int");
    if (r.sample_clicks)
        detail::require(r.has_counter, r.config_path + ": sample_clicks needs [counter]");
    const std::vector<double> times = detail::linspace(0.0, t_meas, r.n_time_points);
    const double dark = r.has_counter ? r.counter.dark_rate : 0.0;

    const std::vector<detail::SpectralLine> lines = detail::collect_lines(r, model);

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "field_mT,counts_raw,counts_spin\n";

    RunResult result;
    const int n_points = static_cast<int>(std::floor((r.b_stop - r.b_start) / r.b_step + 1e-9)) + 1;
    for (int p = 0; p < n_points; ++p) {
        const double b = r.b_start + p * r.b_step;
        try {
            FluorescenceCurve spin_curve;  // spin emission only, no dark floor
            spin_curve.time = times;
            spin_curve.rate.assign(times.size(), 0.0);
            for (const auto& line : lines) {
                SimulationConfig cfg = base;
                cfg.line.center = line.slope * (b - line.b_res);
                cfg.coupling = analytic_thin_wire_distribution(line.gbar_eff, model.g_min,
                                                               model.g_max, r.n_g_bins);
                detail::scale_distribution(cfg.coupling, line.spins);
                const FluorescenceCurve curve = simulate_curve(cfg, r.pulse, times);
                for (std::size_t k = 0; k < times.size(); ++k)
                    spin_curve.rate[k] += curve.rate[k];
            }
            FluorescenceCurve observed = spin_curve;
            for (double& rate : observed.rate) rate += dark;

            double raw = 0.0, spin = 0.0;
            if (r.sample_clicks) {
                // the counter adds its own dark rate when sampling
                const auto streams =
                    sample_clicks(spin_curve, r.counter, r.n_sequences,
                                  detail::sub_seed(*r.seed, static_cast<std::uint64_t>(p)));
                raw = count_statistics(streams, r.t_int).mean;
                if (r.background_subtract) {
                    spin = raw - (integrated_counts(observed, r.t_int) -
                                  background_subtract(observed, r.t_int));
                } else {
                    FluorescenceCurve zero;
                    zero.time = {times.front(), times.back()};
                    zero.rate = {0.0, 0.0};
                    const auto ref = sample_clicks(
                        zero, r.counter, r.n_sequences,
                        detail::sub_seed(*r.seed, static_cast<std::uint64_t>(p) + 0x80000000ull));
                    spin = raw - count_statistics(ref, r.t_int).mean;
                }
            } else {
                raw = integrated_counts(observed, r.t_int);
                spin = r.background_subtract ? background_subtract(observed, r.t_int)
                                             : raw - dark * r.t_int;
            }
            csv << detail::fmt_g(b * 1e3) << "," << detail::fmt_g(raw) << ","
                << detail::fmt_g(spin) << "\n";
            ++result.rows;
        } catch (...) {
            detail::rethrow_with_context("field point " + detail::fmt_g(b * 1e3) + " mT");
        }
    }

    result.outputs.push_back(r.output.csv);
    nlohmann::json lines_json = nlohmann::json::array();
    for (const auto& line : lines)
        lines_json.push_back({{"species", line.species_id},
                              {"b_res_mT", line.b_res * 1e3},
                              {"slope_rad_s_per_T", line.slope},
                              {"spins", line.spins}});
    result.summary = {{"transitions", lines_json}, {"field_points", result.rows}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Resonance fields versus field angle for every symmetry-related site.
inline RunResult run_rotation(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_resonator, r.config_path + ": missing [resonator] section");
    detail::require(!r.species.empty() && !r.species.front().id.empty(),
                    r.config_path + ": rotation needs a species id");
    detail::require(r.n_phi >= 2, r.config_path + ": n_phi must be >= 2");

    const double freq_hz = units::ordinary(r.resonator.omega0);
    const std::vector<double> phis = detail::linspace(r.phi_start, r.phi_stop, r.n_phi);
    const std::string& id = r.species.front().id;

    std::vector<RotationPoint> points;
    if (const AnisotropicDoublet* doublet = r.database.find_doublet(id)) {
        points = rotation_pattern(*doublet, freq_hz, phis, r.theta_c_deg);
    } else if (const SpinSpecies* sp = r.database.find(id)) {
        detail::require(r.b_min > 0.0 && r.b_max > r.b_min,
                        r.config_path + ": species rotation needs b_min/b_max search window");
        points = rotation_pattern(*sp, freq_hz, phis, r.theta_c_deg, r.b_min, r.b_max);
    } else {
        throw ConfigError(r.config_path + ": unknown species '" + id + "'");
    }

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "phi_deg,site_index,b_res_mT,matrix_element\n";
    for (const auto& pt : points) {
        csv << detail::fmt_g(pt.phi_deg) << "," << pt.site_index << ","
            << detail::fmt_g(pt.b_res * 1e3) << "," << detail::fmt_g(pt.matrix_element) << "\n";
    }

    RunResult result;
    result.rows = static_cast<int>(points.size());
    result.outputs.push_back(r.output.csv);
    result.summary = {{"species", id}, {"angles", r.n_phi}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Single ensemble fluorescence decay after one pulse, with optional click
/// sampling into the binary stream format.
inline RunResult run_fluorescence(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_pulse, r.config_path + ": missing [pulse] section");
    const detail::EnsembleModel model = detail::resolve_ensemble(r);
    SimulationConfig cfg = detail::base_simulation(r, model);
    cfg.line.center = r.line_center;
    if (!r.species.empty()) detail::scale_distribution(cfg.coupling, r.species.front().spins);

    detail::require(r.t_meas > 0.0, r.config_path + ": t_meas must be set (> 0)");
    const std::vector<double> times = detail::linspace(0.0, r.t_meas, r.n_time_points);
    const FluorescenceCurve curve = simulate_curve(cfg, r.pulse, times);

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "time_s,rate_per_s\n";
    for (std::size_t k = 0; k < curve.time.size(); ++k)
        csv << detail::fmt_g(curve.time[k]) << "," << detail::fmt_g(curve.rate[k]) << "\n";

    RunResult result;
    result.rows = static_cast<int>(curve.time.size());
    result.outputs.push_back(r.output.csv);
    result.summary = {{"window_mass", curve.window_mass},
                      {"coupling_mass", curve.coupling_mass},
                      {"integrated_counts", integrated_counts(curve, r.t_meas)}};

    if (!r.output.clicks.empty()) {
        detail::require(r.has_counter, r.config_path + ": click output needs [counter]");
        detail::require(r.seed.has_value(), r.config_path + ": click output needs a seed");
        const auto streams = sample_clicks(curve, r.counter, r.n_sequences, *r.seed);
        write_click_streams(r.output.clicks, streams, r.counter, *r.seed);
        result.outputs.push_back(r.output.clicks);
        result.summary["sequences"] = r.n_sequences;
    }
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

namespace detail {

inline std::vector<double> sweep_strengths(const ExperimentRecipe& r) {
    require(r.n_eps >= 3, r.config_path + ": n_eps must be >= 3");
    std::vector<double> eps;
    if (r.has_power) {
        require(r.has_attenuation, r.config_path + ": power sweep needs attenuation_db");
        require(r.has_pulse, r.config_path + ": power sweep needs [pulse]");
        const std::vector<double> dbm = linspace(r.power_start_dbm, r.power_stop_dbm, r.n_eps);
        for (const double p : dbm)
            eps.push_back(drive_amplitude_from_power(p, r.attenuation_db, r.resonator.omega0) *
                          r.pulse.duration);
    } else {
        require(r.eps_start > 0.0 && r.eps_stop > r.eps_start,
                r.config_path + ": sweep needs eps_start < eps_stop (> 0)");
        eps = geomspace(r.eps_start, r.eps_stop, r.n_eps);
    }
    require(eps.back() / eps.front() >= 100.0,
            r.config_path + ": sweep must span at least two decades of epsilon");
    return eps;
}

}  // namespace detail

/// Counts per shot versus pulse strength: bin-summed simulation (unbounded
/// counting window) next to the closed-form radiative and non-radiative
/// parts. Counts follow the thin-wire density normalization of the analytic
/// forms.
inline RunResult run_count_sweep(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_pulse, r.config_path + ": missing [pulse] section");
    const detail::EnsembleModel model = detail::resolve_ensemble(r);
    SimulationConfig cfg = detail::base_simulation(r, model);
    cfg.t_rep = 0.0;  // per-shot counts assume a fully reset ensemble

    const std::vector<double> eps = detail::sweep_strengths(r);

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "epsilon_ns,counts_sim,counts_r_analytic,counts_nr_analytic\n";

    RunResult result;
    for (const double e : eps) {
        try {
            Pulse pulse = r.pulse;
            pulse.beta = e / pulse.duration;
            const double sim = expected_total_counts(cfg, pulse);
            const auto [c_r, c_nr] = asymptotic_counts(e, cfg);
            csv << detail::fmt_g(units::eps_s_to_ns(e)) << "," << detail::fmt_g(sim) << ","
                << detail::fmt_g(c_r) << "," << detail::fmt_g(c_nr) << "\n";
            ++result.rows;
        } catch (...) {
            detail::rethrow_with_context("epsilon " + detail::fmt_g(units::eps_s_to_ns(e)) +
                                         " ns^1/2");
        }
    }

    result.outputs.push_back(r.output.csv);
    result.summary = {{"epsilon_points", result.rows},
                      {"g0_lim_rad_s", purcell_g0_limit(r.gamma_nr, r.resonator.kappa())}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Fluorescence- vs inductive-detection SNR across a pulse-strength sweep on
/// a single-coupling spin ensemble. One Monte Carlo click sample per strength
/// (common random numbers across the sweep) against the closed-form inductive
/// benchmark; optional per-point count histograms.
inline RunResult run_snr_compare(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_resonator, r.config_path + ": missing [resonator] section");
    detail::require(r.has_pulse, r.config_path + ": missing [pulse] section");
    detail::require(r.has_counter, r.config_path + ": missing [counter] section");
    detail::require(r.g0 > 0.0, r.config_path + ": g0 must be set (> 0)");
    detail::require(r.t_int > 0.0, r.config_path + ": t_int must be set (> 0)");
    detail::require(!r.species.empty(), r.config_path + ": needs a [species] block for spins");

    const double kappa = r.resonator.kappa();
    const double gamma_r = purcell_rate(r.g0, 0.0, kappa);
    const double gamma1 = gamma_r + r.gamma_nr;
    const double n_spins = r.species.front().spins;
    const std::vector<double> eps = detail::sweep_strengths(r);

    const double t_meas = r.t_meas > 0.0
                              ? r.t_meas
                              : (r.counter.t_rep > 0.0 ? r.counter.t_rep : r.t_int);
    detail::require(t_meas >= r.t_int, r.config_path + ": t_meas must cover t_int");
    const std::vector<double> times = detail::linspace(0.0, t_meas, r.n_time_points);

    // dark reference, one shared draw (the counter supplies the dark rate)
    FluorescenceCurve dark_curve;
    dark_curve.time = {0.0, t_meas};
    dark_curve.rate = {0.0, 0.0};
    const auto dark_streams =
        sample_clicks(dark_curve, r.counter, r.n_sequences, detail::sub_seed(*r.seed, 1));
    const double dark_mean = count_statistics(dark_streams, r.t_int).mean;

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "epsilon_ns,snr_fd_mc,snr_id_formula,fd_id_ratio\n";

    RunResult result;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        try {
            const double psi = rabi_angle(eps[i], r.g0, r.resonator.kappa_c, kappa);
            const double p_exc = std::pow(std::sin(psi), 2);
            const double n_exc = n_spins * p_exc;

            FluorescenceCurve curve;
            curve.time = times;
            curve.rate.resize(times.size());
            for (std::size_t k = 0; k < times.size(); ++k)
                curve.rate[k] = r.efficiency * n_exc * gamma_r * std::exp(-gamma1 * times[k]);

            // common random numbers: every strength reuses the same sub-seed
            const auto streams =
                sample_clicks(curve, r.counter, r.n_sequences, detail::sub_seed(*r.seed, 0));
            const CountHistogram hist = count_statistics(streams, r.t_int);
            const double snr_fd =
                hist.stddev > 0.0 ? (hist.mean - dark_mean) / hist.stddev : 0.0;
            const double snr_id = id_snr(n_exc, gamma_r, kappa, r.efficiency);
            const double ratio = snr_id > 0.0 ? snr_fd / snr_id : 0.0;

            csv << detail::fmt_g(units::eps_s_to_ns(eps[i])) << ","
                << detail::fmt_g(snr_fd) << "," << detail::fmt_g(snr_id) << ","
                << detail::fmt_g(ratio) << "\n";
            ++result.rows;

            if (!r.output.histogram_prefix.empty()) {
                const std::string path =
                    r.output.histogram_prefix + "_" + std::to_string(i) + ".csv";
                std::ofstream hist_out = detail::open_output(path);
                write_histogram_csv(hist_out, hist);
                result.outputs.push_back(path);
            }
        } catch (...) {
            detail::rethrow_with_context("epsilon " +
                                         detail::fmt_g(units::eps_s_to_ns(eps[i])) +
                                         " ns^1/2");
        }
    }

    result.outputs.insert(result.outputs.begin(), r.output.csv);
    result.summary = {{"gamma_r_per_s", gamma_r},
                      {"formula_ratio", snr_ratio(r.efficiency, kappa, r.counter.dark_rate)},
                      {"dark_reference_mean", dark_mean}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Ensemble-averaged Rabi trace of spins spread over the cavity linewidth,
/// followed by the two coupling estimates: the Rabi-frequency route and the
/// Purcell-decay route (their discrepancy diagnoses the detuning spread).
inline RunResult run_rabi(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_resonator, r.config_path + ": missing [resonator] section");
    detail::require(r.g0 > 0.0, r.config_path + ": g0 must be set (> 0)");
    detail::require(r.n_bar > 0.0, r.config_path + ": n_bar must be set (> 0)");
    detail::require(r.t_stop > 0.0, r.config_path + ": t_stop must be set (> 0)");

    const double kappa = r.resonator.kappa();
    const double omega = 2.0 * r.g0 * std::sqrt(r.n_bar);
    const DetuningGrid grid = purcell_detuning_grid(kappa, r.n_detunings);
    const std::vector<double> t = detail::linspace(0.0, r.t_stop, r.n_time_points);

    std::vector<double> p_up(t.size(), 0.0);
    for (std::size_t d = 0; d < grid.delta.size(); ++d) {
        const double g2 = omega * omega + grid.delta[d] * grid.delta[d];
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double sn = std::sin(0.5 * std::sqrt(g2) * t[k]);
            p_up[k] += grid.weight[d] * (omega * omega / g2) * sn * sn;
        }
    }

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "duration_s,p_up\n";
    for (std::size_t k = 0; k < t.size(); ++k)
        csv << detail::fmt_g(t[k]) << "," << detail::fmt_g(p_up[k]) << "\n";

    RunResult result;
    result.rows = static_cast<int>(t.size());
    result.outputs.push_back(r.output.csv);

    // route 1: fitted Rabi frequency
    const RabiModelParams rabi = fit_rabi(t, p_up, Weighting::uniform);
    const double g0_rabi = g0_from_rabi(rabi.omega_r, r.n_bar);

    // route 2: Purcell decay of the same detuning mixture
    const double gr0 = purcell_rate(r.g0, 0.0, kappa);
    const std::vector<double> td = detail::linspace(0.0, 3.0 / gr0, 600);
    std::vector<double> fl(td.size(), 0.0);
    for (std::size_t d = 0; d < grid.delta.size(); ++d) {
        const double gr = purcell_rate(r.g0, grid.delta[d], kappa);
        for (std::size_t k = 0; k < td.size(); ++k)
            fl[k] += grid.weight[d] * gr * std::exp(-gr * td[k]);
    }
    const FitResult decay = fit_exponential(td, fl);
    const double g0_purcell = g0_from_purcell(1.0 / decay.value("decay_time_s"), kappa);

    result.summary = {{"omega_rabi_rad_s", rabi.omega_r},
                      {"g0_rabi_hz", g0_rabi / constants::two_pi},
                      {"g0_purcell_hz", g0_purcell / constants::two_pi},
                      {"rabi_to_purcell_ratio", g0_rabi / g0_purcell},
                      {"g0_input_hz", r.g0 / constants::two_pi}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Rabi trace averaged over the nuclear-bath configurations and the
/// cavity-linewidth detuning spread of the measured spin subset.
inline RunResult run_bath_rabi(const ExperimentRecipe& r) {
    const detail::WallClock clock;
    detail::require(!r.output.csv.empty(), r.config_path + ": [output] csv path required");
    detail::require(r.has_resonator, r.config_path + ": missing [resonator] section");
    detail::require(!r.sites_path.empty(), r.config_path + ": needs sites = <table> in [species]");
    detail::require(!r.species.empty() && !r.species.front().id.empty(),
                    r.config_path + ": needs a species id for the electron gamma");
    detail::require(r.omega_drive > 0.0, r.config_path + ": omega_drive must be set (> 0)");
    detail::require(r.t_stop > 0.0, r.config_path + ": t_stop must be set (> 0)");

    const SpinSpecies* sp = r.database.find(r.species.front().id);
    detail::require(sp != nullptr,
                    r.config_path + ": unknown species '" + r.species.front().id + "'");

    const auto table = load_lattice_sites(r.sites_path);
    const Eigen::Vector3d b0_dir = field_direction(r.phi_deg, r.theta_c_deg);
    const auto sites = make_bath_sites(table, sp->gyro.gamma_perp, r.gamma_w, b0_dir);

    BathConfig bath;
    bath.n_sites = static_cast<int>(sites.size());
    bath.abundance = r.bath_abundance;
    bath.max_occupied = r.bath_max_occupied;
    bath.gamma_w = r.gamma_w;

    const std::vector<double> t = detail::linspace(0.0, r.t_stop, r.n_time_points);
    const auto avg =
        bath_averaged_rabi(bath, sites, r.omega_drive, r.resonator.kappa(), t, r.n_detunings);

    std::ofstream csv = detail::open_output(r.output.csv);
    csv << "duration_s,p_up_avg\n";
    for (std::size_t k = 0; k < t.size(); ++k)
        csv << detail::fmt_g(t[k]) << "," << detail::fmt_g(avg[k]) << "\n";

    const ConfigurationSet configs = enumerate_configs(bath);
    RunResult result;
    result.rows = static_cast<int>(t.size());
    result.outputs.push_back(r.output.csv);
    result.summary = {{"configurations", configs.configs.size()},
                      {"retained_mass", configs.retained_mass},
                      {"n_sites", bath.n_sites},
                      {"abundance", bath.abundance}};
    result.wall_seconds = clock.seconds();
    detail::write_manifest(r, result);
    if (!r.output.manifest.empty()) result.outputs.push_back(r.output.manifest);
    return result;
}

/// Dispatch by recipe kind.
inline RunResult run_recipe(const ExperimentRecipe& r) {
    switch (r.kind) {
        case RecipeKind::spectrum: return run_spectrum(r);
        case RecipeKind::rotation_pattern: return run_rotation(r);
        case RecipeKind::fluorescence: return run_fluorescence(r);
        case RecipeKind::count_sweep: return run_count_sweep(r);
        case RecipeKind::snr_compare: return run_snr_compare(r);
        case RecipeKind::rabi: return run_rabi(r);
        case RecipeKind::bath_rabi: return run_bath_rabi(r);
    }
    throw ConfigError("unknown recipe kind");
}

/// Process exit code for an escaped exception: configuration problems map
/// to 2, numeric failures to 3.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ComputeError*>(&e)) return 3;
    return 2;
}

}  // namespace fdepr
