#pragma once

// Ensemble fluorescence: discretize the coupling and detuning distributions,
// evolve one spin packet per (g0, delta) bin through the pulse, and sum the
// incoherent emission eta * Gamma_R * p_excited * exp(-Gamma_1 t) weighted by
// the bin masses. The detuning axis spans +-3 kappa by default: packets
// further out couple negligibly through the Purcell filter.
//
// eta is the overall spin-photon-to-click efficiency (cavity exit fraction,
// transmission, detector) and multiplies the curve exactly once.

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <utility>
#include <vector>

#include "bloch.hpp"
#include "detail/special.hpp"
#include "errors.hpp"
#include "resonator.hpp"

namespace fdepr {

struct LineShape {
    enum class Kind { lorentzian, gaussian, tabulated };

    Kind kind = Kind::lorentzian;
    double center = 0.0;  // rad/s, offset of the spin line from the resonator
    double width = 0.0;   // rad/s scale: gaussian sigma / lorentzian half-width
    std::vector<double> delta;    // tabulated support, ascending (rad/s)
    std::vector<double> density;  // tabulated values >= 0; normalized on use

    void validate() const {
        if (kind == Kind::tabulated) {
            if (delta.size() < 2 || delta.size() != density.size())
                throw std::invalid_argument("LineShape: tabulated form needs matched arrays");
            double mass = 0.0;
            for (std::size_t k = 0; k + 1 < delta.size(); ++k) {
                if (delta[k + 1] <= delta[k])
                    throw std::invalid_argument("LineShape: tabulated support must ascend");
                if (density[k] < 0.0 || density[k + 1] < 0.0)
                    throw std::invalid_argument("LineShape: tabulated density must be >= 0");
                mass += 0.5 * (density[k] + density[k + 1]) * (delta[k + 1] - delta[k]);
            }
            if (!(mass > 0.0)) throw std::invalid_argument("LineShape: tabulated mass is zero");
        } else if (!(width > 0.0)) {
            throw std::invalid_argument("LineShape: width must be > 0");
        }
    }

    /// rho(d), normalized so the full line integrates to one.
    double density_at(double d) const {
        const double x = d - center;
        switch (kind) {
            case Kind::lorentzian:
                return (width / constants::pi) / (x * x + width * width);
            case Kind::gaussian:
                return std::exp(-0.5 * x * x / (width * width)) /
                       (width * std::sqrt(2.0 * constants::pi));
            case Kind::tabulated: {
                if (x <= delta.front() || x >= delta.back()) return 0.0;
                double mass = 0.0;
                for (std::size_t k = 0; k + 1 < delta.size(); ++k)
                    mass += 0.5 * (density[k] + density[k + 1]) * (delta[k + 1] - delta[k]);
                const auto it = std::upper_bound(delta.begin(), delta.end(), x);
                const auto k = static_cast<std::size_t>(it - delta.begin()) - 1;
                const double f = (x - delta[k]) / (delta[k + 1] - delta[k]);
                return (density[k] + f * (density[k + 1] - density[k])) / mass;
            }
        }
        return 0.0;
    }
};

struct SimulationConfig {
    CouplingDistribution coupling;
    LineShape line;
    ResonatorParams resonator;
    double gamma_nr = 0.0;    // 1/s
    double t_rep = 0.0;       // s; 0 means fully reset (infinite wait)
    double efficiency = 1.0;  // eta
    int n_delta_bins = 41;
    double delta_halfwidth = 0.0;      // rad/s; 0 selects 3*kappa
    double coverage_tolerance = 1e-3;  // max fraction of spins outside the bins
    bool quasi_static = false;         // closed-form rotation instead of RK4
    EvolveOptions evolve;

    void validate() const {
        resonator.validate();
        line.validate();
        if (coupling.bins() < 1) throw std::invalid_argument("SimulationConfig: empty coupling");
        if (gamma_nr < 0.0) throw std::invalid_argument("SimulationConfig: gamma_nr must be >= 0");
        if (t_rep < 0.0) throw std::invalid_argument("SimulationConfig: t_rep must be >= 0");
        if (efficiency < 0.0 || efficiency > 1.0)
            throw std::invalid_argument("SimulationConfig: efficiency must lie in [0,1]");
        if (n_delta_bins < 1) throw std::invalid_argument("SimulationConfig: n_delta_bins < 1");
        if (delta_halfwidth < 0.0)
            throw std::invalid_argument("SimulationConfig: delta_halfwidth must be >= 0");
    }
};

struct FluorescenceCurve {
    std::vector<double> time;  // s, measured from the end of the pulse
    std::vector<double> rate;  // expected detector-side counts per second
    Pulse pulse;
    double window_mass = 1.0;    // lineshape mass inside the detuning window
    double coupling_mass = 0.0;  // spins represented by the coupling bins
};

namespace detail {

/// Per-packet emission amplitudes (eta * Gamma_R * p_excited * weight) and
/// decay rates (Gamma_1) after one pulse, shared by the curve synthesis and
/// the unbounded-window count integral.
struct EmissionTerms {
    std::vector<double> amp;   // counts/s at t = 0 per packet
    std::vector<double> rate;  // 1/s per packet
    double window_mass = 1.0;
    double coupling_mass = 0.0;
};

inline EmissionTerms emission_terms(const SimulationConfig& config, const Pulse& pulse) {
    config.validate();
    pulse.validate();

    const auto& dist = config.coupling;
    const double represented = dist.total();
    if (dist.uncovered_mass > config.coverage_tolerance * (represented + dist.uncovered_mass)) {
        std::ostringstream os;
        os << "emission_terms: coupling bins miss " << dist.uncovered_mass << " of "
           << represented + dist.uncovered_mass << " spins";
        throw ComputeError(os.str());
    }

    const double kappa = config.resonator.kappa();
    const double half = config.delta_halfwidth > 0.0 ? config.delta_halfwidth : 3.0 * kappa;

    // detuning nodes and lineshape weights; a single bin means the whole line
    // sits at its center (resonant-slab mode)
    std::vector<double> delta_nodes, delta_weights;
    if (config.n_delta_bins == 1) {
        delta_nodes.push_back(config.line.center);
        delta_weights.push_back(1.0);
    } else {
        const double dd = 2.0 * half / config.n_delta_bins;
        for (int j = 0; j < config.n_delta_bins; ++j) {
            const double d = -half + (j + 0.5) * dd;
            delta_nodes.push_back(d);
            delta_weights.push_back(config.line.density_at(d) * dd);
        }
    }

    EmissionTerms terms;
    terms.coupling_mass = represented;
    terms.window_mass = 0.0;
    for (const double w : delta_weights) terms.window_mass += w;

    CavityField field;
    double alpha_ss = 0.0;
    if (config.quasi_static) {
        const std::complex<double> pole(0.5 * kappa, pulse.carrier_detuning);
        alpha_ss = std::abs(std::sqrt(config.resonator.kappa_c) * pulse.beta / pole);
    } else {
        field = cavity_response(pulse, config.resonator);
    }

    // per-packet decay amplitude and rate, one pass over the grid
    for (int i = 0; i < dist.bins(); ++i) {
        const double lo = dist.edges[i], hi = dist.edges[i + 1];
        const double mass_i = dist.mass(i);
        if (!(mass_i > 0.0)) continue;
        const double g0 = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        for (std::size_t j = 0; j < delta_nodes.size(); ++j) {
            if (!(delta_weights[j] > 0.0)) continue;
            SpinPacket packet;
            packet.g0 = g0;
            packet.delta = delta_nodes[j];
            packet.gamma_r = purcell_rate(g0, packet.delta, kappa);
            packet.gamma_nr = config.gamma_nr;
            packet.weight = mass_i * delta_weights[j];
            packet.sz = config.t_rep > 0.0 ? steady_state_init(packet.gamma1(), config.t_rep)
                                           : -0.5;
            SpinPacket out;
            if (config.quasi_static) {
                SpinPacket frame = packet;  // rotation happens in the carrier frame
                frame.delta += pulse.carrier_detuning;
                out = evolve_constant_drive(frame, 2.0 * g0 * alpha_ss, pulse.duration);
                out.delta = packet.delta;
            } else {
                out = evolve_packet(packet, field, config.evolve);
            }
            const double excited = std::max(out.sz + 0.5, 0.0);
            const double amp = config.efficiency * out.gamma_r * excited * packet.weight;
            if (amp > 0.0) {
                terms.amp.push_back(amp);
                terms.rate.push_back(out.gamma1());
            }
        }
    }
    return terms;
}

}  // namespace detail

inline FluorescenceCurve simulate_curve(const SimulationConfig& config, const Pulse& pulse,
                                        const std::vector<double>& times) {
    if (times.size() < 2 || times.front() < 0.0)
        throw std::invalid_argument("simulate_curve: need an ascending time grid from >= 0");
    for (std::size_t k = 0; k + 1 < times.size(); ++k)
        if (times[k + 1] <= times[k])
            throw std::invalid_argument("simulate_curve: need an ascending time grid from >= 0");

    const detail::EmissionTerms terms = detail::emission_terms(config, pulse);
    FluorescenceCurve curve;
    curve.pulse = pulse;
    curve.window_mass = terms.window_mass;
    curve.coupling_mass = terms.coupling_mass;
    curve.time = times;
    curve.rate.assign(times.size(), 0.0);
    for (std::size_t p = 0; p < terms.amp.size(); ++p)
        for (std::size_t k = 0; k < times.size(); ++k)
            curve.rate[k] += terms.amp[p] * std::exp(-terms.rate[p] * times[k]);
    return curve;
}

/// Expected photons per shot over an unbounded counting window: the exact
/// t -> infinity integral of the emission curve, free of any time-grid
/// truncation or quadrature error.
inline double expected_total_counts(const SimulationConfig& config, const Pulse& pulse) {
    const detail::EmissionTerms terms = detail::emission_terms(config, pulse);
    double sum = 0.0;
    for (std::size_t p = 0; p < terms.amp.size(); ++p) {
        if (!(terms.rate[p] > 0.0))
            throw ComputeError("expected_total_counts: a packet does not decay");
        sum += terms.amp[p] / terms.rate[p];
    }
    return sum;
}

/// Trapezoidal integral of the rate over [t0, t0 + t_int] where t0 is the
/// first grid point; the final partial interval is interpolated linearly.
inline double integrated_counts(const FluorescenceCurve& curve, double t_int) {
    if (curve.time.size() < 2 || curve.time.size() != curve.rate.size())
        throw std::invalid_argument("integrated_counts: malformed curve");
    const double t_stop = curve.time.front() + t_int;
    if (t_int < 0.0 || t_stop > curve.time.back() * (1.0 + 1e-12))
        throw std::invalid_argument("integrated_counts: t_int exceeds the curve extent");
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < curve.time.size(); ++k) {
        const double a = curve.time[k], b = curve.time[k + 1];
        if (a >= t_stop) break;
        if (b <= t_stop) {
            sum += 0.5 * (curve.rate[k] + curve.rate[k + 1]) * (b - a);
        } else {
            const double f = (t_stop - a) / (b - a);
            const double r_stop = curve.rate[k] + f * (curve.rate[k + 1] - curve.rate[k]);
            sum += 0.5 * (curve.rate[k] + r_stop) * (t_stop - a);
        }
    }
    return sum;
}

/// Counts minus the residual-rate background t_int * <rate>, with the rate
/// averaged over the final sixth of the curve (the tail of the repetition
/// window, where the spin transient has ideally died out).
inline double background_subtract(const FluorescenceCurve& curve, double t_int) {
    const double counts = integrated_counts(curve, t_int);
    const double span = curve.time.back() - curve.time.front();
    const double t0 = curve.time.back() - span / 6.0;
    double mass = 0.0, length = 0.0;
    for (std::size_t k = 0; k + 1 < curve.time.size(); ++k) {
        const double a = curve.time[k], b = curve.time[k + 1];
        if (b <= t0) continue;
        const double lo = std::max(a, t0);
        const double f_lo = (lo - a) / (b - a);
        const double r_lo = curve.rate[k] + f_lo * (curve.rate[k + 1] - curve.rate[k]);
        mass += 0.5 * (r_lo + curve.rate[k + 1]) * (b - lo);
        length += b - lo;
    }
    return counts - t_int * (mass / length);
}

namespace detail {

// antiderivatives of sin^2(x)/x^3 and sin^2(x)/x
inline double emission_kernel_strong(double x) {
    const double s = std::sin(x);
    return -s * s / (2.0 * x * x) - std::sin(2.0 * x) / (2.0 * x) + cosine_integral(2.0 * x);
}

inline double emission_kernel_weak(double x) {
    if (x < 0.25) {
        // the direct form ln(x) - Ci(2x) cancels badly here; use its series
        constexpr double euler_gamma = 0.57721566490153286061;
        const double z2 = 4.0 * x * x;
        double sum = 0.0, term = 1.0;
        for (int k = 1; k <= 30; ++k) {
            term *= -z2 / ((2.0 * k) * (2.0 * k - 1.0));
            const double add = term / (2.0 * k);
            sum += add;
            if (std::abs(add) < 1e-18 * (std::abs(sum) + 1e-30)) break;
        }
        return -0.5 * (euler_gamma + std::log(2.0)) - 0.5 * sum;
    }
    return 0.5 * (std::log(x) - cosine_integral(2.0 * x));
}

}  // namespace detail

/// Closed-form expected counts per shot for the analytic thin-wire ensemble,
/// split into the strongly coupled part (Gamma_R > Gamma_NR, saturates with
/// drive) and the weakly coupled part (grows logarithmically). Requires a
/// clean separation g0_min << g0_lim << g0_max.
inline std::pair<double, double> asymptotic_counts(double epsilon, const SimulationConfig& config) {
    config.validate();
    if (config.coupling.provenance != DistributionProvenance::analytic_thin_wire)
        throw std::invalid_argument("asymptotic_counts: requires the analytic thin-wire form");
    if (!(config.gamma_nr > 0.0))
        throw std::invalid_argument("asymptotic_counts: requires gamma_nr > 0");
    if (epsilon < 0.0) throw std::invalid_argument("asymptotic_counts: epsilon must be >= 0");

    const double kappa = config.resonator.kappa();
    const double g_min = config.coupling.edges.front();
    const double g_max = config.coupling.edges.back();
    const double g_lim = purcell_g0_limit(config.gamma_nr, kappa);
    if (g_lim < 10.0 * g_min || g_max < 10.0 * g_lim) {
        std::ostringstream os;
        os << "asymptotic_counts: needs g0_min << g0_lim << g0_max, got " << g_min << " / "
           << g_lim << " / " << g_max << " rad/s";
        throw ComputeError(os.str());
    }
    if (epsilon == 0.0) return {0.0, 0.0};

    const double gbar = config.coupling.gbar;
    const double c = 2.0 * epsilon * std::sqrt(config.resonator.kappa_c) / kappa;
    const double c_r = config.efficiency * gbar * gbar * c * c *
                       (detail::emission_kernel_strong(c * g_max) -
                        detail::emission_kernel_strong(c * g_lim));
    const double c_nr = 4.0 * config.efficiency * gbar * gbar / (kappa * config.gamma_nr) *
                        (detail::emission_kernel_weak(c * g_lim) -
                         detail::emission_kernel_weak(c * g_min));
    return {c_r, c_nr};
}

/// Small-rotation limits of asymptotic_counts: both parts grow as epsilon^2,
/// with an epsilon-independent ratio 2 ln(g0_max / g0_lim).
inline std::pair<double, double> low_drive_counts(double epsilon, const SimulationConfig& config) {
    if (config.coupling.provenance != DistributionProvenance::analytic_thin_wire)
        throw std::invalid_argument("low_drive_counts: requires the analytic thin-wire form");
    const double kappa = config.resonator.kappa();
    const double g_lim = purcell_g0_limit(config.gamma_nr, kappa);
    const double gbar = config.coupling.gbar;
    const double base = config.efficiency * gbar * gbar * config.resonator.kappa_c * epsilon *
                        epsilon / (kappa * kappa);
    return {4.0 * base * std::log(config.coupling.edges.back() / g_lim), 2.0 * base};
}

}  // namespace fdepr
