#pragma once

// Cavity-filtered pulse response and per-packet Bloch evolution.
//
// The intra-resonator field alpha(t) follows the one-pole response to a
// rectangular drive pulse; each spin packet (one (g0, delta) bin) sees an
// instantaneous Rabi rate 2 g0 |alpha(t)| and relaxes longitudinally at
// Gamma_1 = Gamma_R + Gamma_NR toward Sz = -1/2 (with the accompanying
// Gamma_1/2 transverse decay that keeps the Bloch vector inside the ball;
// pure dephasing is an optional hook, default off).
//
// Rabi angle convention: psi = 2 g0 eps sqrt(kappa_c) / kappa is HALF the
// Bloch rotation angle; the excitation probability of a resonant packet is
// sin^2(psi). A spin-flip ("pi pulse") therefore corresponds to psi = pi/2.

#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "resonator.hpp"
#include "units.hpp"

namespace fdepr {

struct Pulse {
    double beta = 0.0;              // drive amplitude, s^(-1/2)
    double duration = 0.0;          // s
    double carrier_detuning = 0.0;  // rad/s offset of the drive from omega0

    double strength() const { return beta * duration; }  // epsilon, s^(1/2)

    void validate() const {
        if (beta < 0.0) throw std::invalid_argument("Pulse: beta must be >= 0");
        if (!(duration > 0.0)) throw std::invalid_argument("Pulse: duration must be > 0");
    }
};

struct CavityField {
    std::vector<double> time;                 // uniform grid from 0
    std::vector<std::complex<double>> alpha;  // photon-number-root
    double carrier_detuning = 0.0;            // rad/s, copied from the pulse

    std::size_t size() const { return time.size(); }
    double dt() const { return time.size() > 1 ? time[1] - time[0] : 0.0; }
};

/// Closed-form solution of alpha' = -(kappa/2 + i delta_c) alpha + sqrt(kappa_c) beta(t)
/// for a rectangular pulse, sampled on a uniform grid. Defaults: grid step
/// min(0.05/kappa, Dt/1000), extent Dt + 10/kappa (covers the ring-down whose
/// rotation cancels the ring-up deficit).
inline CavityField cavity_response(const Pulse& pulse, const ResonatorParams& p,
                                   double t_end = 0.0, double dt = 0.0) {
    pulse.validate();
    p.validate();
    const double kappa = p.kappa();
    if (t_end <= 0.0) t_end = pulse.duration + 10.0 / kappa;
    if (dt <= 0.0) dt = std::min(0.05 / kappa, pulse.duration / 1000.0);
    if (dt > 0.1 / kappa)
        throw std::invalid_argument("cavity_response: time step exceeds 0.1/kappa");
    if (t_end < pulse.duration + 10.0 / kappa - 1e-9 / kappa)
        throw std::invalid_argument("cavity_response: grid must cover Dt + 10/kappa");

    const std::complex<double> pole(0.5 * kappa, pulse.carrier_detuning);
    const std::complex<double> a_ss = std::sqrt(p.kappa_c) * pulse.beta / pole;

    CavityField field;
    field.carrier_detuning = pulse.carrier_detuning;
    const auto n = static_cast<std::size_t>(std::ceil(t_end / dt)) + 1;
    field.time.resize(n);
    field.alpha.resize(n);
    const std::complex<double> a_end = a_ss * (1.0 - std::exp(-pole * pulse.duration));
    for (std::size_t k = 0; k < n; ++k) {
        const double t = k * dt;
        field.time[k] = t;
        field.alpha[k] = (t <= pulse.duration) ? a_ss * (1.0 - std::exp(-pole * t))
                                               : a_end * std::exp(-pole * (t - pulse.duration));
    }
    return field;
}

/// psi = 2 g0 epsilon sqrt(kappa_c) / kappa; epsilon in s^(1/2), g0 in rad/s.
inline double rabi_angle(double epsilon, double g0, double kappa_c, double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("rabi_angle: kappa must be > 0");
    if (kappa_c < 0.0) throw std::invalid_argument("rabi_angle: kappa_c must be >= 0");
    return 2.0 * g0 * epsilon * std::sqrt(kappa_c) / kappa;
}

/// Same angle accumulated through an actual field: half the Bloch rotation
/// g0 * integral |alpha| dt. Approaches rabi_angle() for Dt >> 1/kappa.
inline double rabi_angle_from_field(double g0, const CavityField& field) {
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < field.size(); ++k)
        integral += 0.5 * (std::abs(field.alpha[k]) + std::abs(field.alpha[k + 1])) *
                    (field.time[k + 1] - field.time[k]);
    return g0 * integral;
}

/// Sz before the excitation pulse, assuming the previous sequence left the
/// transition saturated: Sz = -1/2 + (1/2) exp(-Gamma_1 T_rep).
inline double steady_state_init(double gamma1, double t_rep) {
    if (t_rep < 0.0) throw std::invalid_argument("steady_state_init: T_rep must be >= 0");
    if (gamma1 < 0.0) throw std::invalid_argument("steady_state_init: Gamma_1 must be >= 0");
    return -0.5 + 0.5 * std::exp(-gamma1 * t_rep);
}

// ---------------------------------------------------------------------------
// Packet evolution

/// One (g0, delta) bin of the spin ensemble. Bloch components use the
/// spin-1/2 convention |S| <= 1/2; weight carries the number of spins the
/// packet represents.
struct SpinPacket {
    double g0 = 0.0;     // rad/s
    double delta = 0.0;  // rad/s, spin-resonator detuning
    double sx = 0.0;
    double sy = 0.0;
    double sz = -0.5;
    double gamma_r = 0.0;   // Purcell rate, 1/s
    double gamma_nr = 0.0;  // non-radiative rate, 1/s
    double weight = 1.0;    // spins represented

    double gamma1() const { return gamma_r + gamma_nr; }
};

struct EvolveOptions {
    double gamma_phi = 0.0;  // optional pure dephasing, 1/s
};

/// Excitation probability of a packet starting in |down>, driven at constant
/// Rabi rate for `duration` at detuning `delta` (relaxation ignored).
inline double generalized_rabi_excitation(double omega_rabi, double delta, double duration) {
    const double w2 = omega_rabi * omega_rabi + delta * delta;
    if (w2 == 0.0) return 0.0;
    const double s = std::sin(0.5 * std::sqrt(w2) * duration);
    return (omega_rabi * omega_rabi / w2) * s * s;
}

/// Closed-form precession about the tilted drive axis (Omega, 0, delta) for a
/// constant drive; norm-preserving, relaxation ignored (valid when
/// gamma1 * duration << 1).
inline SpinPacket evolve_constant_drive(const SpinPacket& packet, double omega_rabi,
                                        double duration) {
    const double wx = omega_rabi, wz = packet.delta;
    const double w = std::hypot(wx, wz);
    SpinPacket out = packet;
    if (w == 0.0 || duration == 0.0) return out;
    const double nx = wx / w, nz = wz / w;
    const double th = w * duration, c = std::cos(th), s = std::sin(th);
    const double dot = nx * packet.sx + nz * packet.sz;
    // Rodrigues rotation about n = (nx, 0, nz)
    out.sx = packet.sx * c + (-nz * packet.sy) * s + nx * dot * (1.0 - c);
    out.sy = packet.sy * c + (nz * packet.sx - nx * packet.sz) * s;
    out.sz = packet.sz * c + (nx * packet.sy) * s + nz * dot * (1.0 - c);
    return out;
}

/// Fixed-step RK4 integration of the Bloch equations through the sampled
/// cavity field (drive quadratures 2 g0 Re/Im alpha, detuning
/// delta + carrier_detuning, longitudinal relaxation Gamma_1 toward -1/2).
inline SpinPacket evolve_packet(const SpinPacket& packet, const CavityField& field,
                                const EvolveOptions& opt = {}) {
    const double g1 = packet.gamma1();
    const double gt = 0.5 * g1 + opt.gamma_phi;
    const double det = packet.delta + field.carrier_detuning;
    const double two_g0 = 2.0 * packet.g0;

    double s[3] = {packet.sx, packet.sy, packet.sz};
    auto deriv = [&](const double v[3], const std::complex<double>& a, double out[3]) {
        const double ox = two_g0 * a.real();
        const double oy = two_g0 * a.imag();
        out[0] = -det * v[1] + oy * v[2] - gt * v[0];
        out[1] = det * v[0] - ox * v[2] - gt * v[1];
        out[2] = ox * v[1] - oy * v[0] - g1 * (v[2] + 0.5);
    };

    for (std::size_t k = 0; k + 1 < field.size(); ++k) {
        const double h = field.time[k + 1] - field.time[k];
        const std::complex<double> a0 = field.alpha[k];
        const std::complex<double> a1 = field.alpha[k + 1];
        const std::complex<double> am = 0.5 * (a0 + a1);

        double k1[3], k2[3], k3[3], k4[3], tmp[3];
        deriv(s, a0, k1);
        for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * h * k1[i];
        deriv(tmp, am, k2);
        for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * h * k2[i];
        deriv(tmp, am, k3);
        for (int i = 0; i < 3; ++i) tmp[i] = s[i] + h * k3[i];
        deriv(tmp, a1, k4);
        for (int i = 0; i < 3; ++i) s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    SpinPacket out = packet;
    out.sx = s[0];
    out.sy = s[1];
    out.sz = s[2];
    const double norm = std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
    if (!std::isfinite(norm) || norm > 0.5 + 1e-9) {
        std::ostringstream os;
        os << "evolve_packet: integration failed for packet (g0 = " << packet.g0
           << " rad/s, delta = " << packet.delta << " rad/s): |S| = " << norm;
        throw ComputeError(os.str());
    }
    return out;
}

}  // namespace fdepr
