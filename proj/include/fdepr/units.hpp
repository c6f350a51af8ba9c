#pragma once

// Physical constants and unit helpers.
//
// Internal unit conventions used throughout the library:
//   frequencies        Hz        (ordinary frequency; angular quantities are
//                                 marked rad/s and always carry "omega"/"g0"
//                                 style names)
//   magnetic fields    tesla
//   energies           h * Hz    (Hamiltonians are stored in Hz)
//   times              seconds
//   rates              1/s
//   gyromagnetic       Hz/T
//   pulse amplitude    s^(-1/2)  (square root of photon flux)
//   pulse strength     s^(1/2)

#include <cmath>

namespace fdepr {

namespace constants {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double h_planck = 6.62607015e-34;        // J s (exact)
inline constexpr double hbar = h_planck / two_pi;         // J s
inline constexpr double mu_bohr = 9.2740100783e-24;       // J/T
inline constexpr double mu0_over_4pi = 1.0e-7;            // T m / A
}  // namespace constants

namespace units {

inline constexpr double ghz = 1.0e9;
inline constexpr double mhz = 1.0e6;
inline constexpr double khz = 1.0e3;

inline constexpr double mtesla = 1.0e-3;
inline constexpr double utesla = 1.0e-6;

inline constexpr double ms = 1.0e-3;
inline constexpr double us = 1.0e-6;
inline constexpr double ns = 1.0e-9;

/// rad/s from ordinary frequency in Hz.
inline constexpr double angular(double f_hz) { return constants::two_pi * f_hz; }

/// ordinary frequency in Hz from rad/s.
inline constexpr double ordinary(double omega) { return omega / constants::two_pi; }

/// Pulse strength conversion: the experimental convention quotes epsilon in
/// ns^(1/2); internally everything runs in s^(1/2).
inline double eps_ns_to_s(double eps_ns) { return eps_ns * std::sqrt(1.0e-9); }
inline double eps_s_to_ns(double eps_s) { return eps_s / std::sqrt(1.0e-9); }

/// Drive amplitude conversion, ns^(-1/2) <-> s^(-1/2).
inline double beta_ns_to_s(double beta_ns) { return beta_ns / std::sqrt(1.0e-9); }

/// Attenuation in dB to a linear power factor.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace units
}  // namespace fdepr
