#pragma once

// Driven Rabi dynamics of an electron spin coupled secularly to a sparse
// spin-1/2 nuclear bath (lattice sites occupied at natural abundance).
//
// The coupling S_z (A I_z + B I_x) of each occupied site commutes with the
// projectors onto that site's nuclear eigenbasis, so a configuration of k
// nuclei splits exactly into 2^k two-level blocks whose drive detuning is
// shifted by sum(+-hypot(A,B)/2). simulate_driven_spin propagates the full
// (2 * 2^k)-dimensional unitary; branch_rabi_curve evaluates the equivalent
// block decomposition, which the ensemble average uses for speed.
//
// Couplings A, B and drive/detuning are angular (rad/s); gyromagnetic
// ratios are Hz/T; positions are meters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "units.hpp"

namespace fdepr {

struct NuclearSite {
    Eigen::Vector3d position{0.0, 0.0, 0.0};  // m, relative to the electron
    double a = 0.0;                           // rad/s, along the quantization axis
    double b = 0.0;                           // rad/s, transverse

    // Detuning shift between the two nuclear branches is 2 * half_splitting().
    double half_splitting() const { return 0.5 * std::hypot(a, b); }
};

struct BathConfig {
    int n_sites = 15;
    double abundance = 0.14;
    int max_occupied = 3;
    double gamma_w = 1.8e6;  // Hz/T

    void validate() const {
        if (n_sites < 0) throw std::invalid_argument("BathConfig: n_sites must be >= 0");
        if (max_occupied < 0 || max_occupied > n_sites)
            throw std::invalid_argument("BathConfig: max_occupied outside [0, n_sites]");
        if (!(abundance >= 0.0 && abundance <= 1.0))
            throw std::invalid_argument("BathConfig: abundance outside [0, 1]");
        if (!(gamma_w > 0.0)) throw std::invalid_argument("BathConfig: gamma_w must be positive");
    }
};

/// Secular point-dipole constants (A, B) in rad/s for a nuclear site at
/// `position` seen by an electron of effective gyromagnetic ratio `gamma_e`
/// (Hz/T), with the quantization axis along `b0_dir`.
inline std::pair<double, double> dipolar_constants(const Eigen::Vector3d& position,
                                                   double gamma_e, double gamma_w,
                                                   const Eigen::Vector3d& b0_dir) {
    const double r = position.norm();
    if (!(r > 0.0)) throw std::invalid_argument("dipolar_constants: site at zero distance");
    const double axis = b0_dir.norm();
    if (!(axis > 0.0)) throw std::invalid_argument("dipolar_constants: zero quantization axis");
    const double c = position.dot(b0_dir) / (r * axis);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double b_hz =
        constants::mu0_over_4pi * constants::h_planck * gamma_e * gamma_w / (r * r * r);
    return {constants::two_pi * b_hz * (1.0 - 3.0 * c * c),
            constants::two_pi * (-3.0 * b_hz * s * c)};
}

struct LatticeSite {
    Eigen::Vector3d position{0.0, 0.0, 0.0};  // m
    double distance = 0.0;                    // m
    int shell = 0;
};

/// Reads the shipped nuclear-site table (CSV columns: index, x_angstrom,
/// y_angstrom, z_angstrom, distance_angstrom, shell; '#' lines ignored).
inline std::vector<LatticeSite> load_lattice_sites(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open site table: " + path);
    std::vector<LatticeSite> out;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        try {
            while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw ConfigError("site table: unparsable row '" + line + "' in " + path);
        }
        if (vals.size() != 6)
            throw ConfigError("site table: row needs 6 columns in " + path);
        LatticeSite site;
        site.position = Eigen::Vector3d(vals[1], vals[2], vals[3]) * 1e-10;
        site.distance = vals[4] * 1e-10;
        site.shell = static_cast<int>(vals[5]);
        out.push_back(site);
    }
    if (out.empty()) throw ConfigError("site table has no data rows: " + path);
    return out;
}

/// Evaluates dipolar constants for every lattice site and returns the bath
/// site list ranked by hyperfine magnitude hypot(A, B), largest first.
inline std::vector<NuclearSite> make_bath_sites(const std::vector<LatticeSite>& table,
                                                double gamma_e, double gamma_w,
                                                const Eigen::Vector3d& b0_dir) {
    std::vector<NuclearSite> sites;
    sites.reserve(table.size());
    for (const auto& ls : table) {
        const auto [a, b] = dipolar_constants(ls.position, gamma_e, gamma_w, b0_dir);
        sites.push_back({ls.position, a, b});
    }
    std::stable_sort(sites.begin(), sites.end(), [](const NuclearSite& x, const NuclearSite& y) {
        return std::hypot(x.a, x.b) > std::hypot(y.a, y.b);
    });
    return sites;
}

struct BathConfiguration {
    std::vector<int> sites;  // indices into the site list, strictly increasing
    double weight = 0.0;     // renormalized occupation probability
};

struct ConfigurationSet {
    std::vector<BathConfiguration> configs;
    double retained_mass = 0.0;  // binomial mass of the kept subsets before renormalization
};

/// All subsets of the n_sites lattice sites with at most max_occupied
/// members, weighted by binomial occupation at the given abundance and
/// renormalized over the retained subsets.
inline ConfigurationSet enumerate_configs(const BathConfig& cfg) {
    cfg.validate();
    ConfigurationSet out;
    const int n = cfg.n_sites;
    const double p = cfg.abundance;
    for (int k = 0; k <= cfg.max_occupied; ++k) {
        std::vector<int> comb(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) comb[static_cast<std::size_t>(i)] = i;
        const double w = std::pow(p, k) * std::pow(1.0 - p, n - k);
        while (true) {
            out.configs.push_back({comb, w});
            int i = k - 1;
            while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - k + i) --i;
            if (i < 0) break;
            ++comb[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j)
                comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    for (const auto& c : out.configs) out.retained_mass += c.weight;
    for (auto& c : out.configs) c.weight /= out.retained_mass;
    return out;
}

namespace detail {

inline void check_sites_finite(const std::vector<NuclearSite>& sites, const char* where) {
    for (const auto& s : sites)
        if (!std::isfinite(s.a) || !std::isfinite(s.b))
            throw std::invalid_argument(std::string(where) + ": non-finite hyperfine constant");
}

// Detuning shifts of the 2^k two-level branches, in a fixed order
// (site by site, +half before -half) for bit-reproducible sums.
inline std::vector<double> branch_shifts(const std::vector<NuclearSite>& occupied) {
    std::vector<double> shifts(1, 0.0);
    for (const auto& s : occupied) {
        const double half = s.half_splitting();
        const std::size_t n = shifts.size();
        shifts.resize(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            shifts[n + i] = shifts[i] - half;
            shifts[i] += half;
        }
    }
    return shifts;
}

}  // namespace detail

/// Exact block decomposition of the driven dynamics: the electron Rabis
/// independently in each nuclear branch with detuning delta + m,
/// m = sum(+-hypot(A,B)/2) over occupied sites.
inline std::vector<double> branch_rabi_curve(const std::vector<NuclearSite>& occupied,
                                             double omega, double delta,
                                             const std::vector<double>& durations) {
    detail::check_sites_finite(occupied, "branch_rabi_curve");
    if (!std::isfinite(omega) || !std::isfinite(delta))
        throw std::invalid_argument("branch_rabi_curve: non-finite drive or detuning");
    const std::vector<double> shifts = detail::branch_shifts(occupied);
    const double wb = 1.0 / static_cast<double>(shifts.size());
    std::vector<double> pup(durations.size(), 0.0);
    for (const double m : shifts) {
        const double d = delta + m;
        const double g2 = omega * omega + d * d;
        if (!(g2 > 0.0)) continue;  // undriven, on-branch-resonance: stays in |down>
        const double amp = wb * omega * omega / g2;
        const double g = std::sqrt(g2);
        for (std::size_t i = 0; i < durations.size(); ++i) {
            const double sn = std::sin(0.5 * g * durations[i]);
            pup[i] += amp * sn * sn;
        }
    }
    return pup;
}

/// Unitary propagation of the full (2 * 2^k)-dimensional system under
/// H = delta S_z + omega S_x + S_z sum_i (A_i I_z,i + B_i I_x,i), with the
/// nuclei initialized maximally mixed and the electron in |down>. Returns
/// the electron excitation probability at each requested pulse duration.
inline std::vector<double> simulate_driven_spin(const std::vector<NuclearSite>& occupied,
                                                double omega, double delta,
                                                const std::vector<double>& durations) {
    constexpr int max_nuclei = 3;
    if (occupied.size() > max_nuclei)
        throw std::invalid_argument("simulate_driven_spin: more than 3 occupied sites");
    detail::check_sites_finite(occupied, "simulate_driven_spin");
    if (!std::isfinite(omega) || !std::isfinite(delta))
        throw std::invalid_argument("simulate_driven_spin: non-finite drive or detuning");

    const int k = static_cast<int>(occupied.size());
    const int nn = 1 << k;   // nuclear dimension
    const int dim = 2 * nn;  // electron (up, down) x nuclei

    // Basis: index = e * nn + nu; electron e = 0 is |up>; nucleus i is
    // |up> when bit i of nu is clear. All terms are real symmetric.
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (int e = 0; e < 2; ++e) {
        const double sz = (e == 0) ? 0.5 : -0.5;
        for (int nu = 0; nu < nn; ++nu) {
            const int row = e * nn + nu;
            double diag = delta * sz;
            for (int i = 0; i < k; ++i) {
                const double iz = ((nu >> i) & 1) ? -0.5 : 0.5;
                diag += sz * occupied[static_cast<std::size_t>(i)].a * iz;
                const int col = e * nn + (nu ^ (1 << i));
                h(row, col) += sz * 0.5 * occupied[static_cast<std::size_t>(i)].b;
            }
            h(row, row) += diag;
            h(row, (1 - e) * nn + nu) += 0.5 * omega;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    if (eig.info() != Eigen::Success)
        throw ComputeError("simulate_driven_spin: eigendecomposition failed");
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd& lam = eig.eigenvalues();

    std::vector<double> pup(durations.size(), 0.0);
    Eigen::VectorXcd phase(dim), psi(dim);
    for (std::size_t ti = 0; ti < durations.size(); ++ti) {
        const double t = durations[ti];
        for (int j = 0; j < dim; ++j)
            phase(j) = std::polar(1.0, -lam(j) * t);
        double up = 0.0, norm = 0.0;
        for (int nu0 = 0; nu0 < nn; ++nu0) {
            // initial state |down, nu0>; amplitudes in the eigenbasis are row nn+nu0 of v
            psi = v * (phase.array() * v.row(nn + nu0).transpose().array()).matrix();
            for (int r = 0; r < dim; ++r) {
                const double prob = std::norm(psi(r));
                norm += prob;
                if (r < nn) up += prob;
            }
        }
        if (std::abs(norm / nn - 1.0) > 1e-10)
            throw ComputeError("simulate_driven_spin: probability not conserved");
        pup[ti] = up / nn;
    }
    return pup;
}

struct DetuningGrid {
    std::vector<double> delta;   // rad/s offsets from the cavity center
    std::vector<double> weight;  // normalized
};

/// Uniform detuning grid over [-kappa, +kappa] weighted by the Purcell
/// lineshape 1/(1 + (2 delta/kappa)^2), normalized to unit mass.
inline DetuningGrid purcell_detuning_grid(double kappa, int n_points) {
    if (!(kappa > 0.0)) throw std::invalid_argument("purcell_detuning_grid: kappa must be positive");
    if (n_points < 1) throw std::invalid_argument("purcell_detuning_grid: need at least one point");
    DetuningGrid grid;
    grid.delta.reserve(static_cast<std::size_t>(n_points));
    grid.weight.reserve(static_cast<std::size_t>(n_points));
    double wsum = 0.0;
    for (int i = 0; i < n_points; ++i) {
        const double d =
            (n_points == 1) ? 0.0 : -kappa + 2.0 * kappa * i / static_cast<double>(n_points - 1);
        const double x = 2.0 * d / kappa;
        const double w = 1.0 / (1.0 + x * x);
        grid.delta.push_back(d);
        grid.weight.push_back(w);
        wsum += w;
    }
    for (double& w : grid.weight) w /= wsum;
    return grid;
}

/// Ensemble-averaged excitation probability: weighted over all bath
/// configurations and over spin detunings within the cavity linewidth
/// (Purcell-weighted grid of n_detunings points spanning +-kappa).
/// Summation order is fixed for bit-reproducibility.
inline std::vector<double> bath_averaged_rabi(const BathConfig& cfg,
                                              const std::vector<NuclearSite>& sites,
                                              double omega, double kappa,
                                              const std::vector<double>& durations,
                                              int n_detunings = 21) {
    cfg.validate();
    if (static_cast<int>(sites.size()) != cfg.n_sites)
        throw std::invalid_argument("bath_averaged_rabi: site list size != n_sites");
    detail::check_sites_finite(sites, "bath_averaged_rabi");
    if (!std::isfinite(omega)) throw std::invalid_argument("bath_averaged_rabi: non-finite drive");
    const DetuningGrid grid = purcell_detuning_grid(kappa, n_detunings);

    const ConfigurationSet set = enumerate_configs(cfg);
    std::vector<double> acc(durations.size(), 0.0);
    std::vector<NuclearSite> occupied;
    for (const auto& c : set.configs) {
        occupied.clear();
        for (const int i : c.sites) occupied.push_back(sites[static_cast<std::size_t>(i)]);
        const std::vector<double> shifts = detail::branch_shifts(occupied);
        const double wb = c.weight / static_cast<double>(shifts.size());
        for (const double m : shifts) {
            for (std::size_t di = 0; di < grid.delta.size(); ++di) {
                const double d = grid.delta[di] + m;
                const double g2 = omega * omega + d * d;
                if (!(g2 > 0.0)) continue;
                const double amp = wb * grid.weight[di] * omega * omega / g2;
                const double g = std::sqrt(g2);
                for (std::size_t ti = 0; ti < durations.size(); ++ti) {
                    const double sn = std::sin(0.5 * g * durations[ti]);
                    acc[ti] += amp * sn * sn;
                }
            }
        }
    }
    return acc;
}

}  // namespace fdepr
