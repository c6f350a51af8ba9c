#pragma once

// Spin-Hamiltonian parameters of paramagnetic ions at a tetragonal (S4)
// substitutional site, plus resonance-field searches and rotation patterns.
//
// Two families are covered:
//  * SpinSpecies - effective S=1/2 Kramers doublet with a diagonal
//    gyromagnetic tensor (gamma_perp, gamma_perp, gamma_parallel) and, for
//    isotopes with nuclear spin I, a diagonal hyperfine tensor plus nuclear
//    Zeeman term. Hamiltonian dimension 2(2I+1), stored in units of h*Hz.
//  * AnisotropicDoublet - effective S=1/2 with a full anisotropic g-tensor
//    given by three principal values and directions (locally
//    charge-compensated defects); four symmetry-related site orientations
//    are generated by 90-degree rotations about the c axis.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "detail/ini.hpp"
#include "errors.hpp"
#include "units.hpp"

namespace fdepr {

struct GyroTensor {
    double gamma_parallel = 0.0;  // Hz/T, along c
    double gamma_perp = 0.0;      // Hz/T, in the a-b plane
};

struct HyperfineTensor {
    double a_parallel = 0.0;  // Hz
    double a_perp = 0.0;      // Hz
};

struct SpinSpecies {
    std::string id;
    std::string label;
    int two_i = 0;  // 2I
    GyroTensor gyro;
    std::optional<HyperfineTensor> hyperfine;
    double gamma_nuclear = 0.0;  // Hz/T
    double abundance = 1.0;

    int nuclear_dim() const { return two_i + 1; }
    int dimension() const { return 2 * (two_i + 1); }
};

/// Static-field direction: phi from the a axis in the a-b plane, theta_c
/// tilting the field out of that plane toward c.
inline Eigen::Vector3d field_direction(double phi_deg, double theta_c_deg) {
    const double phi = phi_deg * constants::pi / 180.0;
    const double theta_c = theta_c_deg * constants::pi / 180.0;
    return {std::cos(phi) * std::cos(theta_c), std::sin(phi) * std::cos(theta_c),
            std::sin(theta_c)};
}

struct FieldConfig {
    double b0 = 0.0;  // tesla
    double phi_deg = 0.0;
    double theta_c_deg = 0.0;

    Eigen::Vector3d direction() const { return field_direction(phi_deg, theta_c_deg); }
};

// ---------------------------------------------------------------------------
// Spin operators and Hamiltonian

struct SpinOperators {
    Eigen::MatrixXcd x, y, z;
};

/// Angular-momentum matrices for total spin j = two_j/2, basis ordered
/// m = +j ... -j.
inline SpinOperators spin_operators(int two_j) {
    if (two_j < 0) throw std::invalid_argument("spin_operators: negative spin");
    const int n = two_j + 1;
    const double j = 0.5 * two_j;
    Eigen::MatrixXcd plus = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, n);
    for (int a = 0; a < n; ++a) {
        const double m = j - a;
        z(a, a) = m;
        if (a > 0) plus(a - 1, a) = std::sqrt(j * (j + 1) - m * (m + 1));
    }
    SpinOperators ops;
    ops.x = 0.5 * (plus + plus.adjoint());
    ops.y = std::complex<double>(0, -0.5) * (plus - plus.adjoint());
    ops.z = std::move(z);
    return ops;
}

inline Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return out;
}

namespace detail {

/// Field-independent and field-linear parts of H(B) = hf + B * zeeman,
/// both in h*Hz, so transition searches assemble H per field point cheaply.
struct HamiltonianParts {
    Eigen::MatrixXcd hf;
    Eigen::MatrixXcd zeeman;
    Eigen::MatrixXcd drive;  // t . S for the transverse drive direction
};

inline HamiltonianParts hamiltonian_parts(const SpinSpecies& sp, const Eigen::Vector3d& u) {
    if (sp.two_i > 0 && !sp.hyperfine)
        throw std::invalid_argument("species '" + sp.id + "': nuclear spin without hyperfine tensor");
    const int nn = sp.nuclear_dim();
    const SpinOperators s2 = spin_operators(1);
    const Eigen::MatrixXcd eye_n = Eigen::MatrixXcd::Identity(nn, nn);
    const Eigen::MatrixXcd sx = kron(s2.x, eye_n);
    const Eigen::MatrixXcd sy = kron(s2.y, eye_n);
    const Eigen::MatrixXcd sz = kron(s2.z, eye_n);

    HamiltonianParts parts;
    parts.zeeman = sp.gyro.gamma_perp * (u.x() * sx + u.y() * sy) +
                   sp.gyro.gamma_parallel * u.z() * sz;
    parts.hf = Eigen::MatrixXcd::Zero(sp.dimension(), sp.dimension());
    if (sp.two_i > 0) {
        const SpinOperators in = spin_operators(sp.two_i);
        const Eigen::MatrixXcd eye_2 = Eigen::MatrixXcd::Identity(2, 2);
        const Eigen::MatrixXcd ix = kron(eye_2, in.x);
        const Eigen::MatrixXcd iy = kron(eye_2, in.y);
        const Eigen::MatrixXcd iz = kron(eye_2, in.z);
        parts.hf = sp.hyperfine->a_parallel * sz * iz +
                   sp.hyperfine->a_perp * (sx * ix + sy * iy);
        parts.zeeman += sp.gamma_nuclear * (u.x() * ix + u.y() * iy + u.z() * iz);
    }

    Eigen::Vector3d t(-u.y(), u.x(), 0.0);
    if (t.norm() < 1e-9)
        t = Eigen::Vector3d::UnitX();
    else
        t.normalize();
    parts.drive = t.x() * sx + t.y() * sy + t.z() * sz;
    return parts;
}

}  // namespace detail

/// H = B0 (gamma . S) + S . A . I + gamma_n B0 . I in the electron (x) nuclear
/// product basis, in units of h*Hz. Hermitian by construction.
inline Eigen::MatrixXcd build_hamiltonian(const SpinSpecies& sp, const FieldConfig& field) {
    if (field.b0 < 0.0) throw std::invalid_argument("build_hamiltonian: negative field");
    const auto parts = detail::hamiltonian_parts(sp, field.direction());
    return parts.hf + field.b0 * parts.zeeman;
}

// ---------------------------------------------------------------------------
// Transition-field search

struct Transition {
    double b_res = 0.0;  // tesla
    int lower = 0;       // eigenvalue indices, ascending order
    int upper = 0;
    double matrix_element = 0.0;  // |<lower| t.S |upper>|
};

struct TransitionSearch {
    double scan_step = 0.05e-3;        // tesla; brackets sign changes of the gap
    double min_matrix_element = 1e-3;  // drops forbidden transitions
    int refine_iterations = 80;
};

/// All fields in [b_min, b_max] where a level-pair gap matches `frequency`
/// (Hz), sorted ascending. Coarse scan with `scan_step` to bracket sign
/// changes per level pair, then bisection.
inline std::vector<Transition> transition_fields(const SpinSpecies& sp, double frequency,
                                                 double phi_deg, double theta_c_deg,
                                                 double b_min, double b_max,
                                                 const TransitionSearch& opt = {}) {
    if (!(frequency > 0.0)) throw std::invalid_argument("transition_fields: frequency must be > 0");
    if (b_min < 0.0 || !(b_max > b_min))
        throw std::invalid_argument("transition_fields: bad search range");
    if (!(opt.scan_step > 0.0)) throw std::invalid_argument("transition_fields: bad scan step");

    const auto parts = detail::hamiltonian_parts(sp, field_direction(phi_deg, theta_c_deg));
    const int dim = sp.dimension();

    auto eigen_at = [&](double b, bool vectors) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
        es.compute(parts.hf + b * parts.zeeman,
                   vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw ComputeError("transition_fields: eigensolver failed to converge");
        return es;
    };

    const int n_steps = static_cast<int>(std::ceil((b_max - b_min) / opt.scan_step));
    std::vector<Transition> found;

    Eigen::VectorXd prev = eigen_at(b_min, false).eigenvalues();
    double b_prev = b_min;
    for (int k = 1; k <= n_steps; ++k) {
        const double b_cur = std::min(b_min + k * opt.scan_step, b_max);
        Eigen::VectorXd cur = eigen_at(b_cur, false).eigenvalues();
        for (int i = 0; i < dim; ++i) {
            for (int j = i + 1; j < dim; ++j) {
                const double f_lo = (prev[j] - prev[i]) - frequency;
                const double f_hi = (cur[j] - cur[i]) - frequency;
                if (f_lo == 0.0 && f_hi == 0.0) continue;
                if (f_lo * f_hi > 0.0) continue;

                double lo = b_prev, hi = b_cur, g_lo = f_lo;
                for (int it = 0; it < opt.refine_iterations; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    Eigen::VectorXd ev = eigen_at(mid, false).eigenvalues();
                    const double g_mid = (ev[j] - ev[i]) - frequency;
                    if (g_lo * g_mid <= 0.0)
                        hi = mid;
                    else {
                        lo = mid;
                        g_lo = g_mid;
                    }
                    if (hi - lo < 1e-16 * std::max(1.0, hi)) break;
                }
                Transition tr;
                tr.b_res = 0.5 * (lo + hi);
                tr.lower = i;
                tr.upper = j;
                const auto es = eigen_at(tr.b_res, true);
                tr.matrix_element = std::abs(
                    std::complex<double>(es.eigenvectors().col(i).adjoint() * parts.drive *
                                         es.eigenvectors().col(j)));
                if (tr.matrix_element >= opt.min_matrix_element) found.push_back(tr);
            }
        }
        prev = std::move(cur);
        b_prev = b_cur;
    }

    std::sort(found.begin(), found.end(),
              [](const Transition& a, const Transition& b) { return a.b_res < b.b_res; });
    // A root landing exactly on a scan point brackets twice; drop the twin.
    found.erase(std::unique(found.begin(), found.end(),
                            [](const Transition& a, const Transition& b) {
                                return a.lower == b.lower && a.upper == b.upper &&
                                       std::abs(a.b_res - b.b_res) < 1e-10;
                            }),
                found.end());
    return found;
}

// ---------------------------------------------------------------------------
// Anisotropic g-tensor doublets

struct AnisotropicDoublet {
    std::string id;
    std::string label;
    std::array<double, 3> g{};
    std::array<double, 3> theta_deg{};
    std::array<double, 3> phi_deg{};
    bool ground_state = false;

    /// Columns are the published principal directions (unit vectors).
    Eigen::Matrix3d axes() const {
        Eigen::Matrix3d d;
        for (int k = 0; k < 3; ++k) {
            const double t = theta_deg[k] * constants::pi / 180.0;
            const double p = phi_deg[k] * constants::pi / 180.0;
            d.col(k) = Eigen::Vector3d(std::cos(p) * std::sin(t), std::sin(p) * std::sin(t),
                                       std::cos(t));
        }
        return d;
    }

    /// Largest deviation of any axis pair from orthogonality, in degrees.
    double max_axis_skew_deg() const {
        const Eigen::Matrix3d d = axes();
        double worst = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                const double c = std::min(1.0, std::abs(d.col(i).dot(d.col(j))));
                worst = std::max(worst, std::abs(90.0 - std::acos(c) * 180.0 / constants::pi));
            }
        return worst;
    }

    /// Published angles are rounded, so the raw triad is not exactly
    /// orthogonal; symmetric (Lowdin) orthogonalization restores the nearest
    /// orthonormal triad, and the tensor eigenvalues then equal the published
    /// principal g-values exactly.
    Eigen::Matrix3d orthonormal_axes() const {
        const Eigen::Matrix3d d = axes();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(d.transpose() * d);
        const Eigen::Matrix3d inv_half = es.eigenvectors() *
                                         es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                         es.eigenvectors().transpose();
        return d * inv_half;
    }

    /// Symmetric g-tensor sum_k g_k d_k d_k^T over the orthonormalized triad.
    Eigen::Matrix3d g_tensor() const {
        if (max_axis_skew_deg() > 2.0)
            throw ConfigError("doublet '" + id + "': principal axes deviate from orthogonality by more than 2 deg");
        const Eigen::Matrix3d d = orthonormal_axes();
        Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
        for (int k = 0; k < 3; ++k) out += g[k] * d.col(k) * d.col(k).transpose();
        return out;
    }
};

/// 90-degree c-axis rotation, applied `quarter_turns` times.
inline Eigen::Matrix3d rotation_about_c(int quarter_turns) {
    static const std::array<std::array<double, 2>, 4> cs = {{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    const auto [c, s] = cs[((quarter_turns % 4) + 4) % 4];
    Eigen::Matrix3d r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

inline double effective_g(const Eigen::Matrix3d& g_tensor, const Eigen::Vector3d& u) {
    return (g_tensor * u).norm();
}

/// B satisfying g_eff * mu_B * B = h * frequency.
inline double doublet_resonance_field(double g_eff, double frequency) {
    if (!(g_eff > 0.0)) throw std::invalid_argument("doublet_resonance_field: g_eff must be > 0");
    return constants::h_planck * frequency / (constants::mu_bohr * g_eff);
}

// ---------------------------------------------------------------------------
// Rotation patterns

struct RotationPoint {
    double phi_deg = 0.0;
    int site_index = 0;
    double b_res = 0.0;  // tesla
    double matrix_element = 0.0;
};

/// S4-symmetric species: one block of transitions per grid angle;
/// site_index is the index within that angle's sorted transition list.
inline std::vector<RotationPoint> rotation_pattern(const SpinSpecies& sp, double frequency,
                                                   std::span<const double> phi_grid_deg,
                                                   double theta_c_deg, double b_min, double b_max,
                                                   const TransitionSearch& opt = {}) {
    if (phi_grid_deg.empty()) throw std::invalid_argument("rotation_pattern: empty angle grid");
    std::vector<RotationPoint> rows;
    for (double phi : phi_grid_deg) {
        const auto transitions = transition_fields(sp, frequency, phi, theta_c_deg, b_min, b_max, opt);
        for (std::size_t k = 0; k < transitions.size(); ++k)
            rows.push_back({phi, static_cast<int>(k), transitions[k].b_res,
                            transitions[k].matrix_element});
    }
    return rows;
}

/// Anisotropic doublet: four branches from the 90-degree site orientations.
/// The g-tensor model carries positions only, so the matrix-element column
/// holds the free-spin value 1/2.
inline std::vector<RotationPoint> rotation_pattern(const AnisotropicDoublet& doublet,
                                                   double frequency,
                                                   std::span<const double> phi_grid_deg,
                                                   double theta_c_deg) {
    if (phi_grid_deg.empty()) throw std::invalid_argument("rotation_pattern: empty angle grid");
    const Eigen::Matrix3d g0 = doublet.g_tensor();
    std::array<Eigen::Matrix3d, 4> site_tensors;
    for (int k = 0; k < 4; ++k) {
        const Eigen::Matrix3d r = rotation_about_c(k);
        site_tensors[k] = r * g0 * r.transpose();
    }
    std::vector<RotationPoint> rows;
    for (double phi : phi_grid_deg) {
        const Eigen::Vector3d u = field_direction(phi, theta_c_deg);
        for (int k = 0; k < 4; ++k)
            rows.push_back({phi, k,
                            doublet_resonance_field(effective_g(site_tensors[k], u), frequency),
                            0.5});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Species database file

struct SpeciesDatabase {
    std::vector<SpinSpecies> species;
    std::vector<AnisotropicDoublet> doublets;

    const SpinSpecies* find(std::string_view id) const {
        for (const auto& s : species)
            if (s.id == id) return &s;
        return nullptr;
    }
    const AnisotropicDoublet* find_doublet(std::string_view id) const {
        for (const auto& d : doublets)
            if (d.id == id) return &d;
        return nullptr;
    }
};

namespace detail {

inline const IniEntry& require_key(const IniDocument& doc, const IniSection& sec,
                                   std::string_view key) {
    const IniEntry* e = sec.find(key);
    if (!e)
        fail_at(doc.origin, sec.line,
                "section [" + sec.kind + " " + sec.name + "] is missing key '" +
                    std::string(key) + "'");
    return *e;
}

inline SpinSpecies load_species_section(const IniDocument& doc, const IniSection& sec) {
    SpinSpecies sp;
    sp.id = sec.name;
    sp.label = require_key(doc, sec, "label").value;
    sp.two_i = parse_two_i(doc, require_key(doc, sec, "nuclear_spin"));
    sp.abundance = parse_quantity(doc, require_key(doc, sec, "abundance"), Unit::none);
    sp.gyro.gamma_parallel = parse_quantity(doc, require_key(doc, sec, "gamma_parallel"), Unit::gyro);
    sp.gyro.gamma_perp = parse_quantity(doc, require_key(doc, sec, "gamma_perp"), Unit::gyro);
    if (sp.two_i > 0) {
        HyperfineTensor hf;
        hf.a_parallel = parse_quantity(doc, require_key(doc, sec, "a_parallel"), Unit::frequency);
        hf.a_perp = parse_quantity(doc, require_key(doc, sec, "a_perp"), Unit::frequency);
        sp.hyperfine = hf;
        sp.gamma_nuclear = parse_quantity(doc, require_key(doc, sec, "gamma_nuclear"), Unit::gyro);
    } else if (sec.find("a_parallel") || sec.find("a_perp") || sec.find("gamma_nuclear")) {
        fail_at(doc.origin, sec.line,
                "species '" + sp.id + "': hyperfine keys given but nuclear_spin = 0");
    }
    require_all_used(doc, sec);

    if (sp.id.empty()) fail_at(doc.origin, sec.line, "species section needs a name");
    if (sp.abundance < 0.0 || sp.abundance > 1.0)
        fail_at(doc.origin, sec.line, "species '" + sp.id + "': abundance outside [0,1]");
    if (sp.gyro.gamma_parallel < 0.0 || sp.gyro.gamma_perp < 0.0)
        fail_at(doc.origin, sec.line, "species '" + sp.id + "': negative gyromagnetic ratio");
    return sp;
}

inline AnisotropicDoublet load_doublet_section(const IniDocument& doc, const IniSection& sec) {
    AnisotropicDoublet d;
    d.id = sec.name;
    d.label = require_key(doc, sec, "label").value;
    d.ground_state = parse_bool(doc, require_key(doc, sec, "ground_state"));
    const std::array<const char*, 3> gk = {"g1", "g2", "g3"};
    const std::array<const char*, 3> tk = {"theta1", "theta2", "theta3"};
    const std::array<const char*, 3> pk = {"phi1", "phi2", "phi3"};
    for (int k = 0; k < 3; ++k) {
        d.g[k] = parse_quantity(doc, require_key(doc, sec, gk[k]), Unit::none);
        d.theta_deg[k] = parse_quantity(doc, require_key(doc, sec, tk[k]), Unit::angle);
        d.phi_deg[k] = parse_quantity(doc, require_key(doc, sec, pk[k]), Unit::angle);
    }
    require_all_used(doc, sec);

    if (d.id.empty()) fail_at(doc.origin, sec.line, "doublet section needs a name");
    for (double g : d.g)
        if (!(g > 0.0)) fail_at(doc.origin, sec.line, "doublet '" + d.id + "': g-values must be > 0");
    if (d.max_axis_skew_deg() > 2.0)
        fail_at(doc.origin, sec.line,
                "doublet '" + d.id + "': principal axes deviate from orthogonality by more than 2 deg");
    return d;
}

}  // namespace detail

inline SpeciesDatabase parse_species_database(std::string_view text, std::string origin) {
    const detail::IniDocument doc = detail::parse_ini_text(text, std::move(origin));
    SpeciesDatabase db;
    for (const auto& sec : doc.sections) {
        if (sec.kind == "species") {
            if (db.find(sec.name))
                detail::fail_at(doc.origin, sec.line, "duplicate species '" + sec.name + "'");
            db.species.push_back(detail::load_species_section(doc, sec));
        } else if (sec.kind == "doublet") {
            if (db.find_doublet(sec.name))
                detail::fail_at(doc.origin, sec.line, "duplicate doublet '" + sec.name + "'");
            db.doublets.push_back(detail::load_doublet_section(doc, sec));
        } else {
            detail::fail_at(doc.origin, sec.line, "unknown section kind '" + sec.kind + "'");
        }
    }
    return db;
}

inline SpeciesDatabase load_species_database(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_species_database(buf.str(), path);
}

}  // namespace fdepr
