#pragma once

// Planar micro-resonator model: vacuum current of the inductor wire, the
// vacuum magnetic field delta_B1 around it, the spatial coupling map g0(r)
// over the crystal cross-section, the coupling histogram rho(g0), and the
// Purcell-rate partition of the sample volume.
//
// Geometry: the wire runs along x on top of the crystal; the cross-section
// grid spans y (lateral) and z (depth into the crystal, z > 0). The static
// field B0 is applied along the wire, so delta_B1 is fully transverse.
// Couplings g0 and detunings delta are angular (rad/s); loss rates kappa and
// relaxation rates are 1/s.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "species.hpp"
#include "units.hpp"

namespace fdepr {

struct ResonatorParams {
    double omega0 = 0.0;       // rad/s
    double kappa_c = 0.0;      // 1/s, coupling (external) losses
    double kappa_i = 0.0;      // 1/s, internal losses
    double z0 = 0.0;           // ohms
    double wire_width = 2e-6;  // meters
    double wire_length = 630e-6;

    double kappa() const { return kappa_c + kappa_i; }

    void validate() const {
        if (!(kappa() > 0.0) || kappa_c < 0.0 || kappa_i < 0.0)
            throw std::invalid_argument("ResonatorParams: kappa_c + kappa_i must be > 0");
        if (!(z0 > 0.0)) throw std::invalid_argument("ResonatorParams: Z0 must be > 0");
        if (!(wire_width > 0.0) || !(wire_length > 0.0))
            throw std::invalid_argument("ResonatorParams: wire dimensions must be > 0");
    }
};

/// Vacuum current fluctuation amplitude delta_i0 = omega0 sqrt(hbar / 2 Z0).
inline double vacuum_current(const ResonatorParams& p) {
    p.validate();
    return p.omega0 * std::sqrt(constants::hbar / (2.0 * p.z0));
}

/// Purcell relaxation rate (4 g0^2 / kappa) / (1 + (2 delta / kappa)^2).
inline double purcell_rate(double g0, double delta, double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("purcell_rate: kappa must be > 0");
    const double x = 2.0 * delta / kappa;
    return (4.0 * g0 * g0 / kappa) / (1.0 + x * x);
}

/// Coupling at which the resonant Purcell rate equals gamma_nr.
inline double purcell_g0_limit(double gamma_nr, double kappa) {
    if (!(kappa > 0.0) || gamma_nr < 0.0)
        throw std::invalid_argument("purcell_g0_limit: bad rates");
    return 0.5 * std::sqrt(kappa * gamma_nr);
}

// ---------------------------------------------------------------------------
// Cross-section grid

/// One grid axis: contiguous cells, fine spacing near the wire and
/// geometrically growing width beyond fine_extent.
struct Axis {
    std::vector<double> center;
    std::vector<double> width;

    std::size_t size() const { return center.size(); }
};

struct GridSpec {
    double fine_extent = 2e-6;  // uniform fine cells inside this range
    double fine_cell = 10e-9;
    double extent = 50e-6;  // total half-width in y and depth in z
    double growth = 1.05;   // geometric expansion factor outside the fine region
    double z_min = 0.0;     // negative extends above the surface (metal side)
};

namespace detail {

/// Cells from 0 outward to `extent`.
inline Axis half_axis(const GridSpec& spec) {
    if (!(spec.fine_cell > 0.0) || !(spec.fine_extent > 0.0) ||
        !(spec.extent >= spec.fine_extent) || !(spec.growth > 1.0))
        throw std::invalid_argument("GridSpec: inconsistent grid parameters");
    Axis ax;
    double pos = 0.0, w = spec.fine_cell;
    while (pos < spec.extent - 1e-15) {
        if (pos >= spec.fine_extent) w *= spec.growth;
        w = std::min(w, spec.extent - pos);
        ax.center.push_back(pos + 0.5 * w);
        ax.width.push_back(w);
        pos += w;
    }
    return ax;
}

inline Axis mirror_axis(const Axis& half) {
    Axis ax;
    for (std::size_t k = half.size(); k-- > 0;) {
        ax.center.push_back(-half.center[k]);
        ax.width.push_back(half.width[k]);
    }
    for (std::size_t k = 0; k < half.size(); ++k) {
        ax.center.push_back(half.center[k]);
        ax.width.push_back(half.width[k]);
    }
    return ax;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vacuum field profile

enum class CurrentProfile {
    uniform,      // uniform sheet current across the strip
    edge_peaked,  // inverse-square-root edge divergence, cut off at the
                  // London length
};

struct FieldProfileOptions {
    CurrentProfile profile = CurrentProfile::uniform;
    double london_cutoff = 100e-9;
    int filaments = 201;  // sub-filaments across the strip width
};

/// delta_B1 over the cross-section grid. bx vanishes by symmetry; by/bz are
/// stored per cell, row-major with index iz * ny + iy. Cells inside the metal
/// strip are masked.
struct FieldMap {
    Axis y, z;
    std::vector<double> by, bz;  // tesla
    std::vector<std::uint8_t> masked;

    std::size_t n_cells() const { return by.size(); }
    std::size_t index(std::size_t iz, std::size_t iy) const { return iz * y.size() + iy; }
};

inline FieldMap field_profile(const ResonatorParams& p, const GridSpec& grid,
                              const FieldProfileOptions& opt = {}) {
    p.validate();
    if (opt.filaments < 1) throw std::invalid_argument("field_profile: filaments must be >= 1");

    FieldMap map;
    map.y = detail::mirror_axis(detail::half_axis(grid));
    {
        Axis below = detail::half_axis(grid);
        if (grid.z_min < 0.0) {
            const int n_above = static_cast<int>(std::ceil(-grid.z_min / grid.fine_cell));
            for (int k = n_above; k-- > 0;) {
                map.z.center.push_back(-(k + 0.5) * grid.fine_cell);
                map.z.width.push_back(grid.fine_cell);
            }
        }
        for (std::size_t k = 0; k < below.size(); ++k) {
            map.z.center.push_back(below.center[k]);
            map.z.width.push_back(below.width[k]);
        }
    }

    // Filament positions and weights across the strip.
    const double di0 = vacuum_current(p);
    const double half_w = 0.5 * p.wire_width;
    std::vector<double> fil_y(opt.filaments), fil_i(opt.filaments);
    double weight_sum = 0.0;
    for (int k = 0; k < opt.filaments; ++k) {
        const double yk = (opt.filaments == 1)
                              ? 0.0
                              : -half_w + p.wire_width * (k + 0.5) / opt.filaments;
        double wk = 1.0;
        if (opt.profile == CurrentProfile::edge_peaked) {
            const double u = yk / half_w;
            const double floor_u = opt.london_cutoff / half_w;
            wk = 1.0 / std::sqrt(std::max(1.0 - u * u, floor_u * (2.0 - floor_u)));
        }
        fil_y[k] = yk;
        fil_i[k] = wk;
        weight_sum += wk;
    }
    for (double& ik : fil_i) ik *= di0 / weight_sum;

    const std::size_t ny = map.y.size(), nz = map.z.size();
    map.by.assign(ny * nz, 0.0);
    map.bz.assign(ny * nz, 0.0);
    map.masked.assign(ny * nz, 0);
    for (std::size_t iz = 0; iz < nz; ++iz) {
        const double zc = map.z.center[iz];
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const std::size_t c = map.index(iz, iy);
            const double yc = map.y.center[iy];
            if (zc < 0.0 && std::abs(yc) <= half_w) {
                map.masked[c] = 1;
                continue;
            }
            double by = 0.0, bz = 0.0;
            for (int k = 0; k < opt.filaments; ++k) {
                const double dy = yc - fil_y[k];
                const double r2 = dy * dy + zc * zc;
                const double pref = 2.0 * constants::mu0_over_4pi * fil_i[k] / r2;
                by -= pref * zc;
                bz += pref * dy;
            }
            map.by[c] = by;
            map.bz[c] = bz;
        }
    }
    return map;
}

// ---------------------------------------------------------------------------
// Coupling constant and coupling map

/// g0 = |<down| (gamma . delta_B1) . S |up>| for the component of the
/// gyromagnetic-weighted field transverse to the quantization axis u; the
/// doublet matrix element contributes the factor 1/2. Vectors are in crystal
/// coordinates (c along z). Returns rad/s.
inline double coupling_constant(const SpinSpecies& sp, const Eigen::Vector3d& delta_b1,
                                const Eigen::Vector3d& u_axis) {
    const Eigen::Vector3d u = u_axis.normalized();
    const Eigen::Vector3d v(sp.gyro.gamma_perp * delta_b1.x(), sp.gyro.gamma_perp * delta_b1.y(),
                            sp.gyro.gamma_parallel * delta_b1.z());
    const Eigen::Vector3d v_perp = v - v.dot(u) * u;
    return constants::pi * v_perp.norm();  // 2*pi * gamma * |B| * (1/2)
}

struct CouplingMap {
    Axis y, z;
    std::vector<double> g0;  // rad/s
    std::vector<std::uint8_t> masked;
    double wire_length = 0.0;
    bool constant_along_wire = true;

    std::size_t n_cells() const { return g0.size(); }
    std::size_t index(std::size_t iz, std::size_t iy) const { return iz * y.size() + iy; }
    double cell_volume(std::size_t c) const {
        return y.width[c % y.size()] * z.width[c / y.size()] * wire_length;
    }
};

/// Map the vacuum field to couplings. B0 lies along the wire (x), so the
/// lateral component couples through gamma_perp and the depth component
/// through gamma_parallel regardless of the wire angle in the a-b plane.
inline CouplingMap coupling_map(const ResonatorParams& p, const SpinSpecies& sp,
                                const FieldMap& field) {
    CouplingMap map;
    map.y = field.y;
    map.z = field.z;
    map.masked = field.masked;
    map.wire_length = p.wire_length;
    map.g0.resize(field.n_cells());
    for (std::size_t c = 0; c < field.n_cells(); ++c)
        map.g0[c] = map.masked[c] ? 0.0
                                  : constants::pi * std::hypot(sp.gyro.gamma_perp * field.by[c],
                                                               sp.gyro.gamma_parallel * field.bz[c]);
    return map;
}

// ---------------------------------------------------------------------------
// Purcell partition

struct PurcellPartition {
    std::vector<std::uint8_t> radiative;  // 1 where Gamma_R(g0, delta=0) > gamma_nr
    std::size_t n_radiative = 0;
    std::size_t n_nonradiative = 0;
    double g0_lim = 0.0;  // contour value in g0, rad/s
};

inline PurcellPartition purcell_partition(const CouplingMap& map, double gamma_nr, double kappa) {
    PurcellPartition part;
    part.g0_lim = purcell_g0_limit(gamma_nr, kappa);
    part.radiative.assign(map.n_cells(), 0);
    for (std::size_t c = 0; c < map.n_cells(); ++c) {
        if (map.masked[c]) continue;
        if (purcell_rate(map.g0[c], 0.0, kappa) > gamma_nr) {
            part.radiative[c] = 1;
            ++part.n_radiative;
        } else {
            ++part.n_nonradiative;
        }
    }
    return part;
}

// ---------------------------------------------------------------------------
// Coupling distribution rho(g0)

enum class DistributionProvenance { from_map, analytic_thin_wire };

struct CouplingDistribution {
    std::vector<double> edges;    // rad/s, size bins()+1
    std::vector<double> density;  // spins per rad/s
    DistributionProvenance provenance = DistributionProvenance::from_map;
    double uncovered_mass = 0.0;  // spins outside the bin range (only if allowed)
    double gbar = 0.0;            // rad/s scale of the analytic form, 0 for maps

    int bins() const { return static_cast<int>(density.size()); }
    double mass(int k) const { return density[k] * (edges[k + 1] - edges[k]); }
    double total() const {
        double sum = 0.0;
        for (int k = 0; k < bins(); ++k) sum += mass(k);
        return sum;
    }
};

struct BinSpec {
    double g_min = 0.0;  // rad/s
    double g_max = 0.0;
    int n = 60;
    bool log_spaced = true;
    bool require_cover = true;  // error on mass outside [g_min, g_max]

    /// Bins spanning every unmasked cell of the map.
    static BinSpec covering(const CouplingMap& map, int n = 60, bool log_spaced = true) {
        BinSpec spec;
        spec.n = n;
        spec.log_spaced = log_spaced;
        double lo = 0.0, hi = 0.0;
        bool any = false;
        for (std::size_t c = 0; c < map.n_cells(); ++c) {
            if (map.masked[c]) continue;
            if (!any) {
                lo = hi = map.g0[c];
                any = true;
            }
            lo = std::min(lo, map.g0[c]);
            hi = std::max(hi, map.g0[c]);
        }
        if (!any) throw std::invalid_argument("BinSpec::covering: map has no unmasked cells");
        spec.g_min = lo;
        spec.g_max = hi * (1.0 + 1e-12);
        return spec;
    }

    std::vector<double> make_edges() const {
        if (!(g_max > g_min) || n < 1) throw std::invalid_argument("BinSpec: bad bin range");
        if (log_spaced && !(g_min > 0.0))
            throw std::invalid_argument("BinSpec: log bins need g_min > 0");
        std::vector<double> edges(n + 1);
        for (int k = 0; k <= n; ++k) {
            const double t = static_cast<double>(k) / n;
            edges[k] = log_spaced ? g_min * std::pow(g_max / g_min, t)
                                  : g_min + (g_max - g_min) * t;
        }
        return edges;
    }
};

/// Histogram of cell couplings weighted by cell volume x concentration
/// (spins per m^3). Bin k covers [edges[k], edges[k+1]), last bin closed.
inline CouplingDistribution coupling_distribution(const CouplingMap& map, double concentration,
                                                  const BinSpec& spec) {
    if (!(concentration > 0.0))
        throw std::invalid_argument("coupling_distribution: concentration must be > 0");
    CouplingDistribution dist;
    dist.provenance = DistributionProvenance::from_map;
    dist.edges = spec.make_edges();
    dist.density.assign(spec.n, 0.0);

    double uncovered = 0.0;
    for (std::size_t c = 0; c < map.n_cells(); ++c) {
        if (map.masked[c]) continue;
        const double g = map.g0[c];
        const double mass = map.cell_volume(c) * concentration;
        if (g < dist.edges.front() || g > dist.edges.back()) {
            uncovered += mass;
            continue;
        }
        auto it = std::upper_bound(dist.edges.begin(), dist.edges.end(), g);
        const int k = std::min<int>(spec.n - 1, static_cast<int>(it - dist.edges.begin()) - 1);
        dist.density[k] += mass;
    }
    if (uncovered > 0.0 && spec.require_cover) {
        std::ostringstream os;
        os << "coupling_distribution: bins do not cover the map; uncovered mass = " << uncovered
           << " spins";
        throw ComputeError(os.str());
    }
    dist.uncovered_mass = uncovered;
    for (int k = 0; k < spec.n; ++k) dist.density[k] /= (dist.edges[k + 1] - dist.edges[k]);
    return dist;
}

/// Analytic infinitely-narrow-wire distribution rho(g0) = gbar^2 / g0^3 on
/// [g_min, g_max], log-spaced bins with the exact per-bin mass
/// (gbar^2/2)(lo^-2 - hi^-2).
inline CouplingDistribution analytic_thin_wire_distribution(double gbar, double g_min,
                                                            double g_max, int n_bins = 60) {
    if (!(gbar > 0.0) || !(g_min > 0.0) || !(g_max > g_min) || n_bins < 1)
        throw std::invalid_argument("analytic_thin_wire_distribution: bad parameters");
    BinSpec spec;
    spec.g_min = g_min;
    spec.g_max = g_max;
    spec.n = n_bins;
    spec.log_spaced = true;

    CouplingDistribution dist;
    dist.provenance = DistributionProvenance::analytic_thin_wire;
    dist.gbar = gbar;
    dist.edges = spec.make_edges();
    dist.density.resize(n_bins);
    for (int k = 0; k < n_bins; ++k) {
        const double lo = dist.edges[k], hi = dist.edges[k + 1];
        const double mass = 0.5 * gbar * gbar * (1.0 / (lo * lo) - 1.0 / (hi * hi));
        dist.density[k] = mass / (hi - lo);
    }
    return dist;
}

}  // namespace fdepr
