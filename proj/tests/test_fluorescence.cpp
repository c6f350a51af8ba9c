#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fdepr/detail/special.hpp"
#include "fdepr/fluorescence.hpp"
#include "fdepr/units.hpp"

using namespace fdepr;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kKappaC = 8.2e5;
constexpr double kKappaI = 1.45e6 - 8.2e5;
constexpr double kKappa = kKappaC + kKappaI;
constexpr double kGammaNR = 0.15;

ResonatorParams sim_resonator(double kappa_c = kKappaC, double kappa_i = kKappaI) {
    ResonatorParams p;
    p.omega0 = units::angular(7.0 * units::ghz);
    p.kappa_c = kappa_c;
    p.kappa_i = kappa_i;
    p.z0 = 35.0;
    return p;
}

// thin-wire ensemble with the separation g0_min << g0_lim << g0_max used by
// the drive-scaling studies
SimulationConfig scaling_config(int n_bins) {
    SimulationConfig cfg;
    cfg.resonator = sim_resonator();
    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    cfg.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 4000.0,
                                                   constants::two_pi * 1.0e5, n_bins);
    cfg.line.kind = LineShape::Kind::lorentzian;
    cfg.line.width = kKappa;
    cfg.gamma_nr = kGammaNR;
    cfg.efficiency = 0.15;
    cfg.n_delta_bins = 1;  // resonant slab
    cfg.quasi_static = true;
    return cfg;
}

Pulse pulse_with_strength(double epsilon) {
    Pulse pulse;
    pulse.duration = 1.0e-6;
    pulse.beta = epsilon / pulse.duration;
    return pulse;
}

std::vector<double> log_grid(double t_first, double t_last, int n) {
    std::vector<double> t{0.0};
    const double ratio = std::log(t_last / t_first) / (n - 1);
    for (int k = 0; k < n; ++k) t.push_back(t_first * std::exp(k * ratio));
    return t;
}

// psi_max = 0.25 and psi_lim = 12 pi for the ensemble above
constexpr double kEpsLow = 3.1855998387e-4;   // s^(1/2)
constexpr double kEpsHigh = 1.2943822958e2;  // s^(1/2)

}  // namespace

TEST_CASE("cosine integral against reference values") {
    const struct {
        double x, ci;
    } table[] = {
        {0.1, -1.727868386657297e+00},  {0.5, -1.777840788066129e-01},
        {2.0, 4.229808287748650e-01},   {5.0, -1.900297496566439e-01},
        {8.0, 1.224338825320096e-01},   {20.0, 4.441982084535331e-02},
        {37.69911184307752, -7.006894745077810e-04}, {120.0, 4.781238270934649e-03},
    };
    for (const auto& row : table)
        CHECK_THAT(detail::cosine_integral(row.x), WithinRel(row.ci, 1e-12));
    CHECK_THROWS_AS(detail::cosine_integral(0.0), std::invalid_argument);
    CHECK_THROWS_AS(detail::cosine_integral(-1.0), std::invalid_argument);
}

TEST_CASE("lineshapes are normalized") {
    LineShape lor;
    lor.kind = LineShape::Kind::lorentzian;
    lor.width = 3.0e5;
    lor.validate();
    CHECK_THAT(lor.density_at(0.0), WithinRel(1.0 / (constants::pi * lor.width), 1e-12));
    CHECK_THAT(lor.density_at(lor.width), WithinRel(0.5 / (constants::pi * lor.width), 1e-12));

    LineShape gau;
    gau.kind = LineShape::Kind::gaussian;
    gau.width = 2.0e5;
    gau.validate();
    double mass = 0.0;
    const double dd = gau.width / 50.0;
    for (double d = -8.0 * gau.width; d < 8.0 * gau.width; d += dd)
        mass += 0.5 * (gau.density_at(d) + gau.density_at(d + dd)) * dd;
    CHECK_THAT(mass, WithinAbs(1.0, 1e-8));

    LineShape tab;
    tab.kind = LineShape::Kind::tabulated;
    tab.delta = {-2.0, 0.0, 2.0};
    tab.density = {0.0, 3.0, 0.0};  // triangle, raw mass 6
    tab.validate();
    CHECK_THAT(tab.density_at(0.0), WithinRel(0.5, 1e-12));
    CHECK_THAT(tab.density_at(1.0), WithinRel(0.25, 1e-12));
    CHECK(tab.density_at(2.5) == 0.0);

    LineShape off = lor;
    off.center = 1.0e5;
    CHECK_THAT(off.density_at(1.0e5), WithinRel(lor.density_at(0.0), 1e-12));

    LineShape bad;
    bad.width = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    LineShape bad_tab = tab;
    bad_tab.delta = {0.0, -1.0, 2.0};
    CHECK_THROWS_AS(bad_tab.validate(), std::invalid_argument);
}

TEST_CASE("single spin with a perfect flip emits the branching fraction") {
    const double gamma_r = 100.0;
    const double g0 = 0.5 * std::sqrt(kKappa * gamma_r);

    SimulationConfig cfg;
    cfg.resonator = sim_resonator(0.841 * kKappa, 0.159 * kKappa);
    cfg.coupling.edges = {g0 * (1.0 - 1e-9), g0 * (1.0 + 1e-9)};
    cfg.coupling.density = {1.0 / (g0 * 2e-9)};  // exactly one spin
    cfg.line.width = kKappa;
    cfg.gamma_nr = kGammaNR;
    cfg.efficiency = 0.841;  // collection limited by the cavity exit fraction
    cfg.n_delta_bins = 1;
    cfg.quasi_static = true;

    Pulse pulse;
    pulse.duration = 1.0e-6;
    pulse.beta = 0.5 * constants::pi * kKappa /
                 (2.0 * g0 * std::sqrt(cfg.resonator.kappa_c) * pulse.duration);

    const auto curve = simulate_curve(cfg, pulse, log_grid(1e-6, 60.0, 5000));
    const double total = integrated_counts(curve, 60.0);
    CHECK_THAT(total, WithinRel(0.841 * gamma_r / (gamma_r + kGammaNR), 2e-4));
    CHECK_THAT(total, WithinAbs(0.840, 1e-3));
}

TEST_CASE("single-bin curve equals the lone-packet expression") {
    const double g0 = 6.0e3;
    SimulationConfig cfg;
    cfg.resonator = sim_resonator();
    cfg.coupling.edges = {g0 * 0.999999, g0 * 1.000001};
    cfg.coupling.density = {1.0 / (g0 * 2e-6)};
    cfg.line.width = kKappa;
    cfg.gamma_nr = kGammaNR;
    cfg.efficiency = 0.3;
    cfg.n_delta_bins = 1;

    Pulse pulse;
    pulse.duration = 40.0 / kKappa;
    pulse.beta = 2.0e4;

    const auto times = log_grid(1e-5, 20.0, 200);
    const auto curve = simulate_curve(cfg, pulse, times);

    SpinPacket packet;
    packet.g0 = std::sqrt(cfg.coupling.edges[0] * cfg.coupling.edges[1]);
    packet.gamma_r = purcell_rate(packet.g0, 0.0, kKappa);
    packet.gamma_nr = kGammaNR;
    const auto out = evolve_packet(packet, cavity_response(pulse, cfg.resonator));
    const double mass = cfg.coupling.mass(0);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double expected = cfg.efficiency * out.gamma_r * (out.sz + 0.5) * mass *
                                std::exp(-out.gamma1() * times[k]);
        CHECK_THAT(curve.rate[k], WithinRel(expected, 1e-12));
    }
}

TEST_CASE("zero drive produces an identically zero curve") {
    auto cfg = scaling_config(64);
    Pulse pulse;
    pulse.duration = 1.0e-6;
    pulse.beta = 0.0;
    for (const bool quasi : {true, false}) {
        cfg.quasi_static = quasi;
        const auto curve = simulate_curve(cfg, pulse, log_grid(1e-6, 10.0, 50));
        for (const double r : curve.rate) CHECK(r == 0.0);
    }
}

TEST_CASE("curve is non-negative and non-increasing") {
    auto cfg = scaling_config(128);
    cfg.n_delta_bins = 21;
    const auto curve =
        simulate_curve(cfg, pulse_with_strength(30.0 * kEpsLow), log_grid(1e-7, 40.0, 400));
    for (std::size_t k = 0; k < curve.rate.size(); ++k) {
        CHECK(curve.rate[k] >= 0.0);
        if (k > 0) CHECK(curve.rate[k] <= curve.rate[k - 1] * (1.0 + 1e-12));
    }
}

TEST_CASE("ensemble tail decays at the non-radiative rate") {
    SimulationConfig cfg = scaling_config(400);
    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    cfg.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 100.0,
                                                   constants::two_pi * 1000.0, 400);

    const double eps = units::eps_ns_to_s(2.0e4);
    const auto times = log_grid(1e-8, 240.0, 3000);
    const auto curve = simulate_curve(cfg, pulse_with_strength(eps), times);

    // regression of ln(rate) on t over the second half of the window
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < 120.0) continue;
        const double y = std::log(curve.rate[k]);
        sx += times[k];
        sy += y;
        sxx += times[k] * times[k];
        sxy += times[k] * y;
        ++n;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK_THAT(-slope, WithinRel(kGammaNR, 0.05));
}

TEST_CASE("counts grow quadratically at low drive") {
    const auto cfg = scaling_config(512);
    const auto times = log_grid(1e-8, 60.0, 4000);
    const double c1 =
        integrated_counts(simulate_curve(cfg, pulse_with_strength(0.5 * kEpsLow), times), 60.0);
    const double c2 =
        integrated_counts(simulate_curve(cfg, pulse_with_strength(kEpsLow), times), 60.0);
    CHECK_THAT(c2 / c1, WithinAbs(4.0, 0.2));
}

TEST_CASE("efficiency scales the curve linearly") {
    auto cfg = scaling_config(64);
    const auto times = log_grid(1e-7, 30.0, 100);
    const auto base = simulate_curve(cfg, pulse_with_strength(kEpsLow), times);
    cfg.efficiency = 0.30;
    const auto doubled = simulate_curve(cfg, pulse_with_strength(kEpsLow), times);
    for (std::size_t k = 0; k < times.size(); ++k)
        if (base.rate[k] > 0.0) CHECK_THAT(doubled.rate[k] / base.rate[k], WithinRel(2.0, 1e-12));
}

TEST_CASE("count-vs-drive curve is monotone") {
    const auto cfg = scaling_config(512);
    const auto times = log_grid(1e-8, 60.0, 3000);
    double prev = -1.0;
    for (int k = 0; k < 12; ++k) {
        const double eps = 0.25 * kEpsLow *
                           std::pow(40.0 * kEpsHigh / kEpsLow, k / 11.0);
        const double c = integrated_counts(simulate_curve(cfg, pulse_with_strength(eps), times),
                                           60.0);
        CHECK(c >= prev * (1.0 - 1e-6));
        prev = c;
    }
}

TEST_CASE("bin refinement at default resolution changes counts below a percent") {
    SimulationConfig cfg = scaling_config(60);
    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    cfg.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 10.0,
                                                   constants::two_pi * 2000.0, 60);
    cfg.n_delta_bins = 41;
    cfg.line.width = 0.5 * kKappa;

    SimulationConfig fine = cfg;
    fine.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 10.0,
                                                    constants::two_pi * 2000.0, 120);
    fine.n_delta_bins = 83;

    const auto times = log_grid(1e-8, 60.0, 2000);
    const auto pulse = pulse_with_strength(20.0 * kEpsLow);
    const double coarse_counts = integrated_counts(simulate_curve(cfg, pulse, times), 60.0);
    const double fine_counts = integrated_counts(simulate_curve(fine, pulse, times), 60.0);
    CHECK_THAT(fine_counts, WithinRel(coarse_counts, 1e-2));
}

TEST_CASE("closed-form rotation and integrator agree on ensemble counts") {
    SimulationConfig cfg = scaling_config(60);
    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    cfg.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 10.0,
                                                   constants::two_pi * 2000.0, 60);
    cfg.n_delta_bins = 21;
    cfg.line.width = kKappa / 3.0;
    cfg.quasi_static = false;

    Pulse pulse;
    pulse.duration = 100.0 / kKappa;
    pulse.beta = 1.2 / (2.0 * constants::two_pi * 2000.0 * std::sqrt(kKappaC) / kKappa) /
                 pulse.duration;  // psi_max = 1.2

    const auto times = log_grid(1e-8, 60.0, 1500);
    const double rk4 = integrated_counts(simulate_curve(cfg, pulse, times), 60.0);
    cfg.quasi_static = true;
    const double closed = integrated_counts(simulate_curve(cfg, pulse, times), 60.0);
    CHECK_THAT(closed, WithinRel(rk4, 1e-2));
}

TEST_CASE("detuning window bookkeeping") {
    SimulationConfig cfg = scaling_config(32);
    cfg.n_delta_bins = 41;
    cfg.line.width = 10.0 * kKappa;  // line much broader than the window
    const auto curve = simulate_curve(cfg, pulse_with_strength(kEpsLow), log_grid(1e-6, 10.0, 50));
    CHECK_THAT(curve.window_mass, WithinRel(2.0 / constants::pi * std::atan(0.3), 1e-3));
    CHECK_THAT(curve.coupling_mass, WithinRel(cfg.coupling.total(), 1e-12));
}

TEST_CASE("coverage shortfall raises with the missing mass") {
    auto cfg = scaling_config(32);
    cfg.coupling.uncovered_mass = 0.25 * cfg.coupling.total();
    CHECK_THROWS_WITH(simulate_curve(cfg, pulse_with_strength(kEpsLow), log_grid(1e-6, 1.0, 10)),
                      ContainsSubstring("miss"));
}

TEST_CASE("simulation input validation") {
    auto cfg = scaling_config(16);
    const auto pulse = pulse_with_strength(kEpsLow);
    CHECK_THROWS_AS(simulate_curve(cfg, pulse, {}), std::invalid_argument);
    CHECK_THROWS_AS(simulate_curve(cfg, pulse, {0.0, 2.0, 1.0}), std::invalid_argument);
    cfg.efficiency = 1.5;
    CHECK_THROWS_AS(simulate_curve(cfg, pulse, log_grid(1e-6, 1.0, 10)), std::invalid_argument);
    cfg.efficiency = 0.5;
    cfg.n_delta_bins = 0;
    CHECK_THROWS_AS(simulate_curve(cfg, pulse, log_grid(1e-6, 1.0, 10)), std::invalid_argument);
}

TEST_CASE("integrated counts on analytic curves") {
    FluorescenceCurve flat;
    for (int k = 0; k <= 100; ++k) {
        flat.time.push_back(0.02 * k);
        flat.rate.push_back(7.5);
    }
    CHECK_THAT(integrated_counts(flat, 1.3), WithinRel(7.5 * 1.3, 1e-12));
    CHECK_THROWS_AS(integrated_counts(flat, 2.5), std::invalid_argument);

    FluorescenceCurve decay;  // A * G * exp(-G t), integral to infinity = A
    const double g = 50.0, a = 2.0;
    for (int k = 0; k <= 40000; ++k) {
        const double t = 1.0 * k / 40000.0;
        decay.time.push_back(t);
        decay.rate.push_back(a * g * std::exp(-g * t));
    }
    CHECK_THAT(integrated_counts(decay, 1.0), WithinRel(a, 1e-6));
}

TEST_CASE("background subtraction removes constant rates") {
    FluorescenceCurve flat;
    for (int k = 0; k <= 1000; ++k) {
        flat.time.push_back(0.002 * k);
        flat.rate.push_back(4.2);
    }
    CHECK_THAT(background_subtract(flat, 0.5), WithinAbs(0.0, 1e-12));

    FluorescenceCurve two_term;  // dark + fast spin decay, dead by the window end
    const double g = 50.0, a = 2.0, dark = 3.0;
    for (int k = 0; k <= 20000; ++k) {
        const double t = 2.0 * k / 20000.0;
        two_term.time.push_back(t);
        two_term.rate.push_back(dark + a * g * std::exp(-g * t));
    }
    CHECK_THAT(background_subtract(two_term, 0.5), WithinRel(a, 1e-2));
}

TEST_CASE("slow relaxers are suppressed by the subtraction") {
    FluorescenceCurve slow;  // Gamma_1 * T_rep << 1: tail still carries signal
    const double g1 = 0.01;
    for (int k = 0; k <= 20000; ++k) {
        const double t = 2.0 * k / 20000.0;
        slow.time.push_back(t);
        slow.rate.push_back(g1 * std::exp(-g1 * t));
    }
    const double subtracted = background_subtract(slow, 0.5);
    const double unsubtracted = integrated_counts(slow, 0.5);
    CHECK(subtracted > 0.0);
    CHECK(subtracted < 0.05 * unsubtracted);
}

TEST_CASE("asymptotic counts reproduce the reference integrals") {
    const auto cfg = scaling_config(60);

    const auto low = asymptotic_counts(kEpsLow, cfg);
    CHECK_THAT(low.first, WithinRel(1.8488904506e-8, 1e-9));
    CHECK_THAT(low.second, WithinRel(1.17187492508e-9, 1e-7));

    const auto high = asymptotic_counts(kEpsHigh, cfg);
    CHECK_THAT(high.first, WithinRel(6.7994639686e-2, 1e-9));
    CHECK_THAT(high.second, WithinRel(6.6706086998e-1, 1e-9));

    const auto zero = asymptotic_counts(0.0, cfg);
    CHECK(zero.first == 0.0);
    CHECK(zero.second == 0.0);
}

TEST_CASE("low-drive closed forms and drive-independent ratio") {
    const auto cfg = scaling_config(60);
    const auto closed = low_drive_counts(kEpsLow, cfg);
    CHECK_THAT(closed.first, WithinRel(1.8513217142e-8, 1e-9));
    CHECK_THAT(closed.second, WithinRel(1.1718750000e-9, 1e-9));

    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    const double expected_ratio = 2.0 * std::log(constants::two_pi * 1.0e5 / g_lim);
    CHECK_THAT(closed.first / closed.second, WithinRel(expected_ratio, 1e-12));
    CHECK_THAT(expected_ratio, WithinRel(15.797945, 1e-6));

    const auto closed2 = low_drive_counts(2.0 * kEpsLow, cfg);
    CHECK_THAT(closed2.first / closed2.second, WithinRel(closed.first / closed.second, 1e-12));
    CHECK_THAT(closed2.first, WithinRel(4.0 * closed.first, 1e-12));

    // the exact integrals approach the closed forms from below at small drive
    const auto integral = asymptotic_counts(kEpsLow, cfg);
    CHECK_THAT(integral.first, WithinRel(closed.first, 2e-3));
    CHECK_THAT(integral.second, WithinRel(closed.second, 1e-5));
}

TEST_CASE("asymptotic counts demand scale separation and the analytic form") {
    auto cfg = scaling_config(60);
    const double g_lim = purcell_g0_limit(kGammaNR, kKappa);
    cfg.coupling = analytic_thin_wire_distribution(constants::two_pi * 50.0, g_lim / 2.0,
                                                   constants::two_pi * 1.0e5, 60);
    CHECK_THROWS_AS(asymptotic_counts(kEpsLow, cfg), ComputeError);

    auto map_cfg = scaling_config(60);
    map_cfg.coupling.provenance = DistributionProvenance::from_map;
    CHECK_THROWS_AS(asymptotic_counts(kEpsLow, map_cfg), std::invalid_argument);
}

TEST_CASE("bin-sum simulation tracks the analytic counts in both regimes") {
    const auto low_cfg = scaling_config(512);
    const auto times = log_grid(1e-8, 60.0, 6000);

    const auto low = asymptotic_counts(kEpsLow, low_cfg);
    const double sim_low = integrated_counts(
        simulate_curve(low_cfg, pulse_with_strength(kEpsLow), times), 60.0);
    CHECK_THAT(sim_low / (low.first + low.second), WithinAbs(0.9406, 0.004));

    const auto high_cfg = scaling_config(2048);
    const auto high = asymptotic_counts(kEpsHigh, high_cfg);
    const double sim_high = integrated_counts(
        simulate_curve(high_cfg, pulse_with_strength(kEpsHigh), times), 60.0);
    CHECK_THAT(sim_high / (high.first + high.second), WithinAbs(0.9074, 0.004));
}

TEST_CASE("low-drive log-log slope is quadratic") {
    const auto cfg = scaling_config(512);
    const auto times = log_grid(1e-8, 60.0, 4000);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = 6;
    for (int k = 0; k < n; ++k) {
        const double eps = 0.25 * kEpsLow * std::pow(4.0, k / (n - 1.0));
        const double c =
            integrated_counts(simulate_curve(cfg, pulse_with_strength(eps), times), 60.0);
        const double x = std::log(eps), y = std::log(c);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope > 1.9);
    CHECK(slope < 2.1);
    CHECK_THAT(slope, WithinAbs(1.9992, 0.003));
}

TEST_CASE("high-drive counts grow logarithmically") {
    const auto cfg = scaling_config(60);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const int n = 10;
    for (int k = 0; k < n; ++k) {
        const double eps = kEpsHigh * std::pow(10.0, k / (n - 1.0));
        const auto c = asymptotic_counts(eps, cfg);
        const double x = std::log(eps), y = c.first + c.second;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double r = (n * sxy - sx * sy) /
                     std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(slope > 0.0);
    CHECK(r * r > 0.99);
    CHECK_THAT(slope, WithinAbs(0.135705, 1e-4));
    CHECK_THAT(r * r, WithinAbs(0.99999625, 1e-5));
}
