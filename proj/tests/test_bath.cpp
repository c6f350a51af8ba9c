#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "fdepr/bath.hpp"
#include "fdepr/units.hpp"

using namespace fdepr;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kGammaEr = 117.3e9;  // Hz/T, in-plane effective gamma
constexpr double kGammaW = 1.8e6;     // Hz/T

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

NuclearSite site_ab(double a, double b) { return {Eigen::Vector3d::Zero(), a, b}; }

std::vector<NuclearSite> tungsten_sites() {
    const auto table = load_lattice_sites(std::string(FDEPR_DATA_DIR) + "/tungsten_sites.csv");
    return make_bath_sites(table, kGammaEr, kGammaW, Eigen::Vector3d::UnitX());
}

// max - min of the curve over each successive window of one drive period
std::vector<double> period_contrasts(const std::vector<double>& t, const std::vector<double>& y,
                                     double period, int n_periods) {
    std::vector<double> out;
    for (int k = 0; k < n_periods; ++k) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] >= k * period && t[i] < (k + 1) * period) {
                lo = std::min(lo, y[i]);
                hi = std::max(hi, y[i]);
            }
        }
        out.push_back(hi - lo);
    }
    return out;
}

}  // namespace

TEST_CASE("dipolar constants follow the point-dipole angular pattern") {
    const Eigen::Vector3d x = Eigen::Vector3d::UnitX();
    const double r = 4e-10;
    const double b_hz = constants::mu0_over_4pi * constants::h_planck * kGammaEr * kGammaW / (r * r * r);

    SECTION("site on the quantization axis: A = -2b, B = 0") {
        const auto [a, b] = dipolar_constants(r * x, kGammaEr, kGammaW, x);
        CHECK_THAT(a, WithinRel(-2.0 * constants::two_pi * b_hz, 1e-12));
        CHECK_THAT(b, WithinAbs(0.0, 1e-12));
    }
    SECTION("equatorial site: A = +b, B = 0") {
        const auto [a, b] = dipolar_constants(Eigen::Vector3d(0, r, 0), kGammaEr, kGammaW, x);
        CHECK_THAT(a, WithinRel(constants::two_pi * b_hz, 1e-12));
        CHECK_THAT(b, WithinAbs(0.0, 1e-12));
    }
    SECTION("doubling the distance divides both constants by 8") {
        const Eigen::Vector3d p(1.3e-10, 2.1e-10, -0.7e-10);
        const auto [a1, b1] = dipolar_constants(p, kGammaEr, kGammaW, x);
        const auto [a2, b2] = dipolar_constants(2.0 * p, kGammaEr, kGammaW, x);
        CHECK_THAT(a1 / a2, WithinRel(8.0, 1e-12));
        CHECK_THAT(b1 / b2, WithinRel(8.0, 1e-12));
    }
    SECTION("magic angle zeroes the axial constant") {
        const auto [a, b] = dipolar_constants(Eigen::Vector3d(1e-10, 0, std::sqrt(2.0) * 1e-10),
                                              kGammaEr, kGammaW, x);
        CHECK_THAT(a, WithinAbs(0.0, 1e-6));
        CHECK(std::abs(b) > 1e3);
    }
    SECTION("degenerate inputs are rejected") {
        CHECK_THROWS_AS(dipolar_constants(Eigen::Vector3d::Zero(), kGammaEr, kGammaW, x),
                        std::invalid_argument);
        CHECK_THROWS_AS(dipolar_constants(r * x, kGammaEr, kGammaW, Eigen::Vector3d::Zero()),
                        std::invalid_argument);
    }
}

TEST_CASE("tungsten site table yields the expected hyperfine constants") {
    const auto table = load_lattice_sites(std::string(FDEPR_DATA_DIR) + "/tungsten_sites.csv");
    REQUIRE(table.size() == 15);
    CHECK_THAT(table[0].distance, WithinRel(3.70736e-10, 1e-5));
    CHECK_THAT(table[14].distance, WithinRel(6.51533e-10, 1e-5));
    CHECK(table[0].shell == 1);
    CHECK(table[14].shell == 4);

    // (A, B) in Hz for B0 along x, in the table's distance order
    const std::vector<std::pair<double, double>> expected = {
        {-137278.3, 411835.0},  {-137278.3, 411835.0}, {-137278.3, -411835.0},
        {-137278.3, -411835.0}, {-91406.70, 361455.5}, {241770.4, 0.0},
        {241770.4, 0.0},        {-91406.70, -361455.5}, {76023.49, 0.0},
        {76023.49, 0.0},        {-47686.04, 72496.48}, {-47686.04, 72496.48},
        {26016.69, 55898.41},   {26016.69, 55898.41},  {26016.69, -55898.41}};
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto [a, b] = dipolar_constants(table[i].position, kGammaEr, kGammaW,
                                              Eigen::Vector3d::UnitX());
        CAPTURE(i);
        CHECK_THAT(a / constants::two_pi, WithinAbs(expected[i].first, 0.5));
        CHECK_THAT(b / constants::two_pi, WithinAbs(expected[i].second, 0.5));
    }

    const auto sites = tungsten_sites();
    REQUIRE(sites.size() == 15);
    for (std::size_t i = 1; i < sites.size(); ++i)
        CHECK(std::hypot(sites[i - 1].a, sites[i - 1].b) >=
              std::hypot(sites[i].a, sites[i].b) - 1e-9);
    // nearest shell leads the ranking; its branch splitting resolves in a
    // couple of microseconds, the scale of the observed oscillation damping
    CHECK_THAT(sites[0].a / constants::two_pi, WithinAbs(-137278.3, 0.5));
    const double split_hz = 2.0 * sites[0].half_splitting() / constants::two_pi;
    CHECK(1.0 / split_hz > 1e-6);
    CHECK(1.0 / split_hz < 10e-6);
    // the outer shell with transverse character outranks the purely axial one
    CHECK_THAT(sites[8].a / constants::two_pi, WithinAbs(-47686.04, 0.5));
    CHECK_THAT(sites[10].a / constants::two_pi, WithinAbs(76023.49, 0.5));

    CHECK_THROWS_AS(load_lattice_sites("/nonexistent/sites.csv"), ConfigError);
}

TEST_CASE("configuration enumeration matches the binomial occupation model") {
    const BathConfig cfg;
    const ConfigurationSet set = enumerate_configs(cfg);
    REQUIRE(set.configs.size() == 576);

    std::array<int, 4> by_size{0, 0, 0, 0};
    double wsum = 0.0;
    for (const auto& c : set.configs) {
        REQUIRE(c.sites.size() <= 3);
        ++by_size[c.sites.size()];
        wsum += c.weight;
    }
    CHECK(by_size[0] == 1);
    CHECK(by_size[1] == 15);
    CHECK(by_size[2] == 105);
    CHECK(by_size[3] == 455);
    CHECK_THAT(wsum, WithinAbs(1.0, 1e-12));
    CHECK_THAT(set.retained_mass, WithinRel(0.8523547144, 1e-9));
    CHECK_THAT(set.configs[0].weight, WithinRel(std::pow(0.86, 15) / 0.8523547144, 1e-9));

    SECTION("no occupation allowed leaves the single empty configuration") {
        BathConfig none;
        none.max_occupied = 0;
        const ConfigurationSet only = enumerate_configs(none);
        REQUIRE(only.configs.size() == 1);
        CHECK(only.configs[0].sites.empty());
        CHECK_THAT(only.configs[0].weight, WithinAbs(1.0, 1e-15));
    }
    SECTION("invalid configs are rejected") {
        BathConfig bad;
        bad.max_occupied = 16;
        CHECK_THROWS_AS(enumerate_configs(bad), std::invalid_argument);
        bad = BathConfig{};
        bad.abundance = 1.2;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = BathConfig{};
        bad.gamma_w = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("empty configuration gives undamped resonant Rabi oscillation") {
    const double omega = constants::two_pi * 500e3;
    const auto t = linspace(0.0, 20e-6, 801);
    const auto p = simulate_driven_spin({}, omega, 0.0, t);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double s = std::sin(0.5 * omega * t[i]);
        CHECK_THAT(p[i], WithinAbs(s * s, 1e-10));
    }
}

TEST_CASE("dense propagation matches the exact branch decomposition") {
    const double omega = constants::two_pi * 500e3;
    const auto t = linspace(0.0, 15e-6, 601);

    const NuclearSite s1 = site_ab(constants::two_pi * 50e3, constants::two_pi * 50e3);
    const NuclearSite s2 = site_ab(-constants::two_pi * 137.3e3, constants::two_pi * 411.8e3);
    const NuclearSite s3 = site_ab(constants::two_pi * 241.8e3, 0.0);

    const std::vector<std::vector<NuclearSite>> configs = {{s1}, {s2, s3}, {s1, s2, s3}};
    for (const double delta : {0.0, -constants::two_pi * 120e3}) {
        for (const auto& cfg : configs) {
            const auto dense = simulate_driven_spin(cfg, omega, delta, t);
            const auto block = branch_rabi_curve(cfg, omega, delta, t);
            double worst = 0.0;
            for (std::size_t i = 0; i < t.size(); ++i)
                worst = std::max(worst, std::abs(dense[i] - block[i]));
            CAPTURE(cfg.size(), delta);
            CHECK(worst < 1e-10);
        }
    }

    SECTION("purely axial couplings oscillate at the shifted frequencies") {
        const double a1 = constants::two_pi * 80e3;
        const double a2 = constants::two_pi * 150e3;
        const double delta = constants::two_pi * 60e3;
        const auto dense = simulate_driven_spin(
            {site_ab(a1, 0.0), site_ab(a2, 0.0)}, omega, delta, t);
        for (std::size_t i = 0; i < t.size(); ++i) {
            double manual = 0.0;
            for (const double u : {0.5 * a1, -0.5 * a1})
                for (const double v : {0.5 * a2, -0.5 * a2}) {
                    const double w2 = omega * omega + (u + v - delta) * (u + v - delta);
                    manual += 0.25 * (omega * omega / w2) * std::pow(std::sin(0.5 * std::sqrt(w2) * t[i]), 2);
                }
            CHECK_THAT(dense[i], WithinAbs(manual, 1e-10));
        }
    }
}

TEST_CASE("single detuned nucleus produces a beat that collapses and revives") {
    const NuclearSite site = site_ab(constants::two_pi * 50e3, constants::two_pi * 50e3);
    const double omega = constants::two_pi * 500e3;
    const double delta = constants::two_pi * 200e3;
    const auto t = linspace(0.0, 40e-6, 8001);
    const auto p = simulate_driven_spin({site}, omega, delta, t);

    std::vector<double> wmax(20, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const int w = static_cast<int>(t[i] / 2e-6);
        if (w < 20) wmax[w] = std::max(wmax[w], p[i]);
    }
    CHECK_THAT(wmax[0], WithinAbs(0.859133171, 1e-6));
    const double early_min = *std::min_element(wmax.begin(), wmax.begin() + 5);
    CHECK(early_min < 0.9);
    CHECK_THAT(early_min, WithinAbs(0.762907050, 1e-6));
    CHECK_THAT(wmax[9], WithinAbs(0.459549711, 1e-6));   // collapse near the half-beat
    CHECK_THAT(wmax[19], WithinAbs(0.859522711, 1e-6));  // full revival, not decay
}

TEST_CASE("driven-spin simulator enforces its domain") {
    const auto t = linspace(0.0, 1e-6, 11);
    const NuclearSite s = site_ab(1e3, 1e3);
    CHECK_THROWS_AS(simulate_driven_spin({s, s, s, s}, 1e6, 0.0, t), std::invalid_argument);
    NuclearSite bad = s;
    bad.a = std::nan("");
    CHECK_THROWS_AS(simulate_driven_spin({bad}, 1e6, 0.0, t), std::invalid_argument);
    CHECK_THROWS_AS(simulate_driven_spin({s}, std::nan(""), 0.0, t), std::invalid_argument);

    // three-nucleus case stays unitary and bounded
    const auto sites = tungsten_sites();
    const auto p = simulate_driven_spin({sites[0], sites[4], sites[8]},
                                        constants::two_pi * 500e3,
                                        constants::two_pi * 100e3, linspace(0.0, 10e-6, 401));
    for (const double v : p) {
        CHECK(v >= -1e-12);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("purcell detuning grid is normalized and symmetric") {
    const DetuningGrid g = purcell_detuning_grid(2.26e6, 21);
    REQUIRE(g.delta.size() == 21);
    CHECK_THAT(std::accumulate(g.weight.begin(), g.weight.end(), 0.0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(g.delta.front(), WithinRel(-2.26e6, 1e-12));
    CHECK_THAT(g.delta.back(), WithinRel(2.26e6, 1e-12));
    for (int i = 0; i < 10; ++i) {
        CHECK_THAT(g.weight[i], WithinRel(g.weight[20 - i], 1e-12));
        CHECK(g.weight[i] < g.weight[i + 1]);
    }
    CHECK_THAT(g.weight.front() / g.weight[10], WithinRel(0.2, 1e-12));

    const DetuningGrid one = purcell_detuning_grid(1e6, 1);
    REQUIRE(one.delta.size() == 1);
    CHECK(one.delta[0] == 0.0);
    CHECK(one.weight[0] == 1.0);

    CHECK_THROWS_AS(purcell_detuning_grid(0.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(purcell_detuning_grid(1e6, 0), std::invalid_argument);
}

TEST_CASE("bath-averaged oscillations damp while single configurations revive") {
    const auto sites = tungsten_sites();
    const BathConfig cfg;
    const double omega = constants::two_pi * 0.5e6;
    const double kappa = 2.26e6;
    const double period = constants::two_pi / omega;
    const auto t = linspace(0.0, 10 * period, 2001);

    const auto avg = bath_averaged_rabi(cfg, sites, omega, kappa, t, 21);
    const auto c_avg = period_contrasts(t, avg, period, 10);
    const std::vector<double> ratios_avg = {1.0,      0.770659, 0.584573, 0.500188, 0.451925,
                                            0.413846, 0.380671, 0.354837, 0.335197, 0.318031};
    for (int k = 0; k < 10; ++k) {
        CAPTURE(k);
        CHECK_THAT(c_avg[k] / c_avg[0], WithinAbs(ratios_avg[k], 1e-5));
    }
    for (int k = 1; k < 10; ++k) CHECK(c_avg[k] < c_avg[k - 1]);

    // bath-only average (single resonant detuning) partially revives ...
    const auto bath_only = bath_averaged_rabi(cfg, sites, omega, kappa, t, 1);
    const auto c_b = period_contrasts(t, bath_only, period, 10);
    const std::vector<double> ratios_bath = {1.0,      0.872830, 0.722474, 0.612398, 0.490087,
                                             0.402716, 0.377138, 0.384720, 0.421147, 0.452855};
    for (int k = 0; k < 10; ++k) {
        CAPTURE(k);
        CHECK_THAT(c_b[k] / c_b[0], WithinAbs(ratios_bath[k], 1e-5));
    }
    CHECK(c_b[9] / c_b[0] > c_b[6] / c_b[0] + 0.05);

    // ... and an individual configuration keeps full contrast (unitary, no decay)
    const auto single = branch_rabi_curve({sites[0]}, omega, 0.0, t);
    const auto c_one = period_contrasts(t, single, period, 10);
    for (int k = 0; k < 10; ++k) CHECK(c_one[k] > 0.9 * c_one[0]);
}

TEST_CASE("bath average reduces to the detuning-only average when couplings vanish") {
    const double omega = constants::two_pi * 0.5e6;
    const double kappa = 2.26e6;
    const auto t = linspace(0.0, 20e-6, 101);
    std::vector<NuclearSite> silent(15);

    const auto avg = bath_averaged_rabi(BathConfig{}, silent, omega, kappa, t, 21);
    const DetuningGrid g = purcell_detuning_grid(kappa, 21);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double manual = 0.0;
        for (std::size_t d = 0; d < g.delta.size(); ++d) {
            const double g2 = omega * omega + g.delta[d] * g.delta[d];
            manual += g.weight[d] * (omega * omega / g2) *
                      std::pow(std::sin(0.5 * std::sqrt(g2) * t[i]), 2);
        }
        CHECK_THAT(avg[i], WithinAbs(manual, 1e-9));
    }
}

TEST_CASE("bath average is invariant under site relabeling") {
    const auto sites = tungsten_sites();
    std::vector<NuclearSite> reversed(sites.rbegin(), sites.rend());
    const double omega = constants::two_pi * 0.5e6;
    const auto t = linspace(0.0, 20e-6, 201);

    const auto a = bath_averaged_rabi(BathConfig{}, sites, omega, 2.26e6, t, 5);
    const auto b = bath_averaged_rabi(BathConfig{}, reversed, omega, 2.26e6, t, 5);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK_THAT(a[i], WithinAbs(b[i], 1e-9));
}

TEST_CASE("higher abundance damps the averaged oscillation faster") {
    const auto sites = tungsten_sites();
    const double omega = constants::two_pi * 0.5e6;
    const double period = constants::two_pi / omega;
    const auto t = linspace(0.0, 10 * period, 1001);

    const std::vector<double> expected = {0.518476, 0.450384, 0.410467};
    std::vector<double> metric;
    for (const double p : {0.05, 0.14, 0.30}) {
        BathConfig cfg;
        cfg.abundance = p;
        const auto avg = bath_averaged_rabi(cfg, sites, omega, 2.26e6, t, 11);
        const auto c = period_contrasts(t, avg, period, 10);
        metric.push_back(c[4] / c[0]);
    }
    for (std::size_t i = 0; i < metric.size(); ++i)
        CHECK_THAT(metric[i], WithinAbs(expected[i], 1e-4));
    CHECK(metric[0] > metric[1] + 0.01);
    CHECK(metric[1] > metric[2] + 0.01);

    SECTION("site-list size must match the config") {
        BathConfig cfg;
        cfg.n_sites = 14;
        CHECK_THROWS_WITH(bath_averaged_rabi(cfg, sites, omega, 2.26e6, t, 5),
                          ContainsSubstring("site list"));
    }
}
