#pragma once

// Model fitting for decay tails, (skewed) Lorentzian lines and damped Rabi
// oscillations. Decay times and widths are fitted in log space so they stay
// positive; quoted errors are mapped back to the physical parameter.
//
// The Rabi fitter seeds its frequency from the spectrum of the trend-
// subtracted data and validates the oscillation against a nested trend-only
// fit: if adding the oscillatory term does not reduce chi^2 materially, the
// data carry no oscillation and a dedicated error is raised.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "detail/levmar.hpp"
#include "errors.hpp"
#include "units.hpp"

namespace fdepr {

enum class Weighting { uniform, poisson };

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> errors;
    std::vector<std::string> notes;
    double residual_norm = 0.0;          // sqrt of the weighted chi^2
    double initial_residual_norm = 0.0;  // same, at the starting guess
    bool converged = false;

    double value(std::string_view name) const { return at(name, values); }
    double error(std::string_view name) const { return at(name, errors); }

  private:
    double at(std::string_view name, const std::vector<double>& v) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return v[i];
        throw std::invalid_argument("FitResult: no parameter named " + std::string(name));
    }
};

struct RabiModelParams {
    double amplitude = 0.0;   // counts
    double omega_r = 0.0;     // rad/s
    double t_c1 = 0.0;        // s
    double background = 0.0;  // counts
    double t_c2 = 0.0;        // s
    FitResult fit;
};

namespace detail {

inline std::vector<double> fit_weights(const std::vector<double>& y, Weighting w) {
    std::vector<double> out(y.size(), 1.0);
    if (w == Weighting::poisson)
        for (std::size_t i = 0; i < y.size(); ++i)
            out[i] = 1.0 / std::sqrt(std::max(1.0 + y[i], 0.25));
    return out;
}

// y = p0 exp(-t/T) + p2, T = exp(p1)
struct ExpModel {
    double operator()(double t, const Eigen::VectorXd& p, double* grad) const {
        const double tau = std::exp(p(1));
        const double e = std::exp(-t / tau);
        grad[0] = e;
        grad[1] = p(0) * e * t / tau;
        grad[2] = 1.0;
        return p(0) * e + p(2);
    }
};

inline LevMarResult exp_trend_fit(const std::vector<double>& t, const std::vector<double>& y,
                                  const std::vector<double>& wgt) {
    const double span = t.back() - t.front();
    const double c0 = y.back();
    double a0 = y.front() - c0;
    double tau0 = span / 3.0;
    if (a0 != 0.0) {
        for (std::size_t i = 0; i < t.size(); ++i)
            if (std::abs(y[i] - c0) <= std::abs(a0) * 0.3678794411714423) {
                if (t[i] > t.front()) tau0 = t[i] - t.front();
                break;
            }
    }
    Eigen::VectorXd p0(3);
    p0 << a0, std::log(tau0), c0;
    return levmar(ExpModel{}, 3, t, y, wgt, p0);
}

}  // namespace detail

/// A exp(-t/T) + c on points with window_lo <= t <= window_hi
inline FitResult fit_exponential(const std::vector<double>& t, const std::vector<double>& y,
                                 double window_lo = -std::numeric_limits<double>::infinity(),
                                 double window_hi = std::numeric_limits<double>::infinity(),
                                 Weighting weighting = Weighting::uniform) {
    if (t.size() != y.size()) throw std::invalid_argument("fit_exponential: size mismatch");
    std::vector<double> tw, yw;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] >= window_lo && t[i] <= window_hi) {
            tw.push_back(t[i]);
            yw.push_back(y[i]);
        }
    if (tw.size() < 5)
        throw std::invalid_argument("fit_exponential: need at least 5 points in the window");

    double lo = yw.front(), hi = yw.front();
    for (const double v : yw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = std::max(std::abs(lo), std::abs(hi));
    if (hi - lo <= 1e-12 * (scale + 1e-300))
        throw ComputeError("fit_exponential: constant trace, decay time is unidentifiable");

    const auto lm = detail::exp_trend_fit(tw, yw, detail::fit_weights(yw, weighting));
    if (!lm.converged) throw ComputeError("fit_exponential did not converge");

    FitResult out;
    out.names = {"amplitude", "decay_time_s", "offset"};
    const double tau = std::exp(lm.p(1));
    out.values = {lm.p(0), tau, lm.p(2)};
    out.errors = {lm.perr(0), tau * lm.perr(1), lm.perr(2)};
    out.residual_norm = std::sqrt(lm.chi2);
    out.initial_residual_norm = std::sqrt(lm.chi2_initial);
    out.converged = true;
    if (lm.p(0) < 0.0) out.notes.push_back("negative amplitude");
    return out;
}

namespace detail {

// y = a + h / (1 + u^2), u = (x - x0)/w(x), w = w0 (1 + s tanh((x - x0)/w0));
// parameters (x0, ln w0, h, a[, s])
struct LorentzModel {
    bool with_skew = false;
    double fixed_skew = 0.0;

    double operator()(double x, const Eigen::VectorXd& p, double* grad) const {
        const double w0 = std::exp(p(1));
        const double s = with_skew ? p(4) : fixed_skew;
        const double d = x - p(0);
        const double th = std::tanh(d / w0);
        const double sech2 = 1.0 - th * th;
        const double w = w0 * (1.0 + s * th);
        const double u = d / w;
        const double den = 1.0 + u * u;
        const double dfdu = -2.0 * p(2) * u / (den * den);
        grad[0] = dfdu * (-w + d * s * sech2) / (w * w);
        grad[1] = dfdu * (-(d / (w * w)) * (w - s * sech2 * d));
        grad[2] = 1.0 / den;
        grad[3] = 1.0;
        if (with_skew) grad[4] = dfdu * (-(d / (w * w)) * w0 * th);
        return p(3) + p(2) / den;
    }
};

struct LineInit {
    double x0, w0, h0, a0;
};

inline LineInit line_init(const std::vector<double>& x, const std::vector<double>& y) {
    std::size_t imax = 0, imin = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (y[i] > y[imax]) imax = i;
        if (y[i] < y[imin]) imin = i;
    }
    double med = 0.0;
    for (const double v : y) med += v;
    med /= y.size();
    const bool dip = med - y[imin] > y[imax] - med;
    LineInit init;
    init.a0 = dip ? y[imax] : y[imin];
    const std::size_t ipk = dip ? imin : imax;
    init.x0 = x[ipk];
    init.h0 = y[ipk] - init.a0;

    const double half = init.a0 + init.h0 / 2.0;
    double wl = 0.0, wr = 0.0;
    for (std::size_t i = ipk; i-- > 0;)
        if ((y[i] - half) * (init.h0 > 0 ? 1.0 : -1.0) < 0.0) {
            wl = init.x0 - x[i];
            break;
        }
    for (std::size_t i = ipk + 1; i < x.size(); ++i)
        if ((y[i] - half) * (init.h0 > 0 ? 1.0 : -1.0) < 0.0) {
            wr = x[i] - init.x0;
            break;
        }
    init.w0 = wl > 0.0 && wr > 0.0 ? 0.5 * (wl + wr) : (x.back() - x.front()) / 6.0;
    if (wl > 0.0 && wr == 0.0) init.w0 = wl;
    if (wr > 0.0 && wl == 0.0) init.w0 = wr;
    return init;
}

inline FitResult line_fit(const std::vector<double>& x, const std::vector<double>& y,
                          bool with_skew, double dnu_dB, Weighting weighting) {
    if (x.size() != y.size()) throw std::invalid_argument("lineshape fit: size mismatch");
    if (x.size() < 7)
        throw std::invalid_argument("lineshape fit: need at least 7 points");

    const LineInit init = line_init(x, y);
    const int n_par = with_skew ? 5 : 4;
    Eigen::VectorXd p0(n_par);
    p0(0) = init.x0;
    p0(1) = std::log(init.w0);
    p0(2) = init.h0;
    p0(3) = init.a0;
    if (with_skew) p0(4) = 0.0;

    LorentzModel model;
    model.with_skew = with_skew;
    const auto lm = levmar(model, n_par, x, y, fit_weights(y, weighting), p0);
    if (!lm.converged) throw ComputeError("lineshape fit did not converge");

    const double w = std::exp(lm.p(1));
    if (x.back() - x.front() < 2.0 * w)
        throw ComputeError("lineshape fit: window narrower than two linewidths");

    FitResult out;
    out.names = {"center", "width", "height", "offset"};
    out.values = {lm.p(0), w, lm.p(2), lm.p(3)};
    out.errors = {lm.perr(0), w * lm.perr(1), lm.perr(2), lm.perr(3)};
    if (with_skew) {
        out.names.push_back("skewness");
        out.values.push_back(lm.p(4));
        out.errors.push_back(lm.perr(4));
        out.names.push_back("skew_width");  // skewness x FWHM
        out.values.push_back(lm.p(4) * 2.0 * w);
        out.errors.push_back(std::hypot(2.0 * w * lm.perr(4), 2.0 * lm.p(4) * w * lm.perr(1)));
    }
    if (dnu_dB > 0.0) {  // field axis: report the FWHM in frequency units
        out.names.push_back("gamma_inh_hz");
        out.values.push_back(2.0 * w * dnu_dB);
        out.errors.push_back(2.0 * w * lm.perr(1) * dnu_dB);
    }
    out.residual_norm = std::sqrt(lm.chi2);
    out.initial_residual_norm = std::sqrt(lm.chi2_initial);
    out.converged = true;
    return out;
}

}  // namespace detail

/// a + h/(1 + ((x-x0)/w)^2); w is the half width at half maximum. Pass the
/// line gradient dnu_dB (Hz/T) when x is a field axis to also get the full
/// width in frequency units ("gamma_inh_hz").
inline FitResult fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y,
                                double dnu_dB = 0.0, Weighting weighting = Weighting::uniform) {
    return detail::line_fit(x, y, false, dnu_dB, weighting);
}

/// Lorentzian whose width drifts across the center:
/// w(x) = w0 (1 + skew * tanh((x-x0)/w0)). fix_skew pins the skew to zero,
/// reproducing fit_lorentzian exactly.
inline FitResult fit_skewed_lorentzian(const std::vector<double>& x, const std::vector<double>& y,
                                       bool fix_skew = false, double dnu_dB = 0.0,
                                       Weighting weighting = Weighting::uniform) {
    return detail::line_fit(x, y, !fix_skew, dnu_dB, weighting);
}

namespace detail {

// y = A sin^2(W t/2) exp(-t/T1) + B (1 - exp(-t/T2));
// parameters (A, W, ln T1, B, ln T2)
struct RabiModel {
    double operator()(double t, const Eigen::VectorXd& p, double* grad) const {
        const double t1 = std::exp(p(2));
        const double t2 = std::exp(p(4));
        const double s = std::sin(p(1) * t / 2.0);
        const double e1 = std::exp(-t / t1);
        const double e2 = std::exp(-t / t2);
        grad[0] = s * s * e1;
        grad[1] = p(0) * t / 2.0 * std::sin(p(1) * t) * e1;
        grad[2] = p(0) * s * s * e1 * t / t1;
        grad[3] = 1.0 - e2;
        grad[4] = -p(3) * e2 * t / t2;
        return p(0) * s * s * e1 + p(3) * (1.0 - e2);
    }
};

struct FrequencyScan {
    std::vector<double> candidates;  // start values, tallest spectral peak first
    double w_lo = 0.0;
    double nyquist = 0.0;
};

/// interior local maxima of the Hann-windowed spectrum, tallest first
inline FrequencyScan frequency_candidates(const std::vector<double>& t,
                                          const std::vector<double>& resid) {
    const double span = t.back() - t.front();
    double dt_min = span;
    for (std::size_t i = 1; i < t.size(); ++i) dt_min = std::min(dt_min, t[i] - t[i - 1]);

    double mean = 0.0;
    for (const double r : resid) mean += r;
    mean /= resid.size();

    FrequencyScan scan;
    scan.w_lo = 2.0 * constants::pi * 1.25 / span;
    scan.nyquist = constants::pi / dt_min;
    const int n_scan = 600;
    const double w_hi = std::max(scan.nyquist / 3.0, 3.0 * scan.w_lo);
    std::vector<double> spec(n_scan);
    for (int k = 0; k < n_scan; ++k) {
        const double w = scan.w_lo + (w_hi - scan.w_lo) * k / (n_scan - 1);
        std::complex<double> f = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double hann = std::pow(std::sin(constants::pi * (t[i] - t.front()) / span), 2);
            f += (resid[i] - mean) * hann * std::polar(1.0, -w * t[i]);
        }
        spec[k] = std::abs(f);
    }
    std::vector<std::pair<double, double>> peaks;
    for (int k = 1; k + 1 < n_scan; ++k)
        if (spec[k] > spec[k - 1] && spec[k] >= spec[k + 1])
            peaks.emplace_back(spec[k], scan.w_lo + (w_hi - scan.w_lo) * k / (n_scan - 1));
    std::sort(peaks.rbegin(), peaks.rend());

    auto& out = scan.candidates;
    for (std::size_t k = 0; k < peaks.size() && k < 3; ++k) out.push_back(peaks[k].second);
    if (out.empty()) out = {2.0 * constants::two_pi / span, 2.0 * constants::two_pi / span * 2.5};
    out.push_back(out.front() * 0.5);
    out.push_back(out.front() * 2.0);
    out.resize(5, out.front());
    return scan;
}

}  // namespace detail

/// A sin^2(Omega_R t/2) e^(-t/T_c1) + B (1 - e^(-t/T_c2)) on count data
inline RabiModelParams fit_rabi(const std::vector<double>& t, const std::vector<double>& y,
                                Weighting weighting = Weighting::poisson) {
    if (t.size() != y.size()) throw std::invalid_argument("fit_rabi: size mismatch");
    if (t.size() < 10) throw std::invalid_argument("fit_rabi: need at least 10 points");
    const auto wgt = detail::fit_weights(y, weighting);

    double lo = y.front(), hi = y.front();
    for (const double v : y) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double ptp = hi - lo;
    if (ptp <= 1e-12 * (std::abs(hi) + 1e-300))
        throw ComputeError("fit_rabi: no oscillation detected (constant input)");

    const auto trend = detail::exp_trend_fit(t, y, wgt);
    std::vector<double> resid(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        double g[3];
        resid[i] = y[i] - (trend.converged ? detail::ExpModel{}(t[i], trend.p, g)
                                           : (hi + lo) / 2.0);
    }
    const auto scan = detail::frequency_candidates(t, resid);

    double tail = 0.0;
    std::size_t n_tail = 0;
    for (std::size_t i = (3 * y.size()) / 4; i < y.size(); ++i) {
        tail += y[i];
        ++n_tail;
    }
    const double b0 = std::max(tail / n_tail, 1e-3 * ptp);
    const double span = t.back() - t.front();

    detail::LevMarResult best;
    best.chi2 = std::numeric_limits<double>::infinity();
    for (const double w0 : scan.candidates) {
        Eigen::VectorXd p0(5);
        p0 << ptp, w0, std::log(span / 3.0), b0, std::log(span / 3.0);
        const auto lm = detail::levmar(detail::RabiModel{}, 5, t, y, wgt, p0);
        const double w_fit = std::abs(lm.p(1));
        if (lm.converged && lm.chi2 < best.chi2 && w_fit <= scan.nyquist &&
            w_fit >= 0.5 * scan.w_lo)
            best = lm;
    }
    if (!std::isfinite(best.chi2)) throw ComputeError("fit_rabi did not converge");

    // nested comparison: the oscillatory term must carry real signal beyond
    // what a plain exponential trend already explains
    const double trend_floor = y.size() * std::pow(1e-10 * ptp, 2);
    if (!(std::abs(best.p(0)) >= 0.02 * ptp && trend.chi2 > trend_floor &&
          best.chi2 <= 0.95 * trend.chi2))
        throw ComputeError("fit_rabi: no oscillation detected");

    RabiModelParams out;
    out.amplitude = best.p(0);
    out.omega_r = std::abs(best.p(1));
    out.t_c1 = std::exp(best.p(2));
    out.background = best.p(3);
    out.t_c2 = std::exp(best.p(4));
    out.fit.names = {"amplitude", "omega_r_rad_s", "t_c1_s", "background", "t_c2_s"};
    out.fit.values = {out.amplitude, out.omega_r, out.t_c1, out.background, out.t_c2};
    out.fit.errors = {best.perr(0), best.perr(1), out.t_c1 * best.perr(2), best.perr(3),
                      out.t_c2 * best.perr(4)};
    out.fit.residual_norm = std::sqrt(best.chi2);
    out.fit.initial_residual_norm = std::sqrt(best.chi2_initial);
    out.fit.converged = true;
    return out;
}

/// g0_eff = Omega_R / (2 sqrt(n_bar))
inline double g0_from_rabi(double omega_r, double n_bar) {
    if (!(n_bar > 0.0)) throw std::invalid_argument("g0_from_rabi: n_bar must be > 0");
    if (omega_r < 0.0) throw std::invalid_argument("g0_from_rabi: omega_r must be >= 0");
    return omega_r / (2.0 * std::sqrt(n_bar));
}

/// g0_eff = sqrt(kappa Gamma_R) / 2, inverse of the resonant emission rate
inline double g0_from_purcell(double gamma_r, double kappa) {
    if (!(gamma_r > 0.0) || !(kappa > 0.0))
        throw std::invalid_argument("g0_from_purcell: rates must be > 0");
    return std::sqrt(kappa * gamma_r) / 2.0;
}

}  // namespace fdepr
