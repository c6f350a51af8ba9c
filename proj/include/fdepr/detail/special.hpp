#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

namespace fdepr::detail {

/// Ci(x) = gamma + ln x + integral_0^x (cos t - 1)/t dt, x > 0.
/// Power series for small x, modified Lentz continued fraction for E1(ix)
/// beyond; both branches are accurate to ~1e-15.
inline double cosine_integral(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("cosine_integral: requires x > 0");
    constexpr double euler_gamma = 0.57721566490153286061;
    if (x <= 2.0) {
        double sum = 0.0, term = 1.0;
        const double x2 = x * x;
        for (int k = 1; k <= 40; ++k) {
            term *= -x2 / ((2.0 * k) * (2.0 * k - 1.0));
            const double add = term / (2.0 * k);
            sum += add;
            if (std::abs(add) < 1e-18 * (std::abs(sum) + 1.0)) break;
        }
        return euler_gamma + std::log(x) + sum;
    }
    std::complex<double> b(1.0, x), c(1.0 / 1e-300, 0.0);
    std::complex<double> d = 1.0 / b, h = d;
    for (int i = 1; i <= 200; ++i) {
        const double a = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        const std::complex<double> del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    h *= std::complex<double>(std::cos(x), -std::sin(x));
    return -h.real();
}

}  // namespace fdepr::detail
