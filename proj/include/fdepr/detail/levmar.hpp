#pragma once

// Damped least-squares (Levenberg-Marquardt) with analytic Jacobians.
// Accepted steps never increase chi^2; standard errors come from the
// curvature matrix scaled by the reduced chi^2.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace fdepr::detail {

struct LevMarResult {
    Eigen::VectorXd p;
    Eigen::VectorXd perr;
    double chi2 = 0.0;
    double chi2_initial = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// model(x, p) -> f and fills grad[0..n_par)
template <class Model>
LevMarResult levmar(const Model& model, int n_par, const std::vector<double>& x,
                    const std::vector<double>& y, const std::vector<double>& wgt,
                    Eigen::VectorXd p0, int max_iter = 300) {
    const auto n = static_cast<int>(x.size());
    std::vector<double> grad(n_par);

    auto assemble = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr) {
        jtj.setZero();
        jtr.setZero();
        double chi2 = 0.0;
        Eigen::VectorXd row(n_par);
        for (int i = 0; i < n; ++i) {
            const double f = model(x[i], p, grad.data());
            const double r = wgt[i] * (y[i] - f);
            for (int j = 0; j < n_par; ++j) row(j) = wgt[i] * grad[j];
            jtj.noalias() += row * row.transpose();
            jtr.noalias() += row * r;
            chi2 += r * r;
        }
        return chi2;
    };
    auto chi2_only = [&](const Eigen::VectorXd& p) {
        double chi2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r = wgt[i] * (y[i] - model(x[i], p, grad.data()));
            chi2 += r * r;
        }
        return chi2;
    };

    LevMarResult result;
    result.p = p0;
    Eigen::MatrixXd jtj(n_par, n_par);
    Eigen::VectorXd jtr(n_par);
    double chi2 = assemble(result.p, jtj, jtr);
    result.chi2_initial = chi2;

    double lambda = 1e-3;
    int small_steps = 0;
    for (int iter = 0; iter < max_iter; ++iter) {
        result.iterations = iter + 1;
        Eigen::MatrixXd damped = jtj;
        for (int j = 0; j < n_par; ++j)
            damped(j, j) += lambda * std::max(jtj(j, j), 1e-30);
        const Eigen::VectorXd step = damped.ldlt().solve(jtr);
        if (!step.allFinite()) {
            lambda *= 10.0;
            if (lambda > 1e14) break;
            continue;
        }
        const Eigen::VectorXd p_try = result.p + step;
        const double chi2_try = chi2_only(p_try);
        if (std::isfinite(chi2_try) && chi2_try <= chi2) {
            const double drop = (chi2 - chi2_try) / std::max(chi2, 1e-300);
            double rel_step = 0.0;
            for (int j = 0; j < n_par; ++j)
                rel_step = std::max(rel_step, std::abs(step(j)) / (std::abs(result.p(j)) + 1e-30));
            result.p = p_try;
            chi2 = assemble(result.p, jtj, jtr);
            lambda = std::max(lambda / 3.0, 1e-12);
            if (drop < 1e-12 || rel_step < 1e-11) {
                if (++small_steps >= 2) {
                    result.converged = true;
                    break;
                }
            } else {
                small_steps = 0;
            }
        } else {
            lambda *= 8.0;
            if (lambda > 1e14) {
                result.converged = small_steps > 0;
                break;
            }
        }
    }
    result.chi2 = chi2;

    result.perr = Eigen::VectorXd::Zero(n_par);
    const double dof = std::max(n - n_par, 1);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible()) {
        const Eigen::MatrixXd cov = lu.inverse() * (chi2 / dof);
        for (int j = 0; j < n_par; ++j) result.perr(j) = std::sqrt(std::max(cov(j, j), 0.0));
    }
    return result;
}

}  // namespace fdepr::detail
