#include "pibsde/strategy.hpp"

#include "pibsde/bsde.hpp"
#include "pibsde/errors.hpp"
#include "pibsde/parallel.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace pibsde {

StrategyRecord pi_partial(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                          const Eigen::VectorXd& alpha_over_xi) {
    const Eigen::Index d = hhat.size();
    if (sigma.rows() != d || sigma.cols() != d || alpha_over_xi.size() != d) {
        throw ContractViolation("pi_partial inputs have mismatched dimensions");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
    if (!lu.isInvertible()) throw InvalidModel("sigma is singular");
    StrategyRecord rec;
    const Eigen::MatrixXd inv_t = lu.inverse().transpose();
    const Eigen::VectorXd lambda = lu.solve((hhat.array() - r).matrix());
    rec.myopic = inv_t * lambda / gamma;  // Sigma^{-1} = sigma^{-T} sigma^{-1}
    rec.hedge = inv_t * alpha_over_xi;
    rec.pi = rec.myopic + rec.hedge;
    return rec;
}

StrategyRecord pi_full(const Eigen::VectorXd& y, double chi, const Eigen::VectorXd& psi, const GeneralModelSpec& spec,
                       double gamma) {
    if (!(chi > 0.0)) throw ContractViolation("pi_full requires chi > 0");
    Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance());
    if (llt.info() != Eigen::Success) throw InvalidModel("sigma sigma^T is singular");
    StrategyRecord rec;
    rec.myopic = llt.solve((spec.h(y).array() - spec.r).matrix()) / gamma;
    rec.hedge = llt.solve(spec.sigma_y * psi) / (gamma * chi);
    rec.pi = rec.myopic + rec.hedge;
    return rec;
}

double value_partial(double t, double x, double G_t, double gamma, double r, double T) {
    if (!(x > 0.0) || !(G_t > 0.0)) throw ContractViolation("value_partial requires x > 0 and G > 0");
    return PowerUtility(gamma)(x * std::exp(r * (T - t))) * G_t;
}

double value_dual(double t, double p, double xi_t, double gamma, double r, double T) {
    if (!(p > 0.0) || !(xi_t > 0.0)) throw ContractViolation("value_dual requires p > 0 and xi > 0");
    return PowerUtility(gamma).conjugate(p * std::exp(-r * (T - t))) * xi_t;
}

ConjugacyResult conjugacy_check(double t, double x, double xi_t, double gamma, double r, double T) {
    const PowerUtility u(gamma);
    auto objective = [&](double logp) {
        const double p = std::exp(logp);
        return value_dual(t, p, xi_t, gamma, r, T) + x * p;
    };
    const double center = std::log(u.marginal(x));
    const double lo = center + std::log(1e-6);
    const double hi = center + std::log(1e6);
    constexpr int kGrid = 2001;
    int best = 0;
    double best_val = objective(lo);
    for (int i = 1; i < kGrid; ++i) {
        const double v = objective(lo + (hi - lo) * i / (kGrid - 1));
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    const double step = (hi - lo) / (kGrid - 1);
    double a = lo + step * std::max(best - 1, 0);
    double b = lo + step * std::min(best + 1, kGrid - 1);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = objective(c);
    double fd = objective(d);
    while (b - a > 1e-10 * std::max(1.0, std::abs(a))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = objective(d);
        }
    }
    ConjugacyResult res;
    const double logp = 0.5 * (a + b);
    res.p_star = std::exp(logp);
    res.dual_min = objective(logp);
    res.primal = value_partial(t, x, std::pow(xi_t, gamma), gamma, r, T);
    res.residual = std::abs(res.dual_min - res.primal) / (1.0 + std::abs(res.primal));
    return res;
}

namespace {

template <class Draw>
PremiumEstimate premium_core(double t, double x, double g_partial, const ClosedFormAH& ah, double gamma, double r,
                             int n, const RngSpec& rng, Draw&& draw) {
    if (n < 2) throw ContractViolation("premium estimate needs n >= 2");
    if (!(g_partial > 0.0)) throw ContractViolation("premium estimate needs G_partial > 0");
    auto eng = rng.with_role(StreamRole::kFactorNoise).engine();
    double m = 0.0;
    double m2 = 0.0;
    for (int j = 0; j < n; ++j) {
        const double g = g_eval(ah, t, draw(eng));
        const double delta = g - m;
        m += delta / (j + 1);
        m2 += delta * (g - m);
    }
    PremiumEstimate e;
    e.t = t;
    e.x = x;
    e.g_partial = g_partial;
    e.e_g_full = m;
    e.std_error = std::sqrt(m2 / (n - 1) / n);
    e.premium = PowerUtility(gamma)(x * std::exp(r * (ah.T() - t))) * (m - g_partial);
    return e;
}

}  // namespace

PremiumEstimate premium_estimate(double t, double x, const ScalarPrior& law, double g_partial,
                                 const ClosedFormAH& ah_full, double gamma, double r, int n, const RngSpec& rng) {
    if (law.variance < 0.0) throw ContractViolation("filter variance must be >= 0");
    const double sd = std::sqrt(law.variance);
    std::normal_distribution<double> nd;
    return premium_core(t, x, g_partial, ah_full, gamma, r, n, rng,
                        [&](std::mt19937_64& eng) { return law.mean + sd * nd(eng); });
}

PremiumEstimate premium_estimate(double t, double x, const GridFilter& filter, double g_partial,
                                 const ClosedFormAH& ah_full, double gamma, double r, int n, const RngSpec& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return premium_core(t, x, g_partial, ah_full, gamma, r, n, rng,
                        [&](std::mt19937_64& eng) { return sample_grid(filter, unif(eng)); });
}

namespace {

template <class M>
MartingaleReport martingale_impl(const M& model, double gamma, const ClosedFormAH& ah, const TimeGrid& grid,
                                 const MartingaleOptions& opt, const RngSpec& rng) {
    grid.validate();
    if (opt.n_paths < 2) throw ContractViolation("martingale test needs n_paths >= 2");
    if (opt.n_checkpoints < 1 || grid.n_steps % opt.n_checkpoints != 0) {
        throw ContractViolation("checkpoint count must divide n_steps");
    }
    const int n_cp = opt.n_checkpoints;
    const int stride = grid.n_steps / n_cp;
    const auto n_paths = static_cast<std::size_t>(opt.n_paths);
    const PowerUtility u(gamma);
    const double s2 = model.sigma * model.sigma;
    const double sy = model.sigma_y();
    const double T = grid.T;
    // values[p * (n_cp + 1) + c]
    std::vector<double> values(n_paths * static_cast<std::size_t>(n_cp + 1));
    parallel_for(n_paths, opt.workers, [&](std::size_t p) {
        const PathBundle path = simulate_market(model, grid, ScalarPrior{opt.y0, 0.0}, rng.with_path(p));
        Eigen::VectorXd pi(grid.n_steps);
        for (int k = 0; k < grid.n_steps; ++k) {
            const double t = grid.time(k);
            const double y = path.y(k);
            const double chi = g_eval(ah, t, y);
            const double psi = model.diffusion(y) * g_eval_dy(ah, t, y);
            pi(k) = opt.strategy_scale * ((model.h(y) - model.r) / gamma + sy * psi / (gamma * chi)) / s2;
        }
        Eigen::VectorXd x;
        try {
            x = evolve_wealth(model, path, pi, opt.x0);
        } catch (const NumericFailure&) {
            throw NumericFailure("wealth overflow on path " + std::to_string(p) + " (seed " +
                                 std::to_string(rng.seed) + ")");
        }
        for (int c = 0; c <= n_cp; ++c) {
            const int k = c * stride;
            const double t = grid.time(k);
            values[p * static_cast<std::size_t>(n_cp + 1) + static_cast<std::size_t>(c)] =
                u(x(k) * std::exp(model.r * (T - t))) * g_eval(ah, t, path.y(k));
        }
    });
    MartingaleReport rep;
    for (int c = 0; c <= n_cp; ++c) {
        double m = 0.0;
        double m2 = 0.0;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const double v = values[p * static_cast<std::size_t>(n_cp + 1) + static_cast<std::size_t>(c)];
            const double delta = v - m;
            m += delta / static_cast<double>(p + 1);
            m2 += delta * (v - m);
        }
        rep.t.push_back(grid.time(c * stride));
        rep.mean.push_back(m);
        rep.std_error.push_back(std::sqrt(m2 / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths)));
    }
    for (int c = 1; c <= n_cp; ++c) {
        const auto i = static_cast<std::size_t>(c);
        const double se = rep.std_error[i];
        const double drift = std::abs(rep.mean[i] - rep.mean[0]);
        const double z = se > 0.0 ? drift / se : (drift == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        rep.max_normalized_drift = std::max(rep.max_normalized_drift, z);
    }
    return rep;
}

}  // namespace

MartingaleReport martingale_residual(const CirModel& model, double gamma, const ClosedFormAH& ah, const TimeGrid& grid,
                                     const MartingaleOptions& options, const RngSpec& rng) {
    if (ah.kind() != AhKind::kCirFull) throw ContractViolation("martingale test needs the CIR full-information kind");
    return martingale_impl(model, gamma, ah, grid, options, rng);
}

MartingaleReport martingale_residual(const LinearOuModel& model, double gamma, const ClosedFormAH& ah,
                                     const TimeGrid& grid, const MartingaleOptions& options, const RngSpec& rng) {
    if (ah.kind() != AhKind::kLinearFull) {
        throw ContractViolation("martingale test needs the linear full-information kind");
    }
    return martingale_impl(model, gamma, ah, grid, options, rng);
}

double drift_bracket(const Eigen::VectorXd& pi, const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma,
                     double gamma, const Eigen::VectorXd& alpha_over_xi, double xi) {
    if (!(xi > 0.0)) throw ContractViolation("drift bracket requires xi > 0");
    const Eigen::VectorXd lambda = sigma.partialPivLu().solve((hhat.array() - r).matrix());
    const Eigen::VectorXd alpha = alpha_over_xi * xi;
    const double beta = beta_eval(hhat, r, sigma, gamma, alpha, xi);
    const Eigen::VectorXd stp = sigma.transpose() * pi;
    return -stp.squaredNorm() + 2.0 * (lambda / gamma + alpha_over_xi).dot(stp) -
           2.0 * beta / ((1.0 - gamma) * xi) - alpha_over_xi.squaredNorm();
}

double drift_zero_check(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                        const Eigen::VectorXd& alpha_over_xi, double xi) {
    const StrategyRecord rec = pi_partial(hhat, r, sigma, gamma, alpha_over_xi);
    return std::abs(drift_bracket(rec.pi, hhat, r, sigma, gamma, alpha_over_xi, xi));
}

}  // namespace pibsde
