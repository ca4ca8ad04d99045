#include "pibsde/bsde.hpp"

#include "pibsde/errors.hpp"
#include "pibsde/parallel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace pibsde {

namespace {

struct BranchSums {
    double lambda_dzeta = 0.0;  // sum lambda_k dzeta_k
    double lambda2_left = 0.0;  // sum lambda_k^2 dt
    double lambda2_trap = 0.0;  // trapezoid integral of lambda^2
};

TimeGrid branch_grid(double t, double T, double dt) {
    if (!(dt > 0.0)) throw ContractViolation("nested estimator needs dt > 0");
    const double steps = (T - t) / dt;
    const long n = std::lround(steps);
    if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-6) {
        throw ContractViolation("T - t must be a positive multiple of the inner time step");
    }
    return TimeGrid{t, T, static_cast<int>(n)};
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || gamma == 1.0) throw ContractViolation("gamma must be > 0 and != 1");
}

// Runs n_inner branches and reduces them in index order. branch(spec) fills
// the sums for one branch and may throw NumericFailure on filter collapse,
// in which case it is retried once on a fresh stream.
template <class Branch>
XiEstimate nested_core(double t, double gamma, const XiOptions& opt, const RngSpec& rng, Branch&& branch) {
    if (opt.n_inner < 1) throw ContractViolation("n_inner must be >= 1");
    const auto n = static_cast<std::size_t>(opt.n_inner);
    std::vector<BranchSums> sums(n);
    parallel_for(n, opt.workers, [&](std::size_t l) {
        const RngSpec base{rng.seed, l, StreamRole::kInnerBranch};
        for (std::uint64_t attempt = 0;; ++attempt) {
            try {
                sums[l] = branch(RngSpec{base.derive(attempt), 0, StreamRole::kInnerBranch});
                return;
            } catch (const NumericFailure& e) {
                if (attempt >= 1) {
                    throw NumericFailure("inner branch " + std::to_string(l) + " at t = " + std::to_string(t) +
                                         " failed twice: " + e.what());
                }
            }
        }
    });

    const double c_density = (1.0 - gamma) / gamma;
    const double c_short = (1.0 - gamma) / (2.0 * gamma * gamma);
    auto mean_se = [&](auto weight) {
        double m = 0.0;
        double m2 = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            const double w = weight(sums[l]);
            if (!std::isfinite(w)) throw NumericFailure("non-finite branch weight in nested estimator");
            const double delta = w - m;
            m += delta / static_cast<double>(l + 1);
            m2 += delta * (w - m);
        }
        const double se = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        return std::pair{m, se};
    };
    const auto [sh_mean, sh_se] = mean_se([&](const BranchSums& s) { return std::exp(c_short * s.lambda2_trap); });
    XiEstimate est;
    est.t = t;
    est.n_inner = opt.n_inner;
    est.shorthand_mean = sh_mean;
    est.shorthand_std_error = sh_se;
    if (opt.weighting == XiWeighting::kDensityRatio) {
        const auto [m, se] = mean_se([&](const BranchSums& s) {
            return std::exp(c_density * (s.lambda_dzeta + 0.5 * s.lambda2_left));
        });
        est.mean = m;
        est.std_error = se;
    } else {
        est.mean = sh_mean;
        est.std_error = sh_se;
    }
    return est;
}

bool at_horizon(double t, double T) { return std::abs(T - t) <= 1e-12 * std::max(1.0, std::abs(T)); }

XiEstimate terminal_estimate(double t, int n_inner) {
    XiEstimate e;
    e.t = t;
    e.n_inner = n_inner;
    return e;
}

}  // namespace

XiEstimate estimate_xi_nested(const LinearOuModel& model, const KalmanFilter& filter, const KalmanState& state,
                              double gamma, double t, double T, const XiOptions& opt, const RngSpec& rng) {
    model.validate();
    check_gamma(gamma);
    if (at_horizon(t, T)) return terminal_estimate(t, opt.n_inner);
    const TimeGrid grid = branch_grid(t, T, opt.dt);
    const KalmanFilter kf(model, grid.dt(), filter.steady());
    const ScalarPrior prior{state.yhat, filter.steady() ? filter.steady_var() : state.var};
    const double dt = grid.dt();
    return nested_core(t, gamma, opt, rng, [&](const RngSpec& branch_rng) {
        const PathBundle path = simulate_market(model, grid, prior, branch_rng);
        BranchSums s;
        KalmanState ks{state.yhat, prior.variance};
        double lam_prev = 0.0;
        for (int k = 0; k < grid.n_steps; ++k) {
            const double hhat = model.mu + ks.yhat;
            const double lam = (hhat - model.r) / model.sigma;
            const double dlogS = path.dlogS(k);
            const double dzeta = (simple_return(dlogS, model.sigma, dt) - hhat * dt) / model.sigma;
            s.lambda_dzeta += lam * dzeta;
            s.lambda2_left += lam * lam * dt;
            if (k > 0) s.lambda2_trap += 0.5 * (lam_prev * lam_prev + lam * lam) * dt;
            lam_prev = lam;
            ks = kf.step(ks, dlogS);
        }
        const double lam_T = (model.mu + ks.yhat - model.r) / model.sigma;
        s.lambda2_trap += 0.5 * (lam_prev * lam_prev + lam_T * lam_T) * dt;
        return s;
    });
}

XiEstimate estimate_xi_nested(const CirModel& model, const GridFilter& filter, double gamma, double t, double T,
                              const XiOptions& opt, const RngSpec& rng) {
    model.validate();
    check_gamma(gamma);
    const ConditionReport nov = check_novikov_cir(model, T);
    const ConditionReport mgf = check_mgf_cir(model, gamma, T, scalar_epsilon(model.sigma));
    bool overridden = false;
    if (!nov.ok || !mgf.ok) {
        if (!opt.override_conditions) {
            const ConditionReport& bad = nov.ok ? mgf : nov;
            throw ConditionAbort(bad.check + " condition fails: lhs " + std::to_string(bad.lhs) + " >= rhs " +
                                 std::to_string(bad.rhs));
        }
        overridden = true;
    }
    if (at_horizon(t, T)) {
        XiEstimate e = terminal_estimate(t, opt.n_inner);
        e.conditions_overridden = overridden;
        return e;
    }
    const TimeGrid grid = branch_grid(t, T, opt.dt);
    if (std::abs(filter.dt - grid.dt()) > 1e-12) {
        throw ContractViolation("grid filter step does not match the inner time step");
    }
    const double dt = grid.dt();
    XiEstimate est = nested_core(t, gamma, opt, rng, [&](const RngSpec& branch_rng) {
        auto eng = branch_rng.engine();
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double y_t = sample_grid(filter, unif(eng));
        const PathBundle path =
            simulate_market(model, grid, ScalarPrior{y_t, 0.0}, RngSpec{branch_rng.derive(1), 0, StreamRole::kFactorNoise});
        GridFilter f = filter;
        BranchSums s;
        double lam_prev = 0.0;
        for (int k = 0; k < grid.n_steps; ++k) {
            const double hhat = filter_mean_h(f);
            const double lam = (hhat - model.r) / model.sigma;
            const double dlogS = path.dlogS(k);
            const double dzeta = (simple_return(dlogS, model.sigma, dt) - hhat * dt) / model.sigma;
            s.lambda_dzeta += lam * dzeta;
            s.lambda2_left += lam * lam * dt;
            if (k > 0) s.lambda2_trap += 0.5 * (lam_prev * lam_prev + lam * lam) * dt;
            lam_prev = lam;
            grid_step_inplace(f, dlogS);
        }
        const double lam_T = (filter_mean_h(f) - model.r) / model.sigma;
        s.lambda2_trap += 0.5 * (lam_prev * lam_prev + lam_T * lam_T) * dt;
        return s;
    });
    est.conditions_overridden = overridden;
    return est;
}

double xi_closed_form_linear(const LinearOuModel& model, double gamma, double T, double t, double yhat) {
    const ClosedFormAH ah = make_AH(AhKind::kLinearPartial, model, gamma, T);
    return std::exp((ah.A(t) * yhat * yhat + ah.H(t)) / gamma);
}

double alpha_over_xi_linear(const LinearOuModel& model, double gamma, double T, double t, double yhat) {
    const ClosedFormAH ah = make_AH(AhKind::kLinearPartial, model, gamma, T);
    return 2.0 * ah.A(t) * yhat * abar(model) / gamma;
}

BetaForms beta_forms(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                     const Eigen::VectorXd& alpha, double xi) {
    if (!(xi > 0.0)) throw ContractViolation("beta requires xi > 0");
    if (sigma.rows() != hhat.size() || sigma.cols() != hhat.size() || alpha.size() != hhat.size()) {
        throw ContractViolation("beta inputs have mismatched dimensions");
    }
    const Eigen::VectorXd lambda = sigma.partialPivLu().solve((hhat.array() - r).matrix());
    const double g1 = (1.0 - gamma) / gamma;
    BetaForms b;
    b.form1 = g1 * lambda.dot(alpha) + 0.5 * (1.0 - gamma) / (gamma * gamma) * lambda.squaredNorm() * xi;
    b.form2 = 0.5 * (1.0 - gamma) * (lambda / gamma + alpha / xi).squaredNorm() * xi -
              (1.0 - gamma) * alpha.squaredNorm() / (2.0 * std::abs(xi));
    return b;
}

double beta_eval(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                 const Eigen::VectorXd& alpha, double xi) {
    const BetaForms b = beta_forms(hhat, r, sigma, gamma, alpha, xi);
    if (std::abs(b.form1 - b.form2) > 1e-10 * (1.0 + std::abs(b.form1))) {
        throw NumericFailure("the two forms of beta disagree: " + std::to_string(b.form1) + " vs " +
                             std::to_string(b.form2));
    }
    return b.form1;
}

namespace {

Eigen::VectorXd excess_plus_loading(const Eigen::VectorXd& y, double g, const Eigen::VectorXd& eta,
                                    const GeneralModelSpec& spec) {
    if (!(g > 0.0)) throw ContractViolation("value coefficient g must be > 0");
    if (y.size() != spec.dim_q || eta.size() != spec.dim_q) throw ContractViolation("y and eta must have size q");
    return (spec.h(y).array() - spec.r).matrix() + spec.sigma_y * eta / g;
}

Eigen::LLT<Eigen::MatrixXd> covariance_factor(const GeneralModelSpec& spec) {
    Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance());
    if (llt.info() != Eigen::Success) throw InvalidModel("sigma sigma^T is singular");
    return llt;
}

}  // namespace

double F_eval(const Eigen::VectorXd& y, double g, const Eigen::VectorXd& eta, const GeneralModelSpec& spec,
              double gamma) {
    const Eigen::VectorXd u = excess_plus_loading(y, g, eta, spec);
    return g / (2.0 * gamma) * u.dot(covariance_factor(spec).solve(u));
}

double f_eval(const Eigen::VectorXd& y, const Eigen::VectorXd& pi, double g, const Eigen::VectorXd& eta,
              const GeneralModelSpec& spec, double gamma) {
    if (!(g > 0.0)) throw ContractViolation("value coefficient g must be > 0");
    const Eigen::VectorXd excess = (spec.h(y).array() - spec.r).matrix();
    return (-0.5 * gamma * pi.dot(spec.covariance() * pi) + pi.dot(excess)) * g + pi.dot(spec.sigma_y * eta);
}

Eigen::VectorXd pi_star_full(const Eigen::VectorXd& y, double g, const Eigen::VectorXd& eta,
                             const GeneralModelSpec& spec, double gamma) {
    const Eigen::VectorXd u = excess_plus_loading(y, g, eta, spec);
    return covariance_factor(spec).solve(u) / gamma;
}

std::vector<BsdeRecord> chi_psi_path(const ClosedFormAH& ah, const LinearOuModel& model, const TimeGrid& grid,
                                     const Eigen::VectorXd& Y) {
    if (ah.kind() != AhKind::kLinearFull) throw ContractViolation("chi_psi_path needs the linear full-information kind");
    if (Y.size() != grid.n_steps + 1) throw ContractViolation("factor path does not match grid");
    std::vector<BsdeRecord> out(static_cast<std::size_t>(grid.n_steps) + 1);
    for (int k = 0; k <= grid.n_steps; ++k) {
        auto& rec = out[static_cast<std::size_t>(k)];
        rec.t = grid.time(k);
        rec.chi = g_eval(ah, rec.t, Y(k));
        rec.psi = model.a * g_eval_dy(ah, rec.t, Y(k));
    }
    return out;
}

std::vector<BsdeRecord> chi_psi_path(const ClosedFormAH& ah, const CirModel& model, const TimeGrid& grid,
                                     const Eigen::VectorXd& Y) {
    if (ah.kind() != AhKind::kCirFull) throw ContractViolation("chi_psi_path needs the CIR full-information kind");
    if (Y.size() != grid.n_steps + 1) throw ContractViolation("factor path does not match grid");
    std::vector<BsdeRecord> out(static_cast<std::size_t>(grid.n_steps) + 1);
    for (int k = 0; k <= grid.n_steps; ++k) {
        auto& rec = out[static_cast<std::size_t>(k)];
        rec.t = grid.time(k);
        rec.chi = g_eval(ah, rec.t, Y(k));
        rec.psi = model.diffusion(Y(k)) * g_eval_dy(ah, rec.t, Y(k));
    }
    return out;
}

std::vector<BsdeRecord> bsde_path_linear(const LinearOuModel& model, double gamma, const PathBundle& path,
                                         const KalmanTrack& track) {
    const double T = path.grid.T;
    const ClosedFormAH full = make_AH(AhKind::kLinearFull, model, gamma, T);
    const ClosedFormAH part = make_AH(AhKind::kLinearPartial, model, gamma, T);
    const double ab = abar(model);
    std::vector<BsdeRecord> out = chi_psi_path(full, model, path.grid, path.Y.col(0));
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double t = out[k].t;
        const double yh = track.yhat(static_cast<Eigen::Index>(k));
        out[k].xi = std::exp((part.A(t) * yh * yh + part.H(t)) / gamma);
        out[k].alpha_over_xi = 2.0 * part.A(t) * yh * ab / gamma;
    }
    return out;
}

namespace {

// psi, the Milstein factor (d psi/dy) a(y), and F at one point.
struct LocalTerms {
    double chi;
    double psi;
    double dpsi_a;
    double F;
};

template <class M, class DpsiA>
double residual_impl(const ClosedFormAH& ah, const M& model, double gamma, const PathBundle& path,
                     ResidualScheme scheme, DpsiA&& dpsi_a) {
    const int n = path.n_steps();
    const double dt = path.grid.dt();
    const double s2 = model.sigma * model.sigma;
    const double sy = model.sigma_y();
    auto terms = [&](int k) {
        const double t = path.grid.time(k);
        const double y = path.y(k);
        LocalTerms lt{};
        lt.chi = g_eval(ah, t, y);
        lt.psi = model.diffusion(y) * g_eval_dy(ah, t, y);
        lt.dpsi_a = dpsi_a(ah.A(t), y, lt.chi);
        const double u = (model.h(y) - model.r) + sy * lt.psi / lt.chi;
        lt.F = lt.chi * u * u / (2.0 * gamma * s2);
        return lt;
    };
    const double chi0 = g_eval(ah, path.grid.time(0), path.y(0));
    const double chiT = g_eval(ah, path.grid.time(n), path.y(n));
    double res = chi0 - chiT;
    for (int k = 0; k < n; ++k) {
        const LocalTerms lt = terms(k);
        const double db = path.dB(k, 0);
        res -= (1.0 - gamma) * lt.F * dt;
        res += lt.psi * db;
        if (scheme == ResidualScheme::kMilstein) res += 0.5 * lt.dpsi_a * (db * db - dt);
    }
    return res;
}

}  // namespace

double bsde_residual(const ClosedFormAH& ah, const CirModel& model, double gamma, const PathBundle& path,
                     ResidualScheme scheme) {
    if (ah.kind() != AhKind::kCirFull) throw ContractViolation("residual needs the CIR full-information kind");
    const double a2 = model.a * model.a;
    return residual_impl(ah, model, gamma, path, scheme,
                         [a2](double A, double y, double chi) { return a2 * A * chi * (0.5 + y * A); });
}

double bsde_residual(const ClosedFormAH& ah, const LinearOuModel& model, double gamma, const PathBundle& path,
                     ResidualScheme scheme) {
    if (ah.kind() != AhKind::kLinearFull) throw ContractViolation("residual needs the linear full-information kind");
    const double a2 = model.a * model.a;
    return residual_impl(ah, model, gamma, path, scheme,
                         [a2](double A, double y, double chi) { return 2.0 * a2 * A * chi * (1.0 + 2.0 * A * y * y); });
}

}  // namespace pibsde
