#include "gen.hpp"

#include "pibsde/bsde.hpp"
#include "pibsde/errors.hpp"
#include "pibsde/filtering.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pibsde;

namespace {

GeneralModelSpec random_spec(testgen::Gen& g, int d, int q) {
    GeneralModelSpec s;
    s.dim_d = d;
    s.dim_q = q;
    s.r = g.uniform(0.0, 0.05);
    s.sigma_w = g.well_conditioned(d, g.uniform(0.1, 0.5));
    s.sigma_y = Eigen::MatrixXd(d, q);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < q; ++j) s.sigma_y(i, j) = 0.1 * g.normal();
    const Eigen::MatrixXd load = Eigen::MatrixXd::Random(d, q);
    const Eigen::VectorXd base = g.vec(d, 0.1);
    s.h = [load, base](const Eigen::VectorXd& y) -> Eigen::VectorXd { return base + load * y; };
    s.b = [](const Eigen::VectorXd& y) -> Eigen::VectorXd { return -y; };
    s.a = [q](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Identity(q, q); };
    return s;
}

// Maximum of a strictly concave function along one coordinate by ternary search.
template <class F>
double ternary_argmax(F&& f, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (f(m1) < f(m2)) lo = m1;
        else hi = m2;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(Beta, TwoFormsAgree) {
    testgen::Gen g(1);
    for (int i = 0; i < 1000; ++i) {
        const int d = g.integer(1, 3);
        const Eigen::VectorXd hhat = g.vec(d, 0.2);
        const Eigen::MatrixXd sigma = g.well_conditioned(d, g.uniform(0.05, 0.8));
        const double gamma = g.coin() ? g.uniform(0.2, 0.95) : g.uniform(1.05, 6.0);
        const Eigen::VectorXd alpha = g.vec(d, 0.5);
        const double xi = g.log_uniform(0.05, 5.0);
        const BetaForms b = beta_forms(hhat, g.uniform(0, 0.05), sigma, gamma, alpha, xi);
        EXPECT_NEAR(b.form1, b.form2, 1e-10 * (1 + std::abs(b.form1)));
    }
    EXPECT_THROW((void)beta_eval(Eigen::VectorXd::Zero(1), 0, Eigen::MatrixXd::Identity(1, 1), 2.0,
                                 Eigen::VectorXd::Zero(1), 0.0),
                 ContractViolation);
}

TEST(FullInformationHjb, FIsNonNegativeAndEqualsMaxOfF) {
    testgen::Gen g(2);
    for (int i = 0; i < 1000; ++i) {
        const int d = g.integer(1, 2);
        const int q = g.integer(1, 2);
        const GeneralModelSpec s = random_spec(g, d, q);
        const Eigen::VectorXd y = g.vec(q, 0.3);
        const double gval = g.log_uniform(0.1, 10.0);
        const Eigen::VectorXd eta = g.vec(q, 0.3);
        const double gamma = g.uniform(1.05, 6.0);
        const double F = F_eval(y, gval, eta, s, gamma);
        EXPECT_GE(F, 0.0);

        // coordinate-wise ternary search on the concave quadratic f
        Eigen::VectorXd pi = Eigen::VectorXd::Zero(d);
        for (int sweep = 0; sweep < (d == 1 ? 1 : 40); ++sweep) {
            for (int c = 0; c < d; ++c) {
                pi(c) = ternary_argmax(
                    [&](double x) {
                        Eigen::VectorXd p = pi;
                        p(c) = x;
                        return f_eval(y, p, gval, eta, s, gamma);
                    },
                    -1e4, 1e4);
            }
        }
        const double brute = f_eval(y, pi, gval, eta, s, gamma);
        EXPECT_NEAR(F, brute, 1e-8 * (1 + std::abs(F)));
        const Eigen::VectorXd star = pi_star_full(y, gval, eta, s, gamma);
        EXPECT_NEAR(f_eval(y, star, gval, eta, s, gamma), F, 1e-10 * (1 + std::abs(F)));
    }
}

TEST(FullInformationHjb, FirstOrderConditionAtOptimum) {
    testgen::Gen g(3);
    for (int i = 0; i < 1000; ++i) {
        const int d = g.integer(1, 3);
        const int q = g.integer(1, 3);
        const GeneralModelSpec s = random_spec(g, d, q);
        const Eigen::VectorXd y = g.vec(q, 0.3);
        const double gval = g.log_uniform(0.1, 10.0);
        const Eigen::VectorXd eta = g.vec(q, 0.3);
        const double gamma = g.uniform(0.3, 6.0);
        const Eigen::VectorXd star = pi_star_full(y, gval, eta, s, gamma);
        // grad f = g (h - r - gamma Sigma pi) + sigma_y eta
        const Eigen::VectorXd grad =
            gval * ((s.h(y).array() - s.r).matrix() - gamma * s.covariance() * star) + s.sigma_y * eta;
        const double scale = gval * (s.h(y).array() - s.r).matrix().norm() + (s.sigma_y * eta).norm() + 1.0;
        EXPECT_LT(grad.norm(), 1e-10 * scale);
    }
}

TEST(XiClosedForm, InsideUnitBandForRiskAverseInvestor) {
    testgen::Gen g(4);
    for (int i = 0; i < 2000; ++i) {
        const LinearOuModel m = g.linear_model();
        const double gamma = g.uniform(1.01, 6.0);
        const double T = g.uniform(0.1, 3.0);
        const double xi = xi_closed_form_linear(m, gamma, T, g.uniform(0, T), g.uniform(-1.0, 1.0));
        EXPECT_GT(xi, 0.0);
        EXPECT_LE(xi, 1.0);
    }
    EXPECT_EQ(xi_closed_form_linear(LinearOuModel{}, 1.2, 1.0, 1.0, 0.3), 1.0);
}

TEST(XiClosedForm, LoadingIsFilterSensitivity) {
    // alpha/xi = abar * d/dyhat log xi
    const LinearOuModel m;
    for (double yh : {-0.1, 0.0, 0.07}) {
        const double h = 1e-6;
        const double dlog = (std::log(xi_closed_form_linear(m, 1.2, 1.0, 0.3, yh + h)) -
                             std::log(xi_closed_form_linear(m, 1.2, 1.0, 0.3, yh - h))) /
                            (2 * h);
        EXPECT_NEAR(alpha_over_xi_linear(m, 1.2, 1.0, 0.3, yh), abar(m) * dlog, 1e-8);
    }
}

TEST(XiNested, AgreesWithClosedFormOnShortHorizon) {
    const LinearOuModel m;
    const double S = steady_state_variance(m);
    const KalmanFilter kf(m, 1e-3, true);
    XiOptions opt;
    opt.n_inner = 400;
    for (double y0 : {0.0, 0.1}) {
        const XiEstimate e = estimate_xi_nested(m, kf, KalmanState{y0, S}, 1.2, 0.0, 0.25, opt, RngSpec{21, 0});
        const double cf = xi_closed_form_linear(m, 1.2, 0.25, 0.0, y0);
        EXPECT_GT(e.std_error, 0.0);
        EXPECT_LT(std::abs(e.mean - cf), 4 * e.std_error) << "y0 " << y0;
        EXPECT_GT(e.mean, 0.0);
    }
}

TEST(XiNested, TerminalValueIsExactlyOne) {
    const LinearOuModel m;
    const KalmanFilter kf(m, 1e-3, true);
    const XiEstimate e = estimate_xi_nested(m, kf, KalmanState{0.1, 0.0}, 1.2, 1.0, 1.0, XiOptions{}, RngSpec{1, 0});
    EXPECT_EQ(e.mean, 1.0);
    EXPECT_EQ(e.std_error, 0.0);
    const CirModel c;
    const GridBounds b = default_grid_bounds(c);
    const GridFilter f = grid_build(c, 50, b.lo, b.hi, 1e-3, {c.ybar, 0.0});
    EXPECT_EQ(estimate_xi_nested(c, f, 1.2, 1.0, 1.0, XiOptions{}, RngSpec{1, 0}).mean, 1.0);
}

TEST(XiNested, IndependentOfWorkerCount) {
    const CirModel c;
    const GridBounds b = default_grid_bounds(c);
    const GridFilter f = grid_build(c, 100, b.lo, b.hi, 1e-3, {c.ybar, 0.0});
    XiOptions opt;
    opt.n_inner = 12;
    const XiEstimate one = estimate_xi_nested(c, f, 1.2, 0.8, 1.0, opt, RngSpec{3, 0});
    opt.workers = 3;
    const XiEstimate three = estimate_xi_nested(c, f, 1.2, 0.8, 1.0, opt, RngSpec{3, 0});
    EXPECT_EQ(one.mean, three.mean);
    EXPECT_EQ(one.std_error, three.std_error);
    EXPECT_EQ(one.shorthand_mean, three.shorthand_mean);
}

TEST(XiNested, ConditionChecksGuardTheCirEstimator) {
    CirModel c;
    c.sigma = 0.001;  // Novikov fails
    const GridBounds b = default_grid_bounds(c);
    const GridFilter f = grid_build(c, 50, b.lo, b.hi, 1e-3, {c.ybar, 0.0});
    XiOptions opt;
    opt.n_inner = 2;
    EXPECT_THROW((void)estimate_xi_nested(c, f, 1.2, 0.99, 1.0, opt, RngSpec{1, 0}), ConditionAbort);
    opt.override_conditions = true;
    const XiEstimate e = estimate_xi_nested(c, f, 1.2, 0.99, 1.0, opt, RngSpec{1, 0});
    EXPECT_TRUE(e.conditions_overridden);
}

TEST(XiNested, StepContracts) {
    const CirModel c;
    const GridBounds b = default_grid_bounds(c);
    const GridFilter f = grid_build(c, 50, b.lo, b.hi, 2e-3, {c.ybar, 0.0});
    EXPECT_THROW((void)estimate_xi_nested(c, f, 1.2, 0.9, 1.0, XiOptions{}, RngSpec{1, 0}), ContractViolation);
    const LinearOuModel m;
    const KalmanFilter kf(m, 1e-3, true);
    XiOptions opt;
    opt.dt = 0.3;  // 1 - 0 is not a multiple
    EXPECT_THROW((void)estimate_xi_nested(m, kf, KalmanState{}, 1.2, 0.0, 1.0, opt, RngSpec{1, 0}),
                 ContractViolation);
}

TEST(FullInformationBsde, RecordsFollowClosedForm) {
    const LinearOuModel m;
    const TimeGrid grid{0, 1, 200};
    const PathBundle p = simulate_market(m, grid, {0.0, 0.0}, RngSpec{5, 0});
    const KalmanTrack tr = kalman_run(m, p, true, 0.0, 0.0);
    const auto recs = bsde_path_linear(m, 1.2, p, tr);
    ASSERT_EQ(recs.size(), 201u);
    EXPECT_EQ(recs.back().chi, 1.0);
    EXPECT_EQ(recs.back().psi, 0.0);
    EXPECT_EQ(*recs.back().xi, 1.0);
    const ClosedFormAH full = make_AH(AhKind::kLinearFull, m, 1.2, 1.0);
    for (int k : {0, 50, 199}) {
        const auto& r = recs[static_cast<std::size_t>(k)];
        EXPECT_NEAR(r.chi, g_eval(full, r.t, p.y(k)), 1e-15);
        EXPECT_NEAR(r.psi, m.a * 2 * full.A(r.t) * p.y(k) * r.chi, 1e-15);
        EXPECT_NEAR(*r.xi, xi_closed_form_linear(m, 1.2, 1.0, r.t, tr.yhat(k)), 1e-14);
    }
}

TEST(FullInformationBsde, MilsteinResidualHalvesWithStep) {
    const CirModel c;
    const double gamma = 1.2;
    const ClosedFormAH ah = make_AH(c, gamma, 1.0);
    double coarse2 = 0, fine2 = 0;
    for (int p = 0; p < 100; ++p) {
        const PathBundle fine = simulate_market(c, TimeGrid{0, 1, 2000}, {c.ybar, 0.0},
                                                RngSpec{77, static_cast<std::uint64_t>(p)}, CirScheme::kMilstein);
        const PathBundle coarse = market_from_increments(c, TimeGrid{0, 1, 1000}, fine.y(0),
                                                         coarsen_increments(fine.dW), coarsen_increments(fine.dB),
                                                         CirScheme::kMilstein);
        const double rf = bsde_residual(ah, c, gamma, fine, ResidualScheme::kMilstein);
        const double rc = bsde_residual(ah, c, gamma, coarse, ResidualScheme::kMilstein);
        fine2 += rf * rf;
        coarse2 += rc * rc;
    }
    EXPECT_GE(std::sqrt(coarse2 / fine2), 1.8);
}

TEST(FullInformationBsde, LinearMilsteinResidualHalvesWithStep) {
    const LinearOuModel m;
    const ClosedFormAH ah = make_AH(AhKind::kLinearFull, m, 1.2, 1.0);
    const GeneralModelSpec s = m.to_general();
    double coarse2 = 0, fine2 = 0;
    for (int p = 0; p < 60; ++p) {
        const PathBundle fine = simulate_market(s, TimeGrid{0, 1, 2000}, Eigen::VectorXd::Constant(1, 0.05),
                                                RngSpec{78, static_cast<std::uint64_t>(p)});
        const PathBundle coarse =
            market_from_increments(s, TimeGrid{0, 1, 1000}, fine.Y.row(0).transpose(), coarsen_increments(fine.dW),
                                   coarsen_increments(fine.dB));
        const double rf = bsde_residual(ah, m, 1.2, fine, ResidualScheme::kMilstein);
        const double rc = bsde_residual(ah, m, 1.2, coarse, ResidualScheme::kMilstein);
        fine2 += rf * rf;
        coarse2 += rc * rc;
    }
    EXPECT_GE(std::sqrt(coarse2 / fine2), 1.8);
}
