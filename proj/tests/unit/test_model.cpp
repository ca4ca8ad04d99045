#include "gen.hpp"

#include "pibsde/errors.hpp"
#include "pibsde/model.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pibsde;

TEST(PowerUtility, RejectsLogCaseAndNonPositive) {
    EXPECT_THROW(PowerUtility(1.0), InvalidModel);
    EXPECT_THROW(PowerUtility(0.0), InvalidModel);
    EXPECT_THROW(PowerUtility(-2.0), InvalidModel);
    EXPECT_NO_THROW(PowerUtility(1.2));
}

TEST(PowerUtility, ConjugateMatchesBruteForceSup) {
    // U*(p) = sup_x U(x) - x p, located by a fine log-grid scan.
    testgen::Gen g(11);
    for (int i = 0; i < 200; ++i) {
        const double gamma = g.coin() ? g.uniform(0.2, 0.95) : g.uniform(1.05, 6.0);
        const double p = g.log_uniform(0.05, 20.0);
        const PowerUtility u(gamma);
        double best = -INFINITY;
        const double xstar = std::pow(p, -1.0 / gamma);
        for (int k = -4000; k <= 4000; ++k) {
            const double x = xstar * std::exp(k * 1e-4);
            best = std::max(best, u(x) - x * p);
        }
        EXPECT_NEAR(u.conjugate(p), best, 1e-6 * (1.0 + std::abs(best))) << "gamma " << gamma << " p " << p;
    }
}

TEST(PowerUtility, MarginalIsDerivative) {
    const PowerUtility u(2.5);
    for (double x : {0.3, 1.0, 4.0}) {
        const double h = 1e-6 * x;
        EXPECT_NEAR(u.marginal(x), (u(x + h) - u(x - h)) / (2 * h), 1e-6);
    }
}

TEST(LinearOuModel, ValidateRejectsBadParameters) {
    LinearOuModel m;
    EXPECT_NO_THROW(m.validate());
    auto bad = [](auto mutate) {
        LinearOuModel x;
        mutate(x);
        return x;
    };
    EXPECT_THROW(bad([](LinearOuModel& x) { x.kappa = 0; }).validate(), InvalidModel);
    EXPECT_THROW(bad([](LinearOuModel& x) { x.a = -1; }).validate(), InvalidModel);
    EXPECT_THROW(bad([](LinearOuModel& x) { x.sigma = 0; }).validate(), InvalidModel);
    EXPECT_THROW(bad([](LinearOuModel& x) { x.rho = 1.0; }).validate(), InvalidModel);
    EXPECT_THROW(bad([](LinearOuModel& x) { x.r = -0.01; }).validate(), InvalidModel);
    EXPECT_THROW(bad([](LinearOuModel& x) { x.mu = NAN; }).validate(), InvalidModel);
}

TEST(CirModel, FellerEnforced) {
    CirModel m;
    EXPECT_TRUE(check_feller(m));
    EXPECT_NO_THROW(m.validate());
    m.a = 1.0;  // 1 > 2 * 8 * .05
    EXPECT_FALSE(check_feller(m));
    EXPECT_THROW(m.validate(), InvalidModel);
}

TEST(CirModel, CoefficientsClampNegativeFactor) {
    CirModel m;
    EXPECT_EQ(m.h(-0.1), 0.0);
    EXPECT_EQ(m.diffusion(-0.1), 0.0);
    EXPECT_DOUBLE_EQ(m.h(0.04), 0.25 * 0.2);
}

TEST(GeneralModelSpec, CovarianceBoundChecked) {
    LinearOuModel lin;
    GeneralModelSpec g = lin.to_general();
    EXPECT_NO_THROW(g.validate());
    EXPECT_NEAR(g.covariance()(0, 0), lin.sigma * lin.sigma, 1e-15);
    g.eps = 0.5;  // sigma^2 = .0225 < eps
    EXPECT_THROW(g.validate(), InvalidModel);
    GeneralModelSpec shape = lin.to_general();
    shape.sigma_y = Eigen::MatrixXd::Zero(2, 1);
    EXPECT_THROW(shape.validate(), InvalidModel);
}

TEST(TotalSigma, SquaresToCovariance) {
    testgen::Gen g(3);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 4);
        const int q = g.integer(1, 3);
        GeneralModelSpec s;
        s.dim_d = d;
        s.dim_q = q;
        s.sigma_w = g.well_conditioned(d, 0.3);
        s.sigma_y = Eigen::MatrixXd::Random(d, q) * 0.1;
        const Eigen::MatrixXd root = total_sigma(s);
        EXPECT_LT((root * root - s.covariance()).norm(), 1e-12);
        EXPECT_LT((root - root.transpose()).norm(), 1e-14);
    }
}

TEST(ScalarEpsilon, TightestBound) {
    EXPECT_DOUBLE_EQ(scalar_epsilon(0.15), 0.0225);
    EXPECT_DOUBLE_EQ(scalar_epsilon(2.0), 0.25);
    EXPECT_DOUBLE_EQ(scalar_epsilon(1.0), 1.0);
}

TEST(Conditions, NovikovValues) {
    CirModel m;
    // lhs = c^2 T / (2 sigma^2), rhs = 2 kappa / a^2 = 100
    const double expected[][2] = {{0.15, 0.0625 / (2 * 0.0225)}, {0.026, 0.0625 / (2 * 0.026 * 0.026)}};
    for (const auto& e : expected) {
        m.sigma = e[0];
        const ConditionReport rep = check_novikov_cir(m, 1.0);
        EXPECT_NEAR(rep.lhs, e[1], 1e-12 * e[1]);
        EXPECT_NEAR(rep.rhs, 100.0, 1e-12);
        EXPECT_TRUE(rep.ok);
    }
    m.sigma = 0.001;
    EXPECT_FALSE(check_novikov_cir(m, 1.0).ok);
    EXPECT_NEAR(check_novikov_cir(m, 1.0).lhs, 31250.0, 1e-6);
}

TEST(Conditions, MgfMatchesIndependentEvaluation) {
    testgen::Gen g(17);
    for (int i = 0; i < 1000; ++i) {
        const CirModel m = g.cir_model();
        double gamma = g.uniform(0.1, 5.0);
        if (std::abs(gamma - 1.0) < 1e-3) gamma = 1.5;
        const double T = g.uniform(0.1, 3.0);
        const double eps = scalar_epsilon(m.sigma);
        const ConditionReport rep = check_mgf_cir(m, gamma, T, eps);
        const double lhs = 2 * T * std::fabs(gamma - 1) * std::fabs(gamma - 2) / (eps * gamma * gamma);
        EXPECT_NEAR(rep.lhs, lhs, 1e-12 * (1 + lhs));
        EXPECT_EQ(rep.ok, lhs < 2 * m.kappa / (m.a * m.a));
    }
}

TEST(Conditions, MgfTableValueAndTrivialCase) {
    CirModel m;
    const ConditionReport rep = check_mgf_cir(m, 1.2, 1.0, scalar_epsilon(0.15));
    EXPECT_NEAR(rep.lhs, 2 * 0.2 * 0.8 / (0.0225 * 1.44), 1e-12);
    EXPECT_TRUE(rep.ok);
    const ConditionReport two = check_mgf_cir(m, 2.0, 1.0, 1e-9);
    EXPECT_EQ(two.lhs, 0.0);
    EXPECT_TRUE(two.ok);
}

TEST(Conditions, MonotoneInHorizonAndEpsilon) {
    testgen::Gen g(23);
    for (int i = 0; i < 500; ++i) {
        const CirModel m = g.cir_model();
        const double gamma = g.uniform(1.05, 4.0);
        const double T1 = g.uniform(0.1, 2.0);
        const double T2 = T1 * g.uniform(1.0, 3.0);
        const double e1 = g.log_uniform(1e-3, 1.0);
        const double e2 = e1 * g.uniform(0.1, 1.0);
        if (!check_mgf_cir(m, gamma, T1, e1).ok) {
            EXPECT_FALSE(check_mgf_cir(m, gamma, T2, e1).ok);
            EXPECT_FALSE(check_mgf_cir(m, gamma, T1, e2).ok);
        }
        if (!check_novikov_cir(m, T1).ok) EXPECT_FALSE(check_novikov_cir(m, T2).ok);
    }
}
