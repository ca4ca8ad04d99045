#include "gen.hpp"

#include "pibsde/errors.hpp"
#include "pibsde/riccati.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pibsde;

namespace {

double sup_diff_vs_rk4(const ClosedFormAH& ah, int n, double* sup_h = nullptr) {
    const RiccatiSolution rk = integrate_riccati_rk4(ah.spec(), ah.T(), n);
    double sa = 0.0, sh = 0.0;
    for (int k = 0; k <= n; ++k) {
        sa = std::max(sa, std::abs(rk.A(k) - ah.A(rk.t(k))));
        sh = std::max(sh, std::abs(rk.H(k) - ah.H(rk.t(k))));
    }
    if (sup_h) *sup_h = sh;
    return sa;
}

}  // namespace

TEST(RiccatiRoots, SolveQuadraticOnSweep) {
    testgen::Gen g(1);
    int checked = 0;
    for (int i = 0; i < 5000; ++i) {
        RiccatiSpec s{g.uniform(0.01, 5.0), g.uniform(-10.0, 10.0), g.uniform(-20.0, 20.0), 1.0};
        const RiccatiRoots r = riccati_roots(s);
        EXPECT_EQ(r.real, s.q1 * s.q1 - s.q2 * s.q0 >= 0.0);
        if (!r.real) continue;
        ++checked;
        for (double x : {r.A_plus, r.A_minus}) {
            const double scale = s.q2 * x * x + 2 * std::abs(s.q1 * x) + std::abs(s.q0);
            EXPECT_LT(std::abs(s.q2 * x * x - 2 * s.q1 * x + s.q0), 1e-12 * scale);
        }
        EXPECT_GE(r.A_plus, r.A_minus);
    }
    EXPECT_GT(checked, 1000);
}

TEST(RiccatiRoots, TableValues) {
    const LinearOuModel m;
    const RiccatiRoots r = linear_riccati_roots(m, 1.2);
    EXPECT_NEAR(r.A_minus, -0.23887038406, 1e-10);
    EXPECT_NEAR(r.A_plus, 96.4246083608, 1e-8);
    EXPECT_NEAR(r.discriminant, 60.4, 1e-10);
    const ClosedFormAH cir = make_AH(CirModel{}, 1.2, 1.0);
    EXPECT_NEAR(cir.A_minus(), -0.0289268175774, 1e-12);
    EXPECT_NEAR(cir.D(), 8.00462829081, 1e-9);
}

TEST(ClosedForm, FrozenValuesAtTimeZero) {
    // H(0) values frozen from Simpson quadrature of h_coeff * A (see next test).
    const LinearOuModel m;
    const ClosedFormAH full = make_AH(AhKind::kLinearFull, m, 1.2, 1.0);
    const ClosedFormAH part = make_AH(AhKind::kLinearPartial, m, 1.2, 1.0);
    const ClosedFormAH cir = make_AH(CirModel{}, 1.2, 1.0);
    EXPECT_NEAR(full.A(0), -0.238870341521, 1e-11);
    EXPECT_NEAR(full.H(0), -0.0201135142286, 1e-11);
    EXPECT_NEAR(part.A(0), -0.238584318176, 1e-11);
    EXPECT_NEAR(part.H(0), -0.0111277338784, 1e-11);
    EXPECT_NEAR(cir.A(0), -0.0289171557274, 1e-12);
    EXPECT_NEAR(cir.H(0), -0.0101254962536, 1e-11);
    EXPECT_EQ(full.A(1.0), 0.0);
    EXPECT_EQ(full.H(1.0), 0.0);
}

TEST(ClosedForm, HIsIntegralOfA) {
    testgen::Gen g(2);
    for (int i = 0; i < 200; ++i) {
        const LinearOuModel m = g.linear_model();
        const double gamma = g.uniform(1.05, 5.0);
        const double T = g.uniform(0.1, 3.0);
        const ClosedFormAH ah = make_AH(AhKind::kLinearFull, m, gamma, T);
        const double t = g.uniform(0.0, T);
        const double quad = ah.spec().h_coeff * testgen::simpson([&](double s) { return ah.A(s); }, t, T, 2000);
        EXPECT_NEAR(ah.H(t), quad, 1e-9 * (1 + std::abs(quad)));
    }
}

TEST(ClosedForm, SatisfiesRiccatiOde) {
    testgen::Gen g(3);
    for (int i = 0; i < 300; ++i) {
        const CirModel m = g.cir_model();
        const double gamma = g.uniform(1.05, 5.0);
        const ClosedFormAH ah = make_AH(m, gamma, 1.0);
        const RiccatiSpec& s = ah.spec();
        const double t = g.uniform(0.05, 0.95);
        const double h = 1e-5;
        const double dA = (ah.A(t + h) - ah.A(t - h)) / (2 * h);
        const double a = ah.A(t);
        const double resid = dA + s.q2 * a * a - 2 * s.q1 * a + s.q0;
        EXPECT_LT(std::abs(resid), 1e-6 * (1 + std::abs(s.q0)));
    }
}

TEST(ClosedForm, MatchesRk4ForAllKinds) {
    const LinearOuModel m;
    double sh = 0.0;
    EXPECT_LT(sup_diff_vs_rk4(make_AH(AhKind::kLinearFull, m, 1.2, 1.0), 10000, &sh), 1e-6);
    EXPECT_LT(sh, 1e-6);
    EXPECT_LT(sup_diff_vs_rk4(make_AH(AhKind::kLinearPartial, m, 1.2, 1.0), 10000, &sh), 1e-6);
    EXPECT_LT(sh, 1e-6);
    EXPECT_LT(sup_diff_vs_rk4(make_AH(CirModel{}, 1.2, 1.0), 10000, &sh), 1e-6);
    EXPECT_LT(sh, 1e-6);
}

TEST(ClosedForm, MatchesRk4OnSweep) {
    testgen::Gen g(4);
    for (int i = 0; i < 100; ++i) {
        const LinearOuModel m = g.linear_model();
        const double gamma = g.uniform(1.05, 5.0);
        double sh = 0.0;
        const double sa = sup_diff_vs_rk4(make_AH(AhKind::kLinearPartial, m, gamma, 1.0), 4000, &sh);
        EXPECT_LT(sa, 1e-6);
        EXPECT_LT(sh, 1e-6);
    }
}

TEST(ClosedForm, LinearFallbackWhenQuadraticTermVanishes) {
    const RiccatiSpec s{0.0, 1.5, -0.7, 0.3};
    const ClosedFormAH ah(AhKind::kLinearFull, s, 2.0);
    EXPECT_TRUE(ah.roots().linear_fallback);
    double sh = 0.0;
    EXPECT_LT(sup_diff_vs_rk4(ah, 4000, &sh), 1e-10);
    EXPECT_LT(sh, 1e-10);
}

TEST(ClosedForm, DoubleRootIsNumericFailure) {
    EXPECT_THROW(ClosedFormAH(AhKind::kLinearFull, RiccatiSpec{1.0, 1.0, 1.0, 1.0}, 1.0), NumericFailure);
    // the RK4 path still works: A -> 1 from 0 without a pole
    const RiccatiSolution rk = integrate_riccati_rk4(RiccatiSpec{1.0, 1.0, 1.0, 1.0}, 1.0, 1000);
    EXPECT_FALSE(rk.blowup_time);
    // exact: A(tau) = tau / (1 + tau)
    EXPECT_NEAR(rk.A(0), 0.5, 1e-10);
}

TEST(ClosedForm, RealRootPoleInsideHorizon) {
    // dA/dtau = (A + 1)(A + 3): pole at tau* = log(3) / 2
    const RiccatiSpec s{1.0, -2.0, 3.0, 1.0};
    const double tau_star = std::log(3.0) / 2.0;
    EXPECT_THROW(ClosedFormAH(AhKind::kLinearFull, s, 1.0), UnstableRegime);
    EXPECT_NO_THROW(ClosedFormAH(AhKind::kLinearFull, s, 0.5));
    const RiccatiSolution rk = integrate_riccati_rk4(s, 1.0, 10000);
    ASSERT_TRUE(rk.blowup_time);
    EXPECT_NEAR(*rk.blowup_time, 1.0 - tau_star, 2e-4);
}

TEST(ClosedForm, ContractsOnInputs) {
    const LinearOuModel m;
    EXPECT_THROW((void)make_AH(AhKind::kLinearFull, m, 1.0, 1.0), ContractViolation);
    EXPECT_THROW((void)make_AH(AhKind::kLinearFull, m, 1.2, 0.0), ContractViolation);
    EXPECT_THROW((void)make_AH(AhKind::kCirFull, m, 1.2, 1.0), ContractViolation);
    const ClosedFormAH ah = make_AH(AhKind::kLinearFull, m, 1.2, 1.0);
    EXPECT_THROW((void)ah.A(1.1), ContractViolation);
    EXPECT_THROW((void)ah.A(-0.1), ContractViolation);
    CirModel c;
    c.rho = 0.3;
    EXPECT_THROW((void)make_AH(c, 1.2, 1.0), ContractViolation);
    LinearOuModel drift = m;
    drift.mu = 0.05;
    EXPECT_THROW((void)make_AH(AhKind::kLinearFull, drift, 1.2, 1.0), ContractViolation);
}

TEST(Stability, PartialAndFullDiscriminantsCoincide) {
    testgen::Gen g(5);
    for (int i = 0; i < 10000; ++i) {
        const LinearOuModel m = g.linear_model();
        const double gamma = g.coin() ? g.uniform(0.02, 0.98) : g.uniform(1.02, 8.0);
        const double df = full_discriminant(m, gamma);
        const double dp = partial_discriminant(m, gamma);
        EXPECT_NEAR(df, dp, 1e-9 * (1 + std::abs(df)));
        const double alt = riccati_roots(riccati_linear_partial(m, gamma)).discriminant;
        EXPECT_NEAR(dp, alt, 1e-9 * (1 + std::abs(dp)));
    }
}

TEST(Stability, PartialStableForRiskAverseInvestor) {
    testgen::Gen g(6);
    for (int i = 0; i < 10000; ++i) {
        const LinearOuModel m = g.linear_model();
        EXPECT_TRUE(stability_partial(m, g.uniform(1.001, 10.0)));
    }
}

TEST(Nirvana, BlowupMatchesRk4) {
    LinearOuModel m;
    m.rho = 0.8;
    const double gamma = 0.05;
    EXPECT_FALSE(stability_full(m, gamma));
    EXPECT_NEAR(full_discriminant(m, gamma), -498.4, 1e-9);
    EXPECT_THROW((void)make_AH(AhKind::kLinearFull, m, gamma, 1.0), UnstableRegime);
    const auto tb = nirvana_blowup_time(m, gamma, 1.0);
    ASSERT_TRUE(tb);
    const RiccatiSolution rk = integrate_riccati_rk4(riccati_linear_full(m, gamma), 1.0, 10000);
    ASSERT_TRUE(rk.blowup_time);
    EXPECT_LE(std::abs(*tb - *rk.blowup_time), 2e-4);
    // the pole sits .0351 before the horizon, so a short horizon avoids it
    EXPECT_FALSE(nirvana_blowup_time(m, gamma, 0.03));
}

TEST(Nirvana, BlowupOnComplexSweep) {
    testgen::Gen g(7);
    int seen = 0;
    for (int i = 0; i < 3000 && seen < 50; ++i) {
        LinearOuModel m = g.linear_model();
        const double gamma = g.uniform(0.02, 0.5);
        if (stability_full(m, gamma)) continue;
        const auto tb = nirvana_blowup_time(m, gamma, 1.0);
        const RiccatiSolution rk = integrate_riccati_rk4(riccati_linear_full(m, gamma), 1.0, 20000);
        if (!tb) {
            EXPECT_FALSE(rk.blowup_time);
            continue;
        }
        ++seen;
        ASSERT_TRUE(rk.blowup_time);
        EXPECT_LE(std::abs(*tb - *rk.blowup_time), 2.0 / 20000);
    }
    EXPECT_GT(seen, 10);
}

TEST(Nirvana, RequiresComplexRoots) {
    EXPECT_THROW((void)nirvana_blowup_time(LinearOuModel{}, 1.2, 1.0), ContractViolation);
}

TEST(ValueCoefficient, DerivativeInFactor) {
    const ClosedFormAH lin = make_AH(AhKind::kLinearFull, LinearOuModel{}, 1.2, 1.0);
    const ClosedFormAH cir = make_AH(CirModel{}, 1.2, 1.0);
    for (double y : {0.01, 0.05, 0.2}) {
        for (const ClosedFormAH* ah : {&lin, &cir}) {
            const double h = 1e-6;
            const double fd = (g_eval(*ah, 0.3, y + h) - g_eval(*ah, 0.3, y - h)) / (2 * h);
            EXPECT_NEAR(g_eval_dy(*ah, 0.3, y), fd, 1e-8);
        }
    }
    EXPECT_EQ(g_eval(lin, 1.0, 0.3), 1.0);
}
