#pragma once

#include "pibsde/filtering.hpp"
#include "pibsde/model.hpp"
#include "pibsde/riccati.hpp"
#include "pibsde/rng.hpp"
#include "pibsde/sde.hpp"

#include <Eigen/Dense>

#include <vector>

namespace pibsde {

// pi = myopic + hedge
struct StrategyRecord {
    double t = 0.0;
    Eigen::VectorXd pi;
    Eigen::VectorXd myopic;
    Eigen::VectorXd hedge;
};

// myopic = Sigma^{-1}(hhat - r)/gamma, hedge = sigma^{-T} alpha/xi.
[[nodiscard]] StrategyRecord pi_partial(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma,
                                        double gamma, const Eigen::VectorXd& alpha_over_xi);
// myopic = Sigma^{-1}(h(y) - r)/gamma, hedge = Sigma^{-1} sigma_y psi/(gamma chi).
[[nodiscard]] StrategyRecord pi_full(const Eigen::VectorXd& y, double chi, const Eigen::VectorXd& psi,
                                     const GeneralModelSpec& spec, double gamma);

// U(x e^{r(T-t)}) G
[[nodiscard]] double value_partial(double t, double x, double G_t, double gamma, double r, double T);
// U*(p e^{-r(T-t)}) xi
[[nodiscard]] double value_dual(double t, double p, double xi_t, double gamma, double r, double T);

struct ConjugacyResult {
    double residual = 0.0;  // |min_p (V* + x p) - V| / (1 + |V|)
    double p_star = 0.0;
    double dual_min = 0.0;
    double primal = 0.0;
};
[[nodiscard]] ConjugacyResult conjugacy_check(double t, double x, double xi_t, double gamma, double r, double T);

struct PremiumEstimate {
    double t = 0.0;
    double x = 1.0;
    double g_partial = 1.0;
    double e_g_full = 1.0;
    double std_error = 0.0;  // of e_g_full
    double premium = 0.0;    // U(x e^{r(T-t)}) (e_g_full - g_partial)
};

// Expectation of G_full(t, Y) with Y drawn from a Gaussian filter law.
[[nodiscard]] PremiumEstimate premium_estimate(double t, double x, const ScalarPrior& filter_law, double g_partial,
                                               const ClosedFormAH& ah_full, double gamma, double r, int n,
                                               const RngSpec& rng);
// Same with Y drawn from a grid filter.
[[nodiscard]] PremiumEstimate premium_estimate(double t, double x, const GridFilter& filter, double g_partial,
                                               const ClosedFormAH& ah_full, double gamma, double r, int n,
                                               const RngSpec& rng);

struct MartingaleReport {
    std::vector<double> t;
    std::vector<double> mean;
    std::vector<double> std_error;
    // max_k |mean_k - mean_0| / std_error_k over checkpoints after 0
    double max_normalized_drift = 0.0;
};

struct MartingaleOptions {
    int n_paths = 5000;
    int n_checkpoints = 10;
    double x0 = 1.0;
    double y0 = 0.0;
    double strategy_scale = 1.0;  // multiplies the optimal allocation
    unsigned workers = 1;
};

// Simulates (Y, X) with X driven by strategy_scale * pi_full and records the
// sample mean of V(t, X, Y) = U(X e^{r(T-t)}) G_full(t, Y) at checkpoints.
[[nodiscard]] MartingaleReport martingale_residual(const CirModel& model, double gamma, const ClosedFormAH& ah,
                                                   const TimeGrid& grid, const MartingaleOptions& options,
                                                   const RngSpec& rng);
[[nodiscard]] MartingaleReport martingale_residual(const LinearOuModel& model, double gamma, const ClosedFormAH& ah,
                                                   const TimeGrid& grid, const MartingaleOptions& options,
                                                   const RngSpec& rng);

// Drift bracket of (1-gamma) times the primal value process, divided by
// (1-gamma) xi / 2 and evaluated at an arbitrary allocation pi:
//   -|sigma^T pi|^2 + 2 (lambda/gamma + alpha/xi)^T sigma^T pi - 2 beta/((1-gamma) xi) - |alpha/xi|^2
[[nodiscard]] double drift_bracket(const Eigen::VectorXd& pi, const Eigen::VectorXd& hhat, double r,
                                   const Eigen::MatrixXd& sigma, double gamma, const Eigen::VectorXd& alpha_over_xi,
                                   double xi);
// |drift_bracket| at the optimal allocation.
[[nodiscard]] double drift_zero_check(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                                      const Eigen::VectorXd& alpha_over_xi, double xi);

}  // namespace pibsde
