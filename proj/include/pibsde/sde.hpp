#pragma once

#include "pibsde/model.hpp"
#include "pibsde/rng.hpp"

#include <Eigen/Dense>

#include <concepts>

namespace pibsde {

struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int n_steps = 1000;

    void validate() const;
    [[nodiscard]] double dt() const noexcept { return (T - t0) / n_steps; }
    [[nodiscard]] double time(int k) const noexcept { return t0 + (T - t0) * k / n_steps; }
};

// Normal law for an unobserved initial factor; variance 0 is a point mass.
struct ScalarPrior {
    double mean = 0.0;
    double variance = 0.0;
};

enum class CirScheme { kFullTruncation, kMilstein };

// Scalar factor path with the Brownian increments that drove it.
struct FactorPath {
    TimeGrid grid;
    Eigen::VectorXd dB;  // n_steps
    Eigen::VectorXd Y;   // n_steps + 1
};

// Rows are time steps; columns are components.
struct PathBundle {
    TimeGrid grid;
    Eigen::MatrixXd dW;    // n x d
    Eigen::MatrixXd dB;    // n x q
    Eigen::MatrixXd Y;     // (n+1) x q
    Eigen::MatrixXd logS;  // (n+1) x d

    [[nodiscard]] int n_steps() const noexcept { return grid.n_steps; }
    [[nodiscard]] double y(int k) const { return Y(k, 0); }
    [[nodiscard]] double dlogS(int k) const { return logS(k + 1, 0) - logS(k, 0); }
};

template <class M>
concept ScalarFactorModel = requires(const M& m, double y) {
    { m.h(y) } -> std::convertible_to<double>;
    { m.drift(y) } -> std::convertible_to<double>;
    { m.diffusion(y) } -> std::convertible_to<double>;
    { m.sigma_w() } -> std::convertible_to<double>;
    { m.sigma_y() } -> std::convertible_to<double>;
    { m.sigma } -> std::convertible_to<double>;
    { m.r } -> std::convertible_to<double>;
};

// Exact Gaussian transition for the OU factor.
[[nodiscard]] FactorPath simulate_factor(const LinearOuModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                                         const RngSpec& rng);
[[nodiscard]] FactorPath simulate_factor(const CirModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                                         const RngSpec& rng, CirScheme scheme = CirScheme::kFullTruncation);

[[nodiscard]] PathBundle simulate_market(const LinearOuModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                                         const RngSpec& rng);
[[nodiscard]] PathBundle simulate_market(const CirModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                                         const RngSpec& rng, CirScheme scheme = CirScheme::kFullTruncation);
// Euler-Maruyama for both Y and log S.
[[nodiscard]] PathBundle simulate_market(const GeneralModelSpec& spec, const TimeGrid& grid,
                                         const Eigen::VectorXd& y0, const RngSpec& rng);

// Deterministic builders from given Brownian increments, used for coupled
// refinement studies. dW and dB have n_steps rows.
[[nodiscard]] PathBundle market_from_increments(const CirModel& model, const TimeGrid& grid, double y0,
                                                const Eigen::MatrixXd& dW, const Eigen::MatrixXd& dB,
                                                CirScheme scheme = CirScheme::kFullTruncation);
[[nodiscard]] PathBundle market_from_increments(const GeneralModelSpec& spec, const TimeGrid& grid,
                                                const Eigen::VectorXd& y0, const Eigen::MatrixXd& dW,
                                                const Eigen::MatrixXd& dB);

// Sums consecutive pairs of rows: increments on a grid with half as many steps.
[[nodiscard]] Eigen::MatrixXd coarsen_increments(const Eigen::MatrixXd& increments);

// Log-Euler wealth under per-step allocations pi (n x d). Returns n+1 values.
[[nodiscard]] Eigen::VectorXd evolve_wealth(const GeneralModelSpec& spec, const PathBundle& path,
                                            const Eigen::MatrixXd& pi, double x0);

template <ScalarFactorModel M>
[[nodiscard]] Eigen::VectorXd evolve_wealth(const M& model, const PathBundle& path, const Eigen::VectorXd& pi,
                                            double x0);

// Cumulative innovations zeta (n+1 rows x d). hhat has n rows, one per step start.
[[nodiscard]] Eigen::MatrixXd innovations(const GeneralModelSpec& spec, const PathBundle& path,
                                          const Eigen::MatrixXd& hhat);
[[nodiscard]] Eigen::VectorXd innovations(const PathBundle& path, const Eigen::VectorXd& hhat, double sigma);

// Observed simple return over step k under the log-return convention:
// dS/S ~ dlogS + sigma^2 dt / 2.
[[nodiscard]] inline double simple_return(double dlogS, double sigma, double dt) noexcept {
    return dlogS + 0.5 * sigma * sigma * dt;
}

// ---- implementation of templates ----

namespace detail {
[[nodiscard]] Eigen::VectorXd evolve_wealth_scalar(const PathBundle& path, const Eigen::VectorXd& h_at_steps,
                                                   const Eigen::VectorXd& pi, double r, double sigma_w,
                                                   double sigma_y, double x0);
}  // namespace detail

template <ScalarFactorModel M>
Eigen::VectorXd evolve_wealth(const M& model, const PathBundle& path, const Eigen::VectorXd& pi, double x0) {
    const int n = path.n_steps();
    Eigen::VectorXd hk(n);
    for (int k = 0; k < n; ++k) hk(k) = model.h(path.y(k));
    return detail::evolve_wealth_scalar(path, hk, pi, model.r, model.sigma_w(), model.sigma_y(), x0);
}

}  // namespace pibsde
