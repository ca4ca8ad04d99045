#pragma once

#include "pibsde/filtering.hpp"
#include "pibsde/model.hpp"
#include "pibsde/riccati.hpp"
#include "pibsde/rng.hpp"
#include "pibsde/sde.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace pibsde {

struct XiEstimate {
    double t = 0.0;
    double mean = 1.0;
    double std_error = 0.0;
    int n_inner = 0;
    // Average of exp((1-gamma)/(2 gamma^2) int |lambda|^2) over the same
    // branches. This drops the change of measure and is kept for comparison.
    double shorthand_mean = 1.0;
    double shorthand_std_error = 0.0;
    bool conditions_overridden = false;
};

enum class XiWeighting {
    // exp((1-gamma)/gamma (int lambda dzeta + 1/2 int |lambda|^2)): the dual
    // density raised to the conjugate power, unbiased under P.
    kDensityRatio,
    // exp((1-gamma)/(2 gamma^2) int |lambda|^2) under P.
    kExponentOnly,
};

struct XiOptions {
    int n_inner = 10;
    double dt = 1e-3;
    unsigned workers = 1;
    XiWeighting weighting = XiWeighting::kDensityRatio;
    bool override_conditions = false;
};

// Nested estimator of xi(t). Each inner branch draws Y(t) from the current
// filter law, simulates (Y, S) on [t, T], reruns the filter on the simulated
// prices and averages the branch weight. Branch l uses the stream
// RngSpec{rng.seed, l, kInnerBranch}; callers give every checkpoint its own seed.
[[nodiscard]] XiEstimate estimate_xi_nested(const LinearOuModel& model, const KalmanFilter& filter,
                                            const KalmanState& state, double gamma, double t, double T,
                                            const XiOptions& options, const RngSpec& rng);
[[nodiscard]] XiEstimate estimate_xi_nested(const CirModel& model, const GridFilter& filter, double gamma, double t,
                                            double T, const XiOptions& options, const RngSpec& rng);

[[nodiscard]] double xi_closed_form_linear(const LinearOuModel& model, double gamma, double T, double t,
                                           double yhat);
// Loading of log xi on the innovation Brownian motion.
[[nodiscard]] double alpha_over_xi_linear(const LinearOuModel& model, double gamma, double T, double t,
                                          double yhat);

struct BetaForms {
    double form1 = 0.0;
    double form2 = 0.0;
};
// Both displayed forms of the BSDE drift, without the consistency check.
[[nodiscard]] BetaForms beta_forms(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                                   const Eigen::VectorXd& alpha, double xi);
// Returns form1; throws NumericFailure if the forms disagree beyond 1e-10 relative.
[[nodiscard]] double beta_eval(const Eigen::VectorXd& hhat, double r, const Eigen::MatrixXd& sigma, double gamma,
                               const Eigen::VectorXd& alpha, double xi);

// Full-information HJB pieces. y is the factor (q), g > 0 the value
// coefficient, eta its factor loading (q).
[[nodiscard]] double F_eval(const Eigen::VectorXd& y, double g, const Eigen::VectorXd& eta,
                            const GeneralModelSpec& spec, double gamma);
[[nodiscard]] double f_eval(const Eigen::VectorXd& y, const Eigen::VectorXd& pi, double g,
                            const Eigen::VectorXd& eta, const GeneralModelSpec& spec, double gamma);
[[nodiscard]] Eigen::VectorXd pi_star_full(const Eigen::VectorXd& y, double g, const Eigen::VectorXd& eta,
                                           const GeneralModelSpec& spec, double gamma);

struct BsdeRecord {
    double t = 0.0;
    std::optional<double> xi;
    std::optional<double> alpha_over_xi;
    double chi = 1.0;
    double psi = 0.0;
};

// chi = G_full(t, Y), psi = a(Y) dG_full/dy along a factor path on grid.
[[nodiscard]] std::vector<BsdeRecord> chi_psi_path(const ClosedFormAH& ah, const LinearOuModel& model,
                                                   const TimeGrid& grid, const Eigen::VectorXd& Y);
[[nodiscard]] std::vector<BsdeRecord> chi_psi_path(const ClosedFormAH& ah, const CirModel& model,
                                                   const TimeGrid& grid, const Eigen::VectorXd& Y);

// Adds the partial-information closed forms along a Kalman track to the
// full-information records.
[[nodiscard]] std::vector<BsdeRecord> bsde_path_linear(const LinearOuModel& model, double gamma,
                                                       const PathBundle& path, const KalmanTrack& track);

enum class ResidualScheme {
    kEuler,     // sum psi dB
    kMilstein,  // adds 1/2 (d psi/dy) a(Y) (dB^2 - dt)
};

// chi(0) - chi(T) - int (1-gamma) F du + int psi dB on one path. The path
// should come from the matching factor scheme for the Milstein sum.
[[nodiscard]] double bsde_residual(const ClosedFormAH& ah, const CirModel& model, double gamma,
                                   const PathBundle& path, ResidualScheme scheme);
[[nodiscard]] double bsde_residual(const ClosedFormAH& ah, const LinearOuModel& model, double gamma,
                                   const PathBundle& path, ResidualScheme scheme);

}  // namespace pibsde
