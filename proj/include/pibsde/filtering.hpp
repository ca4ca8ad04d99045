#pragma once

#include "pibsde/model.hpp"
#include "pibsde/sde.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace pibsde {

// ---------------------------------------------------------------- Kalman ---

// Nonnegative root of the stationary filter-variance equation. Pure formula,
// also defined for the degenerate |rho| = 1 case.
[[nodiscard]] double steady_state_variance(const LinearOuModel& model);
// Effective factor volatility seen by the partially informed investor.
[[nodiscard]] double abar(const LinearOuModel& model);
// Right-hand side of the conditional-variance ODE.
[[nodiscard]] double kalman_variance_rhs(const LinearOuModel& model, double var);

struct KalmanState {
    double yhat = 0.0;
    double var = 0.0;
};

class KalmanFilter {
public:
    KalmanFilter(const LinearOuModel& model, double dt, bool steady);

    // Consumes the log-price increment over one step starting at state s.
    [[nodiscard]] KalmanState step(const KalmanState& s, double dlogS) const;
    [[nodiscard]] bool steady() const noexcept { return steady_; }
    [[nodiscard]] double steady_var() const noexcept { return steady_var_; }
    [[nodiscard]] const LinearOuModel& model() const noexcept { return model_; }

private:
    LinearOuModel model_;
    double dt_;
    bool steady_;
    double steady_var_;
};

struct KalmanTrack {
    Eigen::VectorXd yhat;  // n+1
    Eigen::VectorXd var;   // n+1
    bool steady = false;
};

// With use_steady the variance is pinned at the stationary value and var0 is ignored.
[[nodiscard]] KalmanTrack kalman_run(const LinearOuModel& model, const PathBundle& path, bool use_steady,
                                     double yhat0, double var0);

// ------------------------------------------------------------------ Grid ---

// Row-banded row-stochastic matrix.
class BandedMatrix {
public:
    BandedMatrix() = default;
    explicit BandedMatrix(int n) : n_(n), first_(static_cast<std::size_t>(n), 0), offset_(static_cast<std::size_t>(n) + 1, 0) {}

    [[nodiscard]] int size() const noexcept { return n_; }
    [[nodiscard]] int first(int row) const { return first_[static_cast<std::size_t>(row)]; }
    [[nodiscard]] int width(int row) const {
        return offset_[static_cast<std::size_t>(row) + 1] - offset_[static_cast<std::size_t>(row)];
    }
    [[nodiscard]] const double* row_data(int row) const { return w_.data() + offset_[static_cast<std::size_t>(row)]; }
    [[nodiscard]] double row_sum(int row) const;
    [[nodiscard]] Eigen::MatrixXd dense() const;

    // Rows must be appended in order 0..n-1.
    void append_row(int row, int first, const std::vector<double>& weights);

    // out = this^T p
    void left_multiply(const Eigen::VectorXd& p, Eigen::VectorXd& out) const;

private:
    int n_ = 0;
    std::vector<int> first_;
    std::vector<int> offset_;
    std::vector<double> w_;
};

// Per-node model quantities the grid filter needs.
struct GridModelData {
    Eigen::VectorXd h;      // asset drift at each node
    Eigen::VectorXd drift;  // factor drift at each node
    Eigen::VectorXd diff;   // factor diffusion at each node
    double sigma = 1.0;
    double rho = 0.0;
};

// Discrete approximation of the conditional law of Y on a uniform grid.
// Each step first weighs the current law by the likelihood of the observed
// log return (whose drift depends on the factor at the start of the step) and
// then propagates through the one-step kernel. With rho != 0 the kernel is
// conditioned on the observation and rebuilt every step; with rho == 0 it is
// fixed and shared between copies.
struct GridFilter {
    Eigen::VectorXd nodes;
    Eigen::VectorXd probs;
    double dt = 0.0;
    GridModelData data;
    std::shared_ptr<const BandedMatrix> transition;  // null when rho != 0

    [[nodiscard]] int size() const noexcept { return static_cast<int>(nodes.size()); }
    [[nodiscard]] double spacing() const { return nodes(1) - nodes(0); }
};

struct GridBounds {
    double lo = 0.0;
    double hi = 0.0;
};

[[nodiscard]] GridBounds default_grid_bounds(const LinearOuModel& model);
[[nodiscard]] GridBounds default_grid_bounds(const CirModel& model);

// Prior is discretized by cell probabilities; a point mass is split between
// the two neighbouring nodes so that its mean is preserved.
[[nodiscard]] GridFilter grid_build(const LinearOuModel& model, int n, double y_lo, double y_hi, double dt,
                                    const ScalarPrior& prior);
[[nodiscard]] GridFilter grid_build(const CirModel& model, int n, double y_lo, double y_hi, double dt,
                                    const ScalarPrior& prior);

void grid_step_inplace(GridFilter& filter, double dlogS);
[[nodiscard]] GridFilter grid_step(const GridFilter& filter, double dlogS);

[[nodiscard]] double filter_mean(const GridFilter& filter, const std::function<double(double)>& g);
[[nodiscard]] double filter_mean_h(const GridFilter& filter);
[[nodiscard]] double filter_mean_y(const GridFilter& filter);

// Inverse-CDF draw of a node value from the current law, u01 in [0, 1).
[[nodiscard]] double sample_grid(const GridFilter& filter, double u01);

// Runs the grid filter along a whole path and returns the mean factor and
// mean asset drift at every grid time (n+1 entries each).
struct GridTrack {
    Eigen::VectorXd ymean;
    Eigen::VectorXd hmean;
};
[[nodiscard]] GridTrack grid_run(GridFilter filter, const PathBundle& path);

[[nodiscard]] inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace pibsde
