#include "pibsde/filtering.hpp"

#include "pibsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pibsde {

// ---------------------------------------------------------------- Kalman ---

double steady_state_variance(const LinearOuModel& model) {
    const double k = model.kappa * model.sigma * model.sigma + model.a * model.rho * model.sigma;
    const double m = model.a * model.sigma * std::sqrt(1.0 - model.rho * model.rho);
    // -k + sqrt(k^2 + m^2) written without cancellation.
    if (m == 0.0) return k >= 0.0 ? 0.0 : -2.0 * k;
    const double root = std::hypot(k, m);
    return k > 0.0 ? m * m / (k + root) : root - k;
}

double abar(const LinearOuModel& model) {
    return (steady_state_variance(model) + model.sigma * model.a * model.rho) / model.sigma;
}

double kalman_variance_rhs(const LinearOuModel& m, double var) {
    return m.a * m.a * (1.0 - m.rho * m.rho) - 2.0 * (m.kappa + m.a * m.rho / m.sigma) * var -
           var * var / (m.sigma * m.sigma);
}

KalmanFilter::KalmanFilter(const LinearOuModel& model, double dt, bool steady)
    : model_(model), dt_(dt), steady_(steady), steady_var_(steady_state_variance(model)) {
    if (!(dt >= 0.0)) throw ContractViolation("Kalman step needs dt >= 0");
}

KalmanState KalmanFilter::step(const KalmanState& s, double dlogS) const {
    const LinearOuModel& m = model_;
    const double var = steady_ ? steady_var_ : s.var;
    const double dnu = simple_return(dlogS, m.sigma, dt_) - (m.mu + s.yhat) * dt_;
    KalmanState next;
    next.yhat = s.yhat - m.kappa * s.yhat * dt_ + (var + m.sigma * m.a * m.rho) / (m.sigma * m.sigma) * dnu;
    if (steady_) {
        next.var = steady_var_;
    } else {
        const double h = dt_;
        const double k1 = kalman_variance_rhs(m, var);
        const double k2 = kalman_variance_rhs(m, var + 0.5 * h * k1);
        const double k3 = kalman_variance_rhs(m, var + 0.5 * h * k2);
        const double k4 = kalman_variance_rhs(m, var + h * k3);
        next.var = std::max(var + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0);
    }
    if (!std::isfinite(next.yhat) || !std::isfinite(next.var)) throw NumericFailure("Kalman filter overflow");
    return next;
}

KalmanTrack kalman_run(const LinearOuModel& model, const PathBundle& path, bool use_steady, double yhat0,
                       double var0) {
    if (!(var0 >= 0.0)) throw ContractViolation("initial filter variance must be >= 0");
    if (path.Y.cols() != 1 || path.logS.cols() != 1) throw ContractViolation("Kalman filter needs a scalar path");
    const int n = path.n_steps();
    if (path.logS.rows() != n + 1) throw ContractViolation("path log prices do not match its grid");
    const KalmanFilter kf(model, path.grid.dt(), use_steady);
    KalmanTrack tr{Eigen::VectorXd(n + 1), Eigen::VectorXd(n + 1), use_steady};
    KalmanState s{yhat0, use_steady ? kf.steady_var() : var0};
    tr.yhat(0) = s.yhat;
    tr.var(0) = s.var;
    for (int k = 0; k < n; ++k) {
        s = kf.step(s, path.dlogS(k));
        tr.yhat(k + 1) = s.yhat;
        tr.var(k + 1) = s.var;
    }
    return tr;
}

// ------------------------------------------------------------------ Grid ---

double BandedMatrix::row_sum(int row) const {
    const double* w = row_data(row);
    double s = 0.0;
    for (int i = 0; i < width(row); ++i) s += w[i];
    return s;
}

Eigen::MatrixXd BandedMatrix::dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_, n_);
    for (int j = 0; j < n_; ++j) {
        const double* w = row_data(j);
        for (int i = 0; i < width(j); ++i) m(j, first(j) + i) = w[i];
    }
    return m;
}

void BandedMatrix::append_row(int row, int first, const std::vector<double>& weights) {
    const auto r = static_cast<std::size_t>(row);
    first_[r] = first;
    w_.insert(w_.end(), weights.begin(), weights.end());
    offset_[r + 1] = static_cast<int>(w_.size());
}

void BandedMatrix::left_multiply(const Eigen::VectorXd& p, Eigen::VectorXd& out) const {
    out.setZero(n_);
    for (int j = 0; j < n_; ++j) {
        const double pj = p(j);
        if (pj == 0.0) continue;
        const double* w = row_data(j);
        const int f = first(j);
        const int wd = width(j);
        for (int i = 0; i < wd; ++i) out(f + i) += pj * w[i];
    }
}

namespace {

constexpr double kBandSd = 8.5;

// Probability that N(mean, sd^2) falls in the cell of each node, for the
// cells intersecting mean +/- kBandSd sd. Cells are bounded by midpoints
// between nodes and the end cells extend to infinity. Zero sd gives a point
// mass on the cell containing the mean.
int kernel_row(const Eigen::VectorXd& nodes, double mean, double sd, std::vector<double>& w) {
    const int n = static_cast<int>(nodes.size());
    const double y0 = nodes(0);
    const double hstep = nodes(1) - nodes(0);
    auto cell_of = [&](double x) {
        const double idx = std::floor((x - y0) / hstep + 0.5);
        return static_cast<int>(std::clamp(idx, 0.0, static_cast<double>(n - 1)));
    };
    w.clear();
    if (!(sd > 0.0)) {
        w.push_back(1.0);
        return cell_of(mean);
    }
    const int lo = cell_of(mean - kBandSd * sd);
    const int hi = cell_of(mean + kBandSd * sd);
    w.reserve(static_cast<std::size_t>(hi - lo + 1));
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
        const double zl = i == 0 ? -std::numeric_limits<double>::infinity() : (y0 + (i - 0.5) * hstep - mean) / sd;
        const double zu =
            i == n - 1 ? std::numeric_limits<double>::infinity() : (y0 + (i + 0.5) * hstep - mean) / sd;
        // Upper-tail form on the right half keeps small differences accurate.
        const double p = zl >= 0.0 ? normal_cdf(-zl) - normal_cdf(-zu) : normal_cdf(zu) - normal_cdf(zl);
        w.push_back(std::max(p, 0.0));
        total += w.back();
    }
    if (!(total > 0.0)) throw NumericFailure("grid transition row has no mass");
    for (double& x : w) x /= total;
    return lo;
}

Eigen::VectorXd discretize_prior(const Eigen::VectorXd& nodes, const ScalarPrior& prior) {
    const int n = static_cast<int>(nodes.size());
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    if (prior.variance < 0.0) throw ContractViolation("prior variance must be >= 0");
    if (prior.variance == 0.0) {
        const double hstep = nodes(1) - nodes(0);
        const double x = std::clamp((prior.mean - nodes(0)) / hstep, 0.0, static_cast<double>(n - 1));
        const int j = std::min(static_cast<int>(std::floor(x)), n - 2);
        const double frac = x - j;
        p(j) = 1.0 - frac;
        p(j + 1) = frac;
        return p;
    }
    std::vector<double> w;
    const int lo = kernel_row(nodes, prior.mean, std::sqrt(prior.variance), w);
    for (std::size_t i = 0; i < w.size(); ++i) p(lo + static_cast<int>(i)) = w[i];
    return p;
}

template <class M>
GridFilter build_impl(const M& model, int n, double y_lo, double y_hi, double dt, const ScalarPrior& prior) {
    model.validate();
    if (n < 3) throw ContractViolation("grid filter needs n >= 3 nodes");
    if (!(y_lo < y_hi)) throw ContractViolation("grid filter needs y_lo < y_hi");
    if (!(dt >= 0.0)) throw ContractViolation("grid filter needs dt >= 0");
    GridFilter f;
    f.nodes = Eigen::VectorXd::LinSpaced(n, y_lo, y_hi);
    f.dt = dt;
    f.data.h.resize(n);
    f.data.drift.resize(n);
    f.data.diff.resize(n);
    for (int j = 0; j < n; ++j) {
        const double y = f.nodes(j);
        f.data.h(j) = model.h(y);
        f.data.drift(j) = model.drift(y);
        f.data.diff(j) = model.diffusion(y);
    }
    f.data.sigma = model.sigma;
    f.data.rho = model.rho;
    f.probs = discretize_prior(f.nodes, prior);
    if (model.rho == 0.0) {
        auto t = std::make_shared<BandedMatrix>(n);
        std::vector<double> w;
        const double sq = std::sqrt(dt);
        for (int j = 0; j < n; ++j) {
            const int first = kernel_row(f.nodes, f.nodes(j) + f.data.drift(j) * dt, f.data.diff(j) * sq, w);
            t->append_row(j, first, w);
        }
        f.transition = std::move(t);
    }
    return f;
}

}  // namespace

GridBounds default_grid_bounds(const LinearOuModel& model) {
    const double sd = std::sqrt(model.stationary_variance());
    return {-6.0 * sd, 6.0 * sd};
}

GridBounds default_grid_bounds(const CirModel& model) {
    return {0.0, model.ybar + 8.0 * model.a * std::sqrt(model.ybar / (2.0 * model.kappa))};
}

GridFilter grid_build(const LinearOuModel& model, int n, double y_lo, double y_hi, double dt,
                      const ScalarPrior& prior) {
    return build_impl(model, n, y_lo, y_hi, dt, prior);
}

GridFilter grid_build(const CirModel& model, int n, double y_lo, double y_hi, double dt, const ScalarPrior& prior) {
    return build_impl(model, n, y_lo, y_hi, dt, prior);
}

void grid_step_inplace(GridFilter& f, double dlogS) {
    if (f.dt == 0.0) return;
    if (!std::isfinite(dlogS)) throw NumericFailure("non-finite observation fed to grid filter");
    const int n = f.size();
    const double s2dt = f.data.sigma * f.data.sigma * f.dt;
    const double half_var_dt = 0.5 * s2dt;

    // Bayes correction in log space.
    Eigen::VectorXd logw(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        if (f.probs(j) <= 0.0) {
            logw(j) = -std::numeric_limits<double>::infinity();
            continue;
        }
        const double e = dlogS - (f.data.h(j) * f.dt - half_var_dt);
        logw(j) = std::log(f.probs(j)) - 0.5 * e * e / s2dt;
        mx = std::max(mx, logw(j));
    }
    if (!std::isfinite(mx)) throw NumericFailure("grid filter collapse: no node carries weight");
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        const double w = std::isfinite(logw(j)) ? std::exp(logw(j) - mx) : 0.0;
        f.probs(j) = w;
        total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericFailure("grid filter collapse");
    f.probs /= total;

    // Propagation.
    Eigen::VectorXd next;
    if (f.transition) {
        f.transition->left_multiply(f.probs, next);
    } else {
        next.setZero(n);
        std::vector<double> w;
        const double sq = std::sqrt(f.dt);
        const double rho = f.data.rho;
        const double cond_sd = std::sqrt(1.0 - rho * rho) * sq;
        for (int j = 0; j < n; ++j) {
            const double pj = f.probs(j);
            if (pj < 1e-300) continue;
            const double obs_mean = f.data.h(j) * f.dt - half_var_dt;
            const double mean = f.nodes(j) + f.data.drift(j) * f.dt +
                                f.data.diff(j) * (rho / f.data.sigma) * (dlogS - obs_mean);
            const int first = kernel_row(f.nodes, mean, f.data.diff(j) * cond_sd, w);
            for (std::size_t i = 0; i < w.size(); ++i) next(first + static_cast<int>(i)) += pj * w[i];
        }
    }
    const double s = next.sum();
    if (!(s > 0.0)) throw NumericFailure("grid filter collapse after propagation");
    f.probs = next / s;
}

GridFilter grid_step(const GridFilter& filter, double dlogS) {
    GridFilter out = filter;
    grid_step_inplace(out, dlogS);
    return out;
}

double filter_mean(const GridFilter& f, const std::function<double(double)>& g) {
    double s = 0.0;
    for (int j = 0; j < f.size(); ++j) s += f.probs(j) * g(f.nodes(j));
    return s;
}

double filter_mean_h(const GridFilter& f) { return f.probs.dot(f.data.h); }

double filter_mean_y(const GridFilter& f) { return f.probs.dot(f.nodes); }

double sample_grid(const GridFilter& f, double u01) {
    double c = 0.0;
    for (int j = 0; j < f.size(); ++j) {
        c += f.probs(j);
        if (u01 < c) return f.nodes(j);
    }
    for (int j = f.size() - 1; j >= 0; --j)
        if (f.probs(j) > 0.0) return f.nodes(j);
    return f.nodes(f.size() - 1);
}

GridTrack grid_run(GridFilter filter, const PathBundle& path) {
    const int n = path.n_steps();
    GridTrack tr{Eigen::VectorXd(n + 1), Eigen::VectorXd(n + 1)};
    tr.ymean(0) = filter_mean_y(filter);
    tr.hmean(0) = filter_mean_h(filter);
    for (int k = 0; k < n; ++k) {
        grid_step_inplace(filter, path.dlogS(k));
        tr.ymean(k + 1) = filter_mean_y(filter);
        tr.hmean(k + 1) = filter_mean_h(filter);
    }
    return tr;
}

}  // namespace pibsde
