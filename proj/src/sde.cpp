#include "pibsde/sde.hpp"

#include "pibsde/errors.hpp"

#include <cmath>
#include <random>

namespace pibsde {

void TimeGrid::validate() const {
    if (n_steps < 1) throw ContractViolation("time grid needs n_steps >= 1");
    if (!(T > t0) || !std::isfinite(T) || !std::isfinite(t0)) throw ContractViolation("time grid needs T > t0");
}

namespace {

double draw_initial(const ScalarPrior& prior, std::mt19937_64& eng, std::normal_distribution<double>& nd) {
    if (prior.variance < 0.0) throw ContractViolation("prior variance must be >= 0");
    if (prior.variance == 0.0) return prior.mean;
    return prior.mean + std::sqrt(prior.variance) * nd(eng);
}

Eigen::MatrixXd gaussian_increments(int n, int cols, double dt, const RngSpec& rng) {
    auto eng = rng.engine();
    std::normal_distribution<double> nd;
    const double sd = std::sqrt(dt);
    Eigen::MatrixXd out(n, cols);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < cols; ++j) out(k, j) = sd * nd(eng);
    return out;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw NumericFailure(std::string("non-finite values in simulated ") + what);
}

double cir_step(const CirModel& m, double y, double db, double dt, CirScheme scheme) {
    const double yp = std::max(y, 0.0);
    double next = y + m.kappa * (m.ybar - yp) * dt + m.a * std::sqrt(yp) * db;
    if (scheme == CirScheme::kMilstein) next += 0.25 * m.a * m.a * (db * db - dt);
    return std::max(next, 0.0);
}

template <class M>
void fill_scalar_log_price(const M& model, PathBundle& out) {
    const double dt = out.grid.dt();
    const double sw = model.sigma_w();
    const double sy = model.sigma_y();
    const double half_var = 0.5 * (sw * sw + sy * sy);
    out.logS.resize(out.grid.n_steps + 1, 1);
    out.logS(0, 0) = 0.0;
    for (int k = 0; k < out.grid.n_steps; ++k) {
        out.logS(k + 1, 0) = out.logS(k, 0) + (model.h(out.Y(k, 0)) - half_var) * dt + sw * out.dW(k, 0) +
                             sy * out.dB(k, 0);
    }
    require_finite(out.logS, "log price");
}

}  // namespace

FactorPath simulate_factor(const LinearOuModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                           const RngSpec& rng) {
    model.validate();
    grid.validate();
    auto eng = rng.with_role(StreamRole::kFactorNoise).engine();
    std::normal_distribution<double> nd;
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const double decay = std::exp(-model.kappa * dt);
    const double var_i = model.a * model.a * (-std::expm1(-2.0 * model.kappa * dt)) / (2.0 * model.kappa);
    const double cov_ib = model.a * (-std::expm1(-model.kappa * dt)) / model.kappa;
    const double beta = cov_ib / dt;
    const double resid_sd = std::sqrt(std::max(var_i - beta * beta * dt, 0.0));
    const double sqdt = std::sqrt(dt);

    FactorPath p{grid, Eigen::VectorXd(n), Eigen::VectorXd(n + 1)};
    p.Y(0) = draw_initial(y0, eng, nd);
    for (int k = 0; k < n; ++k) {
        const double db = sqdt * nd(eng);
        const double z2 = nd(eng);
        p.dB(k) = db;
        p.Y(k + 1) = p.Y(k) * decay + beta * db + resid_sd * z2;
    }
    require_finite(p.Y, "factor path");
    return p;
}

FactorPath simulate_factor(const CirModel& model, const TimeGrid& grid, const ScalarPrior& y0, const RngSpec& rng,
                           CirScheme scheme) {
    model.validate();
    grid.validate();
    auto eng = rng.with_role(StreamRole::kFactorNoise).engine();
    std::normal_distribution<double> nd;
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const double sqdt = std::sqrt(dt);
    FactorPath p{grid, Eigen::VectorXd(n), Eigen::VectorXd(n + 1)};
    p.Y(0) = std::max(draw_initial(y0, eng, nd), 0.0);
    for (int k = 0; k < n; ++k) {
        p.dB(k) = sqdt * nd(eng);
        p.Y(k + 1) = cir_step(model, p.Y(k), p.dB(k), dt, scheme);
    }
    require_finite(p.Y, "factor path");
    return p;
}

PathBundle simulate_market(const LinearOuModel& model, const TimeGrid& grid, const ScalarPrior& y0,
                           const RngSpec& rng) {
    const FactorPath f = simulate_factor(model, grid, y0, rng);
    PathBundle out;
    out.grid = grid;
    out.dB = f.dB;
    out.Y = f.Y;
    out.dW = gaussian_increments(grid.n_steps, 1, grid.dt(), rng.with_role(StreamRole::kAssetNoise));
    fill_scalar_log_price(model, out);
    return out;
}

PathBundle simulate_market(const CirModel& model, const TimeGrid& grid, const ScalarPrior& y0, const RngSpec& rng,
                           CirScheme scheme) {
    const FactorPath f = simulate_factor(model, grid, y0, rng, scheme);
    PathBundle out;
    out.grid = grid;
    out.dB = f.dB;
    out.Y = f.Y;
    out.dW = gaussian_increments(grid.n_steps, 1, grid.dt(), rng.with_role(StreamRole::kAssetNoise));
    fill_scalar_log_price(model, out);
    return out;
}

PathBundle market_from_increments(const CirModel& model, const TimeGrid& grid, double y0, const Eigen::MatrixXd& dW,
                                  const Eigen::MatrixXd& dB, CirScheme scheme) {
    model.validate();
    grid.validate();
    const int n = grid.n_steps;
    if (dW.rows() != n || dB.rows() != n || dW.cols() != 1 || dB.cols() != 1) {
        throw ContractViolation("increment matrices must be n_steps x 1");
    }
    PathBundle out;
    out.grid = grid;
    out.dW = dW;
    out.dB = dB;
    out.Y.resize(n + 1, 1);
    out.Y(0, 0) = std::max(y0, 0.0);
    for (int k = 0; k < n; ++k) out.Y(k + 1, 0) = cir_step(model, out.Y(k, 0), dB(k, 0), grid.dt(), scheme);
    require_finite(out.Y, "factor path");
    fill_scalar_log_price(model, out);
    return out;
}

PathBundle market_from_increments(const GeneralModelSpec& spec, const TimeGrid& grid, const Eigen::VectorXd& y0,
                                  const Eigen::MatrixXd& dW, const Eigen::MatrixXd& dB) {
    spec.validate();
    grid.validate();
    const int n = grid.n_steps;
    const int d = spec.dim_d;
    const int q = spec.dim_q;
    if (y0.size() != q) throw ContractViolation("initial factor has wrong dimension");
    if (dW.rows() != n || dW.cols() != d || dB.rows() != n || dB.cols() != q) {
        throw ContractViolation("increment matrices have wrong shape");
    }
    const double dt = grid.dt();
    const Eigen::VectorXd half_var = 0.5 * spec.covariance().diagonal();
    PathBundle out;
    out.grid = grid;
    out.dW = dW;
    out.dB = dB;
    out.Y.resize(n + 1, q);
    out.logS.resize(n + 1, d);
    out.Y.row(0) = y0.transpose();
    out.logS.row(0).setZero();
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd yk = out.Y.row(k).transpose();
        const Eigen::VectorXd dbk = dB.row(k).transpose();
        const Eigen::VectorXd dwk = dW.row(k).transpose();
        out.Y.row(k + 1) = (yk + spec.b(yk) * dt + spec.a(yk) * dbk).transpose();
        out.logS.row(k + 1) =
            out.logS.row(k) + ((spec.h(yk) - half_var) * dt + spec.sigma_w * dwk + spec.sigma_y * dbk).transpose();
    }
    require_finite(out.Y, "factor path");
    require_finite(out.logS, "log price");
    return out;
}

PathBundle simulate_market(const GeneralModelSpec& spec, const TimeGrid& grid, const Eigen::VectorXd& y0,
                           const RngSpec& rng) {
    grid.validate();
    const Eigen::MatrixXd dB =
        gaussian_increments(grid.n_steps, spec.dim_q, grid.dt(), rng.with_role(StreamRole::kFactorNoise));
    const Eigen::MatrixXd dW =
        gaussian_increments(grid.n_steps, spec.dim_d, grid.dt(), rng.with_role(StreamRole::kAssetNoise));
    return market_from_increments(spec, grid, y0, dW, dB);
}

Eigen::MatrixXd coarsen_increments(const Eigen::MatrixXd& inc) {
    if (inc.rows() % 2 != 0) throw ContractViolation("coarsening needs an even number of steps");
    const Eigen::Index n = inc.rows() / 2;
    Eigen::MatrixXd out(n, inc.cols());
    for (Eigen::Index k = 0; k < n; ++k) out.row(k) = inc.row(2 * k) + inc.row(2 * k + 1);
    return out;
}

Eigen::VectorXd evolve_wealth(const GeneralModelSpec& spec, const PathBundle& path, const Eigen::MatrixXd& pi,
                              double x0) {
    if (!(x0 > 0.0)) throw ContractViolation("initial wealth must be > 0");
    const int n = path.n_steps();
    if (pi.rows() != n || pi.cols() != spec.dim_d) throw ContractViolation("strategy must be n_steps x d");
    if (!pi.allFinite()) throw InvalidStrategy("strategy contains non-finite values");
    const double dt = path.grid.dt();
    const Eigen::MatrixXd cov = spec.covariance();
    Eigen::VectorXd logx(n + 1);
    logx(0) = std::log(x0);
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd p = pi.row(k).transpose();
        const Eigen::VectorXd yk = path.Y.row(k).transpose();
        const Eigen::VectorXd excess = spec.h(yk).array() - spec.r;
        const double drift = spec.r + p.dot(excess) - 0.5 * p.dot(cov * p);
        const double noise =
            p.dot(spec.sigma_w * path.dW.row(k).transpose() + spec.sigma_y * path.dB.row(k).transpose());
        logx(k + 1) = logx(k) + drift * dt + noise;
    }
    if (!logx.allFinite()) throw NumericFailure("wealth overflow");
    return logx.array().exp();
}

namespace detail {

Eigen::VectorXd evolve_wealth_scalar(const PathBundle& path, const Eigen::VectorXd& h_at_steps,
                                     const Eigen::VectorXd& pi, double r, double sigma_w, double sigma_y, double x0) {
    if (!(x0 > 0.0)) throw ContractViolation("initial wealth must be > 0");
    const int n = path.n_steps();
    if (pi.size() != n) throw ContractViolation("strategy must have one value per step");
    if (!pi.allFinite()) throw InvalidStrategy("strategy contains non-finite values");
    const double dt = path.grid.dt();
    const double var = sigma_w * sigma_w + sigma_y * sigma_y;
    Eigen::VectorXd logx(n + 1);
    logx(0) = std::log(x0);
    for (int k = 0; k < n; ++k) {
        const double p = pi(k);
        logx(k + 1) = logx(k) + (r + p * (h_at_steps(k) - r) - 0.5 * p * p * var) * dt +
                      p * (sigma_w * path.dW(k, 0) + sigma_y * path.dB(k, 0));
    }
    if (!logx.allFinite()) throw NumericFailure("wealth overflow");
    return logx.array().exp();
}

}  // namespace detail

Eigen::MatrixXd innovations(const GeneralModelSpec& spec, const PathBundle& path, const Eigen::MatrixXd& hhat) {
    const int n = path.n_steps();
    const int d = spec.dim_d;
    if (hhat.rows() != n || hhat.cols() != d) throw ContractViolation("hhat must be n_steps x d");
    const Eigen::MatrixXd sigma = total_sigma(spec);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
    if (!lu.isInvertible()) throw InvalidModel("total volatility matrix is singular");
    const Eigen::VectorXd half_var = 0.5 * spec.covariance().diagonal();
    const double dt = path.grid.dt();
    Eigen::MatrixXd zeta(n + 1, d);
    zeta.row(0).setZero();
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd ret = (path.logS.row(k + 1) - path.logS.row(k)).transpose() + half_var * dt;
        const Eigen::VectorXd dnu = ret - hhat.row(k).transpose() * dt;
        zeta.row(k + 1) = zeta.row(k) + lu.solve(dnu).transpose();
    }
    return zeta;
}

Eigen::VectorXd innovations(const PathBundle& path, const Eigen::VectorXd& hhat, double sigma) {
    if (!(sigma > 0.0)) throw InvalidModel("sigma must be > 0");
    const int n = path.n_steps();
    if (hhat.size() != n) throw ContractViolation("hhat must have one value per step");
    const double dt = path.grid.dt();
    Eigen::VectorXd zeta(n + 1);
    zeta(0) = 0.0;
    for (int k = 0; k < n; ++k) {
        zeta(k + 1) = zeta(k) + (simple_return(path.dlogS(k), sigma, dt) - hhat(k) * dt) / sigma;
    }
    return zeta;
}

}  // namespace pibsde
