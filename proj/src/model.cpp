#include "pibsde/model.hpp"

#include "pibsde/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pibsde {

namespace {

bool finite_all(std::initializer_list<double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

PowerUtility::PowerUtility(double gamma) : gamma_(gamma) {
    if (!(gamma > 0.0) || gamma == 1.0 || !std::isfinite(gamma)) {
        throw InvalidModel("power utility requires gamma > 0 and gamma != 1, got " + std::to_string(gamma));
    }
}

double PowerUtility::operator()(double x) const {
    return std::pow(x, 1.0 - gamma_) / (1.0 - gamma_);
}

double PowerUtility::marginal(double x) const { return std::pow(x, -gamma_); }

double PowerUtility::conjugate(double p) const {
    return gamma_ / (1.0 - gamma_) * std::pow(p, -(1.0 - gamma_) / gamma_);
}

Eigen::MatrixXd GeneralModelSpec::covariance() const {
    return sigma_w * sigma_w.transpose() + sigma_y * sigma_y.transpose();
}

void GeneralModelSpec::validate() const {
    if (dim_d < 1 || dim_q < 1) throw InvalidModel("model dimensions must be >= 1");
    if (sigma_w.rows() != dim_d || sigma_w.cols() != dim_d) throw InvalidModel("sigma_w must be d x d");
    if (sigma_y.rows() != dim_d || sigma_y.cols() != dim_q) throw InvalidModel("sigma_y must be d x q");
    if (!h || !b || !a) throw InvalidModel("model coefficient functions h, b, a must be set");
    if (!(r >= 0.0)) throw InvalidModel("interest rate must be >= 0");
    if (!(eps > 0.0)) throw InvalidModel("covariance bound eps must be > 0");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance());
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    // Relative slack absorbs rounding when eps is the exact scalar bound.
    constexpr double slack = 1e-12;
    if (!(lo >= eps * (1.0 - slack)) || !(hi <= (1.0 + slack) / eps)) {
        throw InvalidModel("eigenvalues of sigma sigma^T outside [eps, 1/eps]");
    }
}

void LinearOuModel::validate() const {
    if (!finite_all({mu, kappa, a, rho, sigma, r})) throw InvalidModel("linear model parameters must be finite");
    if (!(kappa > 0.0)) throw InvalidModel("kappa must be > 0");
    if (!(a > 0.0)) throw InvalidModel("a must be > 0");
    if (!(sigma > 0.0)) throw InvalidModel("sigma must be > 0");
    if (!(std::abs(rho) < 1.0)) throw InvalidModel("|rho| must be < 1");
    if (!(r >= 0.0)) throw InvalidModel("r must be >= 0");
}

double LinearOuModel::sigma_w() const { return sigma * std::sqrt(1.0 - rho * rho); }

GeneralModelSpec LinearOuModel::to_general() const {
    GeneralModelSpec g;
    g.dim_d = 1;
    g.dim_q = 1;
    g.r = r;
    g.sigma_w = Eigen::MatrixXd::Constant(1, 1, sigma_w());
    g.sigma_y = Eigen::MatrixXd::Constant(1, 1, sigma_y());
    const double mu_ = mu, kappa_ = kappa, a_ = a;
    g.h = [mu_](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, mu_ + y(0)); };
    g.b = [kappa_](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, -kappa_ * y(0)); };
    g.a = [a_](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, a_); };
    g.eps = scalar_epsilon(sigma);
    return g;
}

void CirModel::validate() const {
    if (!finite_all({c, kappa, ybar, a, sigma, rho, r})) throw InvalidModel("CIR model parameters must be finite");
    if (!(kappa > 0.0)) throw InvalidModel("kappa must be > 0");
    if (!(ybar > 0.0)) throw InvalidModel("ybar must be > 0");
    if (!(a > 0.0)) throw InvalidModel("a must be > 0");
    if (!(sigma > 0.0)) throw InvalidModel("sigma must be > 0");
    if (!(std::abs(rho) < 1.0)) throw InvalidModel("|rho| must be < 1");
    if (!(r >= 0.0)) throw InvalidModel("r must be >= 0");
    if (!check_feller(*this)) throw InvalidModel("Feller condition a^2 <= 2 kappa ybar violated");
}

double CirModel::h(double y) const noexcept { return c * std::sqrt(std::max(y, 0.0)); }

double CirModel::diffusion(double y) const noexcept { return a * std::sqrt(std::max(y, 0.0)); }

double CirModel::sigma_w() const { return sigma * std::sqrt(1.0 - rho * rho); }

GeneralModelSpec CirModel::to_general() const {
    GeneralModelSpec g;
    g.dim_d = 1;
    g.dim_q = 1;
    g.r = r;
    g.sigma_w = Eigen::MatrixXd::Constant(1, 1, sigma_w());
    g.sigma_y = Eigen::MatrixXd::Constant(1, 1, sigma_y());
    const CirModel m = *this;
    g.h = [m](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, m.h(y(0))); };
    g.b = [m](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, m.drift(y(0))); };
    g.a = [m](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, m.diffusion(y(0))); };
    g.eps = scalar_epsilon(sigma);
    return g;
}

Eigen::MatrixXd total_sigma(const GeneralModelSpec& spec) {
    const Eigen::MatrixXd cov = spec.covariance();
    if (cov.rows() != cov.cols() || cov.rows() == 0) throw InvalidModel("covariance must be square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw InvalidModel("eigendecomposition of sigma sigma^T failed");
    const Eigen::VectorXd lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > 0.0)) throw InvalidModel("sigma_w sigma_w^T + sigma_y sigma_y^T is not positive definite");
    return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

double scalar_epsilon(double sigma) {
    const double s2 = sigma * sigma;
    return std::min(s2, 1.0 / s2);
}

bool check_feller(const CirModel& model) {
    return model.a * model.a <= 2.0 * model.kappa * model.ybar;
}

ConditionReport check_novikov_cir(const CirModel& model, double T) {
    if (!(T > 0.0)) throw ContractViolation("check_novikov_cir requires T > 0");
    ConditionReport rep;
    rep.check = "novikov";
    rep.lhs = model.c * model.c * T / (2.0 * model.sigma * model.sigma);
    rep.rhs = 2.0 * model.kappa / (model.a * model.a);
    rep.ok = rep.lhs < rep.rhs;
    return rep;
}

ConditionReport check_mgf_cir(const CirModel& model, double gamma, double T, double eps) {
    if (!(gamma > 0.0) || gamma == 1.0) throw ContractViolation("check_mgf_cir requires gamma > 0, gamma != 1");
    if (!(eps > 0.0)) throw ContractViolation("check_mgf_cir requires eps > 0");
    ConditionReport rep;
    rep.check = "mgf";
    rep.lhs = 2.0 * T * std::abs(gamma - 1.0) * std::abs(gamma - 2.0) / (eps * gamma * gamma);
    rep.rhs = 2.0 * model.kappa / (model.a * model.a);
    rep.ok = rep.lhs < rep.rhs;
    return rep;
}

}  // namespace pibsde
