#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace pibsde {

// CRRA utility U(x) = x^{1-gamma}/(1-gamma) and its convex conjugate.
class PowerUtility {
public:
    explicit PowerUtility(double gamma);

    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    [[nodiscard]] double operator()(double x) const;
    [[nodiscard]] double marginal(double x) const;
    // U*(p) = gamma/(1-gamma) * p^{-(1-gamma)/gamma}
    [[nodiscard]] double conjugate(double p) const;

private:
    double gamma_;
};

// Hidden-factor market in full generality: d assets, q factors.
//   dS/S = h(Y) dt + sigma_w dW + sigma_y dB
//   dY   = b(Y) dt + a(Y) dB
struct GeneralModelSpec {
    int dim_d = 1;
    int dim_q = 1;
    double r = 0.0;
    Eigen::MatrixXd sigma_w;  // d x d
    Eigen::MatrixXd sigma_y;  // d x q
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> b;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> a;
    // Eigenvalues of sigma sigma^T must lie in [eps, 1/eps].
    double eps = 1e-8;

    // Throws InvalidModel on shape errors or when the covariance bound fails.
    void validate() const;
    [[nodiscard]] Eigen::MatrixXd covariance() const;  // sigma_w sigma_w^T + sigma_y sigma_y^T
};

// Ornstein-Uhlenbeck factor with linear drift h(y) = mu + y:
//   dS/S = (mu + Y) dt + sigma (sqrt(1-rho^2) dW + rho dB),  dY = -kappa Y dt + a dB
struct LinearOuModel {
    double mu = 0.0;
    double kappa = 8.0;
    double a = 0.3;
    double rho = -0.8;
    double sigma = 0.15;
    double r = 0.0;

    void validate() const;

    [[nodiscard]] double h(double y) const noexcept { return mu + y; }
    [[nodiscard]] double drift(double y) const noexcept { return -kappa * y; }
    [[nodiscard]] double diffusion(double /*y*/) const noexcept { return a; }
    [[nodiscard]] double sigma_w() const;
    [[nodiscard]] double sigma_y() const noexcept { return sigma * rho; }
    [[nodiscard]] double stationary_variance() const noexcept { return a * a / (2.0 * kappa); }

    [[nodiscard]] GeneralModelSpec to_general() const;
};

// Cox-Ingersoll-Ross factor with h(y) = c sqrt(y).
// The CIR diffusion vanishes at zero, so the uniform ellipticity assumption on
// a a^T is deliberately not checked here; the Feller condition replaces it.
struct CirModel {
    double c = 0.25;
    double kappa = 8.0;
    double ybar = 0.05;
    double a = 0.4;
    double sigma = 0.15;
    double rho = 0.0;
    double r = 0.0;

    void validate() const;

    [[nodiscard]] double h(double y) const noexcept;
    [[nodiscard]] double drift(double y) const noexcept { return kappa * (ybar - y); }
    [[nodiscard]] double diffusion(double y) const noexcept;
    [[nodiscard]] double sigma_w() const;
    [[nodiscard]] double sigma_y() const noexcept { return sigma * rho; }

    [[nodiscard]] GeneralModelSpec to_general() const;
};

struct ConditionReport {
    std::string check;
    double lhs = 0.0;
    double rhs = 0.0;
    bool ok = false;
};

// Symmetric PD square root of sigma_w sigma_w^T + sigma_y sigma_y^T.
[[nodiscard]] Eigen::MatrixXd total_sigma(const GeneralModelSpec& spec);

// Tightest admissible bounding constant for a scalar volatility: min(sigma^2, 1/sigma^2).
[[nodiscard]] double scalar_epsilon(double sigma);

[[nodiscard]] bool check_feller(const CirModel& model);

// c^2 T / (2 sigma^2) < 2 kappa / a^2
[[nodiscard]] ConditionReport check_novikov_cir(const CirModel& model, double T);

// 2 T |gamma-1| |gamma-2| / (eps gamma^2) < 2 kappa / a^2
[[nodiscard]] ConditionReport check_mgf_cir(const CirModel& model, double gamma, double T, double eps);

}  // namespace pibsde
