#pragma once

#include "pibsde/model.hpp"

#include <Eigen/Dense>

#include <optional>

namespace pibsde {

// A'(t) + q2 A^2 - 2 q1 A + q0 = 0,  H'(t) + h_coeff A = 0,  A(T) = H(T) = 0.
struct RiccatiSpec {
    double q2 = 0.0;
    double q1 = 0.0;
    double q0 = 0.0;
    double h_coeff = 0.0;
};

[[nodiscard]] RiccatiSpec riccati_linear_full(const LinearOuModel& model, double gamma);
// The partially informed problem is the full-information one with rho = 1 and a = abar.
[[nodiscard]] RiccatiSpec riccati_linear_partial(const LinearOuModel& model, double gamma);
// Requires rho = 0 and r = 0.
[[nodiscard]] RiccatiSpec riccati_cir_full(const CirModel& model, double gamma);

struct RiccatiRoots {
    bool real = true;
    bool linear_fallback = false;  // q2 == 0: single root q0 / (2 q1)
    double A_plus = 0.0;           // (q1 + sqrt(disc)) / q2
    double A_minus = 0.0;          // (q1 - sqrt(disc)) / q2
    double discriminant = 0.0;     // q1^2 - q2 q0
};

[[nodiscard]] RiccatiRoots riccati_roots(const RiccatiSpec& spec);
[[nodiscard]] RiccatiRoots linear_riccati_roots(const LinearOuModel& model, double gamma);

enum class AhKind { kLinearFull, kLinearPartial, kCirFull };

// Explicit A(t), H(t) for real, distinct roots. Construction fails for any
// parameter set where the closed form does not exist on [0, T].
class ClosedFormAH {
public:
    ClosedFormAH(AhKind kind, const RiccatiSpec& spec, double T);

    [[nodiscard]] AhKind kind() const noexcept { return kind_; }
    [[nodiscard]] const RiccatiSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const RiccatiRoots& roots() const noexcept { return roots_; }
    [[nodiscard]] double T() const noexcept { return T_; }
    [[nodiscard]] double A_plus() const noexcept { return roots_.A_plus; }
    [[nodiscard]] double A_minus() const noexcept { return roots_.A_minus; }
    [[nodiscard]] double D() const noexcept { return D_; }

    [[nodiscard]] double A(double t) const;
    [[nodiscard]] double H(double t) const;

private:
    [[nodiscard]] double tau(double t) const;

    AhKind kind_;
    RiccatiSpec spec_;
    RiccatiRoots roots_;
    double T_;
    double D_ = 0.0;
};

// Throws UnstableRegime for complex roots or a real-root pole inside [0, T],
// and NumericFailure for a double root (use integrate_riccati_rk4 instead).
[[nodiscard]] ClosedFormAH make_AH(AhKind kind, const LinearOuModel& model, double gamma, double T);
[[nodiscard]] ClosedFormAH make_AH(const CirModel& model, double gamma, double T);

struct RiccatiSolution {
    Eigen::VectorXd t;  // ascending grid on [0, T]
    Eigen::VectorXd A;  // NaN before a blow-up
    Eigen::VectorXd H;
    std::optional<double> blowup_time;
};

// Classical RK4 backward from T. Divergence (|A| > 1e8 or a non-finite
// stage) is reported through blowup_time rather than thrown.
[[nodiscard]] RiccatiSolution integrate_riccati_rk4(const RiccatiSpec& spec, double T, int n_steps);

[[nodiscard]] double full_discriminant(const LinearOuModel& model, double gamma);
[[nodiscard]] double partial_discriminant(const LinearOuModel& model, double gamma);
[[nodiscard]] bool stability_full(const LinearOuModel& model, double gamma);
[[nodiscard]] bool stability_partial(const LinearOuModel& model, double gamma);

// First pole of A backward from T when the roots are complex, or nullopt if it
// lies before time 0. Throws ContractViolation for real roots.
[[nodiscard]] std::optional<double> nirvana_blowup_time(const RiccatiSpec& spec, double T);
[[nodiscard]] std::optional<double> nirvana_blowup_time(const LinearOuModel& model, double gamma, double T);

// exp(A y^2 + H) for linear kinds, exp(A y + H) for the CIR kind.
[[nodiscard]] double g_eval(const ClosedFormAH& ah, double t, double y);
// d/dy of g_eval.
[[nodiscard]] double g_eval_dy(const ClosedFormAH& ah, double t, double y);

}  // namespace pibsde
