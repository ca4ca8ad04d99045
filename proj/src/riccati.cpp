#include "pibsde/riccati.hpp"

#include "pibsde/errors.hpp"
#include "pibsde/filtering.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace pibsde {

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0.0) || gamma == 1.0 || !std::isfinite(gamma)) {
        throw ContractViolation("gamma must be > 0 and != 1");
    }
}

RiccatiSpec linear_spec(double kappa, double a, double rho, double sigma, double gamma) {
    const double g1 = (1.0 - gamma) / gamma;
    RiccatiSpec s;
    s.q2 = 2.0 * a * a * (1.0 + g1 * rho * rho);
    s.q1 = kappa - g1 * rho * a / sigma;
    s.q0 = g1 / (2.0 * sigma * sigma);
    s.h_coeff = a * a;
    return s;
}

constexpr double kBlowupLevel = 1e8;

}  // namespace

RiccatiSpec riccati_linear_full(const LinearOuModel& m, double gamma) {
    m.validate();
    check_gamma(gamma);
    return linear_spec(m.kappa, m.a, m.rho, m.sigma, gamma);
}

RiccatiSpec riccati_linear_partial(const LinearOuModel& m, double gamma) {
    m.validate();
    check_gamma(gamma);
    return linear_spec(m.kappa, abar(m), 1.0, m.sigma, gamma);
}

RiccatiSpec riccati_cir_full(const CirModel& m, double gamma) {
    m.validate();
    check_gamma(gamma);
    if (m.rho != 0.0 || m.r != 0.0) throw ContractViolation("CIR closed form requires rho = 0 and r = 0");
    RiccatiSpec s;
    s.q2 = 0.5 * m.a * m.a;
    s.q1 = 0.5 * m.kappa;
    s.q0 = m.c * m.c * (1.0 - gamma) / (2.0 * gamma * m.sigma * m.sigma);
    s.h_coeff = m.kappa * m.ybar;
    return s;
}

RiccatiRoots riccati_roots(const RiccatiSpec& s) {
    RiccatiRoots r;
    r.discriminant = s.q1 * s.q1 - s.q2 * s.q0;
    if (s.q2 == 0.0) {
        r.linear_fallback = true;
        if (s.q1 == 0.0) throw NumericFailure("degenerate Riccati equation: q2 = q1 = 0");
        r.A_plus = r.A_minus = s.q0 / (2.0 * s.q1);
        return r;
    }
    if (r.discriminant < 0.0) {
        r.real = false;
        r.A_plus = r.A_minus = s.q1 / s.q2;  // real part
        return r;
    }
    const double sq = std::sqrt(r.discriminant);
    // Larger-magnitude root directly, the other from the product q0 / q2.
    if (s.q1 >= 0.0) {
        r.A_plus = (s.q1 + sq) / s.q2;
        r.A_minus = r.A_plus != 0.0 ? s.q0 / (s.q2 * r.A_plus) : 0.0;
    } else {
        r.A_minus = (s.q1 - sq) / s.q2;
        r.A_plus = s.q0 / (s.q2 * r.A_minus);
    }
    return r;
}

RiccatiRoots linear_riccati_roots(const LinearOuModel& model, double gamma) {
    return riccati_roots(riccati_linear_full(model, gamma));
}

ClosedFormAH::ClosedFormAH(AhKind kind, const RiccatiSpec& spec, double T)
    : kind_(kind), spec_(spec), roots_(riccati_roots(spec)), T_(T) {
    if (!(T > 0.0)) throw ContractViolation("horizon T must be > 0");
    if (!roots_.real) {
        throw UnstableRegime("Riccati roots are complex (discriminant " + std::to_string(roots_.discriminant) +
                             "); value function blows up, see nirvana_blowup_time");
    }
    if (roots_.linear_fallback) return;
    D_ = 2.0 * std::sqrt(roots_.discriminant);
    if (D_ == 0.0) throw NumericFailure("double Riccati root: closed form undefined, integrate numerically");
    // Real roots of equal sign may still put a pole of A inside the horizon.
    const double ap = roots_.A_plus;
    const double am = roots_.A_minus;
    if (am != 0.0) {
        const double ratio = ap / am;  // pole where exp(-D tau) == ratio
        if (ratio > 0.0 && ratio < 1.0 && D_ > 0.0) {
            const double tau_star = -std::log(ratio) / D_;
            if (tau_star <= T) {
                throw UnstableRegime("A(t) has a pole at t = " + std::to_string(T - tau_star) +
                                     " inside the horizon");
            }
        }
    }
}

double ClosedFormAH::tau(double t) const {
    constexpr double slack = 1e-12;
    if (!(t >= -slack * T_) || !(t <= T_ * (1.0 + slack))) {
        throw ContractViolation("time outside [0, T] in closed-form evaluator");
    }
    return std::max(T_ - t, 0.0);
}

double ClosedFormAH::A(double t) const {
    const double tau_ = tau(t);
    if (tau_ == 0.0) return 0.0;
    if (roots_.linear_fallback) {
        // dA/dtau = -2 q1 A + q0
        return spec_.q0 * (-std::expm1(-2.0 * spec_.q1 * tau_)) / (2.0 * spec_.q1);
    }
    const double ap = roots_.A_plus;
    const double am = roots_.A_minus;
    const double e = std::exp(-D_ * tau_);
    return am * ap * (-std::expm1(-D_ * tau_)) / (ap - am * e);
}

double ClosedFormAH::H(double t) const {
    const double tau_ = tau(t);
    if (tau_ == 0.0) return 0.0;
    if (roots_.linear_fallback) {
        const double k = 2.0 * spec_.q1;
        return spec_.h_coeff * spec_.q0 / k * (tau_ + std::expm1(-k * tau_) / k);
    }
    const double ap = roots_.A_plus;
    const double am = roots_.A_minus;
    const double inner = am * (-std::expm1(-D_ * tau_)) / (ap - am);
    return spec_.h_coeff * (am * tau_ - std::log1p(inner) / spec_.q2);
}

ClosedFormAH make_AH(AhKind kind, const LinearOuModel& model, double gamma, double T) {
    if (model.mu != model.r) throw ContractViolation("linear closed forms require mu == r");
    switch (kind) {
        case AhKind::kLinearFull:
            return ClosedFormAH(kind, riccati_linear_full(model, gamma), T);
        case AhKind::kLinearPartial:
            return ClosedFormAH(kind, riccati_linear_partial(model, gamma), T);
        case AhKind::kCirFull:
            break;
    }
    throw ContractViolation("CIR closed form requested with a linear model");
}

ClosedFormAH make_AH(const CirModel& model, double gamma, double T) {
    return ClosedFormAH(AhKind::kCirFull, riccati_cir_full(model, gamma), T);
}

RiccatiSolution integrate_riccati_rk4(const RiccatiSpec& s, double T, int n_steps) {
    if (n_steps < 10) throw ContractViolation("RK4 integration needs n_steps >= 10");
    if (!(T > 0.0)) throw ContractViolation("horizon T must be > 0");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    RiccatiSolution out;
    out.t = Eigen::VectorXd::LinSpaced(n_steps + 1, 0.0, T);
    out.A = Eigen::VectorXd::Constant(n_steps + 1, nan);
    out.H = Eigen::VectorXd::Constant(n_steps + 1, nan);
    // In tau = T - t: dA/dtau = q2 A^2 - 2 q1 A + q0, dH/dtau = h_coeff A.
    auto fa = [&](double a) { return s.q2 * a * a - 2.0 * s.q1 * a + s.q0; };
    const double h = T / n_steps;
    double a = 0.0;
    double hv = 0.0;
    out.A(n_steps) = 0.0;
    out.H(n_steps) = 0.0;
    for (int k = 0; k < n_steps; ++k) {
        const double k1 = fa(a);
        const double a2 = a + 0.5 * h * k1;
        const double k2 = fa(a2);
        const double a3 = a + 0.5 * h * k2;
        const double k3 = fa(a3);
        const double a4 = a + h * k3;
        const double k4 = fa(a4);
        const double a_next = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double h_next = hv + h / 6.0 * s.h_coeff * (a + 2.0 * a2 + 2.0 * a3 + a4);
        const int idx = n_steps - k - 1;
        const bool diverged = !std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(k3) ||
                              !std::isfinite(k4) || !std::isfinite(a_next) || std::abs(a_next) > kBlowupLevel;
        if (diverged) {
            out.blowup_time = out.t(idx);
            return out;
        }
        a = a_next;
        hv = h_next;
        out.A(idx) = a;
        out.H(idx) = hv;
    }
    return out;
}

double full_discriminant(const LinearOuModel& m, double gamma) {
    m.validate();
    check_gamma(gamma);
    return m.kappa * m.kappa -
           ((1.0 - gamma) * m.a / (gamma * m.sigma)) * (2.0 * m.kappa * m.rho + m.a / m.sigma);
}

double partial_discriminant(const LinearOuModel& m, double gamma) {
    m.validate();
    check_gamma(gamma);
    const double ab = abar(m);
    return m.kappa * m.kappa - ((1.0 - gamma) * ab / (gamma * m.sigma)) * (2.0 * m.kappa + ab / m.sigma);
}

bool stability_full(const LinearOuModel& m, double gamma) { return full_discriminant(m, gamma) >= 0.0; }

bool stability_partial(const LinearOuModel& m, double gamma) { return partial_discriminant(m, gamma) >= 0.0; }

std::optional<double> nirvana_blowup_time(const RiccatiSpec& s, double T) {
    if (!(T > 0.0)) throw ContractViolation("horizon T must be > 0");
    const double disc = s.q1 * s.q1 - s.q2 * s.q0;
    if (disc >= 0.0 || s.q2 == 0.0) throw ContractViolation("nirvana_blowup_time requires complex Riccati roots");
    // A = -w'/(q2 w) with w'' + 2 q1 w' + q2 q0 w = 0, w'(0) = 0 in tau = T - t:
    // w = exp(-q1 tau)(cos(Xi tau) + (q1/Xi) sin(Xi tau)). Its first zero lies in (0, pi/Xi).
    const double xi = std::sqrt(-disc);
    const double ratio = s.q1 / xi;
    auto w = [&](double theta) { return std::cos(theta) + ratio * std::sin(theta); };
    double lo = 0.0;
    double hi = std::numbers::pi;
    while (hi - lo > 1e-12 * std::numbers::pi) {
        const double mid = 0.5 * (lo + hi);
        if (w(mid) > 0.0) lo = mid;
        else hi = mid;
    }
    const double tau_star = 0.5 * (lo + hi) / xi;
    if (tau_star > T) return std::nullopt;
    return T - tau_star;
}

std::optional<double> nirvana_blowup_time(const LinearOuModel& model, double gamma, double T) {
    return nirvana_blowup_time(riccati_linear_full(model, gamma), T);
}

double g_eval(const ClosedFormAH& ah, double t, double y) {
    const double a = ah.A(t);
    const double h = ah.H(t);
    return ah.kind() == AhKind::kCirFull ? std::exp(a * y + h) : std::exp(a * y * y + h);
}

double g_eval_dy(const ClosedFormAH& ah, double t, double y) {
    const double a = ah.A(t);
    const double g = g_eval(ah, t, y);
    return ah.kind() == AhKind::kCirFull ? a * g : 2.0 * a * y * g;
}

}  // namespace pibsde
