#include "sdcert/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "sdcert/errors.hpp"
#include "sdcert/numerics.hpp"

namespace sdcert {

namespace {

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw DomainError(std::string(field) + ": " + what);
    }
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }
bool nonnegative(double v) { return v >= 0.0 && std::isfinite(v); }

/// Root of a residual that is increasing in ln q on (−∞, u_hi), found in the log variable
/// so that very small roots do not underflow.
double log_root(const ScalarFunction& residual_in_q, double u_hi) {
    auto fu = [&](double u) { return residual_in_q(std::exp(u)); };
    double u_lo = u_hi - 1.0;
    while (fu(u_lo) >= 0.0) {
        u_lo = u_hi - 2.0 * (u_hi - u_lo);
        if (u_lo < -700.0) {
            throw NumericalFailure("sampling bound: root lies below the representable range");
        }
    }
    return std::exp(find_root(fu, make_bracket(fu, u_lo, u_hi), 0.0));
}

} // namespace

void GainConstants::validate() const {
    require(positive(alpha1), "alpha1", "must be positive");
    require(nonnegative(alpha2), "alpha2", "must be non-negative");
    require(nonnegative(alphat1), "alphat1", "must be non-negative");
    require(positive(alphat2), "alphat2", "must be positive");
    require(nonnegative(beta1), "beta1", "must be non-negative");
    require(nonnegative(beta2), "beta2", "must be non-negative");
    require(nonnegative(beta3), "beta3", "must be non-negative");
    require(positive(p), "p", "must be positive");
}

void EmulationConstants::validate() const {
    require(positive(alpha_bar), "alpha_bar", "must be positive");
    require(positive(alpha_b), "alpha_b", "must be positive");
    require(positive(alpha_f), "alpha_f", "must be positive");
}

void TwoFunctionConstants::validate() const {
    require(positive(alpha_bar), "alpha_bar", "must be positive");
    require(positive(alpha_b), "alpha_b", "must be positive");
    require(positive(gamma1), "gamma1", "must be positive");
    require(positive(gamma2), "gamma2", "must be positive");
}

std::string to_string(BoundKind kind) {
    switch (kind) {
    case BoundKind::generic:
        return "generic";
    case BoundKind::single_v:
        return "single-v";
    case BoundKind::single_v_rate:
        return "single-v-rate";
    case BoundKind::two_v:
        return "two-v";
    case BoundKind::dta:
        return "dta";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Generic pair of Lyapunov functions

double htau_generic(double q, const GainConstants& g) {
    g.validate();
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("htau_generic: q must lie in (0, 1)");
    }
    const double coupling = g.alpha2 * g.alphat1 / g.alpha1;
    return -std::log(q) / (coupling / q + g.alphat2);
}

ConditionIII check_condition_iii(const GainConstants& g) {
    ConditionIII out;
    out.value = g.alpha2 * g.beta1 / g.alpha1 + g.beta2 + g.beta3;
    out.ok = out.value < 1.0;
    out.degenerate = out.value == 0.0;
    return out;
}

double qhat_star_residual(double q, const GainConstants& g) {
    const double k = g.alpha2 * g.alphat1 / (g.alpha1 * g.alphat2);
    return k * (1.0 + std::log(q)) + q;
}

SamplingBoundResult solve_qhat_star(const GainConstants& g, std::optional<double> q_hat) {
    g.validate();
    const ConditionIII cond = check_condition_iii(g);
    if (!cond.ok) {
        throw InfeasibleError("condition (iii) fails: sum " + std::to_string(cond.value) + " is not below 1");
    }
    const double s = cond.value;

    SamplingBoundResult out;
    out.provenance = BoundKind::generic;

    if (g.alpha2 == 0.0 || g.alphat1 == 0.0) {
        out.degenerate = true;
        out.q0 = s;
        out.bracket_lo = s;
        double q = 0.0;
        if (q_hat) {
            q = *q_hat;
            if (!(q > s && q < 1.0)) {
                throw DomainError("solve_qhat_star: supplied q must lie in (q0, 1)");
            }
        } else if (s > 0.0) {
            q = s;
        } else {
            throw DomainError("solve_qhat_star: bound is unbounded as q -> 0; supply q");
        }
        out.q_star = q;
        out.tau_max = -std::log(q) / g.alphat2;
        return out;
    }

    const double k = g.alpha2 * g.alphat1 / (g.alpha1 * g.alphat2);
    const double lo = std::exp(-(1.0 + 1.0 / k));
    auto f = [&](double q) { return qhat_star_residual(q, g); };
    const double qstar = find_root(f, make_bracket(f, lo, 1.0), 0.0);
    const double q0 = std::max(s, lo);

    out.q_star = std::max(qstar, q0);
    out.q0 = q0;
    out.bracket_lo = lo;
    out.bracket_hi = 1.0;
    out.tau_max = htau_generic(out.q_star, g);
    return out;
}

// ---------------------------------------------------------------------------
// Single Lyapunov function

double tau_bar_single(double q, double b1, double b2, const EmulationConstants& c) {
    const double a2q = c.alpha_bar * c.alpha_bar * q;
    const double den = (2.0 * std::sqrt(c.alpha_b) + b1 + (b1 + c.alpha_bar) * b2) * a2q +
                       c.alpha_b * (b1 + c.alpha_f / b1 + (b1 + c.alpha_bar) / b2);
    return -a2q * std::log(q) / den;
}

double single_v_residual(double q, const EmulationConstants& c) {
    const double r = c.alpha_bar * std::sqrt(q);
    const double af = c.alpha_bar + std::sqrt(c.alpha_f);
    return 2.0 * r * r + af * r + (af * r + 2.0 * std::sqrt(c.alpha_b * c.alpha_f)) * (std::log(q) + 1.0);
}

SamplingBoundResult emulation_bound_single(const EmulationConstants& c) {
    c.validate();
    const double qstar = log_root([&](double q) { return single_v_residual(q, c); }, -1.0);
    const double rq = c.alpha_bar * std::sqrt(qstar);

    SamplingBoundResult out;
    out.provenance = BoundKind::single_v;
    out.q_star = qstar;
    out.bracket_lo = 0.0;
    out.bracket_hi = std::exp(-1.0);
    out.b1_star = std::sqrt(c.alpha_b * c.alpha_f) / (rq + std::sqrt(c.alpha_b));
    out.b2_star = std::sqrt(c.alpha_b) / rq;
    out.r_star = rq;
    out.tau_max = tau_bar_single(qstar, *out.b1_star, *out.b2_star, c);
    return out;
}

double emulation_curve_single(double q, const EmulationConstants& c, const SamplingBoundResult& at) {
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("emulation_curve_single: q must lie in (0, 1)");
    }
    const double rs = c.alpha_bar * std::sqrt(at.q_star);
    const double a2q = c.alpha_bar * c.alpha_bar * q;
    const double af = c.alpha_bar + std::sqrt(c.alpha_f);
    const double den =
        std::sqrt(c.alpha_b) * ((2.0 * rs + af) * a2q + af * rs * rs + 2.0 * std::sqrt(c.alpha_b * c.alpha_f) * rs);
    return -rs * a2q * std::log(q) / den;
}

SamplingBoundResult emulation_bound_single_rate_form(const EmulationConstants& c) {
    c.validate();
    const double a = c.alpha_bar;
    const double af = a + std::sqrt(c.alpha_f);
    const double cross = 2.0 * std::sqrt(c.alpha_b * c.alpha_f);
    const double r_hi = a / std::sqrt(std::exp(1.0));
    const double ln_hi = std::log(r_hi);

    auto residual = [&](double r) { return 2.0 * r * r + af * r + 2.0 * (af * r + cross) * (std::log(r) - ln_hi); };
    // residual(r_hi) > 0 and residual → −∞ as r → 0⁺; search in ln r.
    auto fu = [&](double u) { return residual(std::exp(u)); };
    double u_lo = ln_hi - 1.0;
    while (fu(u_lo) >= 0.0) {
        u_lo = ln_hi - 2.0 * (ln_hi - u_lo);
        if (u_lo < -700.0) {
            throw NumericalFailure("rate-form bound: root lies below the representable range");
        }
    }
    const double rs = std::exp(find_root(fu, make_bracket(fu, u_lo, ln_hi), 0.0));

    SamplingBoundResult out;
    out.provenance = BoundKind::single_v_rate;
    out.r_star = rs;
    out.q_star = (rs / a) * (rs / a);
    out.bracket_lo = 0.0;
    out.bracket_hi = std::exp(-1.0);
    out.b1_star = std::sqrt(c.alpha_b * c.alpha_f) / (rs + std::sqrt(c.alpha_b));
    out.b2_star = std::sqrt(c.alpha_b) / rs;
    const double num = -2.0 * rs * rs * rs * (std::log(rs) - std::log(a));
    const double den = std::sqrt(c.alpha_b) * ((2.0 * rs + af) * rs * rs + af * rs * rs + cross * rs);
    out.tau_max = num / den;
    return out;
}

// ---------------------------------------------------------------------------
// Two Lyapunov functions

double htau_two(double q, const TwoFunctionConstants& c) {
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("htau_two: q must lie in (0, 1)");
    }
    const double a2q = c.alpha_bar * c.alpha_bar * q;
    return -a2q * std::log(q) / (c.alpha_b * c.gamma1 + c.gamma2 * a2q);
}

double two_v_residual(double q, const TwoFunctionConstants& c) {
    return c.alpha_bar * c.alpha_bar * c.gamma2 * q + c.alpha_b * c.gamma1 * (std::log(q) + 1.0);
}

SamplingBoundResult emulation_bound_two(const TwoFunctionConstants& c) {
    c.validate();
    SamplingBoundResult out;
    out.provenance = BoundKind::two_v;
    out.q_star = log_root([&](double q) { return two_v_residual(q, c); }, -1.0);
    out.bracket_lo = 0.0;
    out.bracket_hi = std::exp(-1.0);
    out.tau_max = htau_two(out.q_star, c);
    return out;
}

// ---------------------------------------------------------------------------
// Discrete-time approximation

double dta_map(double c_bar, double h, double alpha_u) {
    if (!(c_bar > 0.0 && c_bar < 1.0)) {
        throw DomainError("dta_map: c_bar must lie in (0, 1)");
    }
    if (!positive(h) || !positive(alpha_u)) {
        throw DomainError("dta_map: h and alpha_u must be positive");
    }
    if (!(c_bar + alpha_u * h * h < 1.0)) {
        throw DomainError("dta_map: step size must satisfy h < 1/(2 alpha_bar)");
    }
    return 0.5 * (c_bar / h + alpha_u * h);
}

double dta_cbar(double alpha_bar, double alpha_u, double h) {
    if (!positive(alpha_bar) || !positive(alpha_u) || !positive(h)) {
        throw DomainError("dta_cbar: arguments must be positive");
    }
    if (!(h < 2.0 * alpha_bar / alpha_u && 2.0 * alpha_bar * h < 1.0)) {
        throw DomainError("dta_cbar: h outside (0, (2 alpha_bar/alpha_u) ^ (2 alpha_bar)^-1)");
    }
    return (2.0 * alpha_bar - alpha_u * h) * h;
}

SamplingBoundResult dta_bound(double c_bar, double h, double alpha_u, double alpha_b, double alpha_f) {
    const double alpha_bar = dta_map(c_bar, h, alpha_u);
    SamplingBoundResult out = emulation_bound_single_rate_form({alpha_bar, alpha_b, alpha_f});
    out.provenance = BoundKind::dta;
    return out;
}

} // namespace sdcert
