#pragma once

#include <optional>
#include <string>

namespace sdcert {

/// Constants of a pair of candidate Lyapunov functions for the physical and cyber blocks.
struct GainConstants {
    double alpha1 = 1.0;
    double alpha2 = 0.0;
    double alphat1 = 0.0;
    double alphat2 = 1.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;
    double p = 2.0;

    void validate() const;
};

/// Single shared Lyapunov function: decay ᾱ, feedback gain ᾱ_b, shifted drift gain ᾱ_f.
struct EmulationConstants {
    double alpha_bar = 0.0;
    double alpha_b = 0.0;
    double alpha_f = 0.0;

    void validate() const;
};

/// Separate physical and cyber Lyapunov functions.
struct TwoFunctionConstants {
    double alpha_bar = 0.0;
    double alpha_b = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;

    void validate() const;
};

enum class BoundKind { generic, single_v, single_v_rate, two_v, dta };

[[nodiscard]] std::string to_string(BoundKind kind);

struct SamplingBoundResult {
    double q_star = 0.0;
    double tau_max = 0.0;
    BoundKind provenance = BoundKind::generic;
    /// Interval the optimizer was confined to.
    double bracket_lo = 0.0;
    double bracket_hi = 1.0;
    std::optional<double> b1_star;
    std::optional<double> b2_star;
    std::optional<double> r_star;
    std::optional<double> q0;
    /// Set when the generic bound loses its q-dependence (α₂ = 0 or α̃₁ = 0).
    bool degenerate = false;
};

/// τ̂(q) = −ln q / (α₂α̃₁/(α₁q) + α̃₂).
[[nodiscard]] double htau_generic(double q, const GainConstants& g);

struct ConditionIII {
    double value = 0.0;
    bool ok = false;
    /// value == 0: the sampled-data case where the sum can be taken arbitrarily small.
    bool degenerate = false;
};

[[nodiscard]] ConditionIII check_condition_iii(const GainConstants& g);

/// Maximizes htau_generic over (q̂₀, 1). In the degenerate case the bound is −ln q̂/α̃₂ evaluated
/// at the caller's q̂, or at q̂₀ = s when s > 0.
SamplingBoundResult solve_qhat_star(const GainConstants& g, std::optional<double> q_hat = std::nullopt);

/// Residual of (α₂α̃₁/(α₁α̃₂))(1 + ln q) + q.
[[nodiscard]] double qhat_star_residual(double q, const GainConstants& g);

/// τ̄(q, b₁, b₂), the single-function bound before optimizing b₁, b₂.
[[nodiscard]] double tau_bar_single(double q, double b1, double b2, const EmulationConstants& c);

/// Derivative condition whose root in (0, e⁻¹) is q*.
[[nodiscard]] double single_v_residual(double q, const EmulationConstants& c);

SamplingBoundResult emulation_bound_single(const EmulationConstants& c);

/// τ̂(q) with b₁, b₂ frozen at their optima; equals tau_max at q = q*.
[[nodiscard]] double emulation_curve_single(double q, const EmulationConstants& c, const SamplingBoundResult& at);

/// Same bound in the rate variable r = ᾱ√q ∈ (0, ᾱ/√e).
SamplingBoundResult emulation_bound_single_rate_form(const EmulationConstants& c);

/// τ̂(q) = −ᾱ²q ln q / (ᾱ_bγ₁ + γ₂ᾱ²q).
[[nodiscard]] double htau_two(double q, const TwoFunctionConstants& c);

/// ᾱ²γ₂q + ᾱ_bγ₁(ln q + 1).
[[nodiscard]] double two_v_residual(double q, const TwoFunctionConstants& c);

SamplingBoundResult emulation_bound_two(const TwoFunctionConstants& c);

/// ᾱ from the discrete decay factor: 2ᾱ = c̄/h + ᾱ_u h. Requires c̄ + ᾱ_u h² < 1.
[[nodiscard]] double dta_map(double c_bar, double h, double alpha_u);

/// c̄ = (2ᾱ − ᾱ_u h)h for h in (0, (2ᾱ/ᾱ_u) ∧ (2ᾱ)⁻¹).
[[nodiscard]] double dta_cbar(double alpha_bar, double alpha_u, double h);

SamplingBoundResult dta_bound(double c_bar, double h, double alpha_u, double alpha_b, double alpha_f);

} // namespace sdcert
