#pragma once

#include <optional>
#include <vector>

#include "sdcert/bounds.hpp"
#include "sdcert/lmi.hpp"
#include "sdcert/models.hpp"

namespace sdcert {

/// Least ᾱ_b with V(B̄x) ≤ ᾱ_b Ṽ(x).
[[nodiscard]] double extract_alpha_b(const SymMatrix& P, const SymMatrix& P_tilde, const Mat& B_bar);

/// Least ᾱ_f with V(Fx + ᾱx) ≤ ᾱ_f V(x).
[[nodiscard]] double extract_alpha_f(const SymMatrix& P, const Mat& F, double alpha_bar);

/// Least ᾱ_u with V(Fx) ≤ ᾱ_u V(x).
[[nodiscard]] double extract_alpha_u(const SymMatrix& P, const Mat& F);

/// Largest ᾱ with FᵀP + PF + ΣGⱼᵀPGⱼ ⪯ −2ᾱP (may be negative).
[[nodiscard]] double extract_alpha_bar(const SymMatrix& P, const Mat& F, const std::vector<Mat>& G);

struct GammaFit {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double tau_max = 0.0;
};

/// (γ₁, γ₂) satisfying the coupling block inequality for the closed loop, chosen to maximize the
/// two-function bound at the given ᾱ, ᾱ_b. For each γ₂ the least γ₁ is exact (Schur complement);
/// γ₂ is searched on a log grid over [1e-4, 1e6] and refined by golden section.
GammaFit fit_gamma(const LinearSampledModel& closed, const SymMatrix& P, const SymMatrix& P_tilde, double alpha_bar,
                   double alpha_b);

struct DesignOptions {
    /// P̃ = c̃P. Absent means the default 1.
    std::optional<double> c_tilde;
    /// Fractions of the supremal decay rate tried in order.
    std::vector<double> alpha_fractions{0.9, 0.7, 0.5, 0.3, 0.1};
    /// Keep going down the ladder after the first success and return the largest bound.
    bool best_of_ladder = true;
    double strictness = 1e-8;
    /// Enforced as YᵀY ⪯ k²Q with Q ⪰ I, which implies |K̂| ≤ k.
    std::optional<double> max_gain_norm = 10.0;
    int refine_iterations = 15;
    int shrink_steps = 12;
};

struct DesignTrace {
    double lambda_step1 = 0.0;
    double alpha_sup = 0.0;
    double alpha_fraction = 0.0;
    int refine_iterations = 0;
    int feasibility_solves = 0;
    /// (fraction, tau_max) for each rung that produced a design.
    std::vector<std::pair<double, double>> ladder;
};

struct DesignResult {
    Mat K;
    SymMatrix Q;
    Mat Y;
    LmiCertificate certificate;
    TwoFunctionConstants constants;
    SamplingBoundResult bound;
    DesignTrace trace;

    [[nodiscard]] double gain_norm() const;
};

/// State-feedback synthesis for a model in design mode.
DesignResult synthesize_feedback(const LinearSampledModel& model, const DesignOptions& options = {});

struct PlanarDesignOptions {
    std::vector<double> alpha_fractions{0.9, 0.7, 0.5, 0.3, 0.1};
    bool best_of_ladder = true;
    /// Scaling b of the sector term in the decay inequality is searched over [b_lo, b_hi].
    double b_lo = 1e-2;
    double b_hi = 1e2;
    /// Scaling c of the coupling inequality is searched over [c_lo, c_hi].
    double c_lo = 1e-2;
    double c_hi = 1e3;
    double strictness = 1e-8;
    std::optional<double> max_gain_norm = 30.0;
    int refine_iterations = 10;
    int shrink_steps = 10;
};

/// Synthesis for the planar plant with the sin nonlinearity; P̃ = P.
DesignResult synthesize_nonlinear_planar(const PlanarDesignOptions& options = {},
                                         const NonlinearPlanarModel& plant = {});

/// Exact constants of a planar-plant closed loop for fixed P, P̃: ᾱ maximized over b, then (c, γ₂)
/// chosen to maximize the bound.
struct PlanarConstants {
    double alpha_bar = 0.0;
    double b = 0.0;
    double alpha_b = 0.0;
    double c = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double tau_max = 0.0;
};

PlanarConstants extract_planar_constants(const Mat& gain, const SymMatrix& P, const SymMatrix& P_tilde,
                                         const PlanarDesignOptions& options = {},
                                         const NonlinearPlanarModel& plant = {});

} // namespace sdcert
