#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcert/models.hpp"
#include "sdcert/numerics.hpp"

namespace sdcert {

/// x ↦ base + Σ xᵢ·coeffs[i]; one (possibly zero) coefficient per variable.
struct AffineMatrixMap {
    SymMatrix base;
    std::vector<SymMatrix> coeffs;

    [[nodiscard]] std::size_t order() const { return base.order(); }
    [[nodiscard]] std::size_t variable_count() const { return coeffs.size(); }
    [[nodiscard]] SymMatrix value(const Vec& x) const;

    static AffineMatrixMap constant(const SymMatrix& m, std::size_t variable_count);
    static AffineMatrixMap block_diagonal(const std::vector<AffineMatrixMap>& blocks);

    friend AffineMatrixMap operator+(const AffineMatrixMap& a, const AffineMatrixMap& b);
    friend AffineMatrixMap operator-(const AffineMatrixMap& a, const AffineMatrixMap& b);
    friend AffineMatrixMap operator*(double s, const AffineMatrixMap& a);
};

/// Rectangular affine matrix expression used to assemble LMIs block by block.
class AffineExpr {
public:
    AffineExpr() = default;
    AffineExpr(Eigen::Index rows, Eigen::Index cols);
    static AffineExpr constant(const Mat& m);

    [[nodiscard]] Eigen::Index rows() const { return constant_.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return constant_.cols(); }
    [[nodiscard]] const Mat& constant_term() const { return constant_; }
    [[nodiscard]] const std::map<std::size_t, Mat>& terms() const { return terms_; }

    [[nodiscard]] Mat value(const Vec& x) const;
    [[nodiscard]] AffineExpr transpose() const;

    /// Symmetric part as a map over `variable_count` variables. Requires a square expression.
    [[nodiscard]] AffineMatrixMap to_map(std::size_t variable_count) const;

    /// Assembles a block matrix; row blocks must agree in height, column blocks in width.
    static AffineExpr blocks(const std::vector<std::vector<AffineExpr>>& grid);

    friend AffineExpr operator+(const AffineExpr& a, const AffineExpr& b);
    friend AffineExpr operator-(const AffineExpr& a, const AffineExpr& b);
    friend AffineExpr operator-(const AffineExpr& a);
    friend AffineExpr operator*(double s, const AffineExpr& a);
    friend AffineExpr operator*(const Mat& m, const AffineExpr& a);
    friend AffineExpr operator*(const AffineExpr& a, const Mat& m);

private:
    friend class VariableSet;
    Mat constant_;
    std::map<std::size_t, Mat> terms_;
};

class VariableSet {
public:
    AffineExpr scalar();
    AffineExpr symmetric(std::size_t order);
    AffineExpr matrix(std::size_t rows, std::size_t cols);
    [[nodiscard]] std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Certificates and verification

/// λ_max of an assembled inequality (≤ 0 means satisfied) and the norm it is judged against.
struct LmiMargin {
    std::string name;
    double margin = 0.0;
    double scale = 1.0;

    [[nodiscard]] bool passes(double rel_tol) const { return margin <= rel_tol * scale; }
};

using MarginSet = std::vector<LmiMargin>;

[[nodiscard]] bool all_pass(const MarginSet& margins, double rel_tol);
[[nodiscard]] double worst_margin(const MarginSet& margins);

struct LmiCertificate {
    SymMatrix P;
    std::optional<SymMatrix> P_tilde;
    double alpha_bar = 0.0;
    /// alpha_b, gamma1, gamma2, c_tilde, b, c as applicable.
    std::map<std::string, double> extras;
    std::optional<Mat> Q;
    std::optional<Mat> Y;
    std::optional<Mat> K_hat;

    [[nodiscard]] double extra(const std::string& key) const;
    [[nodiscard]] bool has(const std::string& key) const { return extras.count(key) > 0; }
    void validate() const;
};

/// P may be omitted when Q is present, in which case P = Q⁻¹.
LmiCertificate parse_certificate(const nlohmann::json& doc);
LmiCertificate load_certificate(const std::string& path);
nlohmann::json certificate_to_json(const LmiCertificate& cert);

/// FᵀP + PF + ΣGⱼᵀPGⱼ + 2ᾱP.
LmiMargin verify_lyapunov_ito(const Mat& F, const std::vector<Mat>& G, const SymMatrix& P, double alpha_bar);

/// (I+hF)ᵀP(I+hF) + hΣGⱼᵀPGⱼ − (1−c̄)P.
LmiMargin verify_em_lmi(const Mat& F, const std::vector<Mat>& G, const SymMatrix& P, double h, double c_bar);

/// Lyapunov–Itô for A+B̄, B̄ᵀPB̄ ⪯ ᾱ_bP̃, and the coupling block inequality.
MarginSet verify_two_function_lmis(const LinearSampledModel& model, const SymMatrix& P, const SymMatrix& P_tilde,
                          double alpha_bar, double alpha_b, double gamma1, double gamma2);

/// The three LMIs in (Q, Y) with P = Q⁻¹, P̃ = c̃P and K̂ = YQ⁻¹.
MarginSet verify_design_lmis(const LinearSampledModel& model, const SymMatrix& Q, const Mat& Y, double alpha_bar,
                             double alpha_b, double gamma1, double gamma2, double c_tilde);

/// The planar plant's LMIs with the sector envelope E₁ and scalings b, c.
MarginSet verify_example2_lmis(const Mat& gain, const SymMatrix& P, const SymMatrix& P_tilde, double alpha_bar,
                               double alpha_b, double gamma1, double gamma2, double b, double c,
                               const NonlinearPlanarModel& plant = {});

// ---------------------------------------------------------------------------
// Solver

enum class SolveStatus { feasible, infeasible_judged, failed };

[[nodiscard]] std::string to_string(SolveStatus status);

struct SolveReport {
    SolveStatus status = SolveStatus::failed;
    Vec point;
    double margin = 0.0;
    int iterations = 0;
};

struct FeasibilityOptions {
    /// Bound on ‖x‖ enforced by a log barrier.
    double radius = 1e6;
    int max_newton = 2000;
    /// Starting point; the origin when absent.
    std::optional<Vec> start;
};

/// Finds x with λ_max(map(x)) ≤ −strictness by a barrier method on min s s.t. map(x) ≺ sI.
SolveReport solve_feasibility(const AffineMatrixMap& map, double strictness, const FeasibilityOptions& options = {});

struct GevpResult {
    double lambda = 0.0;
    Vec point;
    int feasibility_solves = 0;
};

struct GevpOptions {
    double lambda_lo = 1e-6;
    double lambda_hi = 1e6;
    int iterations = 60;
    double strictness = 1e-8;
    FeasibilityOptions feasibility;
};

/// Smallest λ with numerator(x) ≺ λ·denominator(x), denominator(x) ≻ 0 and every extra map ≺ 0.
GevpResult minimize_gevp(const AffineMatrixMap& numerator, const AffineMatrixMap& denominator,
                         const std::vector<AffineMatrixMap>& extra = {}, const GevpOptions& options = {});

} // namespace sdcert
