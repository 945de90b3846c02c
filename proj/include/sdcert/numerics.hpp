#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace sdcert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Dense real symmetric matrix. The stored matrix is always exactly symmetric:
/// construction from an arbitrary square matrix keeps its symmetric part.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Mat& m);

    static SymMatrix identity(std::size_t order);
    static SymMatrix zero(std::size_t order);
    static SymMatrix diagonal(const Vec& d);

    [[nodiscard]] std::size_t order() const noexcept { return static_cast<std::size_t>(m_.rows()); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
    [[nodiscard]] const Mat& matrix() const noexcept { return m_; }

    /// Frobenius norm.
    [[nodiscard]] double norm() const { return m_.norm(); }

    /// Congruence transform Mᵀ S M.
    [[nodiscard]] SymMatrix congruence(const Mat& m) const;

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b);
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b);
    friend SymMatrix operator*(double s, const SymMatrix& a);
    friend bool operator==(const SymMatrix& a, const SymMatrix& b) { return a.m_ == b.m_; }

private:
    struct Trusted {};
    SymMatrix(Mat m, Trusted) : m_(std::move(m)) {}

    Mat m_;
};

struct EigenDecomposition {
    Vec eigenvalues;  // ascending
    Mat eigenvectors; // orthonormal columns, column i pairs with eigenvalues(i)

    [[nodiscard]] double max() const { return eigenvalues(eigenvalues.size() - 1); }
    [[nodiscard]] double min() const { return eigenvalues(0); }
};

/// Cyclic Jacobi eigensolver. Throws NumericalFailure after `max_sweeps` sweeps.
EigenDecomposition sym_eig(const SymMatrix& s, int max_sweeps = 100);

[[nodiscard]] double lambda_max(const SymMatrix& s);
[[nodiscard]] double lambda_min(const SymMatrix& s);

/// Strict predicate: λ_min(S) > tol.
[[nodiscard]] bool is_pos_def(const SymMatrix& s, double tol = 0.0);

/// Relative tolerance 1e-9·(1+‖S‖) for callers that verify printed certificates.
[[nodiscard]] double default_pd_tolerance(const SymMatrix& s);

/// Largest λ with A − λB ⪯ 0, i.e. λ_max(B^{-1/2} A B^{-1/2}). B must be positive definite.
[[nodiscard]] double pencil_max_eig(const SymMatrix& a, const SymMatrix& b);

struct Bracket {
    double lo;
    double hi;
    double f_lo;
    double f_hi;
};

using ScalarFunction = std::function<double(double)>;

/// Evaluates f at both ends; throws DomainError if the ends do not bracket a sign change.
Bracket make_bracket(const ScalarFunction& f, double lo, double hi);

/// Bisection with a secant step per iteration. Stops when |f| <= tol or the bracket
/// is narrower than tol, returning the bracketed point with the smallest residual.
double find_root(const ScalarFunction& f, const Bracket& bracket, double tol = 1e-12, int max_iter = 500);

} // namespace sdcert
