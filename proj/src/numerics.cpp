#include "sdcert/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sdcert/errors.hpp"

namespace sdcert {

SymMatrix::SymMatrix(const Mat& m) {
    if (m.rows() != m.cols()) {
        throw DomainError("SymMatrix requires a square matrix");
    }
    if (m.rows() == 0) {
        throw DomainError("SymMatrix order must be at least 1");
    }
    if (!m.allFinite()) {
        throw DomainError("SymMatrix entries must be finite");
    }
    m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::identity(std::size_t order) {
    return {Mat::Identity(static_cast<Eigen::Index>(order), static_cast<Eigen::Index>(order)), Trusted{}};
}

SymMatrix SymMatrix::zero(std::size_t order) {
    return {Mat::Zero(static_cast<Eigen::Index>(order), static_cast<Eigen::Index>(order)), Trusted{}};
}

SymMatrix SymMatrix::diagonal(const Vec& d) { return SymMatrix(Mat(d.asDiagonal())); }

SymMatrix SymMatrix::congruence(const Mat& m) const { return SymMatrix(Mat(m.transpose() * m_ * m)); }

SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) { return {a.m_ + b.m_, SymMatrix::Trusted{}}; }
SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) { return {a.m_ - b.m_, SymMatrix::Trusted{}}; }
SymMatrix operator*(double s, const SymMatrix& a) { return {s * a.m_, SymMatrix::Trusted{}}; }

EigenDecomposition sym_eig(const SymMatrix& s, int max_sweeps) {
    const Eigen::Index n = static_cast<Eigen::Index>(s.order());
    Mat a = s.matrix();
    Mat v = Mat::Identity(n, n);

    const double scale = a.norm();
    auto off_norm = [&] {
        double acc = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                acc += a(p, q) * a(p, q);
            }
        }
        return std::sqrt(2.0 * acc);
    };

    int sweep = 0;
    while (off_norm() > 1e-15 * scale) {
        if (sweep++ >= max_sweeps) {
            throw NumericalFailure("Jacobi eigensolver did not converge");
        }
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
                const double c = 1.0 / std::hypot(t, 1.0);
                const double sn = t * c;

                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

    EigenDecomposition out{Vec(n), Mat(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues(k) = a(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(k)]);
        out.eigenvectors.col(k) = v.col(idx[static_cast<std::size_t>(k)]);
    }
    return out;
}

double lambda_max(const SymMatrix& s) { return sym_eig(s).max(); }
double lambda_min(const SymMatrix& s) { return sym_eig(s).min(); }

bool is_pos_def(const SymMatrix& s, double tol) {
    if (tol < 0.0) {
        throw DomainError("positive-definiteness tolerance must be non-negative");
    }
    return lambda_min(s) > tol;
}

double default_pd_tolerance(const SymMatrix& s) { return 1e-9 * (1.0 + s.norm()); }

double pencil_max_eig(const SymMatrix& a, const SymMatrix& b) {
    if (a.order() != b.order()) {
        throw DomainError("pencil_max_eig: order mismatch");
    }
    Eigen::LLT<Mat> llt(b.matrix());
    if (llt.info() != Eigen::Success || !is_pos_def(b)) {
        throw DomainError("pencil_max_eig: B is not positive definite");
    }
    const Mat& l = llt.matrixL().toDenseMatrix();
    // C = L^{-1} A L^{-T}
    const Mat half = l.triangularView<Eigen::Lower>().solve(a.matrix());
    const Mat c = l.triangularView<Eigen::Lower>().solve(Mat(half.transpose()));
    return lambda_max(SymMatrix(c));
}

Bracket make_bracket(const ScalarFunction& f, double lo, double hi) {
    Bracket b{lo, hi, f(lo), f(hi)};
    if (!(lo < hi) || !std::isfinite(b.f_lo) || !std::isfinite(b.f_hi) || b.f_lo * b.f_hi > 0.0) {
        throw DomainError("find_root: interval does not bracket a sign change");
    }
    return b;
}

double find_root(const ScalarFunction& f, const Bracket& bracket, double tol, int max_iter) {
    if (!(bracket.lo < bracket.hi) || bracket.f_lo * bracket.f_hi > 0.0 || std::isnan(bracket.f_lo) ||
        std::isnan(bracket.f_hi)) {
        throw DomainError("find_root: invalid bracket");
    }
    double lo = bracket.lo;
    double hi = bracket.hi;
    double flo = bracket.f_lo;
    double fhi = bracket.f_hi;
    if (flo == 0.0) {
        return lo;
    }
    if (fhi == 0.0) {
        return hi;
    }

    double best = std::abs(flo) < std::abs(fhi) ? lo : hi;
    double best_res = std::min(std::abs(flo), std::abs(fhi));

    auto update = [&](double x) {
        const double fx = f(x);
        if (std::isnan(fx)) {
            throw NumericalFailure("find_root: function returned NaN");
        }
        if (std::abs(fx) < best_res) {
            best = x;
            best_res = std::abs(fx);
        }
        if ((fx < 0.0) == (flo < 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        return fx;
    };

    for (int it = 0; it < max_iter; ++it) {
        if (best_res <= tol || hi - lo <= tol) {
            return best;
        }
        // secant candidate, used only when it lands strictly inside the bracket
        if (std::isfinite(flo) && std::isfinite(fhi)) {
            const double s = hi - fhi * (hi - lo) / (fhi - flo);
            if (s > lo && s < hi) {
                if (update(s) == 0.0) {
                    return s;
                }
            }
        }
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) {
            return best;
        }
        if (update(mid) == 0.0) {
            return mid;
        }
    }
    if (best_res <= tol || hi - lo <= tol) {
        return best;
    }
    throw NumericalFailure("find_root: iteration cap reached");
}

} // namespace sdcert
