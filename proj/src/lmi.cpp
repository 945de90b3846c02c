#include "sdcert/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "sdcert/errors.hpp"

namespace sdcert {

using nlohmann::json;

// ---------------------------------------------------------------------------
// AffineMatrixMap

SymMatrix AffineMatrixMap::value(const Vec& x) const {
    if (static_cast<std::size_t>(x.size()) != coeffs.size()) {
        throw DomainError("AffineMatrixMap::value: wrong number of variables");
    }
    Mat out = base.matrix();
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const double xi = x(static_cast<Eigen::Index>(i));
        if (xi != 0.0) {
            out.noalias() += xi * coeffs[i].matrix();
        }
    }
    return SymMatrix(out);
}

AffineMatrixMap AffineMatrixMap::constant(const SymMatrix& m, std::size_t variable_count) {
    return {m, std::vector<SymMatrix>(variable_count, SymMatrix::zero(m.order()))};
}

AffineMatrixMap AffineMatrixMap::block_diagonal(const std::vector<AffineMatrixMap>& blocks) {
    if (blocks.empty()) {
        throw DomainError("block_diagonal: no blocks");
    }
    const std::size_t vars = blocks.front().variable_count();
    Eigen::Index total = 0;
    for (const auto& b : blocks) {
        if (b.variable_count() != vars) {
            throw DomainError("block_diagonal: variable counts differ");
        }
        total += static_cast<Eigen::Index>(b.order());
    }
    auto assemble = [&](auto pick) {
        Mat out = Mat::Zero(total, total);
        Eigen::Index at = 0;
        for (const auto& b : blocks) {
            const auto k = static_cast<Eigen::Index>(b.order());
            out.block(at, at, k, k) = pick(b);
            at += k;
        }
        return SymMatrix(out);
    };
    AffineMatrixMap out;
    out.base = assemble([](const AffineMatrixMap& b) -> const Mat& { return b.base.matrix(); });
    for (std::size_t i = 0; i < vars; ++i) {
        out.coeffs.push_back(assemble([i](const AffineMatrixMap& b) -> const Mat& { return b.coeffs[i].matrix(); }));
    }
    return out;
}

namespace {

void require_same_shape(const AffineMatrixMap& a, const AffineMatrixMap& b) {
    if (a.order() != b.order() || a.variable_count() != b.variable_count()) {
        throw DomainError("AffineMatrixMap: shape mismatch");
    }
}

} // namespace

AffineMatrixMap operator+(const AffineMatrixMap& a, const AffineMatrixMap& b) {
    require_same_shape(a, b);
    AffineMatrixMap out{a.base + b.base, {}};
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
        out.coeffs.push_back(a.coeffs[i] + b.coeffs[i]);
    }
    return out;
}

AffineMatrixMap operator-(const AffineMatrixMap& a, const AffineMatrixMap& b) { return a + (-1.0) * b; }

AffineMatrixMap operator*(double s, const AffineMatrixMap& a) {
    AffineMatrixMap out{s * a.base, {}};
    for (const auto& c : a.coeffs) {
        out.coeffs.push_back(s * c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// AffineExpr

AffineExpr::AffineExpr(Eigen::Index rows, Eigen::Index cols) : constant_(Mat::Zero(rows, cols)) {}

AffineExpr AffineExpr::constant(const Mat& m) {
    AffineExpr out;
    out.constant_ = m;
    return out;
}

Mat AffineExpr::value(const Vec& x) const {
    Mat out = constant_;
    for (const auto& [i, c] : terms_) {
        if (static_cast<Eigen::Index>(i) >= x.size()) {
            throw DomainError("AffineExpr::value: variable index out of range");
        }
        out += x(static_cast<Eigen::Index>(i)) * c;
    }
    return out;
}

AffineExpr AffineExpr::transpose() const {
    AffineExpr out = constant(constant_.transpose());
    for (const auto& [i, c] : terms_) {
        out.terms_[i] = c.transpose();
    }
    return out;
}

AffineMatrixMap AffineExpr::to_map(std::size_t variable_count) const {
    if (rows() != cols()) {
        throw DomainError("AffineExpr::to_map: expression is not square");
    }
    AffineMatrixMap out = AffineMatrixMap::constant(SymMatrix(constant_), variable_count);
    for (const auto& [i, c] : terms_) {
        if (i >= variable_count) {
            throw DomainError("AffineExpr::to_map: variable index out of range");
        }
        out.coeffs[i] = SymMatrix(c);
    }
    return out;
}

AffineExpr AffineExpr::blocks(const std::vector<std::vector<AffineExpr>>& grid) {
    if (grid.empty() || grid.front().empty()) {
        throw DomainError("AffineExpr::blocks: empty grid");
    }
    const std::size_t ncols = grid.front().size();
    std::vector<Eigen::Index> heights;
    std::vector<Eigen::Index> widths;
    for (const auto& cell : grid.front()) {
        widths.push_back(cell.cols());
    }
    for (const auto& row : grid) {
        if (row.size() != ncols) {
            throw DomainError("AffineExpr::blocks: ragged block rows");
        }
        heights.push_back(row.front().rows());
        for (std::size_t j = 0; j < ncols; ++j) {
            if (row[j].rows() != heights.back() || row[j].cols() != widths[j]) {
                throw DomainError("AffineExpr::blocks: block dimensions disagree");
            }
        }
    }
    Eigen::Index total_rows = 0;
    Eigen::Index total_cols = 0;
    for (auto h : heights) {
        total_rows += h;
    }
    for (auto w : widths) {
        total_cols += w;
    }
    AffineExpr out(total_rows, total_cols);
    Eigen::Index r0 = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Eigen::Index c0 = 0;
        for (std::size_t j = 0; j < ncols; ++j) {
            const AffineExpr& cell = grid[i][j];
            out.constant_.block(r0, c0, heights[i], widths[j]) = cell.constant_;
            for (const auto& [k, c] : cell.terms_) {
                auto it = out.terms_.find(k);
                if (it == out.terms_.end()) {
                    it = out.terms_.emplace(k, Mat::Zero(total_rows, total_cols)).first;
                }
                it->second.block(r0, c0, heights[i], widths[j]) = c;
            }
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    return out;
}

AffineExpr operator+(const AffineExpr& a, const AffineExpr& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DomainError("AffineExpr: sum of mismatched shapes");
    }
    AffineExpr out = a;
    out.constant_ += b.constant_;
    for (const auto& [k, c] : b.terms_) {
        auto it = out.terms_.find(k);
        if (it == out.terms_.end()) {
            out.terms_.emplace(k, c);
        } else {
            it->second += c;
        }
    }
    return out;
}

AffineExpr operator-(const AffineExpr& a) { return (-1.0) * a; }
AffineExpr operator-(const AffineExpr& a, const AffineExpr& b) { return a + (-b); }

AffineExpr operator*(double s, const AffineExpr& a) {
    AffineExpr out = a;
    out.constant_ *= s;
    for (auto& [k, c] : out.terms_) {
        c *= s;
    }
    return out;
}

AffineExpr operator*(const Mat& m, const AffineExpr& a) {
    if (m.cols() != a.rows()) {
        throw DomainError("AffineExpr: left factor has wrong width");
    }
    AffineExpr out = AffineExpr::constant(m * a.constant_);
    for (const auto& [k, c] : a.terms_) {
        out.terms_.emplace(k, m * c);
    }
    return out;
}

AffineExpr operator*(const AffineExpr& a, const Mat& m) {
    if (a.cols() != m.rows()) {
        throw DomainError("AffineExpr: right factor has wrong height");
    }
    AffineExpr out = AffineExpr::constant(a.constant_ * m);
    for (const auto& [k, c] : a.terms_) {
        out.terms_.emplace(k, c * m);
    }
    return out;
}

AffineExpr VariableSet::scalar() {
    AffineExpr out(1, 1);
    out.terms_.emplace(count_++, Mat::Ones(1, 1));
    return out;
}

AffineExpr VariableSet::symmetric(std::size_t order) {
    const auto n = static_cast<Eigen::Index>(order);
    AffineExpr out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            Mat e = Mat::Zero(n, n);
            e(i, j) = 1.0;
            e(j, i) = 1.0;
            out.terms_.emplace(count_++, std::move(e));
        }
    }
    return out;
}

AffineExpr VariableSet::matrix(std::size_t rows, std::size_t cols) {
    const auto r = static_cast<Eigen::Index>(rows);
    const auto c = static_cast<Eigen::Index>(cols);
    AffineExpr out(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            Mat e = Mat::Zero(r, c);
            e(i, j) = 1.0;
            out.terms_.emplace(count_++, std::move(e));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Certificates

bool all_pass(const MarginSet& margins, double rel_tol) {
    return std::all_of(margins.begin(), margins.end(), [&](const LmiMargin& m) { return m.passes(rel_tol); });
}

double worst_margin(const MarginSet& margins) {
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& m : margins) {
        w = std::max(w, m.margin);
    }
    return w;
}

double LmiCertificate::extra(const std::string& key) const {
    auto it = extras.find(key);
    if (it == extras.end()) {
        throw ValidationError(key, "missing from certificate");
    }
    return it->second;
}

void LmiCertificate::validate() const {
    if (!is_pos_def(P)) {
        throw ValidationError("P", "must be positive definite");
    }
    if (P_tilde) {
        if (P_tilde->order() != P.order()) {
            throw ValidationError("P_tilde", "order differs from P");
        }
        if (!is_pos_def(*P_tilde)) {
            throw ValidationError("P_tilde", "must be positive definite");
        }
    }
    if (!(alpha_bar > 0.0)) {
        throw ValidationError("alpha_bar", "must be positive");
    }
}

LmiCertificate parse_certificate(const json& doc) {
    static const std::vector<std::string> scalars{"alpha_b", "gamma1", "gamma2", "c_tilde", "b", "c"};
    static const std::vector<std::string> matrices{"P", "P_tilde", "Q", "Y", "K_hat"};
    if (!doc.is_object()) {
        throw FormatError("certificate: expected a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        const bool known = key == "alpha_bar" || std::find(scalars.begin(), scalars.end(), key) != scalars.end() ||
                           std::find(matrices.begin(), matrices.end(), key) != matrices.end();
        if (!known) {
            throw FormatError("certificate: unknown key '" + key + "'");
        }
    }
    if (!doc.contains("alpha_bar") || !doc["alpha_bar"].is_number()) {
        throw FormatError("alpha_bar: required number");
    }
    LmiCertificate cert;
    cert.alpha_bar = doc["alpha_bar"].get<double>();
    for (const auto& key : scalars) {
        if (doc.contains(key)) {
            if (!doc[key].is_number()) {
                throw FormatError(key + ": expected a number");
            }
            cert.extras[key] = doc[key].get<double>();
        }
    }
    auto square = [](const Mat& m, const std::string& field) {
        if (m.rows() != m.cols()) {
            throw ValidationError(field, "must be square");
        }
        return SymMatrix(m);
    };
    if (doc.contains("Q")) {
        cert.Q = json_to_matrix(doc["Q"], "Q");
        square(*cert.Q, "Q");
    }
    if (doc.contains("Y")) {
        cert.Y = json_to_matrix(doc["Y"], "Y");
    }
    if (doc.contains("K_hat")) {
        cert.K_hat = json_to_matrix(doc["K_hat"], "K_hat");
    }
    if (doc.contains("P")) {
        cert.P = square(json_to_matrix(doc["P"], "P"), "P");
    } else if (cert.Q) {
        cert.P = SymMatrix(Mat(cert.Q->inverse()));
    } else {
        throw FormatError("P: required unless Q is given");
    }
    if (doc.contains("P_tilde")) {
        cert.P_tilde = square(json_to_matrix(doc["P_tilde"], "P_tilde"), "P_tilde");
    }
    if (cert.Y && cert.Q && cert.Y->cols() != cert.Q->rows()) {
        throw ValidationError("Y", "column count differs from the order of Q");
    }
    cert.validate();
    return cert;
}

LmiCertificate load_certificate(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open certificate file '" + path + "'");
    }
    try {
        return parse_certificate(json::parse(in));
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

json certificate_to_json(const LmiCertificate& cert) {
    json doc;
    doc["P"] = matrix_to_json(cert.P.matrix());
    if (cert.P_tilde) {
        doc["P_tilde"] = matrix_to_json(cert.P_tilde->matrix());
    }
    doc["alpha_bar"] = cert.alpha_bar;
    for (const auto& [k, v] : cert.extras) {
        doc[k] = v;
    }
    if (cert.Q) {
        doc["Q"] = matrix_to_json(*cert.Q);
    }
    if (cert.Y) {
        doc["Y"] = matrix_to_json(*cert.Y);
    }
    if (cert.K_hat) {
        doc["K_hat"] = matrix_to_json(*cert.K_hat);
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Verification

namespace {

void require_square(const Mat& m, Eigen::Index n, const char* what) {
    if (m.rows() != n || m.cols() != n) {
        throw DomainError(std::string(what) + ": dimension mismatch");
    }
}

Mat diffusion_term(const std::vector<Mat>& G, const Mat& P) {
    Mat acc = Mat::Zero(P.rows(), P.cols());
    for (const Mat& g : G) {
        require_square(g, P.rows(), "diffusion");
        acc += g.transpose() * P * g;
    }
    return acc;
}

double sym_max(const Mat& m) { return lambda_max(SymMatrix(m)); }

} // namespace

LmiMargin verify_lyapunov_ito(const Mat& F, const std::vector<Mat>& G, const SymMatrix& P, double alpha_bar) {
    const Mat& p = P.matrix();
    require_square(F, p.rows(), "verify_lyapunov_ito");
    const Mat lhs = F.transpose() * p + p * F + diffusion_term(G, p) + 2.0 * alpha_bar * p;
    return {"lyapunov_ito", sym_max(lhs), P.norm()};
}

LmiMargin verify_em_lmi(const Mat& F, const std::vector<Mat>& G, const SymMatrix& P, double h, double c_bar) {
    if (!(h > 0.0)) {
        throw DomainError("verify_em_lmi: h must be positive");
    }
    if (!(c_bar > 0.0 && c_bar < 1.0)) {
        throw DomainError("verify_em_lmi: c_bar must lie in (0, 1)");
    }
    const Mat& p = P.matrix();
    require_square(F, p.rows(), "verify_em_lmi");
    const Mat step = Mat::Identity(p.rows(), p.cols()) + h * F;
    const Mat lhs = step.transpose() * p * step + h * diffusion_term(G, p) - (1.0 - c_bar) * p;
    return {"em_lyapunov", sym_max(lhs), P.norm()};
}

MarginSet verify_two_function_lmis(const LinearSampledModel& model, const SymMatrix& P, const SymMatrix& P_tilde,
                          double alpha_bar, double alpha_b, double gamma1, double gamma2) {
    const Eigen::Index n = static_cast<Eigen::Index>(model.n());
    require_square(P.matrix(), n, "verify_two_function_lmis P");
    require_square(P_tilde.matrix(), n, "verify_two_function_lmis P_tilde");
    const Mat bbar = model.closed_feedback();
    const Mat F = model.A + bbar;
    const Mat& p = P.matrix();
    const Mat& pt = P_tilde.matrix();
    const double scale = std::max(P.norm(), P_tilde.norm());

    MarginSet out;
    out.push_back(verify_lyapunov_ito(F, model.diffusion, P, alpha_bar));
    out.push_back({"feedback_gain", sym_max(bbar.transpose() * p * bbar - alpha_b * pt), P_tilde.norm()});

    Mat block(2 * n, 2 * n);
    block << diffusion_term(model.diffusion, pt) - gamma1 * p, F.transpose() * pt, pt * F,
        -bbar.transpose() * pt - pt * bbar - gamma2 * pt;
    out.push_back({"coupling", sym_max(block), scale});
    return out;
}

MarginSet verify_design_lmis(const LinearSampledModel& model, const SymMatrix& Q, const Mat& Y, double alpha_bar,
                             double alpha_b, double gamma1, double gamma2, double c_tilde) {
    if (!model.B_hat) {
        throw DomainError("verify_design_lmis: model has no input channel");
    }
    if (!(c_tilde > 0.0)) {
        throw DomainError("verify_design_lmis: c_tilde must be positive");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(model.n());
    const Mat& q = Q.matrix();
    const Mat& bh = *model.B_hat;
    require_square(q, n, "verify_design_lmis Q");
    if (Y.rows() != bh.cols() || Y.cols() != n) {
        throw DomainError("verify_design_lmis Y: dimension mismatch");
    }
    const Mat& A = model.A;
    const Mat by = bh * Y;
    const Mat aq = A * q + by;

    MarginSet out;
    const double scale = Q.norm();

    // Stacked diffusion blocks G_j Q.
    const auto m = static_cast<Eigen::Index>(model.diffusion.size());
    Mat gq(n * m, n);
    for (Eigen::Index j = 0; j < m; ++j) {
        gq.block(j * n, 0, n, n) = model.diffusion[static_cast<std::size_t>(j)] * q;
    }
    Mat qdiag = Mat::Zero(n * m, n * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        qdiag.block(j * n, j * n, n, n) = q;
    }

    Mat l1(n + n * m, n + n * m);
    l1 << aq + aq.transpose() + 2.0 * alpha_bar * q, gq.transpose(), gq, -qdiag;
    out.push_back({"lyapunov_ito", sym_max(l1), scale});

    Mat l2(2 * n, 2 * n);
    l2 << -alpha_b * c_tilde * q, by.transpose(), by, -q;
    out.push_back({"feedback_gain", sym_max(l2), scale});

    const double sc = std::sqrt(c_tilde);
    Mat l3 = Mat::Zero(2 * n + n * m, 2 * n + n * m);
    l3.block(0, 0, n, n) = -gamma1 * q;
    l3.block(0, n, n, n) = c_tilde * aq.transpose();
    l3.block(n, 0, n, n) = c_tilde * aq;
    l3.block(n, n, n, n) = -c_tilde * (by + by.transpose()) - gamma2 * c_tilde * q;
    l3.block(0, 2 * n, n, n * m) = sc * gq.transpose();
    l3.block(2 * n, 0, n * m, n) = sc * gq;
    l3.block(2 * n, 2 * n, n * m, n * m) = -qdiag;
    out.push_back({"coupling", sym_max(l3), std::max(1.0, c_tilde) * scale});
    return out;
}

MarginSet verify_example2_lmis(const Mat& gain, const SymMatrix& P, const SymMatrix& P_tilde, double alpha_bar,
                               double alpha_b, double gamma1, double gamma2, double b, double c,
                               const NonlinearPlanarModel& plant) {
    if (gain.rows() != 1 || gain.cols() != 2) {
        throw DomainError("verify_example2_lmis: gain must be 1x2");
    }
    require_square(P.matrix(), 2, "verify_example2_lmis P");
    require_square(P_tilde.matrix(), 2, "verify_example2_lmis P_tilde");
    if (!(b > 0.0) || !(c > 0.0)) {
        throw DomainError("verify_example2_lmis: b and c must be positive");
    }
    const Mat bbar = plant.B_hat * gain;
    const Mat at = plant.A_bar + bbar;
    const Mat e1 = NonlinearPlanarModel::envelope();
    const Mat& p = P.matrix();
    const Mat& pt = P_tilde.matrix();

    MarginSet out;
    const Mat l1 = at.transpose() * p + p * at + b * p + e1.transpose() * p * e1 / b + 2.0 * alpha_bar * p;
    out.push_back({"lyapunov", sym_max(l1), P.norm()});
    out.push_back({"feedback_gain", sym_max(bbar.transpose() * p * bbar - alpha_b * pt), P_tilde.norm()});
    Mat block(4, 4);
    block << e1.transpose() * pt * e1 / c - gamma1 * p, at.transpose() * pt, pt * at,
        -bbar.transpose() * pt - pt * bbar + c * pt - gamma2 * pt;
    out.push_back({"coupling", sym_max(block), std::max(P.norm(), P_tilde.norm())});
    return out;
}

// ---------------------------------------------------------------------------
// Barrier solver

std::string to_string(SolveStatus status) {
    switch (status) {
    case SolveStatus::feasible:
        return "feasible";
    case SolveStatus::infeasible_judged:
        return "infeasible_judged";
    case SolveStatus::failed:
        return "failed";
    }
    return "unknown";
}

namespace {

struct BarrierState {
    Vec x;
    double s = 0.0;
};

/// Cholesky factor of sI − M(x); empty optional when not positive definite.
std::optional<Eigen::LLT<Mat>> slack_factor(const AffineMatrixMap& map, const BarrierState& z) {
    Mat f = -map.value(z.x).matrix();
    f.diagonal().array() += z.s;
    Eigen::LLT<Mat> llt(f);
    if (llt.info() != Eigen::Success) {
        return std::nullopt;
    }
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
            return std::nullopt;
        }
    }
    return llt;
}

} // namespace

SolveReport solve_feasibility(const AffineMatrixMap& map, double strictness, const FeasibilityOptions& options) {
    const std::size_t k = map.variable_count();
    if (k == 0) {
        throw DomainError("solve_feasibility: map has no variables");
    }
    if (!(strictness >= 0.0)) {
        throw DomainError("solve_feasibility: strictness must be non-negative");
    }
    const auto ki = static_cast<Eigen::Index>(k);
    const auto order = static_cast<Eigen::Index>(map.order());
    const double r2 = options.radius * options.radius;

    BarrierState z;
    z.x = options.start.value_or(Vec::Zero(ki));
    if (z.x.size() != ki) {
        throw DomainError("solve_feasibility: start point has wrong size");
    }
    if (z.x.squaredNorm() >= r2) {
        z.x.setZero();
    }

    SolveReport report;
    auto finish = [&](SolveStatus status) {
        report.status = status;
        report.point = z.x;
        report.margin = lambda_max(map.value(z.x));
        if (status == SolveStatus::feasible && !(report.margin <= -strictness)) {
            report.status = SolveStatus::infeasible_judged;
        }
        return report;
    };

    const double lam0 = lambda_max(map.value(z.x));
    if (lam0 <= -strictness) {
        return finish(SolveStatus::feasible);
    }
    z.s = lam0 + std::max(1.0, std::abs(lam0));

    const double barrier_weight = static_cast<double>(order) + 1.0;
    double t = 1.0 / std::max(1.0, std::abs(lam0));

    // t·s − log det(sI − M(x)) − log(R² − ‖x‖²)
    auto objective = [&](const BarrierState& w, const Eigen::LLT<Mat>& llt) {
        const auto& l = llt.matrixLLT();
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < order; ++i) {
            logdet += 2.0 * std::log(l(i, i));
        }
        return t * w.s - logdet - std::log(r2 - w.x.squaredNorm());
    };

    std::vector<Mat> w(k + 1);
    int newton = 0;
    while (newton < options.max_newton) {
        // Centering.
        for (int inner = 0; inner < 100 && newton < options.max_newton; ++inner, ++newton) {
            auto llt = slack_factor(map, z);
            if (!llt) {
                return finish(SolveStatus::failed);
            }
            const Mat l = llt->matrixL();
            // W_i = L⁻¹ A_i L⁻ᵀ with A_i = ∂(sI − M)/∂z_i.
            for (std::size_t i = 0; i <= k; ++i) {
                const Mat a = i < k ? Mat(-map.coeffs[i].matrix()) : Mat(Mat::Identity(order, order));
                const Mat half = l.triangularView<Eigen::Lower>().solve(a);
                w[i] = l.triangularView<Eigen::Lower>().solve(Mat(half.transpose()));
            }
            Vec g(ki + 1);
            Mat h(ki + 1, ki + 1);
            for (std::size_t i = 0; i <= k; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                g(ii) = -w[i].trace();
                for (std::size_t j = 0; j <= i; ++j) {
                    const double hij = w[i].cwiseProduct(w[j]).sum();
                    h(ii, static_cast<Eigen::Index>(j)) = hij;
                    h(static_cast<Eigen::Index>(j), ii) = hij;
                }
            }
            g(ki) += t;
            const double d = r2 - z.x.squaredNorm();
            g.head(ki) += 2.0 * z.x / d;
            h.topLeftCorner(ki, ki) += (2.0 / d) * Mat::Identity(ki, ki) + (4.0 / (d * d)) * z.x * z.x.transpose();

            const double hscale = h.diagonal().cwiseAbs().maxCoeff();
            h.diagonal().array() += 1e-14 * std::max(hscale, 1.0);
            const Vec dz = -h.ldlt().solve(g);
            const double decrement = -g.dot(dz);
            if (!std::isfinite(decrement)) {
                return finish(SolveStatus::failed);
            }
            if (decrement < 1e-10) {
                break;
            }

            const double f0 = objective(z, *llt);
            double step = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
                BarrierState trial{z.x + step * dz.head(ki), z.s + step * dz(ki)};
                if (trial.x.squaredNorm() >= r2) {
                    continue;
                }
                auto tl = slack_factor(map, trial);
                if (!tl) {
                    continue;
                }
                if (objective(trial, *tl) <= f0 - 0.25 * step * decrement) {
                    z = std::move(trial);
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                break;
            }
            if (z.s <= -strictness) {
                report.iterations = newton + 1;
                if (lambda_max(map.value(z.x)) <= -strictness) {
                    return finish(SolveStatus::feasible);
                }
            }
        }
        report.iterations = newton;
        // Near the central path the optimal s is at least s − m/t.
        const double gap = barrier_weight / t;
        if (z.s - gap > -strictness) {
            return finish(SolveStatus::infeasible_judged);
        }
        if (gap < 1e-12 * std::max(1.0, std::abs(z.s))) {
            return finish(SolveStatus::infeasible_judged);
        }
        t *= 8.0;
    }
    return finish(SolveStatus::failed);
}

GevpResult minimize_gevp(const AffineMatrixMap& numerator, const AffineMatrixMap& denominator,
                         const std::vector<AffineMatrixMap>& extra, const GevpOptions& options) {
    if (numerator.order() != denominator.order() || numerator.variable_count() != denominator.variable_count()) {
        throw DomainError("minimize_gevp: numerator and denominator shapes differ");
    }
    GevpResult out;
    if (numerator.variable_count() == 0) {
        const SymMatrix d = denominator.base;
        if (!is_pos_def(d)) {
            throw InfeasibleError("minimize_gevp: denominator is not positive definite");
        }
        out.lambda = pencil_max_eig(numerator.base, d);
        out.point = Vec(0);
        return out;
    }

    FeasibilityOptions fopts = options.feasibility;
    auto attempt = [&](double lambda) -> std::optional<Vec> {
        std::vector<AffineMatrixMap> blocks{numerator - lambda * denominator, -1.0 * denominator};
        blocks.insert(blocks.end(), extra.begin(), extra.end());
        ++out.feasibility_solves;
        const SolveReport rep = solve_feasibility(AffineMatrixMap::block_diagonal(blocks), options.strictness, fopts);
        if (rep.status == SolveStatus::feasible) {
            return rep.point;
        }
        return std::nullopt;
    };

    double lo = options.lambda_lo;
    double hi = options.lambda_hi;
    auto best = attempt(hi);
    if (!best) {
        throw InfeasibleError("minimize_gevp: no feasible lambda in the search range");
    }
    fopts.start = *best;
    if (auto p = attempt(lo)) {
        out.lambda = lo;
        out.point = *p;
        return out;
    }
    for (int it = 0; it < options.iterations; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if (auto p = attempt(mid)) {
            hi = mid;
            best = p;
            fopts.start = *p;
        } else {
            lo = mid;
        }
    }
    out.lambda = hi;
    out.point = *best;
    return out;
}

} // namespace sdcert
