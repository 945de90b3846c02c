#include "sdcert/design.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "sdcert/errors.hpp"

namespace sdcert {

namespace {

constexpr double kBoxLo = 1e-4;
constexpr double kBoxHi = 1e6;
constexpr double kInflate = 1e-7;
constexpr double kQMax = 1e4;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double tau_two(double alpha_bar, double alpha_b, double gamma1, double gamma2) {
    if (!(alpha_bar > 0.0 && alpha_b > 0.0 && gamma1 > 0.0 && gamma2 > 0.0)) {
        return kNegInf;
    }
    return emulation_bound_two({alpha_bar, alpha_b, gamma1, gamma2}).tau_max;
}

// Maximizes f over [lo, hi] in log scale: grid scan, then golden section around the best node.
// Returns {argmax, max}; max is -inf when f is never finite.
std::pair<double, double> log_search(const std::function<double(double)>& f, double lo, double hi, int grid) {
    const double llo = std::log(lo);
    const double lhi = std::log(hi);
    std::vector<double> u(static_cast<std::size_t>(grid));
    std::vector<double> v(u.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(grid - 1);
        v[i] = f(std::exp(u[i]));
        if (v[i] > v[best]) {
            best = i;
        }
    }
    if (!std::isfinite(v[best])) {
        return {std::exp(u[best]), kNegInf};
    }
    double a = u[best > 0 ? best - 1 : 0];
    double b = u[std::min(best + 1, u.size() - 1)];
    double bu = u[best];
    double bv = v[best];
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - g * (b - a);
    double x2 = a + g * (b - a);
    double f1 = f(std::exp(x1));
    double f2 = f(std::exp(x2));
    for (int it = 0; it < 80 && b - a > 1e-12; ++it) {
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(std::exp(x1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(std::exp(x2));
        }
        if (f1 > bv) {
            bv = f1;
            bu = x1;
        }
        if (f2 > bv) {
            bv = f2;
            bu = x2;
        }
    }
    return {std::exp(bu), bv};
}

Mat identity(Eigen::Index n) { return Mat::Identity(n, n); }

AffineExpr zero_expr(Eigen::Index r, Eigen::Index c) { return AffineExpr(r, c); }

// Variables of every synthesis problem: Q (symmetric) then Y.
struct QYVars {
    VariableSet vars;
    AffineExpr Q;
    AffineExpr Y;

    QYVars(Eigen::Index n, Eigen::Index mh) {
        Q = vars.symmetric(static_cast<std::size_t>(n));
        Y = vars.matrix(static_cast<std::size_t>(mh), static_cast<std::size_t>(n));
    }

    [[nodiscard]] std::size_t count() const { return vars.count(); }

    [[nodiscard]] Vec pack(const Mat& q, const Mat& y) const {
        Vec x(static_cast<Eigen::Index>(count()));
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            for (Eigen::Index j = i; j < q.cols(); ++j) {
                x(k++) = q(i, j);
            }
        }
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            for (Eigen::Index j = 0; j < y.cols(); ++j) {
                x(k++) = y(i, j);
            }
        }
        return x;
    }
};

// Box and gain constraints shared by every stage, all in the form map ≺ 0.
std::vector<AffineMatrixMap> common_constraints(const QYVars& v, Eigen::Index n, Eigen::Index mh,
                                                std::optional<double> max_gain) {
    const std::size_t nv = v.count();
    std::vector<AffineMatrixMap> out;
    out.push_back((AffineExpr::constant(identity(n)) - v.Q).to_map(nv));
    out.push_back((v.Q - AffineExpr::constant(kQMax * identity(n))).to_map(nv));
    if (max_gain) {
        const double k2 = *max_gain * *max_gain;
        const AffineExpr g = AffineExpr::blocks({{AffineExpr::constant(k2 * identity(mh)), v.Y}, {v.Y.transpose(), v.Q}});
        out.push_back((-g).to_map(nv));
    }
    return out;
}

struct Candidate {
    Mat Q;
    Mat Y;
};

Candidate unpack(const QYVars& v, const Vec& x) { return {v.Q.value(x), v.Y.value(x)}; }

std::optional<Candidate> solve_candidate(const QYVars& v, const std::vector<AffineMatrixMap>& maps, double strictness,
                                         const std::optional<Vec>& start, int& solves) {
    FeasibilityOptions fo;
    fo.start = start;
    fo.radius = 1e7;
    ++solves;
    const SolveReport r = solve_feasibility(AffineMatrixMap::block_diagonal(maps), strictness, fo);
    if (r.status != SolveStatus::feasible) {
        return std::nullopt;
    }
    return unpack(v, r.point);
}

// ---------------------------------------------------------------------------
// Linear plants

struct LinearProblem {
    const LinearSampledModel& model;
    Eigen::Index n;
    Eigen::Index mh;
    double c_tilde;
    std::optional<double> max_gain;
};

// GⱼQ stacked vertically and the matching block-diagonal of Q.
std::pair<AffineExpr, AffineExpr> diffusion_blocks(const LinearProblem& p, const QYVars& v) {
    const auto m = static_cast<Eigen::Index>(p.model.diffusion.size());
    std::vector<std::vector<AffineExpr>> col;
    std::vector<std::vector<AffineExpr>> diag;
    for (Eigen::Index j = 0; j < m; ++j) {
        col.push_back({p.model.diffusion[static_cast<std::size_t>(j)] * v.Q});
        std::vector<AffineExpr> row;
        for (Eigen::Index k = 0; k < m; ++k) {
            row.push_back(k == j ? v.Q : zero_expr(p.n, p.n));
        }
        diag.push_back(row);
    }
    return {AffineExpr::blocks(col), AffineExpr::blocks(diag)};
}

AffineExpr lyapunov_block(const LinearProblem& p, const QYVars& v, double two_alpha) {
    const AffineExpr aq = p.model.A * v.Q + *p.model.B_hat * v.Y;
    const AffineExpr top = aq + aq.transpose() + two_alpha * v.Q;
    if (p.model.diffusion.empty()) {
        return top;
    }
    const auto [gq, qd] = diffusion_blocks(p, v);
    return AffineExpr::blocks({{top, gq.transpose()}, {gq, -qd}});
}

std::vector<AffineMatrixMap> linear_lmis(const LinearProblem& p, const QYVars& v, double alpha_bar, double alpha_b,
                                         double gamma1, double gamma2) {
    const std::size_t nv = v.count();
    const double ct = p.c_tilde;
    const AffineExpr by = *p.model.B_hat * v.Y;
    const AffineExpr aq = p.model.A * v.Q + by;
    std::vector<AffineMatrixMap> out = common_constraints(v, p.n, p.mh, p.max_gain);
    out.push_back(lyapunov_block(p, v, 2.0 * alpha_bar).to_map(nv));
    out.push_back(AffineExpr::blocks({{-(alpha_b * ct) * v.Q, by.transpose()}, {by, -v.Q}}).to_map(nv));

    const AffineExpr m22 = -ct * (by + by.transpose()) - (gamma2 * ct) * v.Q;
    if (p.model.diffusion.empty()) {
        out.push_back(AffineExpr::blocks({{-gamma1 * v.Q, ct * aq.transpose()}, {ct * aq, m22}}).to_map(nv));
    } else {
        const auto [gq, qd] = diffusion_blocks(p, v);
        const double sc = std::sqrt(ct);
        const Eigen::Index nm = gq.rows();
        out.push_back(AffineExpr::blocks({{-gamma1 * v.Q, ct * aq.transpose(), sc * gq.transpose()},
                                          {ct * aq, m22, zero_expr(p.n, nm)},
                                          {sc * gq, zero_expr(nm, p.n), -qd}})
                          .to_map(nv));
    }
    return out;
}

struct LinearExtraction {
    Mat K;
    SymMatrix P;
    SymMatrix P_tilde;
    double alpha_bar = 0.0;
    double alpha_b = 0.0;
    GammaFit gamma;
};

// Exact constants for fixed (Q, Y); alpha_bar is taken as given when provided, else extracted.
std::optional<LinearExtraction> extract_linear(const LinearProblem& p, const Candidate& c,
                                               std::optional<double> alpha_bar) {
    LinearExtraction out;
    const Mat pm = c.Q.inverse();
    out.P = SymMatrix(pm);
    out.P_tilde = p.c_tilde * out.P;
    out.K = c.Y * pm;
    const LinearSampledModel closed = p.model.with_gain(out.K);
    const Mat bbar = closed.closed_feedback();
    const Mat f = closed.A + bbar;
    if (alpha_bar) {
        out.alpha_bar = *alpha_bar;
    } else {
        out.alpha_bar = extract_alpha_bar(out.P, f, closed.diffusion) * (1.0 - kInflate);
    }
    if (!(out.alpha_bar > 0.0)) {
        return std::nullopt;
    }
    out.alpha_b = std::max(extract_alpha_b(out.P, out.P_tilde, bbar) * (1.0 + kInflate), 1e-12);
    try {
        out.gamma = fit_gamma(closed, out.P, out.P_tilde, out.alpha_bar, out.alpha_b);
    } catch (const InfeasibleError&) {
        return std::nullopt;
    }
    return out;
}

} // namespace

double extract_alpha_b(const SymMatrix& P, const SymMatrix& P_tilde, const Mat& B_bar) {
    return std::max(0.0, pencil_max_eig(P.congruence(B_bar), P_tilde));
}

double extract_alpha_f(const SymMatrix& P, const Mat& F, double alpha_bar) {
    const Mat shifted = F + alpha_bar * Mat::Identity(F.rows(), F.cols());
    return std::max(0.0, pencil_max_eig(P.congruence(shifted), P));
}

double extract_alpha_u(const SymMatrix& P, const Mat& F) { return std::max(0.0, pencil_max_eig(P.congruence(F), P)); }

double extract_alpha_bar(const SymMatrix& P, const Mat& F, const std::vector<Mat>& G) {
    const Mat& p = P.matrix();
    Mat l = F.transpose() * p + p * F;
    for (const Mat& g : G) {
        l += g.transpose() * p * g;
    }
    return -0.5 * pencil_max_eig(SymMatrix(l), P);
}

GammaFit fit_gamma(const LinearSampledModel& closed, const SymMatrix& P, const SymMatrix& P_tilde, double alpha_bar,
                   double alpha_b) {
    const Mat bbar = closed.closed_feedback();
    const Mat f = closed.A + bbar;
    const Mat& pt = P_tilde.matrix();
    const Mat sym_b = bbar.transpose() * pt + pt * bbar;
    Mat s0 = Mat::Zero(f.rows(), f.cols());
    for (const Mat& g : closed.diffusion) {
        s0 += g.transpose() * pt * g;
    }
    const Mat ptf = pt * f;
    const double g2_min = pencil_max_eig(SymMatrix(-sym_b), P_tilde);
    const double lo = std::max(kBoxLo, g2_min + 1e-9 * (1.0 + std::abs(g2_min)));
    if (!(lo < kBoxHi)) {
        throw InfeasibleError("fit_gamma: no admissible gamma2 in [1e-4, 1e6]");
    }

    auto gamma1_of = [&](double g2) {
        const Mat m22 = -sym_b - g2 * pt;
        const Mat s = s0 - ptf.transpose() * m22.ldlt().solve(ptf);
        const double g1 = pencil_max_eig(SymMatrix(s), P) * (1.0 + kInflate);
        return std::max(g1, kBoxLo);
    };
    auto objective = [&](double g2) {
        const double g1 = gamma1_of(g2);
        if (!(g1 <= kBoxHi)) {
            return kNegInf;
        }
        return tau_two(alpha_bar, alpha_b, g1, g2);
    };
    const auto [g2, tau] = log_search(objective, lo, kBoxHi, 400);
    if (!std::isfinite(tau)) {
        throw InfeasibleError("fit_gamma: no feasible (gamma1, gamma2) in [1e-4, 1e6]^2");
    }
    return {gamma1_of(g2), g2, tau};
}

double DesignResult::gain_norm() const {
    Eigen::JacobiSVD<Mat> svd(K);
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

DesignResult synthesize_feedback(const LinearSampledModel& model, const DesignOptions& options) {
    model.validate();
    if (!model.B_hat) {
        throw ValidationError("B_hat", "synthesis needs an input channel");
    }
    const double c_tilde = options.c_tilde.value_or(1.0);
    if (!(c_tilde > 0.0)) {
        throw DomainError("synthesize_feedback: c_tilde must be positive");
    }
    if (options.alpha_fractions.empty()) {
        throw DomainError("synthesize_feedback: empty alpha_fraction ladder");
    }
    const auto n = static_cast<Eigen::Index>(model.n());
    const auto mh = model.B_hat->cols();
    const LinearProblem prob{model, n, mh, c_tilde, options.max_gain_norm};

    DesignTrace trace;
    QYVars v(n, mh);
    const std::size_t nv = v.count();

    // Supremal decay rate over gains meeting the box and gain constraints.
    {
        const AffineExpr aq = model.A * v.Q + *model.B_hat * v.Y;
        AffineExpr num = v.Q;
        AffineExpr den = -(aq + aq.transpose());
        if (!model.diffusion.empty()) {
            const auto [gq, qd] = diffusion_blocks(prob, v);
            const Eigen::Index nm = gq.rows();
            num = AffineExpr::blocks({{v.Q, zero_expr(n, nm)}, {zero_expr(nm, n), zero_expr(nm, nm)}});
            den = AffineExpr::blocks({{den, -gq.transpose()}, {-gq, qd}});
        }
        GevpOptions go;
        go.strictness = options.strictness;
        const GevpResult g = minimize_gevp(num.to_map(nv), den.to_map(nv),
                                           common_constraints(v, n, mh, options.max_gain_norm), go);
        if (g.lambda <= go.lambda_lo * (1.0 + 1e-6)) {
            throw DomainError("synthesize_feedback: decay rate is unbounded; set a gain limit");
        }
        trace.lambda_step1 = g.lambda;
        trace.alpha_sup = 0.5 / g.lambda;
        trace.feasibility_solves += g.feasibility_solves;
    }

    std::optional<DesignResult> best;
    for (const double fraction : options.alpha_fractions) {
        if (!(fraction > 0.0 && fraction < 1.0)) {
            throw DomainError("synthesize_feedback: alpha fractions must lie in (0, 1)");
        }
        const double a = fraction * trace.alpha_sup;
        int solves = 0;
        auto feasible = [&](double ab, double g1, double g2, const std::optional<Vec>& start) {
            return solve_candidate(v, linear_lmis(prob, v, a, ab, g1, g2), options.strictness, start, solves);
        };

        std::optional<Candidate> cand;
        for (const double big : {1e3, 1e5}) {
            cand = feasible(big, 10.0 * big, 10.0 * big, std::nullopt);
            if (cand) {
                break;
            }
        }
        if (!cand) {
            trace.feasibility_solves += solves;
            continue;
        }

        int iterations = 0;
        for (; iterations < options.refine_iterations; ++iterations) {
            const auto ex = extract_linear(prob, *cand, a);
            if (!ex) {
                break;
            }
            const Vec start = v.pack(cand->Q, cand->Y);
            double lo = 0.0;
            double hi = 1.0;
            std::optional<Candidate> shrunk;
            for (int s = 0; s < options.shrink_steps; ++s) {
                const double mid = 0.5 * (lo + hi);
                auto c = feasible(ex->alpha_b * mid, ex->gamma.gamma1 * mid, ex->gamma.gamma2 * mid, start);
                if (c) {
                    hi = mid;
                    shrunk = c;
                } else {
                    lo = mid;
                }
            }
            if (!shrunk) {
                break;
            }
            const auto next = extract_linear(prob, *shrunk, a);
            if (!next || next->gamma.tau_max <= ex->gamma.tau_max * (1.0 + 1e-6)) {
                if (next && next->gamma.tau_max > ex->gamma.tau_max) {
                    cand = shrunk;
                }
                break;
            }
            cand = shrunk;
        }
        trace.feasibility_solves += solves;

        const auto fin = extract_linear(prob, *cand, std::nullopt);
        if (!fin) {
            continue;
        }
        DesignResult r;
        r.K = fin->K;
        r.Q = SymMatrix(cand->Q);
        r.Y = cand->Y;
        r.constants = {fin->alpha_bar, fin->alpha_b, fin->gamma.gamma1, fin->gamma.gamma2};
        r.bound = emulation_bound_two(r.constants);
        r.certificate.P = fin->P;
        r.certificate.P_tilde = fin->P_tilde;
        r.certificate.alpha_bar = fin->alpha_bar;
        r.certificate.extras = {{"alpha_b", fin->alpha_b},
                                {"gamma1", fin->gamma.gamma1},
                                {"gamma2", fin->gamma.gamma2},
                                {"c_tilde", c_tilde}};
        r.certificate.Q = cand->Q;
        r.certificate.Y = cand->Y;
        r.certificate.K_hat = fin->K;
        trace.ladder.emplace_back(fraction, r.bound.tau_max);
        if (!best || r.bound.tau_max > best->bound.tau_max) {
            r.trace.alpha_fraction = fraction;
            r.trace.refine_iterations = iterations;
            best = r;
        }
        if (!options.best_of_ladder) {
            break;
        }
    }
    if (!best) {
        throw InfeasibleError("synthesize_feedback: no rung of the alpha_fraction ladder is feasible");
    }
    const double chosen = best->trace.alpha_fraction;
    const int iters = best->trace.refine_iterations;
    best->trace = trace;
    best->trace.alpha_fraction = chosen;
    best->trace.refine_iterations = iters;
    return *best;
}

// ---------------------------------------------------------------------------
// Planar plant

namespace {

struct PlanarPieces {
    Mat a_tilde;
    Mat bbar;
    Mat e1;
};

PlanarPieces planar_pieces(const Mat& gain, const NonlinearPlanarModel& plant) {
    const Mat bbar = plant.B_hat * gain;
    return {plant.A_bar + bbar, bbar, NonlinearPlanarModel::envelope()};
}

// Decay rate certified by P at sector scaling b.
double planar_alpha(const PlanarPieces& pc, const SymMatrix& P, double b) {
    const Mat& p = P.matrix();
    const Mat l = pc.a_tilde.transpose() * p + p * pc.a_tilde + b * p + pc.e1.transpose() * p * pc.e1 / b;
    return -0.5 * pencil_max_eig(SymMatrix(l), P);
}

struct PlanarCoupling {
    double c = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double tau = kNegInf;
};

PlanarCoupling planar_coupling(const PlanarPieces& pc, const SymMatrix& P, const SymMatrix& Pt, double alpha_bar,
                               double alpha_b, double c_lo, double c_hi, std::optional<double> c_fixed) {
    const Mat& pt = Pt.matrix();
    const Mat sym_b = pc.bbar.transpose() * pt + pt * pc.bbar;
    const Mat ptf = pt * pc.a_tilde;
    const Mat ee = pc.e1.transpose() * pt * pc.e1;
    const double d_min = pencil_max_eig(SymMatrix(-sym_b), Pt);

    auto gamma1_of = [&](double c, double g2) {
        const Mat m22 = -sym_b + (c - g2) * pt;
        const Mat s = ee / c - ptf.transpose() * m22.ldlt().solve(ptf);
        return std::max(pencil_max_eig(SymMatrix(s), P) * (1.0 + kInflate), kBoxLo);
    };
    auto best_g2 = [&](double c) -> std::pair<double, double> {
        const double lo = std::max(kBoxLo, c + d_min + 1e-9 * (1.0 + std::abs(c + d_min)));
        if (!(lo < kBoxHi)) {
            return {lo, kNegInf};
        }
        return log_search(
            [&](double g2) {
                const double g1 = gamma1_of(c, g2);
                return g1 <= kBoxHi ? tau_two(alpha_bar, alpha_b, g1, g2) : kNegInf;
            },
            lo, kBoxHi, 120);
    };
    PlanarCoupling out;
    double c = 0.0;
    if (c_fixed) {
        c = *c_fixed;
    } else {
        c = log_search([&](double cc) { return best_g2(cc).second; }, c_lo, c_hi, 40).first;
    }
    const auto [g2, tau] = best_g2(c);
    if (!std::isfinite(tau)) {
        return out;
    }
    return {c, gamma1_of(c, g2), g2, tau};
}

struct PlanarProblem {
    const NonlinearPlanarModel& plant;
    std::optional<double> max_gain;
};

std::vector<AffineMatrixMap> planar_lmis(const PlanarProblem& p, const QYVars& v, double alpha_bar, double b,
                                         double alpha_b, double c, double gamma1, double gamma2) {
    const std::size_t nv = v.count();
    const Mat e1 = NonlinearPlanarModel::envelope();
    const AffineExpr by = p.plant.B_hat * v.Y;
    const AffineExpr aq = p.plant.A_bar * v.Q + by;
    const AffineExpr eq = e1 * v.Q;
    const AffineExpr z = zero_expr(2, 2);
    std::vector<AffineMatrixMap> out = common_constraints(v, 2, 1, p.max_gain);
    out.push_back(
        AffineExpr::blocks({{aq + aq.transpose() + (b + 2.0 * alpha_bar) * v.Q, eq.transpose()}, {eq, -b * v.Q}})
            .to_map(nv));
    out.push_back(AffineExpr::blocks({{-alpha_b * v.Q, by.transpose()}, {by, -v.Q}}).to_map(nv));
    out.push_back(AffineExpr::blocks({{-gamma1 * v.Q, aq.transpose(), eq.transpose()},
                                      {aq, -(by + by.transpose()) + (c - gamma2) * v.Q, z},
                                      {eq, z, -c * v.Q}})
                      .to_map(nv));
    return out;
}

} // namespace

PlanarConstants extract_planar_constants(const Mat& gain, const SymMatrix& P, const SymMatrix& P_tilde,
                                         const PlanarDesignOptions& options, const NonlinearPlanarModel& plant) {
    const PlanarPieces pc = planar_pieces(gain, plant);
    PlanarConstants out;
    const auto [b, alpha] = log_search([&](double bb) { return planar_alpha(pc, P, bb); }, options.b_lo,
                                       options.b_hi, 60);
    if (!(alpha > 0.0)) {
        throw InfeasibleError("extract_planar_constants: P certifies no positive decay rate");
    }
    out.b = b;
    out.alpha_bar = alpha * (1.0 - kInflate);
    out.alpha_b = std::max(extract_alpha_b(P, P_tilde, pc.bbar) * (1.0 + kInflate), 1e-12);
    const PlanarCoupling cp =
        planar_coupling(pc, P, P_tilde, out.alpha_bar, out.alpha_b, options.c_lo, options.c_hi, std::nullopt);
    if (!std::isfinite(cp.tau)) {
        throw InfeasibleError("extract_planar_constants: no feasible (c, gamma2) in the search box");
    }
    out.c = cp.c;
    out.gamma1 = cp.gamma1;
    out.gamma2 = cp.gamma2;
    out.tau_max = cp.tau;
    return out;
}

DesignResult synthesize_nonlinear_planar(const PlanarDesignOptions& options, const NonlinearPlanarModel& plant) {
    if (options.alpha_fractions.empty()) {
        throw DomainError("synthesize_nonlinear_planar: empty alpha_fraction ladder");
    }
    const PlanarProblem prob{plant, options.max_gain_norm};
    QYVars v(2, 1);
    const std::size_t nv = v.count();
    const Mat e1 = NonlinearPlanarModel::envelope();
    DesignTrace trace;

    // Supremal decay rate, scanning the sector scaling b.
    double b_star = 1.0;
    {
        const AffineExpr aq = plant.A_bar * v.Q + plant.B_hat * v.Y;
        const AffineExpr eq = e1 * v.Q;
        const AffineExpr z = zero_expr(2, 2);
        const auto extra = common_constraints(v, 2, 1, options.max_gain_norm);
        GevpOptions go;
        go.strictness = options.strictness;
        go.iterations = 40;
        double best_lambda = std::numeric_limits<double>::infinity();
        const int grid = 9;
        for (int i = 0; i < grid; ++i) {
            const double b = options.b_lo * std::pow(options.b_hi / options.b_lo, static_cast<double>(i) / (grid - 1));
            const AffineExpr num = AffineExpr::blocks({{v.Q, z}, {z, z}});
            const AffineExpr den =
                AffineExpr::blocks({{-(aq + aq.transpose() + b * v.Q), -eq.transpose()}, {-eq, b * v.Q}});
            try {
                const GevpResult g = minimize_gevp(num.to_map(nv), den.to_map(nv), extra, go);
                trace.feasibility_solves += g.feasibility_solves;
                if (g.lambda < best_lambda) {
                    best_lambda = g.lambda;
                    b_star = b;
                }
            } catch (const InfeasibleError&) {
            }
        }
        if (!std::isfinite(best_lambda)) {
            throw InfeasibleError("synthesize_nonlinear_planar: no stabilizing gain within the gain bound");
        }
        trace.lambda_step1 = best_lambda;
        trace.alpha_sup = 0.5 / best_lambda;
    }

    auto extract = [&](const Candidate& c, double a, double b) -> std::optional<std::pair<double, PlanarCoupling>> {
        const SymMatrix P(Mat(c.Q.inverse()));
        const Mat k = c.Y * P.matrix();
        const PlanarPieces pc = planar_pieces(k, plant);
        if (planar_alpha(pc, P, b) < a * (1.0 - 1e-6)) {
            return std::nullopt;
        }
        const double ab = std::max(extract_alpha_b(P, P, pc.bbar) * (1.0 + kInflate), 1e-12);
        const PlanarCoupling cp = planar_coupling(pc, P, P, a, ab, options.c_lo, options.c_hi, std::nullopt);
        if (!std::isfinite(cp.tau)) {
            return std::nullopt;
        }
        return std::make_pair(ab, cp);
    };

    std::optional<DesignResult> best;
    for (const double fraction : options.alpha_fractions) {
        if (!(fraction > 0.0 && fraction < 1.0)) {
            throw DomainError("synthesize_nonlinear_planar: alpha fractions must lie in (0, 1)");
        }
        const double a = fraction * trace.alpha_sup;
        int solves = 0;
        auto feasible = [&](double ab, double c, double g1, double g2, const std::optional<Vec>& start) {
            return solve_candidate(v, planar_lmis(prob, v, a, b_star, ab, c, g1, g2), options.strictness, start,
                                   solves);
        };
        std::optional<Candidate> cand;
        for (const double big : {1e3, 1e5}) {
            cand = feasible(big, 10.0, 10.0 * big, 10.0 * big, std::nullopt);
            if (cand) {
                break;
            }
        }
        if (!cand) {
            trace.feasibility_solves += solves;
            continue;
        }
        int iterations = 0;
        for (; iterations < options.refine_iterations; ++iterations) {
            const auto ex = extract(*cand, a, b_star);
            if (!ex) {
                break;
            }
            const auto& [ab, cp] = *ex;
            const Vec start = v.pack(cand->Q, cand->Y);
            double lo = 0.0;
            double hi = 1.0;
            std::optional<Candidate> shrunk;
            for (int s = 0; s < options.shrink_steps; ++s) {
                const double mid = 0.5 * (lo + hi);
                auto c = feasible(ab * mid, cp.c, cp.gamma1 * mid, cp.gamma2 * mid, start);
                if (c) {
                    hi = mid;
                    shrunk = c;
                } else {
                    lo = mid;
                }
            }
            if (!shrunk) {
                break;
            }
            const auto next = extract(*shrunk, a, b_star);
            if (!next) {
                break;
            }
            const bool improved = next->second.tau > cp.tau * (1.0 + 1e-6);
            if (next->second.tau > cp.tau) {
                cand = shrunk;
            }
            if (!improved) {
                break;
            }
        }
        trace.feasibility_solves += solves;

        const SymMatrix P(Mat(cand->Q.inverse()));
        const Mat k = cand->Y * P.matrix();
        PlanarConstants pcs;
        try {
            pcs = extract_planar_constants(k, P, P, options, plant);
        } catch (const InfeasibleError&) {
            continue;
        }
        DesignResult r;
        r.K = k;
        r.Q = SymMatrix(cand->Q);
        r.Y = cand->Y;
        r.constants = {pcs.alpha_bar, pcs.alpha_b, pcs.gamma1, pcs.gamma2};
        r.bound = emulation_bound_two(r.constants);
        r.certificate.P = P;
        r.certificate.P_tilde = P;
        r.certificate.alpha_bar = pcs.alpha_bar;
        r.certificate.extras = {{"alpha_b", pcs.alpha_b}, {"gamma1", pcs.gamma1}, {"gamma2", pcs.gamma2},
                                {"c_tilde", 1.0},         {"b", pcs.b},           {"c", pcs.c}};
        r.certificate.Q = cand->Q;
        r.certificate.Y = cand->Y;
        r.certificate.K_hat = k;
        trace.ladder.emplace_back(fraction, r.bound.tau_max);
        if (!best || r.bound.tau_max > best->bound.tau_max) {
            r.trace.alpha_fraction = fraction;
            r.trace.refine_iterations = iterations;
            best = r;
        }
        if (!options.best_of_ladder) {
            break;
        }
    }
    if (!best) {
        throw InfeasibleError("synthesize_nonlinear_planar: no rung of the alpha_fraction ladder is feasible");
    }
    const double chosen = best->trace.alpha_fraction;
    const int iters = best->trace.refine_iterations;
    best->trace = trace;
    best->trace.alpha_fraction = chosen;
    best->trace.refine_iterations = iters;
    return *best;
}

} // namespace sdcert
