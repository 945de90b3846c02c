#include "sdcert/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include "callback_guard.hpp"
#include "sdcert/errors.hpp"

namespace sdcert {

namespace {

constexpr std::uint32_t kBrownianStream = 0;
constexpr std::uint32_t kJumpStream = 1;
constexpr std::uint32_t kScheduleStream = 2;
constexpr std::uint32_t kDiscreteStream = 3;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32U), stream};
    return std::mt19937_64(seq);
}

// Summation in a fixed pairwise order.
double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += v[i];
        }
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

struct Grid {
    std::vector<double> t;
    std::vector<bool> instant;
    std::vector<std::size_t> stored;
};

Grid build_grid(const std::vector<double>& instants, double dt, double horizon, std::size_t stride) {
    Grid g;
    std::vector<double> anchors = instants;
    if (anchors.empty() || anchors.front() != 0.0) {
        anchors.insert(anchors.begin(), 0.0);
    }
    const double tail = 1e-9 * dt;
    const bool horizon_anchor = horizon > anchors.back() + tail;
    if (horizon_anchor) {
        anchors.push_back(horizon);
    }
    g.t.push_back(0.0);
    g.instant.push_back(true);
    for (std::size_t k = 1; k < anchors.size(); ++k) {
        const double a = anchors[k - 1];
        const double b = anchors[k];
        const auto full = static_cast<std::size_t>(std::floor((b - a) / dt * (1.0 + 1e-12)));
        for (std::size_t j = 1; j <= full; ++j) {
            const double t = a + static_cast<double>(j) * dt;
            if (t >= b - tail) {
                break;
            }
            g.t.push_back(t);
            g.instant.push_back(false);
        }
        g.t.push_back(b);
        g.instant.push_back(k + 1 < anchors.size() || !horizon_anchor);
    }
    for (std::size_t i = 0; i < g.t.size(); ++i) {
        if (i % stride == 0 || i + 1 == g.t.size()) {
            g.stored.push_back(i);
        }
    }
    return g;
}

std::vector<double> stored_times(const Grid& g) {
    std::vector<double> out;
    out.reserve(g.stored.size());
    for (const std::size_t i : g.stored) {
        out.push_back(g.t[i]);
    }
    return out;
}

SamplePath run_path(const SampledLoop& loop, const Grid& grid, std::uint64_t seed, std::size_t path_index) {
    const auto n = static_cast<Eigen::Index>(loop.n);
    SamplePath out;
    out.t = stored_times(grid);
    out.x = Mat::Constant(n, static_cast<Eigen::Index>(out.t.size()), kNaN);
    std::mt19937_64 rng = make_stream(seed, path_index, kBrownianStream);
    std::normal_distribution<double> normal;

    Vec x = loop.x0;
    Vec held = x;
    std::size_t next_store = 0;
    auto store = [&](std::size_t i) {
        if (next_store < grid.stored.size() && grid.stored[next_store] == i) {
            out.x.col(static_cast<Eigen::Index>(next_store++)) = x;
        }
    };
    store(0);
    for (std::size_t i = 1; i < grid.t.size(); ++i) {
        const double dt = grid.t[i] - grid.t[i - 1];
        const double sq = std::sqrt(dt);
        Vec step = (loop.drift(x) + loop.B_bar * held) * dt;
        for (const Mat& g : loop.diffusion) {
            step += g * x * (sq * normal(rng));
        }
        x += step;
        if (!x.allFinite()) {
            out.diverged = true;
            out.diverged_at = grid.t[i];
            return out;
        }
        if (grid.instant[i]) {
            held = x;
        }
        store(i);
    }
    return out;
}

} // namespace

void SimConfig::validate() const {
    if (!(dt_sim > 0.0) || !std::isfinite(dt_sim)) {
        throw ValidationError("dt_sim", "must be positive");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ValidationError("horizon", "must be positive");
    }
    if (n_paths == 0) {
        throw ValidationError("n_paths", "must be positive");
    }
    if (store_stride == 0) {
        throw ValidationError("store_stride", "must be positive");
    }
    if (dt_sim > schedule.underline_dt() / 10.0 * (1.0 + 1e-12)) {
        throw ValidationError("dt_sim", "must not exceed a tenth of the shortest sampling interval");
    }
}

std::vector<double> ensemble_instants(const SimConfig& cfg) {
    std::mt19937_64 rng = make_stream(cfg.seed, std::numeric_limits<std::uint64_t>::max(), kScheduleStream);
    return schedule_instants(cfg.schedule, cfg.horizon, rng);
}

std::vector<double> em_grid(const std::vector<double>& instants, double dt_sim, double horizon) {
    if (!(dt_sim > 0.0)) {
        throw DomainError("em_grid: dt_sim must be positive");
    }
    return build_grid(instants, dt_sim, horizon, 1).t;
}

SamplePath simulate_sampled_path(const Model& model, const SimConfig& cfg, std::size_t path_index) {
    cfg.validate();
    const SampledLoop loop = make_loop(model);
    const Grid grid = build_grid(ensemble_instants(cfg), cfg.dt_sim, cfg.horizon, cfg.store_stride);
    return run_path(loop, grid, cfg.seed, path_index);
}

std::vector<Vec> simulate_em_discrete(const Mat& F, const std::vector<Mat>& G, double h, std::size_t n_steps,
                                      const Vec& x0, std::uint64_t seed) {
    if (!(h >= 0.0) || !std::isfinite(h)) {
        throw DomainError("simulate_em_discrete: h must be non-negative");
    }
    if (F.rows() != F.cols() || F.rows() != x0.size()) {
        throw DomainError("simulate_em_discrete: F and x0 dimensions do not match");
    }
    for (const Mat& g : G) {
        if (g.rows() != F.rows() || g.cols() != F.cols()) {
            throw DomainError("simulate_em_discrete: diffusion dimensions do not match");
        }
    }
    std::mt19937_64 rng = make_stream(seed, 0, kDiscreteStream);
    std::normal_distribution<double> normal;
    const double sq = std::sqrt(h);
    std::vector<Vec> out;
    out.reserve(n_steps + 1);
    out.push_back(x0);
    bool diverged = false;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        const Vec& prev = out.back();
        if (diverged) {
            out.push_back(Vec::Constant(x0.size(), kNaN));
            continue;
        }
        Vec next = prev + F * prev * h;
        for (const Mat& g : G) {
            next += g * prev * (sq * normal(rng));
        }
        if (!next.allFinite()) {
            diverged = true;
            next.setConstant(kNaN);
        }
        out.push_back(std::move(next));
    }
    return out;
}

SidePath simulate_side(const GeneralSiDE& side, const SimConfig& cfg, std::size_t path_index) {
    cfg.validate();
    side.validate();
    const Grid grid = build_grid(ensemble_instants(cfg), cfg.dt_sim, cfg.horizon, cfg.store_stride);
    std::mt19937_64 rng = make_stream(cfg.seed, path_index, kBrownianStream);
    std::mt19937_64 jump_rng = make_stream(cfg.seed, path_index, kJumpStream);
    std::normal_distribution<double> normal;
    std::normal_distribution<double> jump_normal;
    const auto m = static_cast<Eigen::Index>(side.m);
    const auto r = static_cast<Eigen::Index>(side.r);

    SidePath out;
    out.t = stored_times(grid);
    const auto cols = static_cast<Eigen::Index>(out.t.size());
    out.x = Mat::Constant(static_cast<Eigen::Index>(side.n), cols, kNaN);
    out.y = Mat::Constant(static_cast<Eigen::Index>(side.q), cols, kNaN);

    Vec x = side.x0;
    Vec y = side.y0;
    Segment seg{{0.0}, {x}, {y}};
    std::size_t next_store = 0;
    auto store = [&](std::size_t i) {
        if (next_store < grid.stored.size() && grid.stored[next_store] == i) {
            out.x.col(static_cast<Eigen::Index>(next_store)) = x;
            out.y.col(static_cast<Eigen::Index>(next_store)) = y;
            ++next_store;
        }
    };
    store(0);
    std::size_t k = 0;
    for (std::size_t i = 1; i < grid.t.size(); ++i) {
        const double t0 = grid.t[i - 1];
        const double dt = grid.t[i] - t0;
        const double sq = std::sqrt(dt);
        const Vec f = detail::guarded(t0, "f", side.f, x, y, t0);
        const Mat g = detail::guarded(t0, "g", side.g, x, y, t0);
        const Vec ft = detail::guarded(t0, "f_tilde", side.f_tilde, x, y, t0);
        const Mat gt = detail::guarded(t0, "g_tilde", side.g_tilde, x, y, t0);
        Vec dx = f * dt;
        Vec dy = ft * dt;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double db = sq * normal(rng);
            dx += g.col(j) * db;
            dy += gt.col(j) * db;
        }
        x += dx;
        y += dy;
        if (!x.allFinite() || !y.allFinite()) {
            out.diverged = true;
            return out;
        }
        seg.t.push_back(grid.t[i]);
        seg.x.push_back(x);
        seg.y.push_back(y);
        if (grid.instant[i]) {
            ++k;
            const double tk = grid.t[i];
            out.jump_times.push_back(tk);
            out.y_minus.push_back(y);
            Vec jump = detail::guarded(tk, "jump_drift", side.jump_drift, seg, k);
            if (r > 0) {
                const Mat h = detail::guarded(tk, "jump_noise", side.jump_noise, seg, k);
                Vec xi(r);
                for (Eigen::Index j = 0; j < r; ++j) {
                    xi(j) = jump_normal(jump_rng);
                }
                jump += h * xi;
            }
            y += jump;
            seg = Segment{{tk}, {x}, {y}};
        }
        store(i);
    }
    return out;
}

std::size_t TrajectoryEnsemble::diverged_count() const {
    return static_cast<std::size_t>(std::count(diverged.begin(), diverged.end(), true));
}

TrajectoryEnsemble run_ensemble(const Model& model, const SimConfig& cfg) {
    cfg.validate();
    const SampledLoop loop = make_loop(model);
    TrajectoryEnsemble ens;
    ens.n = loop.n;
    ens.instants = ensemble_instants(cfg);
    const Grid grid = build_grid(ens.instants, cfg.dt_sim, cfg.horizon, cfg.store_stride);
    ens.time = stored_times(grid);
    ens.paths.resize(cfg.n_paths);
    ens.diverged.assign(cfg.n_paths, false);
    ens.terminal_norm.assign(cfg.n_paths, kNaN);

    unsigned workers = cfg.workers != 0 ? cfg.workers : std::max(1U, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.n_paths));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    // Per-path bytes: vector<bool> does not allow concurrent writes.
    std::vector<char> flags(cfg.n_paths, 0);
    auto work = [&]() {
        for (std::size_t p = next++; p < cfg.n_paths; p = next++) {
            try {
                SamplePath path = run_path(loop, grid, cfg.seed, p);
                flags[p] = path.diverged ? 1 : 0;
                if (!path.diverged) {
                    ens.terminal_norm[p] = path.x.col(path.x.cols() - 1).norm();
                }
                ens.paths[p] = std::move(path.x);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) {
        pool.emplace_back(work);
    }
    work();
    for (std::thread& th : pool) {
        th.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    for (std::size_t p = 0; p < cfg.n_paths; ++p) {
        ens.diverged[p] = flags[p] != 0;
    }
    return ens;
}

std::vector<double> mean_square_norm(const TrajectoryEnsemble& ens) {
    std::vector<double> out(ens.time.size(), kNaN);
    std::vector<double> buf;
    buf.reserve(ens.paths.size());
    for (std::size_t i = 0; i < ens.time.size(); ++i) {
        buf.clear();
        for (std::size_t p = 0; p < ens.paths.size(); ++p) {
            if (!ens.diverged[p]) {
                buf.push_back(ens.paths[p].col(static_cast<Eigen::Index>(i)).squaredNorm());
            }
        }
        if (!buf.empty()) {
            out[i] = pairwise_sum(buf.data(), buf.size()) / static_cast<double>(buf.size());
        }
    }
    return out;
}

DecayEstimate estimate_ms_decay(const TrajectoryEnsemble& ens, std::optional<std::pair<double, double>> window) {
    if (ens.time.empty()) {
        throw DegenerateEnsemble("estimate_ms_decay: empty ensemble");
    }
    const double horizon = ens.time.back();
    const auto [lo, hi] = window.value_or(std::make_pair(0.2 * horizon, horizon));
    if (!(lo < hi) || lo < 0.0 || hi > horizon * (1.0 + 1e-12)) {
        throw DomainError("estimate_ms_decay: window must lie within [0, horizon]");
    }
    if (ens.diverged_count() == ens.paths.size()) {
        throw DegenerateEnsemble("estimate_ms_decay: every path diverged");
    }
    const std::vector<double> ms = mean_square_norm(ens);
    std::vector<double> ts;
    std::vector<double> ls;
    const double eps = 1e-12 * std::max(1.0, horizon);
    for (std::size_t i = 0; i < ens.time.size(); ++i) {
        if (ens.time[i] < lo - eps || ens.time[i] > hi + eps) {
            continue;
        }
        if (!(ms[i] > 0.0) || !std::isfinite(ms[i])) {
            throw DegenerateEnsemble("estimate_ms_decay: mean-square norm is not positive at t=" +
                                     std::to_string(ens.time[i]));
        }
        ts.push_back(ens.time[i]);
        ls.push_back(std::log(ms[i]));
    }
    if (ts.size() < 10) {
        throw DomainError("estimate_ms_decay: fewer than 10 stored points in the window");
    }
    const auto np = static_cast<double>(ts.size());
    const double tm = pairwise_sum(ts.data(), ts.size()) / np;
    const double lm = pairwise_sum(ls.data(), ls.size()) / np;
    double stt = 0.0;
    double stl = 0.0;
    double sll = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        stt += (ts[i] - tm) * (ts[i] - tm);
        stl += (ts[i] - tm) * (ls[i] - lm);
        sll += (ls[i] - lm) * (ls[i] - lm);
    }
    DecayEstimate out;
    out.rate = stl / stt;
    out.intercept = lm - out.rate * tm;
    out.r_squared = sll > 0.0 ? std::clamp(stl * stl / (stt * sll), 0.0, 1.0) : 1.0;
    out.window_lo = lo;
    out.window_hi = hi;
    out.points = ts.size();
    return out;
}

ExponentSummary estimate_as_exponent(const TrajectoryEnsemble& ens, std::optional<double> t_end) {
    if (ens.time.empty()) {
        throw DegenerateEnsemble("estimate_as_exponent: empty ensemble");
    }
    const double target = t_end.value_or(ens.time.back());
    const auto it = std::upper_bound(ens.time.begin(), ens.time.end(), target * (1.0 + 1e-12));
    if (it == ens.time.begin()) {
        throw DomainError("estimate_as_exponent: window end precedes the first stored time");
    }
    const auto idx = static_cast<Eigen::Index>(std::distance(ens.time.begin(), it) - 1);
    ExponentSummary out;
    out.t = ens.time[static_cast<std::size_t>(idx)];
    if (!(out.t > 0.0)) {
        throw DomainError("estimate_as_exponent: window end must be positive");
    }
    std::vector<double> finite;
    for (std::size_t p = 0; p < ens.paths.size(); ++p) {
        double e = kNaN;
        if (!ens.diverged[p]) {
            const double nrm = ens.paths[p].col(idx).norm();
            e = nrm == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(nrm) / out.t;
        }
        out.exponents.push_back(e);
        if (std::isfinite(e)) {
            finite.push_back(e);
        }
    }
    out.finite_count = finite.size();
    if (finite.empty()) {
        throw DegenerateEnsemble("estimate_as_exponent: no path with a finite exponent");
    }
    std::sort(finite.begin(), finite.end());
    const std::size_t h = finite.size() / 2;
    out.median = finite.size() % 2 == 1 ? finite[h] : 0.5 * (finite[h - 1] + finite[h]);
    out.max = finite.back();
    return out;
}

void write_trajectory_csv(const TrajectoryEnsemble& ens, std::ostream& os) {
    const auto old = os.precision(17);
    os << "t,path";
    for (std::size_t j = 1; j <= ens.n; ++j) {
        os << ",x" << j;
    }
    os << '\n';
    for (std::size_t p = 0; p < ens.paths.size(); ++p) {
        for (std::size_t i = 0; i < ens.time.size(); ++i) {
            os << ens.time[i] << ',' << p;
            for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(ens.n); ++j) {
                os << ',' << ens.paths[p](j, static_cast<Eigen::Index>(i));
            }
            os << '\n';
        }
    }
    os.precision(old);
}

void write_stats_csv(const TrajectoryEnsemble& ens, std::ostream& os) {
    const auto old = os.precision(17);
    const std::vector<double> ms = mean_square_norm(ens);
    os << "t,mean_sq_norm,n_alive\n";
    for (std::size_t i = 0; i < ens.time.size(); ++i) {
        std::size_t alive = 0;
        for (const Mat& path : ens.paths) {
            alive += path.col(static_cast<Eigen::Index>(i)).allFinite() ? 1U : 0U;
        }
        os << ens.time[i] << ',' << ms[i] << ',' << alive << '\n';
    }
    os.precision(old);
}

} // namespace sdcert
