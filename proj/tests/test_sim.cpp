#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "sdcert/errors.hpp"
#include "sdcert/sim.hpp"

namespace sdcert {
namespace {

const std::string kData = SDCERT_DATA_DIR;

Mat m1(double v) { return Mat::Constant(1, 1, v); }

LinearSampledModel scalar(double a, double sigma, double b_bar, double x0) {
    LinearSampledModel m;
    m.name = "scalar";
    m.A = m1(a);
    if (sigma != 0.0) {
        m.diffusion = {m1(sigma)};
    }
    m.B_bar = m1(b_bar);
    m.x0 = Vec::Constant(1, x0);
    return m;
}

LinearSampledModel decaying_pair() {
    LinearSampledModel m;
    m.name = "decay";
    m.A = -Mat::Identity(2, 2);
    m.B_bar = Mat::Zero(2, 2);
    m.x0 = Vec::Ones(2);
    return m;
}

SimConfig config(double dt, double horizon, const std::string& schedule, std::size_t paths = 1,
                 std::uint64_t seed = 0) {
    SimConfig c;
    c.dt_sim = dt;
    c.horizon = horizon;
    c.schedule = SamplingSchedule::parse(schedule);
    c.n_paths = paths;
    c.seed = seed;
    return c;
}

TEST(SimConfig, SubstepMustResolveTheSchedule) {
    SimConfig c = config(0.01, 1.0, "periodic:0.05");
    try {
        c.validate();
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "dt_sim");
    }
    c.dt_sim = 0.005;
    EXPECT_NO_THROW(c.validate());
    c.n_paths = 0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(EmGrid, LandsExactlyOnEveryInstant) {
    const SimConfig c = config(0.002, 5.0, "periodic:0.0234");
    const std::vector<double> inst = ensemble_instants(c);
    const std::vector<double> grid = em_grid(inst, c.dt_sim, c.horizon);
    std::size_t k = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        ASSERT_GT(grid[i] - grid[i - 1], 0.0);
        ASSERT_LE(grid[i] - grid[i - 1], c.dt_sim * (1.0 + 1e-12));
    }
    for (const double t : grid) {
        if (k < inst.size() && t == inst[k]) {
            ++k;
        }
    }
    EXPECT_EQ(k, inst.size());
    EXPECT_DOUBLE_EQ(grid.back(), 5.0);
}

TEST(SampledPath, MatchesExactLinearFlow) {
    const SamplePath p = simulate_sampled_path(decaying_pair(), config(1e-3, 5.0, "periodic:0.1"), 0);
    double err = 0.0;
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        err = std::max(err, (p.x.col(static_cast<Eigen::Index>(i)) - std::exp(-p.t[i]) * Vec::Ones(2)).norm());
    }
    EXPECT_LT(err, 5e-3);
    EXPECT_FALSE(p.diverged);
}

TEST(SampledPath, OriginIsAnEquilibrium) {
    LinearSampledModel m = std::get<LinearSampledModel>(load_model(kData + "/models/ex1_sub1_closed.json"));
    m.x0 = Vec::Zero(2);
    const SamplePath p = simulate_sampled_path(m, config(1e-3, 2.0, "periodic:0.0234"), 3);
    EXPECT_EQ(p.x.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SampledPath, UncontrolledPlantGrows) {
    LinearSampledModel m = std::get<LinearSampledModel>(load_model(kData + "/models/ex1_sub1.json"));
    // trace −4, det −4: eigenvalues −2 ± √8.
    const Eigen::VectorXcd ev = m.A.eigenvalues();
    EXPECT_NEAR(std::max(ev(0).real(), ev(1).real()), -2.0 + std::sqrt(8.0), 1e-12);
    m.B_bar = Mat::Zero(2, 2);
    const SamplePath p = simulate_sampled_path(m, config(1e-3, 5.0, "periodic:0.0234"), 0);
    EXPECT_TRUE(p.diverged || p.x.col(p.x.cols() - 1).norm() > 10.0 * m.x0->norm());
}

TEST(SampledPath, HeldInputChangesOnlyAtInstants) {
    // ẋ = −x(t_k): between instants x moves linearly with the held slope.
    const LinearSampledModel m = scalar(0.0, 0.0, -1.0, 1.0);
    const SimConfig c = config(0.01, 1.0, "uniform:0.1,0.2", 1, 5);
    const std::vector<double> inst = ensemble_instants(c);
    const SamplePath p = simulate_sampled_path(m, c, 0);
    std::size_t k = 0;
    double held = 1.0;
    double tk = 0.0;
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        const double x = p.x(0, static_cast<Eigen::Index>(i));
        EXPECT_NEAR(x, held * (1.0 - (p.t[i] - tk)), 1e-12) << "t=" << p.t[i];
        if (k + 1 < inst.size() && p.t[i] == inst[k + 1]) {
            ++k;
            held = x;
            tk = p.t[i];
        }
    }
    EXPECT_EQ(k + 1, inst.size());
}

TEST(EmDiscrete, NoiseFreeRecursionIsMatrixPower) {
    const Mat F = (Mat(2, 2) << -1.0, 2.0, 0.0, -3.0).finished();
    const Vec x0 = (Vec(2) << 1.0, -1.0).finished();
    const auto path = simulate_em_discrete(F, {}, 0.01, 50, x0, 1);
    const Mat step = Mat::Identity(2, 2) + 0.01 * F;
    Vec ref = x0;
    for (int k = 0; k < 50; ++k) {
        ref = step * ref;
    }
    EXPECT_LT((path.back() - ref).norm(), 1e-14);
    const auto again = simulate_em_discrete(F, {}, 0.01, 50, x0, 1);
    EXPECT_EQ(path.back(), again.back());
}

TEST(EmDiscrete, ZeroStepIsConstant) {
    const auto path = simulate_em_discrete(m1(-3.0), {m1(2.0)}, 0.0, 10, Vec::Constant(1, 0.7), 9);
    for (const Vec& v : path) {
        EXPECT_EQ(v(0), 0.7);
    }
    EXPECT_THROW((void)simulate_em_discrete(m1(1.0), {}, -0.1, 3, Vec::Ones(1), 0), DomainError);
}

TEST(EmDiscrete, SampleMeanMatchesDiscreteMean) {
    const double a = -0.8;
    const double sigma = 0.5;
    const double h = 0.05;
    const std::size_t steps = 20;
    const int paths = 100000;
    double s = 0.0;
    double s2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        const double v = simulate_em_discrete(m1(a), {m1(sigma)}, h, steps, Vec::Ones(1), p).back()(0);
        s += v;
        s2 += v * v;
    }
    const double mean = s / paths;
    const double se = std::sqrt((s2 / paths - mean * mean) / paths);
    EXPECT_NEAR(mean, std::pow(1.0 + a * h, static_cast<double>(steps)), 3.0 * se);
}

TEST(Side, SampledDataSpecializationMatchesDirectSimulation) {
    const Model model = load_model(kData + "/models/ex1_sub1_closed.json");
    const SimConfig c = config(1e-3, 2.0, "periodic:0.0234", 1, 42);
    const SamplePath direct = simulate_sampled_path(model, c, 3);
    const SidePath side = simulate_side(sampled_data_side(make_loop(model)), c, 3);
    ASSERT_EQ(direct.t, side.t);
    EXPECT_LT((direct.x - side.x).cwiseAbs().maxCoeff(), 1e-12);
    const std::vector<double> inst = ensemble_instants(c);
    EXPECT_EQ(side.jump_times, std::vector<double>(inst.begin() + 1, inst.end()));
}

GeneralSiDE clock_side() {
    // x ≡ 1 drives y at unit slope; each impulse resets y.
    GeneralSiDE s;
    s.n = 1;
    s.q = 1;
    s.m = 0;
    s.f = [](const Vec&, const Vec&, double) { return Vec::Zero(1); };
    s.g = [](const Vec&, const Vec&, double) { return Mat(1, 0); };
    s.f_tilde = [](const Vec& x, const Vec&, double) { return Vec(x); };
    s.g_tilde = [](const Vec&, const Vec&, double) { return Mat(1, 0); };
    s.jump_drift = [](const Segment& seg, std::size_t) { return Vec(-seg.y.back()); };
    s.x0 = Vec::Ones(1);
    s.y0 = Vec::Zero(1);
    return s;
}

TEST(Side, ResetJumpProducesSawtooth) {
    const SimConfig c = config(0.01, 1.0, "periodic:0.25");
    const SidePath p = simulate_side(clock_side(), c);
    ASSERT_EQ(p.jump_times.size(), 4U);
    for (std::size_t k = 0; k < p.jump_times.size(); ++k) {
        EXPECT_NEAR(p.y_minus[k](0), 0.25, 1e-12);
    }
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        const double expected = p.t[i] - 0.25 * std::floor(p.t[i] / 0.25 + 1e-9);
        EXPECT_NEAR(p.y(0, static_cast<Eigen::Index>(i)), expected, 1e-12) << "t=" << p.t[i];
        EXPECT_EQ(p.x(0, static_cast<Eigen::Index>(i)), 1.0);
    }
}

TEST(Side, ImpulseNoiseHasPrescribedVariance) {
    GeneralSiDE s = clock_side();
    s.f_tilde = [](const Vec&, const Vec&, double) { return Vec::Zero(1); };
    s.r = 1;
    s.jump_noise = [](const Segment& seg, std::size_t) { return Mat(0.7 * seg.x.back()); };
    const SimConfig c = config(0.01, 0.1, "periodic:0.1");
    const int paths = 100000;
    double s1 = 0.0;
    double s2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        const double y = simulate_side(s, c, static_cast<std::size_t>(p)).y(0, 0 + 10);
        s1 += y;
        s2 += y * y;
    }
    const double var = s2 / paths - (s1 / paths) * (s1 / paths);
    EXPECT_NEAR(var, 0.49, 3.0 * 0.49 * std::sqrt(2.0 / paths));
}

TEST(Side, CallbackFailureCarriesTime) {
    GeneralSiDE s = clock_side();
    s.f = [](const Vec&, const Vec&, double t) -> Vec {
        if (t > 0.5) {
            throw std::runtime_error("boom");
        }
        return Vec::Zero(1);
    };
    try {
        (void)simulate_side(s, config(0.01, 1.0, "periodic:0.25"));
        FAIL() << "expected CallbackError";
    } catch (const CallbackError& e) {
        EXPECT_NEAR(e.time(), 0.51, 1e-9);
    }
}

TEST(Ensemble, SinglePathEqualsDirectSimulation) {
    const Model model = load_model(kData + "/models/ex1_sub2_closed.json");
    const SimConfig c = config(2e-3, 1.0, "periodic:0.0234", 1, 7);
    const TrajectoryEnsemble e = run_ensemble(model, c);
    EXPECT_EQ(e.paths[0], simulate_sampled_path(model, c, 0).x);
}

TEST(Ensemble, DeterministicAcrossRunsAndWorkerCounts) {
    const Model model = load_model(kData + "/models/ex1_sub1_closed.json");
    SimConfig c = config(1e-3, 1.0, "uniform:0.01,0.03", 23, 11);
    c.workers = 1;
    const TrajectoryEnsemble a = run_ensemble(model, c);
    c.workers = 4;
    const TrajectoryEnsemble b = run_ensemble(model, c);
    const TrajectoryEnsemble again = run_ensemble(model, c);
    ASSERT_EQ(a.paths.size(), 23U);
    EXPECT_EQ(a.time, b.time);
    EXPECT_EQ(a.instants, b.instants);
    for (std::size_t p = 0; p < a.paths.size(); ++p) {
        EXPECT_EQ(a.paths[p], b.paths[p]);
        EXPECT_EQ(b.paths[p], again.paths[p]);
    }
    std::ostringstream sa;
    std::ostringstream sb;
    write_trajectory_csv(a, sa);
    write_trajectory_csv(b, sb);
    EXPECT_EQ(sa.str(), sb.str());
    c.seed = 12;
    EXPECT_NE(run_ensemble(model, c).paths[0], a.paths[0]);
}

TEST(Ensemble, CsvLayout) {
    SimConfig c = config(0.01, 0.5, "periodic:0.1", 2);
    c.store_stride = 10;
    const TrajectoryEnsemble e = run_ensemble(decaying_pair(), c);
    std::ostringstream traj;
    std::ostringstream stats;
    write_trajectory_csv(e, traj);
    write_stats_csv(e, stats);
    const std::string t = traj.str();
    const std::string s = stats.str();
    EXPECT_EQ(t.substr(0, t.find('\n')), "t,path,x1,x2");
    EXPECT_EQ(s.substr(0, s.find('\n')), "t,mean_sq_norm,n_alive");
    EXPECT_EQ(e.time.size(), 6U);
    EXPECT_EQ(static_cast<std::size_t>(std::count(t.begin(), t.end(), '\n')), 1 + 2 * 6U);
    EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), 1 + 6U);
}

TEST(Estimators, DeterministicDecayRate) {
    SimConfig c = config(1e-3, 5.0, "periodic:0.1", 3);
    c.store_stride = 10;
    const LinearSampledModel m = scalar(-1.0, 0.0, 0.0, 2.0);
    const TrajectoryEnsemble e = run_ensemble(m, c);
    const DecayEstimate d = estimate_ms_decay(e);
    EXPECT_NEAR(d.rate, -2.0, 0.1);
    EXPECT_GT(d.r_squared, 0.999);
    EXPECT_TRUE(d.decay_confirmed());
    EXPECT_DOUBLE_EQ(d.window_lo, 1.0);
    const ExponentSummary x = estimate_as_exponent(e);
    EXPECT_NEAR(x.median, (std::log(2.0) + 5.0 * std::log1p(-1e-3) / 1e-3) / 5.0, 1e-9);
    EXPECT_THROW((void)estimate_ms_decay(e, std::make_pair(4.99, 5.0)), DomainError);
}

TEST(Estimators, ZeroEnsembleIsDegenerate) {
    const TrajectoryEnsemble e = run_ensemble(scalar(-1.0, 0.5, 0.0, 0.0), config(1e-3, 1.0, "periodic:0.1", 4));
    EXPECT_THROW((void)estimate_ms_decay(e), DegenerateEnsemble);
    EXPECT_THROW((void)estimate_as_exponent(e), DegenerateEnsemble);
}

TEST(Estimators, ZeroPathsAreExcludedFromMedian) {
    TrajectoryEnsemble e = run_ensemble(scalar(-1.0, 0.0, 0.0, 1.0), config(1e-3, 1.0, "periodic:0.1", 3));
    e.paths[1].setZero();
    const ExponentSummary x = estimate_as_exponent(e);
    EXPECT_EQ(x.exponents[1], -std::numeric_limits<double>::infinity());
    EXPECT_EQ(x.finite_count, 2U);
    EXPECT_NEAR(x.median, std::log1p(-1e-3) / 1e-3, 1e-9);
}

TEST(Estimators, GeometricBrownianSecondMomentRate) {
    SimConfig c = config(1e-4, 0.3, "periodic:0.1", 10000, 2024);
    c.store_stride = 30;
    const TrajectoryEnsemble e = run_ensemble(scalar(1.0, 2.0, 0.0, 1.0), c);
    const DecayEstimate d = estimate_ms_decay(e);
    EXPECT_NEAR(d.rate, 6.0, 0.6);
}

TEST(Estimators, GeometricBrownianAlmostSureExponent) {
    SimConfig c = config(2e-3, 5.0, "periodic:0.1", 10000, 2025);
    c.store_stride = 500;
    const TrajectoryEnsemble e = run_ensemble(scalar(1.0, 2.0, 0.0, 1.0), c);
    const ExponentSummary x = estimate_as_exponent(e);
    EXPECT_NEAR(x.median, -1.0, 0.1);
    EXPECT_EQ(x.finite_count, 10000U);
}

TEST(Estimators, EulerWeakErrorHalvesWithStep) {
    const double exact = std::exp(-2.0);
    std::vector<double> err;
    for (const double dt : {0.1, 0.05, 0.025, 0.0125}) {
        SimConfig c = config(dt, 1.0, "periodic:1", 100000, 99);
        c.store_stride = 1000000;
        const TrajectoryEnsemble e = run_ensemble(scalar(-2.0, 0.1, 0.0, 1.0), c);
        double s = 0.0;
        for (const Mat& p : e.paths) {
            s += p(0, p.cols() - 1);
        }
        err.push_back(std::abs(s / static_cast<double>(e.paths.size()) - exact));
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        const double ratio = err[i] / err[i + 1];
        EXPECT_GT(ratio, 2.0 * 0.7) << "dt index " << i;
        EXPECT_LT(ratio, 2.0 * 1.3) << "dt index " << i;
    }
}

TEST(Estimators, ReferenceClosedLoopDecaysInMeanSquare) {
    for (const char* f : {"ex1_sub1_closed.json", "ex1_sub2_closed.json"}) {
        const Model model = load_model(kData + "/models/" + f);
        SimConfig c = config(2e-3, 5.0, "periodic:0.0234", 200, 7);
        c.store_stride = 10;
        const TrajectoryEnsemble e = run_ensemble(model, c);
        const DecayEstimate d = estimate_ms_decay(e);
        EXPECT_LT(d.rate, 0.0) << f;
        EXPECT_GE(d.r_squared, 0.9) << f;
        EXPECT_EQ(e.diverged_count(), 0U);
    }
}

TEST(Estimators, PlanarLoopSettles) {
    const Model model = load_model(kData + "/models/ex2_planar.json");
    const SamplePath p = simulate_sampled_path(model, config(1e-3, 5.0, "periodic:0.0174"), 0);
    EXPECT_LT(p.x.col(p.x.cols() - 1).norm(), 1e-2);
}

} // namespace
} // namespace sdcert
