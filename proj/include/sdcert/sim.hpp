#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "sdcert/models.hpp"

namespace sdcert {

struct SimConfig {
    double dt_sim = 1e-3;
    double horizon = 5.0;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;
    SamplingSchedule schedule = SamplingSchedule::periodic(0.1);
    std::size_t store_stride = 1;
    /// Threads used by run_ensemble; 0 picks the hardware concurrency. Never affects results.
    unsigned workers = 0;

    /// Requires dt_sim ≤ underline_dt/10; throws ValidationError naming the field.
    void validate() const;
};

/// Instants shared by every path of an ensemble: t₀ = 0, then the schedule's instants up to the
/// horizon. Random schedules draw from a stream reserved for the schedule.
std::vector<double> ensemble_instants(const SimConfig& cfg);

/// EM grid: substeps of dt_sim, shortened to land on every instant and on the horizon.
std::vector<double> em_grid(const std::vector<double>& instants, double dt_sim, double horizon);

struct SamplePath {
    std::vector<double> t;
    /// n × t.size(); column i is the state at t[i].
    Mat x;
    bool diverged = false;
    /// Time of the first non-finite state; stored points from then on are NaN.
    std::optional<double> diverged_at;
};

/// dx = [f̄(x) + B̄x(t_k)]dt + Σ G_j x dB_j with x(t_k) refreshed at every instant.
SamplePath simulate_sampled_path(const Model& model, const SimConfig& cfg, std::size_t path_index);

/// X_k = X_{k−1} + F X_{k−1} h + Σ G_j X_{k−1} ΔB_{j,k} with ΔB ~ N(0, h).
std::vector<Vec> simulate_em_discrete(const Mat& F, const std::vector<Mat>& G, double h, std::size_t n_steps,
                                      const Vec& x0, std::uint64_t seed);

struct SidePath {
    std::vector<double> t;
    /// Columns follow t; y is the right-continuous value.
    Mat x;
    Mat y;
    bool diverged = false;
    /// Impulse instants (excluding t₀) with y(t_k⁻).
    std::vector<double> jump_times;
    std::vector<Vec> y_minus;
};

/// The general SiDE on the EM grid. Jump maps receive the full-resolution segment since the
/// previous impulse. Shares the Brownian stream of simulate_sampled_path for the same path index.
SidePath simulate_side(const GeneralSiDE& side, const SimConfig& cfg, std::size_t path_index = 0);

struct TrajectoryEnsemble {
    std::size_t n = 0;
    std::vector<double> time;
    /// paths[p] is n × time.size(); column i is the state of path p at time[i].
    std::vector<Mat> paths;
    std::vector<double> instants;
    std::vector<bool> diverged;
    std::vector<double> terminal_norm;

    [[nodiscard]] std::size_t diverged_count() const;
};

TrajectoryEnsemble run_ensemble(const Model& model, const SimConfig& cfg);

struct DecayEstimate {
    double rate = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    std::size_t points = 0;

    [[nodiscard]] bool decay_confirmed() const { return rate < 0.0 && r_squared >= 0.9; }
};

/// Ê|x(t)|² over non-diverged paths at each stored time.
std::vector<double> mean_square_norm(const TrajectoryEnsemble& ens);

/// Least-squares fit of ln Ê|x(t)|² on the window; default [0.2·T, T].
DecayEstimate estimate_ms_decay(const TrajectoryEnsemble& ens, std::optional<std::pair<double, double>> window = {});

struct ExponentSummary {
    double t = 0.0;
    /// (1/t) ln|x(t)| per path; −∞ at exact zero, NaN for diverged paths.
    std::vector<double> exponents;
    double median = 0.0;
    double max = 0.0;
    std::size_t finite_count = 0;
};

/// Exponents at the last stored time not after t_end (default: the horizon).
ExponentSummary estimate_as_exponent(const TrajectoryEnsemble& ens, std::optional<double> t_end = {});

/// "t,path,x1..xn", one row per stored point.
void write_trajectory_csv(const TrajectoryEnsemble& ens, std::ostream& os);

/// "t,mean_sq_norm,n_alive".
void write_stats_csv(const TrajectoryEnsemble& ens, std::ostream& os);

} // namespace sdcert
