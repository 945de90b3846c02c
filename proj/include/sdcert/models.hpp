#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sdcert/numerics.hpp"

namespace sdcert {

/// Linear plant dx = [A x + B̄ x(t_*)] dt + Σ G_j x dB_j with a sampled, held feedback.
/// The feedback is either given directly (B̄) or as B̂ with an optional gain K̂.
struct LinearSampledModel {
    std::string name;
    Mat A;
    std::vector<Mat> diffusion;
    std::optional<Mat> B_bar;
    std::optional<Mat> B_hat;
    std::optional<Mat> K_hat;
    std::optional<Vec> x0;

    [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(A.rows()); }
    [[nodiscard]] std::size_t m() const { return diffusion.size(); }

    /// B̂ given without K̂: the gain is to be synthesized.
    [[nodiscard]] bool design_mode() const { return B_hat.has_value() && !K_hat.has_value(); }

    /// B̄, or B̂K̂. Throws ValidationError when the gain is unresolved.
    [[nodiscard]] Mat closed_feedback() const;

    [[nodiscard]] LinearSampledModel with_gain(const Mat& k) const;

    /// Throws ValidationError naming the first offending field.
    void validate() const;
};

/// Planar plant ẋ = Āx + φ(x) + B̂u with φ(x) = [¼ x₁ sin(K̂x·x₂); x₁ sin(K̂x·x₂)].
struct NonlinearPlanarModel {
    std::string name;
    Mat A_bar = default_A_bar();
    Mat B_hat = default_B_hat();
    std::optional<Mat> K_hat;
    std::optional<Vec> x0;

    static Mat default_A_bar();
    static Mat default_B_hat();
    /// Envelope E₁ with φᵀQφ ≤ xᵀE₁ᵀQE₁x for every Q ≻ 0.
    static Mat envelope();

    [[nodiscard]] Vec phi(const Vec& x) const;
    [[nodiscard]] Mat closed_feedback() const;
    void validate() const;
};

using Model = std::variant<LinearSampledModel, NonlinearPlanarModel>;

Model parse_model(const nlohmann::json& doc);
Model load_model(const std::string& path);
nlohmann::json model_to_json(const Model& model);
std::string serialize_model(const Model& model);
[[nodiscard]] std::string model_name(const Model& model);

// JSON helpers shared with the certificate and report readers.
Mat json_to_matrix(const nlohmann::json& j, const std::string& field);
Vec json_to_vector(const nlohmann::json& j, const std::string& field);
nlohmann::json matrix_to_json(const Mat& m);
nlohmann::json vector_to_json(const Vec& v);

class SamplingSchedule {
public:
    enum class Kind { periodic, uniform_random, explicit_list };

    static SamplingSchedule periodic(double dt);
    static SamplingSchedule uniform_random(double lo, double hi);
    /// Instants after t₀ = 0; a leading 0 is accepted and dropped.
    static SamplingSchedule explicit_instants(std::vector<double> instants);
    /// "periodic:DT", "uniform:LO,HI" or "explicit:T1,T2,...".
    static SamplingSchedule parse(const std::string& text);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] double underline_dt() const noexcept { return lo_; }
    [[nodiscard]] double overline_dt() const noexcept { return hi_; }
    [[nodiscard]] const std::vector<double>& instants() const noexcept { return instants_; }
    [[nodiscard]] std::string describe() const;

private:
    SamplingSchedule(Kind kind, double lo, double hi, std::vector<double> instants)
        : kind_(kind), lo_(lo), hi_(hi), instants_(std::move(instants)) {}

    Kind kind_;
    double lo_;
    double hi_;
    std::vector<double> instants_;
};

/// t₀ = 0 followed by every sampling instant in (0, horizon].
std::vector<double> schedule_instants(const SamplingSchedule& schedule, double horizon, std::mt19937_64& rng);

/// Canonical physical/cyber split with y = x − x(t_*).
struct CpsForm {
    std::size_t n = 0;
    std::size_t m = 0;
    std::function<Vec(const Vec& x, const Vec& y)> physical_drift;
    std::function<Vec(const Vec& x, const Vec& y)> cyber_drift;
    /// n×m; column j multiplies dB_j. Shared by both blocks.
    std::function<Mat(const Vec& x)> diffusion;
    /// Increment applied to y at an impulse, given y(t_k⁻).
    std::function<Vec(const Vec& y_minus)> jump;
    Vec x0;
    Vec y0;
};

CpsForm to_cps_form(const LinearSampledModel& model);

/// Closed loop ready for simulation: dx = [f̄(x) + B̄x(t_*)]dt + Σ G_j x dB_j.
struct SampledLoop {
    std::size_t n = 0;
    std::function<Vec(const Vec& x)> drift;
    Mat B_bar;
    std::vector<Mat> diffusion;
    Vec x0;
};

SampledLoop make_loop(const Model& model);

/// Recorded grid between two impulses; the last entry is the left limit at the impulse.
struct Segment {
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<Vec> y;
};

/// dx = f dt + g dB, dy = f̃ dt + g̃ dB, Δy(t_k) = h̃_f(segment) + h̄_g(segment) ξ̄(k).
struct GeneralSiDE {
    std::size_t n = 0;
    std::size_t q = 0;
    std::size_t m = 0;
    /// Dimension of the impulse noise ξ̄(k); 0 disables it.
    std::size_t r = 0;
    std::function<Vec(const Vec& x, const Vec& y, double t)> f;
    std::function<Mat(const Vec& x, const Vec& y, double t)> g;
    std::function<Vec(const Vec& x, const Vec& y, double t)> f_tilde;
    std::function<Mat(const Vec& x, const Vec& y, double t)> g_tilde;
    std::function<Vec(const Segment& segment, std::size_t k)> jump_drift;
    std::function<Mat(const Segment& segment, std::size_t k)> jump_noise;
    Vec x0;
    Vec y0;

    /// Checks callback shapes and that every callback vanishes at the origin.
    void validate() const;
};

/// The sampled-data loop as a SiDE on (x, y): y resets to 0 at every impulse.
GeneralSiDE sampled_data_side(const SampledLoop& loop);

struct AssumptionCheckOptions {
    double box_lo = -1.0;
    double box_hi = 1.0;
    std::size_t grid = 7;
    std::optional<double> growth_bound;
    std::optional<double> lipschitz_bound;
};

/// Sampled estimates only: a grid can expose a violation but never prove the assumptions.
struct AssumptionReport {
    bool heuristic = true;
    std::size_t samples = 0;
    double growth_ratio = 0.0;
    double lipschitz_ratio = 0.0;
    std::vector<std::string> violations;
};

AssumptionReport assumption_check(const GeneralSiDE& side, const AssumptionCheckOptions& options);

} // namespace sdcert
