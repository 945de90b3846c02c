#include "sdcert/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "callback_guard.hpp"
#include "sdcert/errors.hpp"

namespace sdcert {

using nlohmann::json;

namespace {

std::string dims(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ValidationError(field, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " + dims(m));
    }
}

double json_number(const json& j, const std::string& field) {
    if (!j.is_number()) {
        throw FormatError(field + ": expected a number");
    }
    return j.get<double>();
}

} // namespace

Mat json_to_matrix(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) {
        throw FormatError(field + ": expected a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Mat out;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        const std::string rf = field + "[" + std::to_string(i) + "]";
        if (!row.is_array() || row.empty()) {
            throw FormatError(rf + ": expected a non-empty array");
        }
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(row.size());
            out.resize(rows, cols);
        } else if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw FormatError(rf + ": ragged row");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(i, c) = json_number(row[static_cast<std::size_t>(c)], rf + "[" + std::to_string(c) + "]");
        }
    }
    return out;
}

Vec json_to_vector(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) {
        throw FormatError(field + ": expected a non-empty array");
    }
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = json_number(j[i], field + "[" + std::to_string(i) + "]");
    }
    return v;
}

json matrix_to_json(const Mat& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(i, c));
        }
        out.push_back(std::move(row));
    }
    return out;
}

json vector_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// LinearSampledModel

Mat LinearSampledModel::closed_feedback() const {
    if (B_bar) {
        return *B_bar;
    }
    if (B_hat && K_hat) {
        return *B_hat * *K_hat;
    }
    throw ValidationError("K_hat", "feedback gain is not resolved");
}

LinearSampledModel LinearSampledModel::with_gain(const Mat& k) const {
    if (!B_hat) {
        throw ValidationError("B_hat", "model has no input channel");
    }
    LinearSampledModel out = *this;
    out.K_hat = k;
    out.validate();
    return out;
}

void LinearSampledModel::validate() const {
    const Eigen::Index n = A.rows();
    if (n < 1 || A.cols() != n) {
        throw ValidationError("A", "must be square and non-empty, got " + dims(A));
    }
    if (!A.allFinite()) {
        throw ValidationError("A", "non-finite entry");
    }
    for (std::size_t j = 0; j < diffusion.size(); ++j) {
        const std::string field = "diffusion[" + std::to_string(j) + "]";
        require_shape(diffusion[j], n, n, field);
        if (!diffusion[j].allFinite()) {
            throw ValidationError(field, "non-finite entry");
        }
    }
    if (B_bar.has_value() == B_hat.has_value()) {
        throw ValidationError("B_bar", "exactly one of B_bar or B_hat is required");
    }
    if (K_hat && !B_hat) {
        throw ValidationError("K_hat", "requires B_hat");
    }
    if (B_bar) {
        require_shape(*B_bar, n, n, "B_bar");
    }
    if (B_hat) {
        if (B_hat->rows() != n || B_hat->cols() < 1) {
            throw ValidationError("B_hat", "expected " + std::to_string(n) + " rows, got " + dims(*B_hat));
        }
        if (K_hat) {
            require_shape(*K_hat, B_hat->cols(), n, "K_hat");
        }
    }
    if (x0 && x0->size() != n) {
        throw ValidationError("x0", "expected length " + std::to_string(n));
    }
}

// ---------------------------------------------------------------------------
// NonlinearPlanarModel

Mat NonlinearPlanarModel::default_A_bar() { return (Mat(2, 2) << 0.25, 1.0, 0.0, 0.0).finished(); }
Mat NonlinearPlanarModel::default_B_hat() { return (Mat(2, 1) << 0.0, 1.0).finished(); }
Mat NonlinearPlanarModel::envelope() { return (Mat(2, 2) << 0.25, 0.0, 1.0, 0.0).finished(); }

Vec NonlinearPlanarModel::phi(const Vec& x) const {
    if (!K_hat) {
        throw ValidationError("K_hat", "feedback gain is not resolved");
    }
    const double u = (*K_hat * x)(0);
    const double s = x(0) * std::sin(u * x(1));
    Vec out(2);
    out << 0.25 * s, s;
    return out;
}

Mat NonlinearPlanarModel::closed_feedback() const {
    if (!K_hat) {
        throw ValidationError("K_hat", "feedback gain is not resolved");
    }
    return B_hat * *K_hat;
}

void NonlinearPlanarModel::validate() const {
    require_shape(A_bar, 2, 2, "A");
    require_shape(B_hat, 2, 1, "B_hat");
    if (K_hat) {
        require_shape(*K_hat, 1, 2, "K_hat");
    }
    if (x0 && x0->size() != 2) {
        throw ValidationError("x0", "expected length 2");
    }
}

// ---------------------------------------------------------------------------
// File format

Model parse_model(const json& doc) {
    static const std::set<std::string> known{"name", "n", "A", "diffusion", "B_bar", "B_hat", "K_hat", "nonlinearity", "x0"};
    if (!doc.is_object()) {
        throw FormatError("model: expected a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) {
            throw FormatError("model: unknown key '" + key + "'");
        }
    }
    for (const char* key : {"n", "A"}) {
        if (!doc.contains(key)) {
            throw FormatError(std::string("model: missing key '") + key + "'");
        }
    }
    if (!doc["n"].is_number_integer()) {
        throw FormatError("n: expected an integer");
    }
    const auto n = doc["n"].get<long long>();
    const std::string name = doc.contains("name") ? doc["name"].get<std::string>() : std::string{};

    Mat A = json_to_matrix(doc["A"], "A");
    if (A.rows() != n) {
        throw ValidationError("A", "does not match n = " + std::to_string(n));
    }
    std::vector<Mat> diffusion;
    if (doc.contains("diffusion")) {
        if (!doc["diffusion"].is_array()) {
            throw FormatError("diffusion: expected an array of matrices");
        }
        for (std::size_t j = 0; j < doc["diffusion"].size(); ++j) {
            diffusion.push_back(json_to_matrix(doc["diffusion"][j], "diffusion[" + std::to_string(j) + "]"));
        }
    }
    std::optional<Vec> x0;
    if (doc.contains("x0")) {
        x0 = json_to_vector(doc["x0"], "x0");
    }

    if (doc.contains("nonlinearity")) {
        const json& nl = doc["nonlinearity"];
        if (!nl.is_object() || !nl.contains("type") || nl.size() != 1 || nl["type"] != "planar_sin") {
            throw FormatError("nonlinearity: expected {\"type\": \"planar_sin\"}");
        }
        if (doc.contains("B_bar")) {
            throw ValidationError("B_bar", "planar model takes B_hat and K_hat");
        }
        if (!diffusion.empty()) {
            throw ValidationError("diffusion", "planar model is deterministic");
        }
        NonlinearPlanarModel model;
        model.name = name;
        model.A_bar = A;
        if (doc.contains("B_hat")) {
            model.B_hat = json_to_matrix(doc["B_hat"], "B_hat");
        }
        if (doc.contains("K_hat")) {
            model.K_hat = json_to_matrix(doc["K_hat"], "K_hat");
        }
        model.x0 = x0;
        model.validate();
        return model;
    }

    LinearSampledModel model;
    model.name = name;
    model.A = std::move(A);
    model.diffusion = std::move(diffusion);
    if (doc.contains("B_bar")) {
        model.B_bar = json_to_matrix(doc["B_bar"], "B_bar");
    }
    if (doc.contains("B_hat")) {
        model.B_hat = json_to_matrix(doc["B_hat"], "B_hat");
    }
    if (doc.contains("K_hat")) {
        model.K_hat = json_to_matrix(doc["K_hat"], "K_hat");
    }
    model.x0 = x0;
    model.validate();
    return model;
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open model file '" + path + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    try {
        return parse_model(doc);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

json model_to_json(const Model& model) {
    json doc;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            doc["name"] = m.name;
            if constexpr (std::is_same_v<T, LinearSampledModel>) {
                doc["n"] = m.n();
                doc["A"] = matrix_to_json(m.A);
                doc["diffusion"] = json::array();
                for (const Mat& g : m.diffusion) {
                    doc["diffusion"].push_back(matrix_to_json(g));
                }
                if (m.B_bar) {
                    doc["B_bar"] = matrix_to_json(*m.B_bar);
                }
                if (m.B_hat) {
                    doc["B_hat"] = matrix_to_json(*m.B_hat);
                }
            } else {
                doc["n"] = 2;
                doc["A"] = matrix_to_json(m.A_bar);
                doc["diffusion"] = json::array();
                doc["B_hat"] = matrix_to_json(m.B_hat);
                doc["nonlinearity"] = {{"type", "planar_sin"}};
            }
            if (m.K_hat) {
                doc["K_hat"] = matrix_to_json(*m.K_hat);
            }
            if (m.x0) {
                doc["x0"] = vector_to_json(*m.x0);
            }
        },
        model);
    return doc;
}

std::string serialize_model(const Model& model) { return model_to_json(model).dump(2); }

std::string model_name(const Model& model) {
    return std::visit([](const auto& m) { return m.name; }, model);
}

// ---------------------------------------------------------------------------
// Sampling schedules

SamplingSchedule SamplingSchedule::periodic(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ValidationError("schedule", "period must be positive");
    }
    return {Kind::periodic, dt, dt, {}};
}

SamplingSchedule SamplingSchedule::uniform_random(double lo, double hi) {
    if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
        throw ValidationError("schedule", "uniform bounds must satisfy 0 < lo <= hi");
    }
    return {Kind::uniform_random, lo, hi, {}};
}

SamplingSchedule SamplingSchedule::explicit_instants(std::vector<double> instants) {
    if (!instants.empty() && instants.front() == 0.0) {
        instants.erase(instants.begin());
    }
    if (instants.empty()) {
        throw ValidationError("schedule", "explicit schedule needs at least one instant after 0");
    }
    double prev = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (double t : instants) {
        if (!(t > prev) || !std::isfinite(t)) {
            throw ValidationError("schedule", "explicit instants must be strictly increasing from 0");
        }
        lo = std::min(lo, t - prev);
        hi = std::max(hi, t - prev);
        prev = t;
    }
    return {Kind::explicit_list, lo, hi, std::move(instants)};
}

SamplingSchedule SamplingSchedule::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw FormatError("schedule: expected KIND:VALUES, got '" + text + "'");
    }
    const std::string kind = text.substr(0, colon);
    std::vector<double> values;
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw FormatError("schedule: bad number '" + item + "'");
            }
        } catch (const std::logic_error&) {
            throw FormatError("schedule: bad number '" + item + "'");
        }
    }
    if (kind == "periodic" && values.size() == 1) {
        return periodic(values[0]);
    }
    if (kind == "uniform" && values.size() == 2) {
        return uniform_random(values[0], values[1]);
    }
    if (kind == "explicit" && !values.empty()) {
        return explicit_instants(values);
    }
    throw FormatError("schedule: unrecognized '" + text + "'");
}

std::string SamplingSchedule::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
    case Kind::periodic:
        os << "periodic:" << lo_;
        break;
    case Kind::uniform_random:
        os << "uniform:" << lo_ << "," << hi_;
        break;
    case Kind::explicit_list:
        os << "explicit:";
        for (std::size_t i = 0; i < instants_.size(); ++i) {
            os << (i ? "," : "") << instants_[i];
        }
        break;
    }
    return os.str();
}

std::vector<double> schedule_instants(const SamplingSchedule& schedule, double horizon, std::mt19937_64& rng) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw DomainError("schedule_instants: horizon must be positive");
    }
    constexpr double slack = 1e-12;
    std::vector<double> out{0.0};
    switch (schedule.kind()) {
    case SamplingSchedule::Kind::periodic: {
        const double dt = schedule.underline_dt();
        for (std::size_t k = 1;; ++k) {
            const double t = static_cast<double>(k) * dt;
            if (t > horizon + slack) {
                break;
            }
            out.push_back(t);
        }
        break;
    }
    case SamplingSchedule::Kind::uniform_random: {
        std::uniform_real_distribution<double> gap(schedule.underline_dt(), schedule.overline_dt());
        double t = 0.0;
        while (true) {
            t += schedule.underline_dt() == schedule.overline_dt() ? schedule.underline_dt() : gap(rng);
            if (t > horizon + slack) {
                break;
            }
            out.push_back(t);
        }
        break;
    }
    case SamplingSchedule::Kind::explicit_list: {
        for (double t : schedule.instants()) {
            if (t > horizon + slack) {
                break;
            }
            out.push_back(t);
        }
        if (out.back() + schedule.overline_dt() < horizon) {
            throw DomainError("schedule_instants: explicit schedule ends before the horizon");
        }
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CPS form and simulation views

CpsForm to_cps_form(const LinearSampledModel& model) {
    model.validate();
    const Mat bbar = model.closed_feedback();
    const Mat a = model.A;
    const std::vector<Mat> gs = model.diffusion;
    const auto n = static_cast<Eigen::Index>(model.n());

    CpsForm cps;
    cps.n = model.n();
    cps.m = model.m();
    cps.physical_drift = [a, bbar](const Vec& x, const Vec& y) -> Vec { return a * x + bbar * (x - y); };
    cps.cyber_drift = cps.physical_drift;
    cps.diffusion = [gs, n](const Vec& x) -> Mat {
        Mat out(n, static_cast<Eigen::Index>(gs.size()));
        for (std::size_t j = 0; j < gs.size(); ++j) {
            out.col(static_cast<Eigen::Index>(j)) = gs[j] * x;
        }
        return out;
    };
    cps.jump = [](const Vec& y_minus) -> Vec { return -y_minus; };
    cps.x0 = model.x0.value_or(Vec::Zero(n));
    cps.y0 = Vec::Zero(n);
    return cps;
}

SampledLoop make_loop(const Model& model) {
    return std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            m.validate();
            SampledLoop loop;
            if constexpr (std::is_same_v<T, LinearSampledModel>) {
                loop.n = m.n();
                const Mat a = m.A;
                loop.drift = [a](const Vec& x) -> Vec { return a * x; };
                loop.B_bar = m.closed_feedback();
                loop.diffusion = m.diffusion;
            } else {
                loop.n = 2;
                loop.B_bar = m.closed_feedback();
                loop.drift = [m](const Vec& x) -> Vec { return m.A_bar * x + m.phi(x); };
            }
            loop.x0 = m.x0.value_or(Vec::Zero(static_cast<Eigen::Index>(loop.n)));
            return loop;
        },
        model);
}

// ---------------------------------------------------------------------------
// General SiDE

void GeneralSiDE::validate() const {
    const auto ni = static_cast<Eigen::Index>(n);
    const auto qi = static_cast<Eigen::Index>(q);
    const auto mi = static_cast<Eigen::Index>(m);
    const Vec zx = Vec::Zero(ni);
    const Vec zy = Vec::Zero(qi);
    constexpr double eps = 1e-12;

    auto check = [&](const Mat& v, Eigen::Index rows, Eigen::Index cols, const char* field) {
        if (v.rows() != rows || v.cols() != cols) {
            throw ValidationError(field, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " + dims(v));
        }
        if (v.size() > 0 && v.cwiseAbs().maxCoeff() > eps) {
            throw ValidationError(field, "does not vanish at the origin");
        }
    };
    check(detail::guarded(0.0, "f", f, zx, zy, 0.0), ni, 1, "f");
    check(detail::guarded(0.0, "g", g, zx, zy, 0.0), ni, mi, "g");
    check(detail::guarded(0.0, "f_tilde", f_tilde, zx, zy, 0.0), qi, 1, "f_tilde");
    check(detail::guarded(0.0, "g_tilde", g_tilde, zx, zy, 0.0), qi, mi, "g_tilde");
    Segment seg{{0.0}, {zx}, {zy}};
    check(detail::guarded(0.0, "jump_drift", jump_drift, seg, std::size_t{1}), qi, 1, "jump_drift");
    if (r > 0) {
        check(detail::guarded(0.0, "jump_noise", jump_noise, seg, std::size_t{1}), qi, static_cast<Eigen::Index>(r), "jump_noise");
    }
    if (x0.size() != ni || y0.size() != qi) {
        throw ValidationError("x0", "initial state dimensions do not match");
    }
}

GeneralSiDE sampled_data_side(const SampledLoop& loop) {
    GeneralSiDE side;
    side.n = loop.n;
    side.q = loop.n;
    side.m = loop.diffusion.size();
    const auto drift = loop.drift;
    const Mat bbar = loop.B_bar;
    const std::vector<Mat> gs = loop.diffusion;
    const auto n = static_cast<Eigen::Index>(loop.n);
    side.f = [drift, bbar](const Vec& x, const Vec& y, double) -> Vec { return drift(x) + bbar * (x - y); };
    side.f_tilde = side.f;
    side.g = [gs, n](const Vec& x, const Vec&, double) -> Mat {
        Mat out(n, static_cast<Eigen::Index>(gs.size()));
        for (std::size_t j = 0; j < gs.size(); ++j) {
            out.col(static_cast<Eigen::Index>(j)) = gs[j] * x;
        }
        return out;
    };
    side.g_tilde = side.g;
    side.jump_drift = [](const Segment& seg, std::size_t) -> Vec { return -seg.y.back(); };
    side.x0 = loop.x0;
    side.y0 = Vec::Zero(n);
    return side;
}

AssumptionReport assumption_check(const GeneralSiDE& side, const AssumptionCheckOptions& options) {
    if (options.grid < 2 || !(options.box_hi > options.box_lo)) {
        throw DomainError("assumption_check: grid needs at least 2 points on a non-empty box");
    }
    const std::size_t dim = side.n + side.q;
    const auto ni = static_cast<Eigen::Index>(side.n);
    const auto qi = static_cast<Eigen::Index>(side.q);

    std::size_t total = 1;
    for (std::size_t d = 0; d < dim; ++d) {
        total *= options.grid;
    }
    const double step = (options.box_hi - options.box_lo) / static_cast<double>(options.grid - 1);

    auto point = [&](std::size_t index) {
        Vec z(static_cast<Eigen::Index>(dim));
        for (std::size_t d = 0; d < dim; ++d) {
            z(static_cast<Eigen::Index>(d)) = options.box_lo + step * static_cast<double>(index % options.grid);
            index /= options.grid;
        }
        return z;
    };
    // Stacked drift and diffusion of both blocks at z = (x, y).
    auto field = [&](const Vec& z) {
        const Vec x = z.head(ni);
        const Vec y = z.tail(qi);
        const Vec fx = detail::guarded(0.0, "f", side.f, x, y, 0.0);
        const Vec fy = detail::guarded(0.0, "f_tilde", side.f_tilde, x, y, 0.0);
        const Mat gx = detail::guarded(0.0, "g", side.g, x, y, 0.0);
        const Mat gy = detail::guarded(0.0, "g_tilde", side.g_tilde, x, y, 0.0);
        Vec out(fx.size() + fy.size() + gx.size() + gy.size());
        out << fx, fy, gx.reshaped(), gy.reshaped();
        return out;
    };

    AssumptionReport report;
    report.samples = total;
    std::size_t stride = 1;
    std::vector<std::size_t> strides;
    for (std::size_t d = 0; d < dim; ++d) {
        strides.push_back(stride);
        stride *= options.grid;
    }
    for (std::size_t i = 0; i < total; ++i) {
        const Vec z = point(i);
        const Vec fz = field(z);
        if (z.norm() > 0.0) {
            report.growth_ratio = std::max(report.growth_ratio, fz.norm() / z.norm());
        }
        for (std::size_t d = 0; d < dim; ++d) {
            if ((i / strides[d]) % options.grid + 1 < options.grid) {
                const Vec w = point(i + strides[d]);
                report.lipschitz_ratio = std::max(report.lipschitz_ratio, (field(w) - fz).norm() / (w - z).norm());
            }
        }
    }
    if (options.growth_bound && report.growth_ratio > *options.growth_bound) {
        report.violations.push_back("growth ratio " + std::to_string(report.growth_ratio) + " exceeds " +
                                    std::to_string(*options.growth_bound));
    }
    if (options.lipschitz_bound && report.lipschitz_ratio > *options.lipschitz_bound) {
        report.violations.push_back("Lipschitz ratio " + std::to_string(report.lipschitz_ratio) + " exceeds " +
                                    std::to_string(*options.lipschitz_bound));
    }
    return report;
}

} // namespace sdcert
