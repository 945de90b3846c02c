#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sdcert/design.hpp"
#include "sdcert/errors.hpp"
#include "sdcert/sim.hpp"

#ifndef SDCERT_VERSION
#define SDCERT_VERSION "0.0.0"
#endif

namespace sdcert::cli {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write " + path);
    }
    out << text;
}

std::vector<double> parse_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw ValidationError(field, "not a number: '" + item + "'");
        }
    }
    if (out.empty()) {
        throw ValidationError(field, "empty list");
    }
    return out;
}

json margins_to_json(const MarginSet& ms, double tol) {
    json out = json::array();
    for (const LmiMargin& m : ms) {
        out.push_back({{"name", m.name}, {"margin", m.margin}, {"scale", m.scale}, {"pass", m.passes(tol)}});
    }
    return out;
}

json gain_json(const Mat& k) { return matrix_to_json(k); }

/// Result, diagnostic and exit code of one command.
struct Outcome {
    int code = kOk;
    json results = json::object();
    std::optional<json> model;
    std::optional<json> certificate;
    std::string diagnostic;
};

struct Shared {
    std::string model;
    std::string cert;
    std::string out;
    std::string format = "json";
    std::uint64_t seed = 0;
    double tol = 1e-2;
    CLI::Option* tol_opt = nullptr;
};

void add_shared(CLI::App* cmd, Shared& s) {
    cmd->add_option("--model", s.model, "Model JSON file");
    cmd->add_option("--cert", s.cert, "Certificate JSON file");
    cmd->add_option("--out", s.out, "Write the run report (JSON) here");
    cmd->add_option("--format", s.format, "Standard output format")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", s.seed, "Master random seed");
    s.tol_opt = cmd->add_option("--tol", s.tol, "Relative LMI tolerance against each inequality's scale");
}

Model require_model(const Shared& s) {
    if (s.model.empty()) {
        throw ValidationError("model", "--model is required");
    }
    return load_model(s.model);
}

// ---------------------------------------------------------------------------
// bound

struct BoundArgs {
    bool generic = false;
    bool single_v = false;
    bool two_v = false;
    bool dta = false;
    bool rate_form = false;
    std::string constants;
    std::map<std::string, double> inline_values;
};

const std::vector<std::string>& constant_keys() {
    static const std::vector<std::string> keys{"alpha1", "alpha2", "alphat1", "alphat2", "beta1",  "beta2",
                                               "beta3",  "p",      "q",       "alpha_bar", "alpha_b", "alpha_f",
                                               "gamma1", "gamma2", "c_bar",   "h",       "alpha_u"};
    return keys;
}

std::string flag_name(const std::string& key) {
    if (key == "alpha_bar") {
        return "--alpha";
    }
    if (key == "h") {
        return "--step";
    }
    std::string f = "--" + key;
    for (char& c : f) {
        if (c == '_') {
            c = '-';
        }
    }
    return f;
}

std::map<std::string, double> gather_constants(const BoundArgs& a) {
    std::map<std::string, double> v;
    if (!a.constants.empty()) {
        const json doc = parse_json_file(a.constants);
        if (!doc.is_object()) {
            throw FormatError("constants file must hold a JSON object");
        }
        const auto& keys = constant_keys();
        for (const auto& [k, val] : doc.items()) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                throw FormatError("unknown constant '" + k + "'");
            }
            if (!val.is_number()) {
                throw FormatError("constant '" + k + "' must be a number");
            }
            v[k] = val.get<double>();
        }
    }
    for (const auto& [k, val] : a.inline_values) {
        v[k] = val;
    }
    return v;
}

double need(const std::map<std::string, double>& v, const std::string& key) {
    const auto it = v.find(key);
    if (it == v.end()) {
        throw ValidationError(key, "missing (" + flag_name(key) + ")");
    }
    return it->second;
}

Outcome cmd_bound(const BoundArgs& a) {
    const int chosen = int(a.generic) + int(a.single_v) + int(a.two_v) + int(a.dta);
    if (chosen != 1) {
        throw ValidationError("kind", "choose exactly one of --generic, --single-v, --two-v, --dta");
    }
    const auto v = gather_constants(a);
    Outcome o;
    SamplingBoundResult r;
    json constants;
    if (a.generic) {
        GainConstants g;
        g.alpha1 = v.count("alpha1") ? v.at("alpha1") : g.alpha1;
        g.alpha2 = v.count("alpha2") ? v.at("alpha2") : g.alpha2;
        g.alphat1 = v.count("alphat1") ? v.at("alphat1") : g.alphat1;
        g.alphat2 = v.count("alphat2") ? v.at("alphat2") : g.alphat2;
        g.beta1 = v.count("beta1") ? v.at("beta1") : g.beta1;
        g.beta2 = v.count("beta2") ? v.at("beta2") : g.beta2;
        g.beta3 = v.count("beta3") ? v.at("beta3") : g.beta3;
        g.p = v.count("p") ? v.at("p") : g.p;
        const std::optional<double> q = v.count("q") ? std::optional<double>(v.at("q")) : std::nullopt;
        r = solve_qhat_star(g, q);
        constants = {{"alpha1", g.alpha1}, {"alpha2", g.alpha2}, {"alphat1", g.alphat1}, {"alphat2", g.alphat2},
                     {"beta1", g.beta1},   {"beta2", g.beta2},   {"beta3", g.beta3},     {"p", g.p}};
        if (q) {
            constants["q"] = *q;
        }
    } else if (a.single_v) {
        const EmulationConstants c{need(v, "alpha_bar"), need(v, "alpha_b"), need(v, "alpha_f")};
        r = a.rate_form ? emulation_bound_single_rate_form(c) : emulation_bound_single(c);
        constants = {{"alpha_bar", c.alpha_bar}, {"alpha_b", c.alpha_b}, {"alpha_f", c.alpha_f}};
    } else if (a.two_v) {
        const TwoFunctionConstants c{need(v, "alpha_bar"), need(v, "alpha_b"), need(v, "gamma1"), need(v, "gamma2")};
        r = emulation_bound_two(c);
        constants = {{"alpha_bar", c.alpha_bar}, {"alpha_b", c.alpha_b}, {"gamma1", c.gamma1}, {"gamma2", c.gamma2}};
    } else {
        const double cbar = need(v, "c_bar");
        const double h = need(v, "h");
        const double au = need(v, "alpha_u");
        r = dta_bound(cbar, h, au, need(v, "alpha_b"), need(v, "alpha_f"));
        constants = {{"c_bar", cbar},        {"h", h},
                     {"alpha_u", au},        {"alpha_b", v.at("alpha_b")},
                     {"alpha_f", v.at("alpha_f")}, {"alpha_bar", dta_map(cbar, h, au)}};
    }
    json b = bound_to_json(r);
    b["constants"] = constants;
    o.results["bound"] = b;
    return o;
}

// ---------------------------------------------------------------------------
// verify

Model resolve_gain(const Model& model, const LmiCertificate& cert) {
    return std::visit(
        [&](const auto& m) -> Model {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearSampledModel>) {
                if (m.design_mode() && cert.K_hat) {
                    return m.with_gain(*cert.K_hat);
                }
                return m;
            } else {
                if (!m.K_hat && cert.K_hat) {
                    T out = m;
                    out.K_hat = cert.K_hat;
                    return out;
                }
                return m;
            }
        },
        model);
}

Outcome finish_verify(const Model& model, const LmiCertificate& cert, double tol) {
    const VerifyOutcome v = verify_certificate(model, cert, tol);
    Outcome o;
    o.results["family"] = v.family;
    o.results["tol"] = tol;
    o.results["margins"] = margins_to_json(v.margins, tol);
    o.results["pass"] = v.pass;
    if (v.bound) {
        json b = bound_to_json(*v.bound);
        b["constants"] = v.bound_constants;
        o.results["bound"] = b;
    }
    o.model = model_to_json(model);
    o.certificate = certificate_to_json(cert);
    if (!v.pass) {
        o.code = kNegative;
        const LmiMargin* worst = &v.margins.front();
        for (const LmiMargin& m : v.margins) {
            if (m.margin / m.scale > worst->margin / worst->scale) {
                worst = &m;
            }
        }
        o.diagnostic = "FAIL: " + worst->name + " margin " + std::to_string(worst->margin);
    }
    return o;
}

bool same_margins(const json& a, const json& b) {
    if (!a.is_array() || !b.is_array() || a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].at("name") != b[i].at("name")) {
            return false;
        }
        const double x = a[i].at("margin").get<double>();
        const double y = b[i].at("margin").get<double>();
        if (!(std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(x)))) {
            return false;
        }
    }
    return true;
}

Outcome cmd_verify(const Shared& s, const std::string& from_report) {
    if (!from_report.empty()) {
        const json rep = parse_json_file(from_report);
        if (!rep.contains("results")) {
            throw FormatError(from_report + ": not a run report");
        }
        const json& recorded = rep["results"];
        if (rep.value("command", "") == "bound") {
            BoundArgs a;
            const json& b = recorded.at("bound");
            const std::string kind = b.at("kind").get<std::string>();
            a.generic = kind == "generic";
            a.single_v = kind == "single-v" || kind == "single-v-rate";
            a.rate_form = kind == "single-v-rate";
            a.two_v = kind == "two-v";
            a.dta = kind == "dta";
            for (const auto& [k, val] : b.at("constants").items()) {
                if (!(a.dta && k == "alpha_bar")) {
                    a.inline_values[k] = val.get<double>();
                }
            }
            Outcome o = cmd_bound(a);
            const double t0 = b.at("tau_max").get<double>();
            const double t1 = o.results["bound"]["tau_max"].get<double>();
            o.results["reproduced"] = std::abs(t0 - t1) <= 1e-12 * std::max(1.0, std::abs(t0));
            if (!o.results["reproduced"].get<bool>()) {
                o.code = kNegative;
                o.diagnostic = "recorded bound not reproduced";
            }
            return o;
        }
        if (!rep.contains("model") || !rep.contains("certificate")) {
            throw FormatError(from_report + ": report carries no model and certificate");
        }
        const Model model = parse_model(rep["model"]);
        const LmiCertificate cert = parse_certificate(rep["certificate"]);
        const double tol = s.tol_opt->count() > 0 ? s.tol : recorded.value("tol", s.tol);
        Outcome o = finish_verify(model, cert, tol);
        if (recorded.contains("margins")) {
            const bool ok = same_margins(recorded["margins"], o.results["margins"]);
            o.results["reproduced"] = ok;
            if (!ok) {
                o.code = kNegative;
                o.diagnostic = "recorded margins not reproduced";
            }
        }
        return o;
    }
    const Model model = require_model(s);
    if (s.cert.empty()) {
        throw ValidationError("cert", "--cert is required");
    }
    const LmiCertificate cert = load_certificate(s.cert);
    return finish_verify(model, cert, s.tol);
}

// ---------------------------------------------------------------------------
// design

struct DesignArgs {
    std::string c_tilde;
    double max_gain = 0.0;
    CLI::Option* max_gain_opt = nullptr;
    std::string fractions;
    bool first_feasible = false;
    std::string cert_out;
};

Outcome cmd_design(const Shared& s, const DesignArgs& a) {
    const Model model = require_model(s);
    std::vector<double> fractions;
    if (!a.fractions.empty()) {
        fractions = parse_list(a.fractions, "fractions");
    }
    Outcome o;
    DesignResult best;
    json sweep = json::array();
    double chosen_ct = 1.0;
    if (const auto* planar = std::get_if<NonlinearPlanarModel>(&model)) {
        PlanarDesignOptions opt;
        if (!fractions.empty()) {
            opt.alpha_fractions = fractions;
        }
        opt.best_of_ladder = !a.first_feasible;
        if (a.max_gain_opt->count() > 0) {
            opt.max_gain_norm = a.max_gain;
        }
        best = synthesize_nonlinear_planar(opt, *planar);
    } else {
        const auto& lin = std::get<LinearSampledModel>(model);
        if (!lin.design_mode()) {
            throw ValidationError("K_hat", "model is not in design mode (needs B_hat and no K_hat)");
        }
        std::vector<double> cts{1.0};
        if (!a.c_tilde.empty()) {
            const std::string prefix = "sweep:";
            cts = a.c_tilde.rfind(prefix, 0) == 0 ? parse_list(a.c_tilde.substr(prefix.size()), "c_tilde")
                                                  : parse_list(a.c_tilde, "c_tilde");
        }
        DesignOptions opt;
        if (!fractions.empty()) {
            opt.alpha_fractions = fractions;
        }
        opt.best_of_ladder = !a.first_feasible;
        if (a.max_gain_opt->count() > 0) {
            opt.max_gain_norm = a.max_gain;
        }
        bool have = false;
        for (const double ct : cts) {
            opt.c_tilde = ct;
            try {
                const DesignResult r = synthesize_feedback(lin, opt);
                sweep.push_back({{"c_tilde", ct}, {"tau_max", r.bound.tau_max}, {"gain_norm", r.gain_norm()}});
                if (!have || r.bound.tau_max > best.bound.tau_max) {
                    best = r;
                    chosen_ct = ct;
                    have = true;
                }
            } catch (const InfeasibleError& e) {
                sweep.push_back({{"c_tilde", ct}, {"infeasible", e.what()}});
            }
        }
        if (!have) {
            throw InfeasibleError("design: infeasible for every c_tilde");
        }
    }
    const VerifyOutcome v = verify_certificate(model, best.certificate, 0.0);
    json b = bound_to_json(best.bound);
    b["constants"] = {{"alpha_bar", best.constants.alpha_bar},
                      {"alpha_b", best.constants.alpha_b},
                      {"gamma1", best.constants.gamma1},
                      {"gamma2", best.constants.gamma2}};
    o.results["bound"] = b;
    o.results["tau_max"] = best.bound.tau_max;
    o.results["K_hat"] = gain_json(best.K);
    o.results["gain_norm"] = best.gain_norm();
    o.results["c_tilde"] = chosen_ct;
    o.results["sweep"] = sweep;
    o.results["family"] = v.family;
    o.results["tol"] = 0.0;
    o.results["margins"] = margins_to_json(v.margins, 0.0);
    o.results["pass"] = v.pass;
    json ladder = json::array();
    for (const auto& [f, t] : best.trace.ladder) {
        ladder.push_back({{"fraction", f}, {"tau_max", t}});
    }
    o.results["trace"] = {{"alpha_sup", best.trace.alpha_sup},
                          {"alpha_fraction", best.trace.alpha_fraction},
                          {"refine_iterations", best.trace.refine_iterations},
                          {"feasibility_solves", best.trace.feasibility_solves},
                          {"ladder", ladder}};
    o.model = model_to_json(model);
    o.certificate = certificate_to_json(best.certificate);
    if (!a.cert_out.empty()) {
        write_file(a.cert_out, o.certificate->dump(2) + "\n");
    }
    return o;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
    std::string schedule;
    std::size_t paths = 100;
    double horizon = 5.0;
    double dt = 0.0;
    std::size_t stride = 10;
    unsigned workers = 0;
    std::string window;
    std::string traj_csv;
    std::string stats_csv;
};

Outcome cmd_simulate(const Shared& s, const SimArgs& a) {
    Model model = require_model(s);
    if (!s.cert.empty()) {
        model = resolve_gain(model, load_certificate(s.cert));
    }
    (void)make_loop(model);
    if (a.schedule.empty()) {
        throw ValidationError("schedule", "--schedule is required");
    }
    SimConfig cfg;
    cfg.schedule = SamplingSchedule::parse(a.schedule);
    cfg.horizon = a.horizon;
    cfg.n_paths = a.paths;
    cfg.seed = s.seed;
    cfg.store_stride = a.stride;
    cfg.workers = a.workers;
    cfg.dt_sim = a.dt > 0.0 ? a.dt : std::min(1e-3, cfg.schedule.underline_dt() / 10.0);
    std::optional<std::pair<double, double>> window;
    if (!a.window.empty()) {
        const auto w = parse_list(a.window, "window");
        if (w.size() != 2) {
            throw ValidationError("window", "expected LO,HI");
        }
        window = std::make_pair(w[0], w[1]);
    }
    const TrajectoryEnsemble ens = run_ensemble(model, cfg);
    if (!a.traj_csv.empty()) {
        std::ostringstream ss;
        write_trajectory_csv(ens, ss);
        write_file(a.traj_csv, ss.str());
    }
    if (!a.stats_csv.empty()) {
        std::ostringstream ss;
        write_stats_csv(ens, ss);
        write_file(a.stats_csv, ss.str());
    }
    Outcome o;
    const double frac = static_cast<double>(ens.diverged_count()) / static_cast<double>(cfg.n_paths);
    o.results["config"] = {{"dt_sim", cfg.dt_sim},      {"horizon", cfg.horizon}, {"paths", cfg.n_paths},
                           {"seed", cfg.seed},          {"schedule", cfg.schedule.describe()},
                           {"store_stride", cfg.store_stride}};
    o.results["instants"] = ens.instants.size();
    o.results["diverged"] = ens.diverged_count();
    o.results["diverged_fraction"] = frac;
    try {
        const DecayEstimate d = estimate_ms_decay(ens, window);
        o.results["ms_decay"] = {{"rate", d.rate},
                                 {"intercept", d.intercept},
                                 {"r_squared", d.r_squared},
                                 {"window", {d.window_lo, d.window_hi}},
                                 {"points", d.points},
                                 {"decay_confirmed", d.decay_confirmed()}};
    } catch (const DegenerateEnsemble& e) {
        o.results["ms_decay"] = {{"note", std::string("DegenerateEnsemble: ") + e.what()}};
    }
    try {
        const ExponentSummary x = estimate_as_exponent(ens);
        o.results["as_exponent"] = {
            {"t", x.t}, {"median", x.median}, {"max", x.max}, {"finite_count", x.finite_count}};
    } catch (const DegenerateEnsemble& e) {
        o.results["as_exponent"] = {{"note", std::string("DegenerateEnsemble: ") + e.what()}};
    }
    o.model = model_to_json(model);
    if (!s.cert.empty()) {
        o.certificate = certificate_to_json(load_certificate(s.cert));
    }
    if (frac > 0.5) {
        o.code = kNegative;
        o.diagnostic = "more than half of the paths diverged";
    }
    return o;
}

// ---------------------------------------------------------------------------
// report

Outcome cmd_report(const std::vector<std::string>& files, const std::string& curve_csv, std::ostream& err) {
    if (files.empty()) {
        throw ValidationError("reports", "no report files given");
    }
    Outcome o;
    json rows = json::array();
    std::ostringstream curve;
    curve << std::setprecision(17) << "report,q,tau\n";
    std::size_t curves = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const json rep = parse_json_file(files[i]);
        if (!rep.is_object() || !rep.contains("results")) {
            throw FormatError(files[i] + ": not a run report");
        }
        if (rep.value("version", "") != SDCERT_VERSION) {
            err << "warning: " << files[i] << " was written by version " << rep.value("version", "?") << '\n';
        }
        const json& r = rep["results"];
        json row = {{"file", files[i]}, {"command", rep.value("command", "")}};
        row["model"] = rep.contains("model") ? rep["model"].value("name", "") : "";
        row["tau_max"] = r.contains("bound") ? r["bound"]["tau_max"] : json(nullptr);
        row["gain_norm"] = r.contains("gain_norm") ? r["gain_norm"] : json(nullptr);
        row["decay_rate"] =
            r.contains("ms_decay") && r["ms_decay"].contains("rate") ? r["ms_decay"]["rate"] : json(nullptr);
        rows.push_back(row);
        if (r.contains("bound")) {
            for (const auto& [q, t] : tau_curve(r["bound"])) {
                curve << i << ',' << q << ',' << t << '\n';
            }
            ++curves;
        }
    }
    o.results["rows"] = rows;
    o.results["curves"] = curves;
    if (!curve_csv.empty()) {
        write_file(curve_csv, curve.str());
    }
    return o;
}

std::string json_scalar(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    return v.dump();
}

void flatten(const json& v, const std::string& prefix, std::ostream& os) {
    if (v.is_object()) {
        for (const auto& [k, x] : v.items()) {
            flatten(x, prefix.empty() ? k : prefix + "." + k, os);
        }
    } else {
        std::string text = json_scalar(v);
        std::string quoted;
        for (const char c : text) {
            quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
        }
        os << prefix << ",\"" << quoted << "\"\n";
    }
}

void print_table_csv(const json& rows, std::ostream& os) {
    os << "file,command,model,tau_max,gain_norm,decay_rate\n";
    for (const json& r : rows) {
        os << json_scalar(r["file"]) << ',' << json_scalar(r["command"]) << ',' << json_scalar(r["model"]) << ','
           << json_scalar(r["tau_max"]) << ',' << json_scalar(r["gain_norm"]) << ',' << json_scalar(r["decay_rate"])
           << '\n';
    }
}

} // namespace

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

json bound_to_json(const SamplingBoundResult& r) {
    json b = {{"kind", to_string(r.provenance)},
              {"tau_max", r.tau_max},
              {"q_star", r.q_star},
              {"bracket", {r.bracket_lo, r.bracket_hi}},
              {"degenerate", r.degenerate}};
    if (r.b1_star) {
        b["b1_star"] = *r.b1_star;
    }
    if (r.b2_star) {
        b["b2_star"] = *r.b2_star;
    }
    if (r.r_star) {
        b["r_star"] = *r.r_star;
    }
    if (r.q0) {
        b["q0"] = *r.q0;
    }
    return b;
}

VerifyOutcome verify_certificate(const Model& model, const LmiCertificate& cert, double tol) {
    cert.validate();
    VerifyOutcome v;
    const Model resolved = resolve_gain(model, cert);
    auto two_v = [&](double alpha_b, double g1, double g2) {
        const TwoFunctionConstants c{cert.alpha_bar, alpha_b, g1, g2};
        v.bound = emulation_bound_two(c);
        v.bound_constants = {{"alpha_bar", c.alpha_bar}, {"alpha_b", c.alpha_b}, {"gamma1", c.gamma1},
                             {"gamma2", c.gamma2}};
    };
    if (const auto* planar = std::get_if<NonlinearPlanarModel>(&resolved)) {
        v.family = "planar";
        if (!planar->K_hat) {
            throw ValidationError("K_hat", "planar certificate needs a gain in the model or certificate");
        }
        const SymMatrix pt = cert.P_tilde.value_or(cert.P);
        v.margins = verify_example2_lmis(*planar->K_hat, cert.P, pt, cert.alpha_bar, cert.extra("alpha_b"),
                                         cert.extra("gamma1"), cert.extra("gamma2"), cert.extra("b"),
                                         cert.extra("c"), *planar);
        two_v(cert.extra("alpha_b"), cert.extra("gamma1"), cert.extra("gamma2"));
    } else {
        const auto& lin = std::get<LinearSampledModel>(resolved);
        const bool two_function = cert.has("alpha_b") || cert.has("gamma1") || cert.has("gamma2");
        if (cert.Q && cert.Y) {
            v.family = "design";
            const double ct = cert.has("c_tilde") ? cert.extra("c_tilde") : 1.0;
            const auto& base = std::get<LinearSampledModel>(model);
            v.margins = verify_design_lmis(base, SymMatrix(*cert.Q), *cert.Y, cert.alpha_bar, cert.extra("alpha_b"),
                                           cert.extra("gamma1"), cert.extra("gamma2"), ct);
            two_v(cert.extra("alpha_b"), cert.extra("gamma1"), cert.extra("gamma2"));
        } else if (two_function) {
            v.family = "analysis";
            if (!cert.P_tilde) {
                throw FormatError("P_tilde: required by a two-function certificate");
            }
            v.margins = verify_two_function_lmis(lin, cert.P, *cert.P_tilde, cert.alpha_bar, cert.extra("alpha_b"),
                                        cert.extra("gamma1"), cert.extra("gamma2"));
            two_v(cert.extra("alpha_b"), cert.extra("gamma1"), cert.extra("gamma2"));
        } else {
            v.family = "lyapunov";
            const Mat bbar = lin.closed_feedback();
            const Mat f = lin.A + bbar;
            v.margins = {verify_lyapunov_ito(f, lin.diffusion, cert.P, cert.alpha_bar)};
            const double ab = extract_alpha_b(cert.P, cert.P, bbar);
            if (ab > 0.0) {
                const EmulationConstants c{cert.alpha_bar, ab, std::max(extract_alpha_f(cert.P, f, cert.alpha_bar),
                                                                        std::numeric_limits<double>::min())};
                v.bound = emulation_bound_single(c);
                v.bound_constants = {{"alpha_bar", c.alpha_bar}, {"alpha_b", c.alpha_b}, {"alpha_f", c.alpha_f}};
            }
        }
    }
    v.pass = all_pass(v.margins, tol);
    return v;
}

std::vector<std::pair<double, double>> tau_curve(const json& bound, std::size_t points) {
    const std::string kind = bound.at("kind").get<std::string>();
    const json& c = bound.at("constants");
    std::vector<std::pair<double, double>> out;
    auto sample = [&](double lo, double hi, const std::function<double(double)>& f) {
        for (std::size_t i = 1; i <= points; ++i) {
            const double q = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points + 1);
            out.emplace_back(q, f(q));
        }
    };
    if (kind == "two-v") {
        const TwoFunctionConstants k{c.at("alpha_bar"), c.at("alpha_b"), c.at("gamma1"), c.at("gamma2")};
        sample(0.0, 1.0, [&](double q) { return htau_two(q, k); });
    } else if (kind == "single-v" || kind == "single-v-rate" || kind == "dta") {
        const EmulationConstants k{c.at("alpha_bar"), c.at("alpha_b"), c.at("alpha_f")};
        const SamplingBoundResult at = emulation_bound_single(k);
        sample(0.0, 1.0, [&](double q) { return emulation_curve_single(q, k, at); });
    } else if (kind == "generic") {
        GainConstants g;
        g.alpha1 = c.at("alpha1");
        g.alpha2 = c.at("alpha2");
        g.alphat1 = c.at("alphat1");
        g.alphat2 = c.at("alphat2");
        g.beta1 = c.at("beta1");
        g.beta2 = c.at("beta2");
        g.beta3 = c.at("beta3");
        g.p = c.at("p");
        const double lo = bound.contains("q0") ? bound["q0"].get<double>() : bound.at("bracket")[0].get<double>();
        sample(std::max(lo, 0.0), 1.0, [&](double q) { return htau_generic(q, g); });
    } else {
        throw FormatError("unknown bound kind '" + kind + "'");
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    CLI::App app{"Sampling-interval bounds, LMI certificates, synthesis and simulation for sampled-data "
                 "stochastic systems"};
    app.set_version_flag("--version", SDCERT_VERSION);
    app.require_subcommand(1);

    Shared s;
    BoundArgs ba;
    DesignArgs da;
    SimArgs sa;
    std::string from_report;
    std::vector<std::string> report_files;
    std::string curve_csv;

    auto* bound = app.add_subcommand("bound", "Maximal sampling interval from Lyapunov constants");
    add_shared(bound, s);
    bound->add_flag("--generic", ba.generic, "Two candidate functions, generic constants");
    bound->add_flag("--single-v", ba.single_v, "One shared quadratic function");
    bound->add_flag("--two-v", ba.two_v, "Separate physical and cyber functions");
    bound->add_flag("--dta", ba.dta, "Discrete-time approximation constants");
    bound->add_flag("--rate-form", ba.rate_form, "Solve the single-function bound in the rate variable");
    bound->add_option("--constants", ba.constants, "JSON object of constants; flags override");
    std::map<std::string, double> raw;
    std::map<std::string, CLI::Option*> raw_opts;
    for (const std::string& key : constant_keys()) {
        raw[key] = 0.0;
    }
    for (const std::string& key : constant_keys()) {
        raw_opts[key] = bound->add_option(flag_name(key), raw[key]);
    }

    auto* verify = app.add_subcommand("verify", "Check a certificate's LMIs against a model");
    add_shared(verify, s);
    verify->add_option("--from-report", from_report, "Re-verify the model and certificate embedded in a report");

    auto* design = app.add_subcommand("design", "Synthesize a state-feedback gain with a certificate");
    add_shared(design, s);
    design->add_option("--c-tilde", da.c_tilde, "Scaling of the second function, or sweep:V1,V2,...");
    da.max_gain_opt = design->add_option("--max-gain", da.max_gain, "Bound on the gain's spectral norm");
    design->add_option("--fractions", da.fractions, "Decay-rate fractions to try, comma separated");
    design->add_flag("--first-feasible", da.first_feasible, "Stop at the first feasible fraction");
    design->add_option("--cert-out", da.cert_out, "Write the certificate here");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation of the sampled-data loop");
    add_shared(simulate, s);
    simulate->add_option("--schedule", sa.schedule, "periodic:DT | uniform:LO,HI | explicit:T1,T2,...");
    simulate->add_option("--paths", sa.paths, "Number of paths")->check(CLI::PositiveNumber);
    simulate->add_option("--horizon", sa.horizon, "Simulated time")->check(CLI::PositiveNumber);
    simulate->add_option("--dt", sa.dt, "Euler-Maruyama substep (default min(1e-3, shortest interval/10))");
    simulate->add_option("--stride", sa.stride, "Store every N-th substep")->check(CLI::PositiveNumber);
    simulate->add_option("--workers", sa.workers, "Threads (0: hardware concurrency)");
    simulate->add_option("--window", sa.window, "Mean-square fit window LO,HI");
    simulate->add_option("--traj-csv", sa.traj_csv, "Trajectory CSV output");
    simulate->add_option("--stats-csv", sa.stats_csv, "Ensemble statistics CSV output");

    auto* report = app.add_subcommand("report", "Merge run reports into a summary table");
    report->add_option("reports", report_files, "Run report files")->required();
    report->add_option("--out", s.out, "Write the merged report (JSON) here");
    report->add_option("--format", s.format, "Standard output format")->check(CLI::IsMember({"json", "csv"}));
    report->add_option("--curve-csv", curve_csv, "Write tau(q) curve samples here");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }
    for (const auto& [key, opt] : raw_opts) {
        if (opt->count() > 0) {
            ba.inline_values[key] = raw[key];
        }
    }

    const std::string command = app.get_subcommands().front()->get_name();
    Outcome o;
    try {
        if (command == "bound") {
            o = cmd_bound(ba);
        } else if (command == "verify") {
            o = cmd_verify(s, from_report);
        } else if (command == "design") {
            o = cmd_design(s, da);
        } else if (command == "simulate") {
            o = cmd_simulate(s, sa);
        } else {
            o = cmd_report(report_files, curve_csv, err);
        }
    } catch (const InfeasibleError& e) {
        o.code = kInfeasible;
        o.diagnostic = e.what();
    } catch (const NumericalFailure& e) {
        o.code = kInfeasible;
        o.diagnostic = e.what();
    } catch (const ValidationError& e) {
        o.code = kInputError;
        o.diagnostic = "invalid " + e.field() + ": " + e.what();
    } catch (const Error& e) {
        o.code = kInputError;
        o.diagnostic = e.what();
    } catch (const json::exception& e) {
        o.code = kInputError;
        o.diagnostic = e.what();
    } catch (const std::exception& e) {
        o.code = kInputError;
        o.diagnostic = e.what();
    }

    json rep;
    rep["tool"] = "sdcert";
    rep["version"] = SDCERT_VERSION;
    rep["command"] = command;
    rep["argv"] = args;
    json inputs = json::object();
    for (const auto& [key, path] : {std::pair<std::string, std::string>{"model", s.model}, {"cert", s.cert},
                                    {"constants", ba.constants}, {"from_report", from_report}}) {
        if (!path.empty()) {
            try {
                inputs[key] = {{"path", path}, {"fnv1a64", fnv1a64_hex(read_file(path))}};
            } catch (const Error&) {
                inputs[key] = {{"path", path}, {"fnv1a64", nullptr}};
            }
        }
    }
    for (const std::string& f : report_files) {
        try {
            inputs["reports"].push_back({{"path", f}, {"fnv1a64", fnv1a64_hex(read_file(f))}});
        } catch (const Error&) {
            inputs["reports"].push_back({{"path", f}, {"fnv1a64", nullptr}});
        }
    }
    rep["inputs"] = inputs;
    if (o.model) {
        rep["model"] = *o.model;
    }
    if (o.certificate) {
        rep["certificate"] = *o.certificate;
    }
    rep["results"] = o.results;
    rep["exit_code"] = o.code;
    if (!o.diagnostic.empty()) {
        rep["diagnostic"] = o.diagnostic;
    }
    rep["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!s.out.empty()) {
        try {
            write_file(s.out, rep.dump(2) + "\n");
        } catch (const Error& e) {
            err << "error: " << e.what() << '\n';
            return kInputError;
        }
    }
    if (s.format == "csv") {
        if (command == "report" && o.results.contains("rows")) {
            print_table_csv(o.results["rows"], out);
        } else {
            out << "key,value\n";
            flatten(o.results, "", out);
        }
    } else {
        out << rep.dump(2) << '\n';
    }
    if (!o.diagnostic.empty()) {
        err << (o.code == kNegative ? "" : "error: ") << o.diagnostic << '\n';
    }
    return o.code;
}

} // namespace sdcert::cli
