#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli.hpp"

namespace sdcert::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kData = SDCERT_DATA_DIR;

std::string model(const std::string& f) { return kData + "/models/" + f; }
std::string cert(const std::string& f) { return kData + "/certs/" + f; }

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;

    [[nodiscard]] json report() const { return json::parse(out); }
};

CliRun run_cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    CliRun r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("sdcert_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
    [[nodiscard]] std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(file(name)) << text;
        return file(name);
    }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TEST(Digest, KnownVectors) {
    EXPECT_EQ(fnv1a64_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a64_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a64_hex("foobar"), "85944171f73967e8");
}

TEST(Bound, TwoFunctionPublishedConstants) {
    const CliRun r = run_cli({"bound", "--two-v", "--alpha", "4.3957", "--alpha-b", "241.9335", "--gamma1", "1.2491",
                           "--gamma2", "60.5024"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(r.report()["results"]["bound"]["tau_max"].get<double>(), 0.0116, 1e-4);
}

TEST(Bound, GenericDegenerateBranch) {
    const CliRun r = run_cli({"bound", "--generic", "--alpha1", "1", "--alpha2", "0", "--alphat2", "2", "--q",
                           "0.3678794"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(r.report()["results"]["bound"]["tau_max"].get<double>(), 0.5, 1e-6);
}

TEST(Bound, SingleFunctionUnitConstants) {
    const CliRun r = run_cli({"bound", "--single-v", "--alpha", "1", "--alpha-b", "1", "--alpha-f", "1"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(r.report()["results"]["bound"]["tau_max"].get<double>(), 0.07720555968802623, 1e-12);
}

TEST(Bound, ConstantsFileWithOverride) {
    const TempDir dir;
    const std::string f =
        dir.write("c.json", R"({"alpha_bar": 4.3957, "alpha_b": 241.9335, "gamma1": 1.2491, "gamma2": 1.0})");
    const CliRun r = run_cli({"bound", "--two-v", "--constants", f, "--gamma2", "60.5024"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NEAR(r.report()["results"]["bound"]["tau_max"].get<double>(), 0.0116, 1e-4);
    EXPECT_EQ(r.report()["inputs"]["constants"]["fnv1a64"], fnv1a64_hex(slurp(f)));
}

TEST(Bound, ExitCodes) {
    EXPECT_EQ(run_cli({"bound", "--generic", "--alpha1", "1", "--alpha2", "1", "--alphat1", "1", "--beta2", "2"}).code,
              kInfeasible);
    EXPECT_EQ(run_cli({"bound", "--two-v", "--alpha", "-1", "--alpha-b", "1", "--gamma1", "1", "--gamma2", "1"}).code,
              kInputError);
    EXPECT_EQ(run_cli({"bound", "--two-v", "--alpha", "1"}).code, kInputError);
    EXPECT_EQ(run_cli({"bound", "--two-v", "--single-v", "--alpha", "1"}).code, kInputError);
    EXPECT_EQ(run_cli({"bound", "--two-v", "--bogus", "1"}).code, kInputError);
    const TempDir dir;
    EXPECT_EQ(run_cli({"bound", "--two-v", "--constants", dir.write("c.json", R"({"alpha_x": 1})")}).code,
              kInputError);
}

TEST(Verify, PublishedCertificatesPass) {
    const std::vector<std::pair<std::string, std::string>> pairs{
        {"ex1_sub1.json", "ex1_sub1_analysis.json"},
        {"ex1_sub2.json", "ex1_sub2_analysis.json"},
        {"ex1_sub1_control.json", "ex1_sub1_design.json"},
        {"ex2_planar.json", "ex2_planar.json"}};
    for (const auto& [m, c] : pairs) {
        const CliRun r = run_cli({"verify", "--model", model(m), "--cert", cert(c)});
        ASSERT_EQ(r.code, kOk) << c << ": " << r.err;
        EXPECT_TRUE(r.report()["results"]["pass"].get<bool>());
        EXPECT_TRUE(r.report()["results"].contains("bound")) << c;
    }
    const CliRun a = run_cli({"verify", "--model", model("ex1_sub1.json"), "--cert", cert("ex1_sub1_analysis.json")});
    EXPECT_NEAR(a.report()["results"]["bound"]["tau_max"].get<double>(), 0.0116, 1e-4);
}

TEST(Verify, InflatedDecayRateFails) {
    const TempDir dir;
    json c = json::parse(slurp(cert("ex1_sub1_analysis.json")));
    c["alpha_bar"] = c["alpha_bar"].get<double>() * 1.5;
    const CliRun r = run_cli({"verify", "--model", model("ex1_sub1.json"), "--cert", dir.write("c.json", c.dump())});
    EXPECT_EQ(r.code, kNegative);
    EXPECT_NE(r.err.find("FAIL"), std::string::npos);
    double worst = -1e300;
    const json rep = r.report();
    for (const json& m : rep["results"]["margins"]) {
        worst = std::max(worst, m["margin"].get<double>());
    }
    EXPECT_GT(worst, 0.0);
}

TEST(Verify, TwoFunctionCertificateWithoutSecondMatrixIsRejected) {
    const TempDir dir;
    json c = json::parse(slurp(cert("ex1_sub1_analysis.json")));
    c.erase("P_tilde");
    const CliRun r = run_cli({"verify", "--model", model("ex1_sub1.json"), "--cert", dir.write("c.json", c.dump())});
    EXPECT_EQ(r.code, kInputError);
    EXPECT_EQ(run_cli({"verify", "--model", model("ex1_sub1.json"), "--cert", dir.write("bad.json", "{")}).code,
              kInputError);
}

TEST(Verify, ReportIsSelfContained) {
    const TempDir dir;
    const std::string rep = dir.file("r.json");
    ASSERT_EQ(run_cli({"verify", "--model", model("ex2_planar.json"), "--cert", cert("ex2_planar.json"), "--out", rep})
                  .code,
              kOk);
    const CliRun again = run_cli({"verify", "--from-report", rep});
    ASSERT_EQ(again.code, kOk) << again.err;
    EXPECT_TRUE(again.report()["results"]["reproduced"].get<bool>());

    json tampered = json::parse(slurp(rep));
    tampered["results"]["margins"][0]["margin"] = tampered["results"]["margins"][0]["margin"].get<double>() + 1e-6;
    const CliRun bad = run_cli({"verify", "--from-report", dir.write("t.json", tampered.dump())});
    EXPECT_EQ(bad.code, kNegative);

    const std::string brep = dir.file("b.json");
    ASSERT_EQ(run_cli({"bound", "--single-v", "--alpha", "2", "--alpha-b", "3", "--alpha-f", "4", "--out", brep}).code,
              kOk);
    const CliRun b = run_cli({"verify", "--from-report", brep});
    ASSERT_EQ(b.code, kOk) << b.err;
    EXPECT_TRUE(b.report()["results"]["reproduced"].get<bool>());
}

TEST(Design, ExampleOneFixtureMeetsTargets) {
    const TempDir dir;
    const std::string c = dir.file("cert.json");
    const std::string rep = dir.file("design.json");
    const CliRun r = run_cli({"design", "--model", model("ex1_sub1_control.json"), "--cert-out", c, "--out", rep});
    ASSERT_EQ(r.code, kOk) << r.err;
    const json res = r.report()["results"];
    EXPECT_GE(res["tau_max"].get<double>(), 0.02);
    EXPECT_LE(res["gain_norm"].get<double>(), 10.0);
    EXPECT_TRUE(res["pass"].get<bool>());
    const CliRun v = run_cli({"verify", "--model", model("ex1_sub1_control.json"), "--cert", c, "--tol", "0"});
    EXPECT_EQ(v.code, kOk) << v.err;
    const CliRun fr = run_cli({"verify", "--from-report", rep});
    EXPECT_EQ(fr.code, kOk) << fr.err;
    EXPECT_TRUE(fr.report()["results"]["reproduced"].get<bool>());
}

TEST(Design, SweepEchoesChosenScaling) {
    const CliRun r = run_cli({"design", "--model", model("ex1_sub2_control.json"), "--c-tilde", "sweep:1,5",
                           "--fractions", "0.9", "--format", "json"});
    ASSERT_EQ(r.code, kOk) << r.err;
    const json res = r.report()["results"];
    ASSERT_EQ(res["sweep"].size(), 2U);
    double best = 0.0;
    double best_ct = 0.0;
    for (const json& row : res["sweep"]) {
        if (row["tau_max"].get<double>() > best) {
            best = row["tau_max"].get<double>();
            best_ct = row["c_tilde"].get<double>();
        }
    }
    EXPECT_DOUBLE_EQ(res["c_tilde"].get<double>(), best_ct);
    EXPECT_DOUBLE_EQ(r.report()["certificate"]["c_tilde"].get<double>(), best_ct);
}

TEST(Design, ExitCodes) {
    EXPECT_EQ(run_cli({"design", "--model", model("ex1_sub1.json")}).code, kInputError);
    EXPECT_EQ(run_cli({"design", "--model", model("ex1_sub1_control.json"), "--max-gain", "0.1"}).code, kInfeasible);
    EXPECT_EQ(run_cli({"design"}).code, kInputError);
}

TEST(Simulate, DecaysWithPublishedGain) {
    const CliRun r = run_cli({"simulate", "--model", model("ex1_sub1_closed.json"), "--schedule", "periodic:0.0234",
                           "--paths", "200", "--horizon", "5", "--seed", "7"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_LT(r.report()["results"]["ms_decay"]["rate"].get<double>(), 0.0);
}

TEST(Simulate, GainFromCertificate) {
    const TempDir dir;
    const std::string c = dir.write("k.json", json{{"P", {{1.0, 0.0}, {0.0, 1.0}}},
                                                   {"alpha_bar", 1.0},
                                                   {"K_hat", {{-5.5085, -0.1520}}}}
                                                  .dump());
    const CliRun r = run_cli({"simulate", "--model", model("ex1_sub1_control.json"), "--cert", c, "--schedule",
                           "periodic:0.0234", "--paths", "20", "--horizon", "2"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_EQ(run_cli({"simulate", "--model", model("ex1_sub1_control.json"), "--schedule", "periodic:0.0234"}).code,
              kInputError);
}

TEST(Simulate, IdenticalBytesForIdenticalSeed) {
    const TempDir dir;
    for (const char* tag : {"a", "b"}) {
        const CliRun r = run_cli({"simulate", "--model", model("ex1_sub2_closed.json"), "--schedule", "periodic:0.0234",
                               "--paths", "1", "--seed", "7", "--horizon", "1", "--traj-csv",
                               dir.file(std::string(tag) + ".csv"), "--stats-csv",
                               dir.file(std::string(tag) + "_stats.csv")});
        ASSERT_EQ(r.code, kOk) << r.err;
    }
    EXPECT_EQ(slurp(dir.file("a.csv")), slurp(dir.file("b.csv")));
    EXPECT_EQ(slurp(dir.file("a_stats.csv")), slurp(dir.file("b_stats.csv")));
    EXPECT_EQ(slurp(dir.file("a.csv")).rfind("t,path,x1,x2\n", 0), 0U);
}

TEST(Simulate, ZeroInitialStateIsANote) {
    const TempDir dir;
    json m = json::parse(slurp(model("ex1_sub1_closed.json")));
    m["x0"] = {0.0, 0.0};
    const CliRun r = run_cli({"simulate", "--model", dir.write("m.json", m.dump()), "--schedule", "periodic:0.0234",
                           "--paths", "3", "--horizon", "1"});
    EXPECT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.report()["results"]["ms_decay"]["note"].get<std::string>().find("DegenerateEnsemble"),
              std::string::npos);
}

TEST(Simulate, WidespreadDivergenceFails) {
    const TempDir dir;
    const json m = {{"name", "blowup"}, {"n", 1}, {"A", {{400.0}}}, {"diffusion", json::array()},
                    {"B_bar", {{0.0}}}, {"x0", {1.0}}};
    const CliRun r = run_cli({"simulate", "--model", dir.write("m.json", m.dump()), "--schedule", "periodic:0.1",
                           "--paths", "4", "--horizon", "5"});
    EXPECT_EQ(r.code, kNegative);
    EXPECT_EQ(r.report()["results"]["diverged"].get<int>(), 4);
}

TEST(Report, MergesTableAndEmitsCurve) {
    const TempDir dir;
    const std::string a = dir.file("a.json");
    const std::string b = dir.file("b.json");
    ASSERT_EQ(run_cli({"verify", "--model", model("ex1_sub1.json"), "--cert", cert("ex1_sub1_analysis.json"), "--out",
                       a})
                  .code,
              kOk);
    ASSERT_EQ(run_cli({"verify", "--model", model("ex1_sub2.json"), "--cert", cert("ex1_sub2_analysis.json"), "--out",
                       b})
                  .code,
              kOk);
    const CliRun r = run_cli({"report", a, b});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_EQ(r.report()["results"]["rows"].size(), 2U);

    const std::string bound = dir.file("bound.json");
    ASSERT_EQ(run_cli({"bound", "--two-v", "--alpha", "4.3957", "--alpha-b", "241.9335", "--gamma1", "1.2491",
                       "--gamma2", "60.5024", "--out", bound})
                  .code,
              kOk);
    const std::string curve = dir.file("curve.csv");
    ASSERT_EQ(run_cli({"report", bound, "--curve-csv", curve}).code, kOk);
    const std::string text = slurp(curve);
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 201U);
    EXPECT_EQ(text.rfind("report,q,tau\n", 0), 0U);
}

TEST(Report, EmptyInputIsAnInputError) {
    EXPECT_EQ(run_cli({"report"}).code, kInputError);
    EXPECT_EQ(run_cli({}).code, kInputError);
}

TEST(Report, CurvePeaksAtRecordedOptimum) {
    const json bound = {{"kind", "two-v"},
                        {"tau_max", 0.0},
                        {"constants", {{"alpha_bar", 4.3957}, {"alpha_b", 241.9335}, {"gamma1", 1.2491},
                                       {"gamma2", 60.5024}}}};
    const auto c = tau_curve(bound);
    ASSERT_EQ(c.size(), 200U);
    double best = 0.0;
    for (const auto& [q, t] : c) {
        ASSERT_GT(q, 0.0);
        ASSERT_LT(q, 1.0);
        best = std::max(best, t);
    }
    const double tau = emulation_bound_two({4.3957, 241.9335, 1.2491, 60.5024}).tau_max;
    EXPECT_LE(best, tau + 1e-15);
    EXPECT_GT(best, 0.99 * tau);
}

} // namespace
} // namespace sdcert::cli
