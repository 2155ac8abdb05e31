#include <gtest/gtest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spl/config.hpp"
#include "spl/harness.hpp"
#include "spl/report.hpp"

using namespace spl;

namespace {

std::string config_error(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
        return e.what();
    }
    ADD_FAILURE() << "expected a configuration error for " << text;
    return {};
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

ExperimentReport three_rows() {
    ExperimentReport r;
    r.experiment = "threshold";
    r.s = 0.4;
    r.p = 2.5;
    r.rows = {{1, 3.0, 0.1, NAN, "diverges"}, {2, 7.0, 0.3, NAN, "diverges"}, {3, 11.0, 1.0 / 3.0, NAN, "diverges"}};
    fill_local_slopes(r.rows);
    return r;
}

} // namespace

TEST(Config, RoundTripIsIdentity) {
    RunConfig c;
    c.description = "round trip";
    c.output_dir = "out";
    c.seed = 7;
    c.worker_count = 3;
    SeminormExperiment s;
    s.test = "scaling";
    s.seed = 11;
    s.name = "dilation";
    c.experiments = {s, PatchExperiment{}, LayerExperiment{}, GeometryExperiment{}, AveragingExperiment{},
                     ThresholdExperiment{}, AlmostExperiment{}};
    std::get<ThresholdExperiment>(c.experiments[5]).cases = {{0.1, 2.25}, {0.3, 1.0 / 3.0}};
    const auto text = config_to_json(c).dump();
    EXPECT_EQ(parse_config_text(text), c);
    EXPECT_EQ(config_to_json(parse_config_text(text)).dump(), text);
}

TEST(Config, EmptyObjectGivesDefaults) {
    EXPECT_EQ(parse_config_text("{}"), RunConfig{});
    const auto c = parse_config_text(R"({"experiments": [{"kind": "geometry", "lemma": "geom2", "samples": 5000}]})");
    ASSERT_EQ(c.experiments.size(), 1U);
    const auto& g = std::get<GeometryExperiment>(c.experiments[0]);
    EXPECT_EQ(g.lemma, "geom2");
    EXPECT_EQ(g.samples, 5000U);
    EXPECT_EQ(g.n_max, 8);
}

TEST(Config, UnknownKeysCarryTheirPointer) {
    EXPECT_NE(config_error(R"({"seeds": 1})").find("/seeds"), std::string::npos);
    const auto msg = config_error(
        R"({"experiments": [{"kind": "almost"}, {"kind": "patch"}, {"kind": "threshold", "n_mux": 3}]})");
    EXPECT_NE(msg.find("/experiments/2/n_mux"), std::string::npos) << msg;
    EXPECT_NE(config_error(R"({"experiments": [{"kind": "threshold", "cases": [{"s": 0.4, "q": 1}]}]})")
                  .find("/experiments/0/cases/0/q"),
              std::string::npos);
}

TEST(Config, TypeAndRangeErrors) {
    EXPECT_NE(config_error(R"({"seed": -1})").find("/seed"), std::string::npos);
    EXPECT_NE(config_error(R"({"experiments": [{"kind": "patch", "s": "x"}]})").find("/experiments/0/s"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"experiments": [{"kind": "warp"}]})").find("/experiments/0/kind"), std::string::npos);
    EXPECT_NE(config_error(R"({"experiments": [{"kind": "averaging", "n_mc": 50}]})").find("/experiments/0/n_mc"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"experiments": [{"kind": "almost", "layout": "wide"}]})").find("/experiments/0/layout"),
              std::string::npos);
    EXPECT_NE(config_error("{not json").find("malformed"), std::string::npos);
}

TEST(Config, DescriptionAllowedEverywhere) {
    const auto c = parse_config_text(R"({"description": "top", "experiments": [
        {"kind": "seminorm", "description": "one"}, {"kind": "almost", "description": "two"}]})");
    EXPECT_EQ(c.description, "top");
    EXPECT_EQ(std::get<AlmostExperiment>(c.experiments[1]).description, "two");
}

TEST(Report, EmptyReportIsHeaderOnly) {
    ExperimentReport r;
    r.experiment = "threshold";
    EXPECT_EQ(report_csv(r), "n_or_eps,upper,lower,ratio,log2_ratio,slope,verdict\n");
}

TEST(Report, RatioColumnIsLowerOverUpper) {
    const auto r = three_rows();
    const auto ls = lines(report_csv(r));
    ASSERT_EQ(ls.size(), 4U);
    for (std::size_t i = 1; i < ls.size(); ++i) {
        const auto cells = split(ls[i]);
        ASSERT_EQ(cells.size(), 7U);
        const double upper = std::stod(cells[1]), lower = std::stod(cells[2]), ratio = std::stod(cells[3]);
        EXPECT_NEAR(ratio, lower / upper, 1e-12 * ratio);
        EXPECT_EQ(cells[6], "diverges");
    }
    EXPECT_EQ(split(ls[1])[5], ""); // no slope on the first row
}

TEST(Report, NumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 2.0 / 7.0 * 1e-17, 123456789.123456789, -0.0}) {
        const auto text = format_double(v);
        double back = 0.0;
        std::from_chars(text.data(), text.data() + text.size(), back);
        EXPECT_EQ(back, v) << text;
    }
}

TEST(Report, JsonMirrorsTheRowsAndDropsTheTimestampOnRequest) {
    auto r = three_rows();
    r.constants["c_prime"] = 0.5;
    r.check("ok", true);
    const auto j = report_json(r);
    EXPECT_TRUE(j.contains(timestamp_key));
    EXPECT_FALSE(report_json(r, false).contains(timestamp_key));
    EXPECT_EQ(j["rows"].size(), 3U);
    EXPECT_TRUE(j["rows"][0]["slope"].is_null());
    EXPECT_EQ(j["constants"]["c_prime"], 0.5);
    EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(Report, FileNamesAndSvgAxes) {
    auto r = three_rows();
    EXPECT_EQ(r.file_stem(), "threshold-0.4-2.5");
    const auto dir = std::filesystem::temp_directory_path() / "spl_report_test";
    std::filesystem::remove_all(dir);
    const auto files = emit_report(r, dir);
    ASSERT_EQ(files.size(), 3U);
    EXPECT_EQ(files[2].filename(), "threshold-0.4-2.5.svg");
    std::ifstream f(files[2]);
    std::stringstream svg;
    svg << f.rdbuf();
    EXPECT_NE(svg.str().find("<polyline"), std::string::npos);
    EXPECT_NE(svg.str().find("log2 ratio"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Report, UnwritableDirectoryIsAnIoError) {
    const auto blocker = std::filesystem::temp_directory_path() / "spl_report_blocker";
    std::ofstream(blocker) << "x";
    try {
        emit_report(three_rows(), blocker / "sub");
        FAIL() << "expected an io error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
    std::filesystem::remove(blocker);
}

TEST(Harness, IndicatorClosedForm) {
    EXPECT_NEAR(indicator_energy(0.5, -2.0, 3.0), 16.0 * (1.0 + std::sqrt(2.0) - std::sqrt(3.0)), 1e-12);
    EXPECT_DOUBLE_EQ(indicator_energy_whole_line(0.5), 16.0);
    EXPECT_NEAR(indicator_energy(0.5, -1e8, 1e8), 16.0, 1e-2);
}

TEST(Harness, KernelSelfTest) {
    const auto t = kernel_self_test(2, 1.0, 2.0, 100000, 3);
    EXPECT_NEAR(t.exact, 4.0 * std::numbers::pi, 1e-12);
    EXPECT_LT(t.relative_error(), 0.02);
    EXPECT_THROW(kernel_self_test(2, 2.0, 1.0, 1000, 1), Error);
}

TEST(Harness, ConstantMapAveragesToZero) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.125);
    AveragingConfig cfg{sample_map(g, 2, [](auto, auto out) { out[0] = 0.7, out[1] = 0.0; }, g.box(), {0.7, 0.0}),
                        Region::whole(),
                        {0.4, 1.5, 2},
                        0.5,
                        100,
                        9};
    const auto res = averaging_check(cfg);
    EXPECT_EQ(res.energy, 0.0);
    EXPECT_EQ(res.mean_projected_energy, 0.0);
    EXPECT_EQ(res.bound_ratio, 0.0);
}

TEST(Harness, ShiftsOnTheSingularSetAreDegenerate) {
    // the grid has a node at 0 and every shift lies within the singular threshold of it; with no
    // tolerated hits each shift is degenerate
    AveragingConfig cfg{identity_map(2, 0.125), Region::whole(), {0.4, 1.5, 2}, 1e-14, 100, 2, 0.0};
    try {
        averaging_check(cfg);
        FAIL() << "expected a degenerate error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate);
    }
}

TEST(Harness, AveragingIsReproducible) {
    AveragingConfig cfg{identity_map(2, 0.125), Region::in_ball({0.0, 0.0}, 1.0), {0.4, 1.5, 2}, 0.5, 100, 5};
    EnergyOptions one, two;
    one.workers = 1;
    two.workers = 2;
    const auto a = averaging_check(cfg, one), b = averaging_check(cfg, two);
    EXPECT_EQ(a.mean_projected_energy, b.mean_projected_energy);
    EXPECT_EQ(a.used_shifts, 100U);
    std::size_t total = 0;
    for (auto c : a.tail_histogram) total += c;
    EXPECT_EQ(total, 100U);
    EXPECT_GT(a.bound_ratio, 0.0);
}

TEST(Harness, ThresholdVerdicts) {
    EXPECT_EQ(threshold_verdict(0.4, 0.01, 2.5, 2, 0.25), "diverges");
    EXPECT_EQ(threshold_verdict(0.1, 0.01, 2.0, 2, 0.25), "marginal-logarithmic");
    EXPECT_EQ(threshold_verdict(0.1, -0.01, 2.0, 2, 0.25), "bounded");
    EXPECT_EQ(threshold_verdict(0.1, 0.01, 1.5, 2, 0.25), "bounded");
    EXPECT_EQ(expected_verdict(1.5, 2), "bounded");
}

TEST(Harness, ThresholdCasesMustStraddleEll) {
    ThresholdExperiment t;
    t.cases = {{0.4, 2.5}, {0.5, 3.0}};
    try {
        run_threshold(t, RunContext{});
        FAIL() << "expected a configuration error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
    }
}

TEST(Harness, GeometryChordIdentityAndDiffeo) {
    RunContext ctx;
    GeometryExperiment g;
    g.lemma = "chord";
    g.samples = 20000;
    EXPECT_TRUE(run_geometry(g, ctx).passed());
    g.lemma = "diffeo";
    g.angular_step = 1e-2;
    const auto r = run_geometry(g, ctx);
    EXPECT_TRUE(r.passed());
    EXPECT_GT(r.measurements.at("min_jacobian"), 0.0);
}

TEST(Suite, EmptyListSucceedsAndConfigErrorsAreLocated) {
    RunConfig c;
    c.output_dir = (std::filesystem::temp_directory_path() / "spl_suite_empty").string();
    const auto res = run_suite(c);
    EXPECT_TRUE(res.reports.empty());
    EXPECT_TRUE(res.passed());
    SeminormExperiment bad;
    bad.s = 1.5;
    c.experiments = {SeminormExperiment{}, bad};
    try {
        run_suite(c, false);
        FAIL() << "expected a configuration error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
        EXPECT_NE(std::string(e.what()).find("/experiments/1"), std::string::npos) << e.what();
    }
}

TEST(Suite, SingleExperimentWritesOneReportSet) {
    RunConfig c;
    c.output_dir = (std::filesystem::temp_directory_path() / "spl_suite_one").string();
    std::filesystem::remove_all(c.output_dir);
    GeometryExperiment g;
    g.lemma = "geom1";
    g.samples = 2000;
    g.n_max = 3;
    c.experiments = {g};
    const auto res = run_suite(c);
    ASSERT_EQ(res.reports.size(), 1U);
    EXPECT_EQ(res.files.size(), 3U);
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.output_dir) / "geometry-geom1.csv"));
    std::filesystem::remove_all(c.output_dir);
}
