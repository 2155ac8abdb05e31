// Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime limits are pinned here
// rather than taken from the experiment defaults, so changing a default cannot loosen a criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spl/config.hpp"
#include "spl/harness.hpp"

using namespace spl;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

/// Passes when every assertion of every report passed; the detail lists the failures, or a short
/// summary built by `summary` when nothing failed.
Outcome from_reports(const std::vector<ExperimentReport>& reports, const std::string& summary) {
    Outcome o{true, {}};
    for (const auto& r : reports)
        for (const auto& a : r.assertions)
            if (!a.passed) {
                o.passed = false;
                o.detail += (o.detail.empty() ? "" : "; ") + r.file_stem() + ": " + a.name + " (" + a.detail + ")";
            }
    if (o.passed) o.detail = summary;
    return o;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double value(const std::map<std::string, double>& m, const std::string& key) {
    const auto it = m.find(key);
    return it == m.end() ? std::nan("") : it->second;
}

RunContext context() {
    RunContext ctx;
    ctx.workers = resolve_workers(0);
    return ctx;
}

Outcome scaling_law() {
    SeminormExperiment e;
    e.test = "scaling";
    e.s = 0.3;
    e.p = 2.0;
    e.h = 1e-3;
    e.lambda = 0.5;
    e.tolerance = 0.02;
    const auto r = run_seminorm(e, context());
    return from_reports({r}, "grid-transform ratio " + num(value(r.measurements, "grid_transform_ratio")) +
                                 ", resampled " + num(value(r.measurements, "resampled_ratio")) + ", expected " +
                                 num(std::pow(0.5, 1.0 - 0.3 * 2.0)));
}

Outcome indicator() {
    SeminormExperiment e;
    e.s = 0.25;
    e.p = 2.0;
    e.h = 1e-3;
    e.domain_lo = -2.0;
    e.domain_hi = 3.0;
    e.tolerance = 0.15;
    auto r = run_seminorm(e, context());
    const double whole = value(r.constants, "whole_line_value");
    r.check("infinite-domain value is 16", std::abs(whole - 16.0) <= 1e-12, num(whole));
    return from_reports({r}, "measured " + num(value(r.measurements, "energy")) + " vs truncated closed form " +
                                 num(value(r.measurements, "reference")) + " (whole line " + num(whole) + ")");
}

Outcome chord_identity() {
    GeometryExperiment e;
    e.lemma = "chord";
    e.samples = 1'000'000;
    e.identity_tolerance = 1e-12;
    const auto r = run_geometry(e, context());
    return from_reports({r}, "max discrepancy " + num(value(r.measurements, "max_discrepancy")) + " over " +
                                 num(value(r.measurements, "cases")) + " cases");
}

Outcome lemma_constants() {
    std::vector<ExperimentReport> reports;
    std::string summary;
    for (const char* lemma : {"geom1", "geom2"}) {
        GeometryExperiment e;
        e.lemma = lemma;
        e.samples = 100'000;
        e.n_min = 1;
        e.n_max = 8;
        e.spread_tolerance = 0.1;
        reports.push_back(run_geometry(e, context()));
        summary += std::string(summary.empty() ? "" : ", ") + lemma + " " +
                   num(value(reports.back().constants, lemma)) + " (spread " +
                   num(value(reports.back().measurements, "spread")) + ")";
    }
    return from_reports(reports, summary);
}

Outcome patch_uniformity() {
    PatchExperiment e;
    e.s = 0.4;
    e.p = 2.5;
    e.ell = 2;
    e.n_values = {1, 2, 3};
    e.shift_levels = {1, 2};
    e.shifts = 100;
    e.uniformity_factor = 2.0;
    e.lower_safety = 0.5;
    const auto r = run_patch(e, context());
    return from_reports({r}, "energy max/min " + num(value(r.measurements, "energy_spread_factor")) +
                                 ", min lower ratio " + num(value(r.measurements, "min_lower_ratio_n1")) + " / " +
                                 num(value(r.measurements, "min_lower_ratio_n2")) + " vs C' " +
                                 num(value(r.constants, "c_prime")));
}

Outcome threshold() {
    ThresholdExperiment e;
    e.cases = {{0.4, 2.5}, {0.4, 1.5}, {0.5, 2.0}};
    e.ell = 2;
    e.n_min = 1;
    e.n_max = 6;
    e.cross_validate_max_n = 2;
    e.diverge_slope = 0.25;
    e.slope_tolerance = 0.5;
    e.upper_factor = 3.0;
    e.lower_tolerance = 0.5;
    const auto reports = run_threshold(e, context());
    std::string summary;
    for (const auto& r : reports)
        summary += (summary.empty() ? "" : ", ") + r.file_stem() + " " + (r.metadata.count("verdict") ? r.metadata.at("verdict") : std::string("?")) + " (slope " +
                   num(value(r.measurements, "log2_slope")) + ")";
    return from_reports(reports, summary);
}

Outcome averaging() {
    AveragingExperiment e;
    e.s = 0.4;
    e.p = 1.5;
    e.ell = 2;
    e.alpha = 0.5;
    e.n_mc = 100;
    e.h_values = {1.0 / 16, 1.0 / 32};
    e.stability_tolerance = 0.1;
    e.c_avg_factor = 2.0;
    e.self_test_samples = 100'000;
    e.self_test_tolerance = 0.02;
    e.control = true;
    e.control_h_values = {1.0 / 16, 1.0 / 32, 1.0 / 64};
    const auto r = run_averaging(e, context());
    return from_reports({r}, "self-test " + num(value(r.measurements, "self_test_estimate")) + ", drift " +
                                 num(value(r.measurements, "refinement_drift")) + ", control slope " +
                                 num(value(r.measurements, "control_slope")));
}

Outcome almost() {
    AlmostExperiment e;
    e.s = 0.4;
    e.p = 1.5;
    e.layout = "compact";
    e.n_min = 2;
    e.n_max = 6;
    e.rate_min = 2;
    e.rate_max = 7;
    e.rate_tolerance = 0.1;
    e.support_tolerance = 0.05;
    e.exponent_tolerance = 0.5;
    const auto r = run_almost(e, context());
    return from_reports({r}, "support " + num(value(r.measurements, "support_exponent")) + ", energy " +
                                 num(value(r.measurements, "energy_exponent")) + ", projected " +
                                 num(value(r.measurements, "projected_exponent")) + " (alpha " +
                                 num(value(r.constants, "alpha")) + ")");
}

Outcome diffeo() {
    GeometryExperiment e;
    e.lemma = "diffeo";
    e.ell = 2;
    e.diffeo_radius = 0.5;
    e.angular_step = 1e-3;
    const auto r = run_geometry(e, context());
    return from_reports({r}, "min jacobian " + num(value(r.measurements, "min_jacobian")));
}

/// Small suite covering every report-producing path that the determinism check compares.
RunConfig determinism_config(const std::filesystem::path& dir) {
    RunConfig c;
    c.output_dir = dir.string();
    c.seed = 424242;
    SeminormExperiment s;
    s.h = 1e-2;
    GeometryExperiment g;
    g.samples = 10'000;
    AveragingExperiment a;
    a.h_values = {1.0 / 8, 1.0 / 16};
    a.self_test_samples = 10'000;
    a.self_test_tolerance = 0.05;
    a.control_h_values = {1.0 / 8, 1.0 / 16};
    ThresholdExperiment t;
    t.cases = {{0.4, 2.5}};
    t.n_max = 3;
    t.cross_validate_max_n = 1;
    AlmostExperiment al;
    al.n_max = 4;
    c.experiments = {s, g, a, t, al};
    return c;
}

std::string read_without_timestamp(const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    if (f.extension() != ".json") return buf.str();
    std::string out, line;
    std::istringstream lines(buf.str());
    const std::string key = std::string("\"") + timestamp_key + "\"";
    while (std::getline(lines, line))
        if (line.find(key) == std::string::npos) out += line + "\n";
    return out;
}

Outcome determinism() {
    const auto root = std::filesystem::temp_directory_path() / "spl_acceptance_determinism";
    std::filesystem::remove_all(root);
    const auto a = run_suite(determinism_config(root / "a"));
    const auto b = run_suite(determinism_config(root / "b"));
    Outcome o{a.files.size() == b.files.size(), {}};
    std::size_t compared = 0;
    for (std::size_t i = 0; o.passed && i < a.files.size(); ++i) {
        if (a.files[i].extension() == ".svg") continue;
        ++compared;
        if (a.files[i].filename() != b.files[i].filename() ||
            read_without_timestamp(a.files[i]) != read_without_timestamp(b.files[i])) {
            o.passed = false;
            o.detail = a.files[i].filename().string() + " differs between runs";
        }
    }
    if (o.passed) o.detail = std::to_string(compared) + " CSV/JSON files byte-identical apart from the timestamp";
    std::filesystem::remove_all(root);
    return o;
}

} // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* title;
        double seconds; // runtime limit
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"AC1", "scaling law", 10, scaling_law},
        {"AC2", "indicator seminorm", 60, indicator},
        {"AC3", "chord identity", 30, chord_identity},
        {"AC4", "chord lemma constants", 60, lemma_constants},
        {"AC5", "patch uniformity and projected lower bound", 600, patch_uniformity},
        {"AC6", "threshold scan", 1200, threshold},
        {"AC7", "averaging", 600, averaging},
        {"AC8", "almost retraction", 600, almost},
        {"AC9", "restricted diffeomorphism", 5, diffeo},
        {"AC10", "determinism", 1200, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.seconds) {
            o.passed = false;
            o.detail += "; runtime " + num(secs) + " s over the " + num(c.seconds) + " s limit";
        }
        if (!o.passed) ++failed;
        std::printf("%s %s %s: %s [%.1f s]\n", o.passed ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
