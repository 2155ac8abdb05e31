#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spl/error.hpp"

namespace spl {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct ReportRow {
    double n_or_eps = 0.0;
    double upper = 0.0;
    double lower = 0.0;
    double slope = std::numeric_limits<double>::quiet_NaN(); // local slope of log2 ratio; NaN on the first row
    std::string verdict;

    double ratio() const { return lower / upper; }
    double log2_ratio() const { return std::log2(ratio()); }
};

struct Assertion {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ExperimentReport {
    std::string experiment; // kind, e.g. "threshold"
    std::string name;       // label used for file names; defaults to the kind
    std::optional<double> s, p;
    int ell = 2;
    std::vector<ReportRow> rows;
    std::map<std::string, double> constants;
    std::map<std::string, double> measurements;
    std::map<std::string, std::string> metadata;
    std::vector<Assertion> assertions;

    bool passed() const {
        for (const auto& a : assertions)
            if (!a.passed) return false;
        return true;
    }
    void check(std::string what, bool ok, std::string detail = {}) {
        assertions.push_back({std::move(what), ok, std::move(detail)});
    }
    /// `<name>-<s>-<p>` or just the name when the experiment has no (s, p).
    std::string file_stem() const {
        std::string stem = name.empty() ? experiment : name;
        if (s && p) stem += "-" + format_double(*s) + "-" + format_double(*p);
        return stem;
    }
};

/// Fills the per-row local slopes log2(R_n / R_{n-1}) / (n - n_prev).
inline void fill_local_slopes(std::vector<ReportRow>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i].slope = i == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : (rows[i].log2_ratio() - rows[i - 1].log2_ratio()) /
                                     (rows[i].n_or_eps - rows[i - 1].n_or_eps);
}

inline std::string report_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "n_or_eps,upper,lower,ratio,log2_ratio,slope,verdict\n";
    for (const auto& row : r.rows) {
        out << format_double(row.n_or_eps) << ',' << format_double(row.upper) << ',' << format_double(row.lower)
            << ',' << format_double(row.ratio()) << ',' << format_double(row.log2_ratio()) << ','
            << (std::isnan(row.slope) ? std::string() : format_double(row.slope)) << ',' << row.verdict << '\n';
    }
    return out.str();
}

namespace detail {

/// JSON has no NaN or infinity; those become null.
inline nlohmann::json json_number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

/// Key holding the generation time; the only field allowed to differ between identical runs.
inline constexpr const char* timestamp_key = "generated_at";

inline nlohmann::json report_json(const ExperimentReport& r, bool with_timestamp = true) {
    using nlohmann::json;
    json j;
    j["experiment"] = r.experiment;
    j["name"] = r.name.empty() ? r.experiment : r.name;
    j["s"] = r.s ? json(*r.s) : json(nullptr);
    j["p"] = r.p ? json(*r.p) : json(nullptr);
    j["ell"] = r.ell;
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"n_or_eps", detail::json_number(row.n_or_eps)},
                        {"upper", detail::json_number(row.upper)},
                        {"lower", detail::json_number(row.lower)},
                        {"ratio", detail::json_number(row.ratio())},
                        {"log2_ratio", detail::json_number(row.log2_ratio())},
                        {"slope", detail::json_number(row.slope)},
                        {"verdict", row.verdict}});
    j["rows"] = rows;
    json constants = json::object(), measurements = json::object();
    for (const auto& [k, v] : r.constants) constants[k] = detail::json_number(v);
    for (const auto& [k, v] : r.measurements) measurements[k] = detail::json_number(v);
    j["constants"] = constants;
    j["measurements"] = measurements;
    j["metadata"] = r.metadata;
    json asserts = json::array();
    for (const auto& a : r.assertions) asserts.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
    j["assertions"] = asserts;
    j["passed"] = r.passed();
    if (with_timestamp) j[timestamp_key] = detail::utc_timestamp();
    return j;
}

/// Polyline plot of log2 ratio against n_or_eps with labelled axes.
inline std::string report_svg(const ExperimentReport& r) {
    constexpr double W = 480, H = 320, L = 64, R = 16, T = 32, B = 48;
    std::vector<std::pair<double, double>> pts;
    for (const auto& row : r.rows) {
        const double y = row.log2_ratio();
        if (std::isfinite(row.n_or_eps) && std::isfinite(y)) pts.emplace_back(row.n_or_eps, y);
    }
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!pts.empty()) {
        x0 = x1 = pts[0].first;
        y0 = y1 = pts[0].second;
        for (const auto& [x, y] : pts) x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << r.file_stem() << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">n</text>\n";
    o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">log2 ratio</text>\n";
    for (double v : {x0, x1})
        o << "<text x=\"" << num(px(v)) << "\" y=\"" << H - B + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << num(v) << "</text>\n";
    for (double v : {y0, y1})
        o << "<text x=\"" << L - 4 << "\" y=\"" << num(py(v) + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(v) << "</text>\n";
    if (!pts.empty()) {
        o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            o << (i ? " " : "") << num(px(pts[i].first)) << ',' << num(py(pts[i].second));
        o << "\"/>\n";
    }
    o << "</svg>\n";
    return o.str();
}

enum class ReportFormat { csv, json, svg };

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    f << text;
    f.close();
    if (!f) fail(ErrorKind::io, "failed to write " + path.string());
}

} // namespace detail

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.svg` into `dir`, returning the paths written.
inline std::vector<std::filesystem::path> emit_report(const ExperimentReport& r, const std::filesystem::path& dir,
                                                      const std::vector<ReportFormat>& formats = {
                                                          ReportFormat::csv, ReportFormat::json, ReportFormat::svg}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) fail(ErrorKind::io, "cannot create output directory " + dir.string());
    std::vector<std::filesystem::path> written;
    for (auto f : formats) {
        const std::string ext = f == ReportFormat::csv ? ".csv" : f == ReportFormat::json ? ".json" : ".svg";
        const auto path = dir / (r.file_stem() + ext);
        const std::string text = f == ReportFormat::csv    ? report_csv(r)
                                 : f == ReportFormat::json ? report_json(r).dump(2) + "\n"
                                                           : report_svg(r);
        detail::write_file(path, text);
        written.push_back(path);
    }
    return written;
}

} // namespace spl
