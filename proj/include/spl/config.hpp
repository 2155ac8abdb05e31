#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "spl/error.hpp"

namespace spl {

// Per-experiment parameter blocks. Every block carries an optional name (file stem of its reports),
// a free-form description and an optional seed that falls back to the run seed.

struct SeminormExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    std::string test = "indicator"; // "indicator" or "scaling"
    double s = 0.25;
    double p = 2.0;
    double h = 1e-3;
    double domain_lo = -2.0, domain_hi = 3.0; // indicator of (0, 1) sampled on [lo, hi]
    double lambda = 0.5;                      // scaling: the dilation factor
    double tolerance = 0.15;
    bool operator==(const SeminormExperiment&) const = default;
};

struct PatchExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    double s = 0.4, p = 2.5;
    int ell = 2;
    std::vector<int> n_values = {1, 2, 3};
    std::vector<int> shift_levels = {1, 2};
    std::size_t shifts = 100;
    double uniformity_factor = 2.0;
    double lower_safety = 0.5; // random shifts must clear this fraction of the calibrated C'
    double nodes_per_unit = 8.0;
    bool operator==(const PatchExperiment&) const = default;
};

struct LayerExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    double s = 0.4, p = 2.5;
    int ell = 2;
    std::vector<int> n_values = {1};
    bool direct = true; // integrate the glued layer and compare with the compositional upper bound
    bool operator==(const LayerExperiment&) const = default;
};

struct GeometryExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    std::string lemma = "geom1"; // "geom1", "geom2", "chord" or "diffeo"
    int ell = 2;
    std::size_t samples = 100000;
    int n_min = 1, n_max = 8;
    double spread_tolerance = 0.1;
    double identity_tolerance = 1e-12;
    double diffeo_radius = 0.5;
    double angular_step = 1e-3;
    bool operator==(const GeometryExperiment&) const = default;
};

struct AveragingExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    double s = 0.4, p = 1.5;
    int ell = 2;
    double alpha = 0.5;
    std::size_t n_mc = 100;
    std::vector<double> h_values = {1.0 / 16, 1.0 / 32};
    double stability_tolerance = 0.1;
    double c_avg_factor = 2.0;
    double degenerate_fraction = 0.01;
    std::size_t self_test_samples = 100000;
    double self_test_tolerance = 0.02;
    bool control = true; // s = 1, p = l on the identity: drift against log(1/h)
    std::vector<double> control_h_values = {1.0 / 16, 1.0 / 32, 1.0 / 64};
    bool operator==(const AveragingExperiment&) const = default;
};

struct ThresholdCase {
    double s = 0.4, p = 2.5;
    bool operator==(const ThresholdCase&) const = default;
};

struct ThresholdExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    std::vector<ThresholdCase> cases = {{0.4, 2.5}, {0.4, 1.5}, {0.5, 2.0}};
    int ell = 2;
    int n_min = 1, n_max = 6;
    int cross_validate_max_n = 2;
    double diverge_slope = 0.25;
    double slope_tolerance = 0.5;
    double upper_factor = 3.0;
    double lower_tolerance = 0.5;
    bool operator==(const ThresholdExperiment&) const = default;
};

struct AlmostExperiment {
    std::string name, description;
    std::optional<std::uint64_t> seed;
    double s = 0.4, p = 1.5;
    std::string layout = "compact"; // "unit" or "compact"
    int n_min = 2, n_max = 6;
    std::size_t grid_points = 21;
    int rate_min = 2, rate_max = 7; // epsilon = 2^{-j} for the rate sweep
    double rate_tolerance = 0.1;
    double support_tolerance = 0.05; // relative
    double exponent_tolerance = 0.5;
    bool operator==(const AlmostExperiment&) const = default;
};

using ExperimentConfig = std::variant<SeminormExperiment, PatchExperiment, LayerExperiment, GeometryExperiment,
                                      AveragingExperiment, ThresholdExperiment, AlmostExperiment>;

inline const char* experiment_kind(const ExperimentConfig& e) {
    static constexpr const char* names[] = {"seminorm", "patch", "layer", "geometry", "averaging", "threshold", "almost"};
    return names[e.index()];
}

struct RunConfig {
    std::string description;
    std::string output_dir = "reports";
    std::uint64_t seed = 20240601;
    std::size_t node_budget = 4'000'000;
    int worker_count = 0; // 0: hardware concurrency, overridden by SPL_WORKERS
    std::vector<ExperimentConfig> experiments;
    bool operator==(const RunConfig&) const = default;
};

namespace detail {

static_assert(std::is_same_v<std::uint64_t, unsigned long> && std::is_same_v<std::size_t, unsigned long>,
              "seeds and counts share one JSON reader");

/// Reads the keys of one JSON object, remembering which were consumed so that leftovers can be
/// reported with their JSON pointer.
class ObjectReader {
public:
    ObjectReader(const nlohmann::json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
        if (!j_.is_object()) fail(ErrorKind::configuration, at() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, out, ptr_ + "/" + key);
    }

    /// Marks a key the caller parses itself.
    void claim(const char* key) { seen_.insert(key); }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) fail(ErrorKind::configuration, ptr_ + "/" + key + ": unknown key");
    }

    const std::string& pointer() const { return ptr_; }

private:
    std::string at() const { return ptr_.empty() ? "/" : ptr_; }

    static void read(const nlohmann::json& v, std::string& out, const std::string& p) {
        if (!v.is_string()) fail(ErrorKind::configuration, p + ": expected a string");
        out = v.get<std::string>();
    }
    static void read(const nlohmann::json& v, bool& out, const std::string& p) {
        if (!v.is_boolean()) fail(ErrorKind::configuration, p + ": expected a boolean");
        out = v.get<bool>();
    }
    static void read(const nlohmann::json& v, double& out, const std::string& p) {
        if (!v.is_number()) fail(ErrorKind::configuration, p + ": expected a number");
        out = v.get<double>();
    }
    static void read(const nlohmann::json& v, int& out, const std::string& p) {
        if (!v.is_number_integer()) fail(ErrorKind::configuration, p + ": expected an integer");
        out = v.get<int>();
    }
    static void read(const nlohmann::json& v, std::size_t& out, const std::string& p) {
        if (!v.is_number_unsigned()) fail(ErrorKind::configuration, p + ": expected a non-negative integer");
        out = v.get<std::size_t>();
    }
    template <class T>
    static void read(const nlohmann::json& v, std::optional<T>& out, const std::string& p) {
        T value{};
        read(v, value, p);
        out = value;
    }
    template <class T>
    static void read(const nlohmann::json& v, std::vector<T>& out, const std::string& p) {
        if (!v.is_array()) fail(ErrorKind::configuration, p + ": expected an array");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            T value{};
            read(v[i], value, p + "/" + std::to_string(i));
            out.push_back(std::move(value));
        }
    }
    static void read(const nlohmann::json& v, ThresholdCase& out, const std::string& p) {
        ObjectReader r(v, p);
        r.get("s", out.s);
        r.get("p", out.p);
        r.finish();
    }

    const nlohmann::json& j_;
    std::string ptr_;
    std::set<std::string> seen_;
};

template <class E>
void common_fields(ObjectReader& r, E& e) {
    r.get("name", e.name);
    r.get("description", e.description);
    r.get("seed", e.seed);
}

template <class E>
void common_fields(nlohmann::json& j, const E& e, const char* kind) {
    j["kind"] = kind;
    if (!e.name.empty()) j["name"] = e.name;
    if (!e.description.empty()) j["description"] = e.description;
    if (e.seed) j["seed"] = *e.seed;
}

inline void fields(ObjectReader& r, SeminormExperiment& e) {
    r.get("test", e.test);
    r.get("s", e.s);
    r.get("p", e.p);
    r.get("h", e.h);
    r.get("domain_lo", e.domain_lo);
    r.get("domain_hi", e.domain_hi);
    r.get("lambda", e.lambda);
    r.get("tolerance", e.tolerance);
}

inline void fields(ObjectReader& r, PatchExperiment& e) {
    r.get("s", e.s);
    r.get("p", e.p);
    r.get("ell", e.ell);
    r.get("n_values", e.n_values);
    r.get("shift_levels", e.shift_levels);
    r.get("shifts", e.shifts);
    r.get("uniformity_factor", e.uniformity_factor);
    r.get("lower_safety", e.lower_safety);
    r.get("nodes_per_unit", e.nodes_per_unit);
}

inline void fields(ObjectReader& r, LayerExperiment& e) {
    r.get("s", e.s);
    r.get("p", e.p);
    r.get("ell", e.ell);
    r.get("n_values", e.n_values);
    r.get("direct", e.direct);
}

inline void fields(ObjectReader& r, GeometryExperiment& e) {
    r.get("lemma", e.lemma);
    r.get("ell", e.ell);
    r.get("samples", e.samples);
    r.get("n_min", e.n_min);
    r.get("n_max", e.n_max);
    r.get("spread_tolerance", e.spread_tolerance);
    r.get("identity_tolerance", e.identity_tolerance);
    r.get("diffeo_radius", e.diffeo_radius);
    r.get("angular_step", e.angular_step);
}

inline void fields(ObjectReader& r, AveragingExperiment& e) {
    r.get("s", e.s);
    r.get("p", e.p);
    r.get("ell", e.ell);
    r.get("alpha", e.alpha);
    r.get("n_mc", e.n_mc);
    r.get("h_values", e.h_values);
    r.get("stability_tolerance", e.stability_tolerance);
    r.get("c_avg_factor", e.c_avg_factor);
    r.get("degenerate_fraction", e.degenerate_fraction);
    r.get("self_test_samples", e.self_test_samples);
    r.get("self_test_tolerance", e.self_test_tolerance);
    r.get("control", e.control);
    r.get("control_h_values", e.control_h_values);
}

inline void fields(ObjectReader& r, ThresholdExperiment& e) {
    r.get("cases", e.cases);
    r.get("ell", e.ell);
    r.get("n_min", e.n_min);
    r.get("n_max", e.n_max);
    r.get("cross_validate_max_n", e.cross_validate_max_n);
    r.get("diverge_slope", e.diverge_slope);
    r.get("slope_tolerance", e.slope_tolerance);
    r.get("upper_factor", e.upper_factor);
    r.get("lower_tolerance", e.lower_tolerance);
}

inline void fields(ObjectReader& r, AlmostExperiment& e) {
    r.get("s", e.s);
    r.get("p", e.p);
    r.get("layout", e.layout);
    r.get("n_min", e.n_min);
    r.get("n_max", e.n_max);
    r.get("grid_points", e.grid_points);
    r.get("rate_min", e.rate_min);
    r.get("rate_max", e.rate_max);
    r.get("rate_tolerance", e.rate_tolerance);
    r.get("support_tolerance", e.support_tolerance);
    r.get("exponent_tolerance", e.exponent_tolerance);
}

inline void check_one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& ptr) {
    for (const char* a : allowed)
        if (value == a) return;
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
    fail(ErrorKind::configuration, ptr + ": expected one of " + list + ", got \"" + value + "\"");
}

/// Range checks that the schema alone cannot express.
inline void validate_block(const ExperimentConfig& cfg, const std::string& ptr) {
    auto positive = [&](double v, const char* key) {
        if (!(v > 0.0)) fail(ErrorKind::configuration, ptr + "/" + key + ": must be positive");
    };
    std::visit(
        [&](const auto& e) {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, SeminormExperiment>) {
                check_one_of(e.test, {"indicator", "scaling"}, ptr + "/test");
                positive(e.h, "h");
                positive(e.lambda, "lambda");
                if (!(e.domain_lo < 0.0 && e.domain_hi > 1.0))
                    fail(ErrorKind::configuration, ptr + "/domain_lo: the domain must contain [0, 1]");
            } else if constexpr (std::is_same_v<E, GeometryExperiment>) {
                check_one_of(e.lemma, {"geom1", "geom2", "chord", "diffeo"}, ptr + "/lemma");
                if (e.n_min < 1 || e.n_max < e.n_min) fail(ErrorKind::configuration, ptr + "/n_max: invalid scale range");
                positive(e.angular_step, "angular_step");
            } else if constexpr (std::is_same_v<E, AveragingExperiment>) {
                positive(e.alpha, "alpha");
                if (e.n_mc < 100) fail(ErrorKind::configuration, ptr + "/n_mc: at least 100 shifts are required");
                if (e.h_values.size() < 2) fail(ErrorKind::configuration, ptr + "/h_values: need two spacings");
                for (double h : e.h_values) positive(h, "h_values");
            } else if constexpr (std::is_same_v<E, ThresholdExperiment>) {
                if (e.cases.empty()) fail(ErrorKind::configuration, ptr + "/cases: at least one case is required");
                if (e.n_min < 1 || e.n_max < e.n_min + 1)
                    fail(ErrorKind::configuration, ptr + "/n_max: need at least two scale indices");
            } else if constexpr (std::is_same_v<E, AlmostExperiment>) {
                check_one_of(e.layout, {"unit", "compact"}, ptr + "/layout");
                if (e.n_min < 1 || e.n_max < e.n_min + 1)
                    fail(ErrorKind::configuration, ptr + "/n_max: need at least two scale indices");
            } else if constexpr (std::is_same_v<E, PatchExperiment>) {
                if (e.n_values.empty()) fail(ErrorKind::configuration, ptr + "/n_values: empty");
            }
        },
        cfg);
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& ptr) {
    if (!j.is_object()) fail(ErrorKind::configuration, ptr + ": expected an object");
    const auto it = j.find("kind");
    if (it == j.end() || !it->is_string()) fail(ErrorKind::configuration, ptr + "/kind: missing experiment kind");
    const std::string kind = it->get<std::string>();
    ObjectReader r(j, ptr);
    r.claim("kind");
    auto load = [&](auto e) -> ExperimentConfig {
        common_fields(r, e);
        fields(r, e);
        r.finish();
        return e;
    };
    ExperimentConfig out;
    if (kind == "seminorm") out = load(SeminormExperiment{});
    else if (kind == "patch") out = load(PatchExperiment{});
    else if (kind == "layer") out = load(LayerExperiment{});
    else if (kind == "geometry") out = load(GeometryExperiment{});
    else if (kind == "averaging") out = load(AveragingExperiment{});
    else if (kind == "threshold") out = load(ThresholdExperiment{});
    else if (kind == "almost") out = load(AlmostExperiment{});
    else fail(ErrorKind::configuration, ptr + "/kind: unknown experiment kind \"" + kind + "\"");
    validate_block(out, ptr);
    return out;
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    std::visit(
        [&](const auto& e) {
            using E = std::decay_t<decltype(e)>;
            common_fields(j, e, experiment_kind(cfg));
            if constexpr (std::is_same_v<E, SeminormExperiment>) {
                j.update({{"test", e.test}, {"s", e.s}, {"p", e.p}, {"h", e.h}, {"domain_lo", e.domain_lo},
                          {"domain_hi", e.domain_hi}, {"lambda", e.lambda}, {"tolerance", e.tolerance}});
            } else if constexpr (std::is_same_v<E, PatchExperiment>) {
                j.update({{"s", e.s}, {"p", e.p}, {"ell", e.ell}, {"n_values", e.n_values},
                          {"shift_levels", e.shift_levels}, {"shifts", e.shifts},
                          {"uniformity_factor", e.uniformity_factor}, {"lower_safety", e.lower_safety},
                          {"nodes_per_unit", e.nodes_per_unit}});
            } else if constexpr (std::is_same_v<E, LayerExperiment>) {
                j.update({{"s", e.s}, {"p", e.p}, {"ell", e.ell}, {"n_values", e.n_values}, {"direct", e.direct}});
            } else if constexpr (std::is_same_v<E, GeometryExperiment>) {
                j.update({{"lemma", e.lemma}, {"ell", e.ell}, {"samples", e.samples}, {"n_min", e.n_min},
                          {"n_max", e.n_max}, {"spread_tolerance", e.spread_tolerance},
                          {"identity_tolerance", e.identity_tolerance}, {"diffeo_radius", e.diffeo_radius},
                          {"angular_step", e.angular_step}});
            } else if constexpr (std::is_same_v<E, AveragingExperiment>) {
                j.update({{"s", e.s}, {"p", e.p}, {"ell", e.ell}, {"alpha", e.alpha}, {"n_mc", e.n_mc},
                          {"h_values", e.h_values}, {"stability_tolerance", e.stability_tolerance},
                          {"c_avg_factor", e.c_avg_factor}, {"degenerate_fraction", e.degenerate_fraction},
                          {"self_test_samples", e.self_test_samples}, {"self_test_tolerance", e.self_test_tolerance},
                          {"control", e.control}, {"control_h_values", e.control_h_values}});
            } else if constexpr (std::is_same_v<E, ThresholdExperiment>) {
                auto cases = nlohmann::json::array();
                for (const auto& c : e.cases) cases.push_back({{"s", c.s}, {"p", c.p}});
                j.update({{"cases", cases}, {"ell", e.ell}, {"n_min", e.n_min}, {"n_max", e.n_max},
                          {"cross_validate_max_n", e.cross_validate_max_n}, {"diverge_slope", e.diverge_slope},
                          {"slope_tolerance", e.slope_tolerance}, {"upper_factor", e.upper_factor},
                          {"lower_tolerance", e.lower_tolerance}});
            } else {
                j.update({{"s", e.s}, {"p", e.p}, {"layout", e.layout}, {"n_min", e.n_min}, {"n_max", e.n_max},
                          {"grid_points", e.grid_points}, {"rate_min", e.rate_min}, {"rate_max", e.rate_max},
                          {"rate_tolerance", e.rate_tolerance}, {"support_tolerance", e.support_tolerance},
                          {"exponent_tolerance", e.exponent_tolerance}});
            }
        },
        cfg);
    return j;
}

} // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::ObjectReader r(j, "");
    r.get("description", c.description);
    r.get("output_dir", c.output_dir);
    r.get("seed", c.seed);
    r.get("node_budget", c.node_budget);
    r.get("worker_count", c.worker_count);
    r.claim("experiments");
    r.finish();
    if (c.worker_count < 0) fail(ErrorKind::configuration, "/worker_count: must not be negative");
    if (c.node_budget == 0) fail(ErrorKind::configuration, "/node_budget: must be positive");
    if (const auto it = j.find("experiments"); it != j.end()) {
        if (!it->is_array()) fail(ErrorKind::configuration, "/experiments: expected an array");
        for (std::size_t i = 0; i < it->size(); ++i)
            c.experiments.push_back(detail::experiment_from_json((*it)[i], "/experiments/" + std::to_string(i)));
    }
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    if (!c.description.empty()) j["description"] = c.description;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    j["node_budget"] = c.node_budget;
    j["worker_count"] = c.worker_count;
    auto list = nlohmann::json::array();
    for (const auto& e : c.experiments) list.push_back(detail::experiment_to_json(e));
    j["experiments"] = list;
    return j;
}

inline RunConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::configuration, std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::io, "cannot read config " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

/// Seed of one experiment: its own when given, otherwise the run seed.
template <class E>
std::uint64_t effective_seed(const E& e, const RunConfig& run) {
    return e.seed.value_or(run.seed);
}

} // namespace spl
