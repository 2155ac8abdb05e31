#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spl/almost_retraction.hpp"
#include "spl/chord_geometry.hpp"
#include "spl/compositional.hpp"
#include "spl/config.hpp"
#include "spl/counterexample.hpp"
#include "spl/energy.hpp"
#include "spl/fit.hpp"
#include "spl/profiles.hpp"
#include "spl/report.hpp"
#include "spl/sphere_projection.hpp"

// Experiment runners. Each one turns a parameter block into one or more reports whose rows carry a
// reference value in `upper` and the measured value in `lower`, so `ratio` is measured/reference.
// Threshold reports follow the bound convention instead: upper energy bound and infimum of the
// projected lower bound.

namespace spl {

/// Settings shared by every experiment of a run.
struct RunContext {
    std::uint64_t seed = 20240601;
    std::size_t node_budget = 4'000'000;
    int workers = 1;

    EnergyOptions energy(PairScheme scheme = PairScheme::exact) const {
        EnergyOptions o;
        o.scheme = scheme;
        o.workers = workers;
        return o;
    }
};

/// SPL_WORKERS wins over the configured count, which wins over the hardware concurrency.
inline int resolve_workers(int configured) {
    if (const char* env = std::getenv("SPL_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return configured > 0 ? configured : default_worker_count();
}

inline RunContext make_context(const RunConfig& cfg) {
    return {cfg.seed, cfg.node_budget, resolve_workers(cfg.worker_count)};
}

namespace detail {

inline ExperimentReport start_report(const char* kind, const std::string& name) {
    ExperimentReport r;
    r.experiment = kind;
    r.name = name.empty() ? kind : name;
    return r;
}

inline std::string fmt(double v) { return format_double(v); }

inline ReportRow row(double x, double upper, double lower, std::string verdict = {}) {
    return {x, upper, lower, std::numeric_limits<double>::quiet_NaN(), std::move(verdict)};
}

} // namespace detail

// ---------------------------------------------------------------------------------------------
// Seminorm checks

/// Gagliardo energy of the indicator of (0, 1) over pairs in [lo, hi]^2 (lo < 0, hi > 1). With
/// t = sp, integrating |x - y|^{-1-t} over y outside (0, 1) and then over x in (0, 1) gives
///   2 / (t (1 - t)) [2 - ((1 - lo)^{1-t} - (-lo)^{1-t}) - (hi^{1-t} - (hi - 1)^{1-t})],
/// which tends to 4 / (t (1 - t)) as the interval grows.
inline double indicator_energy(double sp, double lo, double hi) {
    require(sp > 0.0 && sp < 1.0, ErrorKind::configuration, "the indicator has finite energy only for sp < 1");
    require(lo < 0.0 && hi > 1.0, ErrorKind::configuration, "the interval must contain [0, 1]");
    const double e = 1.0 - sp;
    const double left = std::pow(1.0 - lo, e) - std::pow(-lo, e);
    const double right = std::pow(hi, e) - std::pow(hi - 1.0, e);
    return 2.0 / (sp * e) * (2.0 - left - right);
}

inline double indicator_energy_whole_line(double sp) { return 4.0 / (sp * (1.0 - sp)); }

inline ExperimentReport run_seminorm(const SeminormExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("seminorm", e.name);
    r.s = e.s;
    r.p = e.p;
    r.metadata["test"] = e.test;
    const FractionalParams params{e.s, e.p, 2};
    params.validate();
    const auto opt = ctx.energy();
    if (e.test == "indicator") {
        const auto g = make_grid(1, Box{{e.domain_lo}, {e.domain_hi}}, e.h);
        const auto u = sample_map(
            g, 1, [](auto x, auto out) { out[0] = (x[0] > 0.0 && x[0] < 1.0) ? 1.0 : 0.0; }, g.box(), {0.0});
        const auto val = gagliardo_energy(u, params, Region::whole(), opt);
        const double ref = indicator_energy(params.sp(), e.domain_lo, e.domain_hi);
        r.rows.push_back(detail::row(e.h, ref, val.value));
        r.measurements["energy"] = val.value;
        r.measurements["reference"] = ref;
        r.constants["whole_line_value"] = indicator_energy_whole_line(params.sp());
        r.metadata["scheme"] = val.scheme;
        r.check("indicator energy within tolerance of the truncated closed form",
                std::abs(val.value / ref - 1.0) <= e.tolerance,
                "measured " + detail::fmt(val.value) + ", reference " + detail::fmt(ref));
        return r;
    }
    // scaling: a smooth bump on [-1, 1] dilated by lambda
    const auto g = make_grid(1, Box{{-1.0}, {1.0}}, e.h);
    auto bump = [](double t) { return profile::cutoff(std::abs(t)); };
    const auto u = sample_map(g, 1, [&](auto x, auto out) { out[0] = bump(x[0]); }, g.box(), {0.0});
    const double e0 = gagliardo_energy(u, params, Region::whole(), opt).value;
    const double expected = std::pow(e.lambda, 1.0 - params.sp());
    const double e1 = gagliardo_energy(rescale_map(u, {{0.0}, e.lambda}), params, Region::whole(), opt).value;
    // resampled: the dilated bump evaluated afresh on a grid of the same spacing
    const auto g2 = make_grid(1, Box{{-e.lambda}, {e.lambda}}, e.h);
    const auto v = sample_map(g2, 1, [&](auto x, auto out) { out[0] = bump(x[0] / e.lambda); }, g2.box(), {0.0});
    const double e2 = gagliardo_energy(v, params, Region::whole(), opt).value;
    r.rows.push_back(detail::row(e.lambda, expected, e1 / e0));
    r.rows.push_back(detail::row(e.lambda, expected, e2 / e0));
    r.measurements["energy"] = e0;
    r.measurements["grid_transform_ratio"] = e1 / e0;
    r.measurements["resampled_ratio"] = e2 / e0;
    r.check("grid-transform ratio equals lambda^{m-sp}", std::abs(e1 / e0 / expected - 1.0) <= 1e-12,
            "ratio " + detail::fmt(e1 / e0) + ", expected " + detail::fmt(expected));
    r.check("resampled ratio within tolerance", std::abs(e2 / e0 / expected - 1.0) <= e.tolerance,
            "ratio " + detail::fmt(e2 / e0) + ", expected " + detail::fmt(expected));
    return r;
}

// ---------------------------------------------------------------------------------------------
// Chord geometry

struct ChordIdentityResult {
    double max_discrepancy = 0.0;
    std::size_t cases = 0;
    std::size_t skipped = 0; // shifts landing on c+ or c-
};

/// Law-of-cosines chord against the direct projection on random cases: c in [-1, 1]^l, a in
/// [-2, 2]^l, n in 1..8. Chunked generators keep the result independent of the worker count.
inline ChordIdentityResult chord_identity_check(std::size_t samples, std::size_t ell, std::uint64_t seed,
                                                int workers) {
    constexpr std::size_t chunks = 64;
    std::vector<std::size_t> skipped(chunks, 0);
    const auto worst = run_indexed(
        chunks,
        [&](std::size_t chunk) {
            std::seed_seq sq{seed, static_cast<std::uint64_t>(chunk), std::uint64_t{0xc0}};
            std::mt19937_64 g(sq);
            std::uniform_real_distribution<double> unit(-1.0, 1.0);
            std::uniform_int_distribution<int> scale(1, 8);
            double m = 0.0;
            for (std::size_t i = samples * chunk / chunks; i < samples * (chunk + 1) / chunks; ++i) {
                ChordCase k{Point(ell), scale(g), Point(ell)};
                for (auto& v : k.c) v = unit(g);
                for (auto& v : k.a) v = 2.0 * unit(g);
                if (!(k.x1() > 1e-9 && k.x2() > 1e-9)) {
                    ++skipped[chunk];
                    continue;
                }
                m = std::max(m, chord_exact(k).discrepancy());
            }
            return m;
        },
        workers);
    ChordIdentityResult out;
    out.max_discrepancy = *std::max_element(worst.begin(), worst.end());
    for (auto s : skipped) out.skipped += s;
    out.cases = samples - out.skipped;
    return out;
}

/// Shifts on circles of radius r_j = radius j / 8 (j = 0..8), 16 directions each.
inline std::vector<Point> diffeo_shift_set(double radius) {
    std::vector<Point> out{{0.0, 0.0}};
    for (int j = 1; j <= 8; ++j)
        for (int t = 0; t < 16; ++t) {
            const double r = radius * j / 8.0, phi = 2.0 * std::numbers::pi * t / 16.0 + 0.1 * j;
            out.push_back({r * std::cos(phi), r * std::sin(phi)});
        }
    return out;
}

inline ExperimentReport run_geometry(const GeometryExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("geometry", e.name.empty() ? "geometry-" + e.lemma : e.name);
    r.ell = e.ell;
    r.metadata["lemma"] = e.lemma;
    const auto ell = static_cast<std::size_t>(e.ell);
    const std::uint64_t seed = e.seed.value_or(ctx.seed);
    if (e.lemma == "chord") {
        const auto res = chord_identity_check(e.samples, ell, seed, ctx.workers);
        r.measurements["max_discrepancy"] = res.max_discrepancy;
        r.measurements["cases"] = static_cast<double>(res.cases);
        r.check("law of cosines matches the direct chord", res.max_discrepancy <= e.identity_tolerance,
                "max discrepancy " + detail::fmt(res.max_discrepancy) + " over " + std::to_string(res.cases) +
                    " cases");
        return r;
    }
    if (e.lemma == "diffeo") {
        require(e.ell == 2, ErrorKind::configuration, "the diffeomorphism check is implemented for l = 2");
        bool all = true;
        double min_jac = std::numeric_limits<double>::infinity();
        std::string first_failure;
        for (const auto& a : diffeo_shift_set(e.diffeo_radius)) {
            const auto rep = restricted_diffeo_check({a, e.diffeo_radius}, e.angular_step);
            min_jac = std::min(min_jac, rep.min_jacobian);
            if (!(rep.injective && rep.min_jacobian > 0.0)) {
                if (all) first_failure = format_point(a);
                all = false;
            }
        }
        r.measurements["min_jacobian"] = min_jac;
        r.check("P(. - a) restricted to the circle is a diffeomorphism for every tested shift", all,
                all ? "min jacobian " + detail::fmt(min_jac) : "fails at " + first_failure);
        return r;
    }
    const auto lemma = e.lemma == "geom1" ? ChordLemma::geom1 : ChordLemma::geom2;
    const auto est = estimate_constant(lemma, e.n_min, e.n_max, e.samples, seed, ell, ctx.workers);
    for (const auto& [n, v] : est.per_n) r.rows.push_back(detail::row(static_cast<double>(n), est.value, v));
    fill_local_slopes(r.rows);
    r.constants[e.lemma] = est.value;
    r.measurements["spread"] = est.spread();
    r.measurements["applicable"] = static_cast<double>(est.applicable);
    r.check("empirical constant is positive", est.value > 0.0, "min " + detail::fmt(est.value));
    r.check("per-scale minima vary less than the tolerance", est.spread() < e.spread_tolerance,
            "spread " + detail::fmt(est.spread()));
    return r;
}

// ---------------------------------------------------------------------------------------------
// Averaging over shifts

struct AveragingConfig {
    SampledMap u;
    Region region = Region::whole();
    FractionalParams params;
    double alpha = 0.5;
    std::size_t n_mc = 100;
    std::uint64_t seed = 1;
    double degenerate_fraction = default_degenerate_fraction;

    void validate() const {
        params.validate();
        require(n_mc >= 100, ErrorKind::configuration, "averaging needs at least 100 shifts");
        require(alpha > 0.0, ErrorKind::configuration, "alpha must be positive");
        require(u.nu == static_cast<std::size_t>(params.ell), ErrorKind::configuration,
                "the map must take values in R^l");
    }
};

struct AveragingResult {
    double mean_projected_energy = 0.0;
    double energy = 0.0; // of u itself
    double bound_ratio = 0.0;
    double sup_norm = 0.0;
    std::size_t used_shifts = 0;
    std::size_t degenerate_shifts = 0;
    std::vector<double> tail_edges;      // bin edges on energy / mean
    std::vector<std::size_t> tail_histogram; // counts per bin, one more bin than edges
    std::vector<double> energies;        // per used shift, in draw order
};

/// Energy used by the averaging check: Gagliardo for s < 1, central-difference Dirichlet at s = 1.
inline double averaging_energy(const SampledMap& v, const FractionalParams& params, const Region& region,
                               const EnergyOptions& opt) {
    if (params.s < 1.0) return gagliardo_energy(v, params, region, opt).value;
    return dirichlet_energy(v, params.p, region, opt).value;
}

/// Draws the shifts used by averaging_check, uniform in the ball of radius alpha.
inline std::vector<Point> averaging_shifts(std::size_t ell, double alpha, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::vector<Point> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_in_ball(ell, g, alpha));
    return out;
}

/// Monte Carlo mean over a in B_alpha of the energy of P o (u - a), divided by the energy of u.
inline AveragingResult averaging_check(const AveragingConfig& cfg, const EnergyOptions& opt = {}) {
    cfg.validate();
    AveragingResult out;
    for (std::size_t i = 0; i < cfg.u.grid.node_count(); ++i) out.sup_norm = std::max(out.sup_norm, norm(cfg.u.value(i)));
    out.energy = averaging_energy(cfg.u, cfg.params, cfg.region, opt);
    for (const auto& a : averaging_shifts(cfg.u.nu, cfg.alpha, cfg.n_mc, cfg.seed)) {
        try {
            const auto sp = shifted_projection(cfg.u, {a, cfg.alpha}, default_singular_threshold,
                                               cfg.degenerate_fraction);
            out.energies.push_back(averaging_energy(sp.map, cfg.params, sp.admissible(cfg.region), opt));
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::degenerate) throw;
            ++out.degenerate_shifts;
        }
    }
    require(10 * out.degenerate_shifts <= cfg.n_mc, ErrorKind::degenerate,
            std::to_string(out.degenerate_shifts) + " of " + std::to_string(cfg.n_mc) +
                " shifts hit the singular set too often; the map is degenerate");
    out.used_shifts = out.energies.size();
    out.mean_projected_energy = pairwise_sum(out.energies) / static_cast<double>(out.used_shifts);
    // a constant map has zero energy and, for almost every shift, a constant projection
    out.bound_ratio = out.energy > 0.0 ? out.mean_projected_energy / out.energy
                      : out.mean_projected_energy == 0.0 ? 0.0
                                                         : std::numeric_limits<double>::infinity();
    for (int j = -3; j <= 4; ++j) out.tail_edges.push_back(std::ldexp(1.0, j));
    out.tail_histogram.assign(out.tail_edges.size() + 1, 0);
    for (double v : out.energies) {
        const double t = out.mean_projected_energy > 0.0 ? v / out.mean_projected_energy : 0.0;
        const auto bin = std::upper_bound(out.tail_edges.begin(), out.tail_edges.end(), t) - out.tail_edges.begin();
        ++out.tail_histogram[static_cast<std::size_t>(bin)];
    }
    return out;
}

/// Monte Carlo estimate of the integral of |a|^{-p} over B_radius in R^ell, with its closed form
/// |S^{l-1}| radius^{l-p} / (l - p).
struct KernelSelfTest {
    double estimate = 0.0;
    double exact = 0.0;
    double relative_error() const { return std::abs(estimate / exact - 1.0); }
};

inline KernelSelfTest kernel_self_test(std::size_t ell, double p, double radius, std::size_t samples,
                                       std::uint64_t seed) {
    require(p < static_cast<double>(ell), ErrorKind::configuration, "|a|^{-p} is integrable only for p < l");
    const double l = static_cast<double>(ell);
    const double ball = std::pow(std::numbers::pi, l / 2.0) / std::tgamma(l / 2.0 + 1.0) * std::pow(radius, l);
    std::mt19937_64 g(seed);
    std::vector<double> values(samples);
    for (auto& v : values) v = std::pow(norm(random_in_ball(ell, g, radius)), -p);
    KernelSelfTest t;
    t.estimate = ball * pairwise_sum(values) / static_cast<double>(samples);
    t.exact = l * std::pow(std::numbers::pi, l / 2.0) / std::tgamma(l / 2.0 + 1.0) * std::pow(radius, l - p) / (l - p);
    return t;
}

/// The identity of R^l sampled on [-1, 1]^l with spacing h.
inline SampledMap identity_map(std::size_t ell, double h) {
    const auto g = make_grid(ell, Box::cube(ell, 1.0), h);
    return sample_map(
        g, ell, [](auto x, auto out) { std::copy(x.begin(), x.end(), out.begin()); }, g.box(), Point(ell, 0.0));
}

inline ExperimentReport run_averaging(const AveragingExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("averaging", e.name);
    r.s = e.s;
    r.p = e.p;
    r.ell = e.ell;
    const auto ell = static_cast<std::size_t>(e.ell);
    const std::uint64_t seed = e.seed.value_or(ctx.seed);
    const auto opt = ctx.energy();

    const auto self = kernel_self_test(ell, 1.0, 2.0, e.self_test_samples, seed ^ 0x5e1f);
    r.measurements["self_test_estimate"] = self.estimate;
    r.measurements["self_test_exact"] = self.exact;
    r.check("kernel self-test within tolerance", self.relative_error() <= e.self_test_tolerance,
            "estimate " + detail::fmt(self.estimate) + ", exact " + detail::fmt(self.exact));

    // same shifts at every spacing, so the refinement comparison is not swamped by sampling noise
    auto run_at = [&](double h, const FractionalParams& params) {
        AveragingConfig cfg{identity_map(ell, h), Region::in_ball(Point(ell, 0.0), 1.0), params,
                            e.alpha,                e.n_mc,                                 seed,
                            e.degenerate_fraction};
        return averaging_check(cfg, opt);
    };
    const FractionalParams params{e.s, e.p, e.ell};
    std::vector<double> ratios;
    for (double h : e.h_values) {
        const auto res = run_at(h, params);
        r.rows.push_back(detail::row(h, res.energy, res.mean_projected_energy));
        ratios.push_back(res.bound_ratio);
        r.measurements["sup_norm"] = res.sup_norm;
        r.measurements["degenerate_shifts"] = static_cast<double>(res.degenerate_shifts);
        for (std::size_t b = 0; b < res.tail_histogram.size(); ++b)
            r.measurements["tail_bin_" + std::to_string(b)] = static_cast<double>(res.tail_histogram[b]);
    }
    const double c_avg = ratios.front(); // identity at the coarsest spacing is the calibration map
    r.constants["c_avg"] = c_avg;
    r.measurements["bound_ratio"] = ratios.back();
    if (params.p < static_cast<double>(params.ell)) {
        const double drift = std::abs(ratios.back() / ratios[ratios.size() - 2] - 1.0);
        r.measurements["refinement_drift"] = drift;
        r.check("bound ratio stable under halving of h", drift <= e.stability_tolerance,
                "relative change " + detail::fmt(drift));
        r.check("bound ratio below c_avg_factor times C_avg", ratios.back() <= e.c_avg_factor * c_avg,
                "ratio " + detail::fmt(ratios.back()) + ", C_avg " + detail::fmt(c_avg));
    }
    if (e.control) {
        const FractionalParams control{1.0, static_cast<double>(e.ell), e.ell};
        std::vector<double> logs, cr;
        for (double h : e.control_h_values) {
            const auto res = run_at(h, control);
            logs.push_back(std::log(1.0 / h));
            cr.push_back(res.bound_ratio);
        }
        const double slope = fit_slope(logs, cr);
        r.measurements["control_slope"] = slope;
        r.measurements["control_bound_ratio"] = cr.back();
        r.check("control at p = l drifts upward against log(1/h)", slope > 0.0, "slope " + detail::fmt(slope));
    }
    return r;
}

// ---------------------------------------------------------------------------------------------
// Patches and layers

inline CalibrationOptions calibration_options(std::uint64_t seed, const RunContext& ctx, double nodes_per_unit = 8.0) {
    CalibrationOptions cal;
    cal.seed = seed;
    cal.resolution.nodes_per_unit = nodes_per_unit;
    cal.resolution.node_budget = ctx.node_budget;
    cal.energy = ctx.energy(PairScheme::treecode);
    return cal;
}

inline void record_constants(ExperimentReport& r, const CompositionalConstants& k) {
    r.constants["c_prime"] = k.c_prime;
    r.constants["basic_energy"] = k.basic_energy;
    r.constants["collar_energy"] = k.collar_energy;
    r.constants["cluster_factor"] = k.cluster_factor;
    r.constants["glue_factor"] = k.glue_factor;
}

inline ExperimentReport run_patch(const PatchExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("patch", e.name);
    r.s = e.s;
    r.p = e.p;
    r.ell = e.ell;
    const FractionalParams params{e.s, e.p, e.ell};
    params.validate();
    const std::uint64_t seed = e.seed.value_or(ctx.seed);
    const auto cal = calibration_options(seed, ctx, e.nodes_per_unit);
    const auto rec = measure_constants(params, cal);
    const auto& k = rec.constants;
    record_constants(r, k);
    r.metadata["scheme"] = "treecode";

    const auto ell = static_cast<std::size_t>(e.ell);
    std::mt19937_64 g(seed ^ 0x9a7c);
    const Point c = random_in_ball(ell, g);
    std::map<int, double> projected_min;
    for (int n : e.shift_levels) {
        const auto cloud = projected_region_cloud(n, params, cal.resolution);
        std::vector<Point> cs, as;
        for (std::size_t i = 0; i < e.shifts; ++i) {
            cs.push_back(random_in_ball(ell, g));
            as.push_back(random_in_ball(ell, g));
        }
        // ratios are computed serially over shifts; the energy itself uses the workers
        double worst = std::numeric_limits<double>::infinity(), worst_energy = 0.0;
        for (std::size_t i = 0; i < e.shifts; ++i) {
            double energy = 0.0;
            const double ratio = projected_lower_ratio(cloud, n, params, cs[i], as[i], cal.energy, &energy);
            if (ratio < worst) worst = ratio, worst_energy = energy;
        }
        projected_min[n] = worst_energy;
        r.measurements["min_lower_ratio_n" + std::to_string(n)] = worst;
        r.check("projected lower bound with measured C' holds at n = " + std::to_string(n),
                worst >= e.lower_safety * k.c_prime,
                "min ratio " + detail::fmt(worst) + " against " + detail::fmt(e.lower_safety) + " C' = " +
                    detail::fmt(e.lower_safety * k.c_prime));
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int n : e.n_values) {
        const double energy = patch_energy(make_patch_spec(c, n, params), PatchStage::full, cal.resolution, cal.energy);
        lo = std::min(lo, energy);
        hi = std::max(hi, energy);
        const auto it = projected_min.find(n);
        r.rows.push_back(detail::row(n, energy,
                                     it == projected_min.end() ? std::numeric_limits<double>::quiet_NaN() : it->second));
    }
    r.measurements["energy_spread_factor"] = hi / lo;
    r.check("patch energies uniform in n within the factor", hi / lo <= e.uniformity_factor,
            "max / min " + detail::fmt(hi / lo));
    return r;
}

/// Direct whole-space energy of P o (v_n - a) for the glued layer, with the exterior value P(-a).
inline double layer_projected_energy(const LayerSpec& layer, const FractionalParams& params, std::span<const double> a,
                                     const PatchResolution& res, const EnergyOptions& opt) {
    const double margin = 2.0;
    const auto q = shifted_projection(layer_quadrature(layer, params, res, margin), a);
    Point outside(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) outside[i] = -a[i];
    return gagliardo_energy_whole_space(q, params, Box::cube(layer.ell, layer.half_side() + margin), project(outside),
                                        opt)
        .value;
}

/// Shift used for the direct lower-bound check: the infimum's argmin moved 1% of the way towards the
/// centre of its cube, so that the exterior value P(-a) is defined even when the argmin is 0.
inline Point cross_validation_shift(const LayerSpec& layer, const Point& argmin) {
    const auto& c = layer.centres[containing_cube(layer, argmin)];
    Point a = argmin;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += 0.01 * (c[i] - a[i]);
    return a;
}

struct LayerCheck {
    double upper = 0.0, direct = 0.0;
    double lower = 0.0, direct_projected = 0.0;
};

inline LayerCheck cross_validate_layer(const LayerSpec& layer, const CompositionalConstants& k, const Point& argmin,
                                       const CalibrationOptions& cal, std::optional<double> known_direct = {}) {
    LayerCheck out;
    out.upper = compositional_upper(layer, k).value;
    out.direct = known_direct ? *known_direct : layer_energy(layer, k.params, cal.resolution, cal.energy);
    const Point a = cross_validation_shift(layer, argmin);
    out.lower = compositional_lower(layer, k, a).value;
    out.direct_projected = layer_projected_energy(layer, k.params, a, cal.resolution, cal.energy);
    return out;
}

inline void check_layer(ExperimentReport& r, int n, const LayerCheck& c, double upper_factor, double lower_tolerance) {
    const std::string at = " at n = " + std::to_string(n);
    r.measurements["direct_energy_n" + std::to_string(n)] = c.direct;
    r.measurements["direct_projected_n" + std::to_string(n)] = c.direct_projected;
    r.check("compositional upper bounds the direct energy" + at, c.upper >= c.direct * (1.0 - 1e-9),
            "upper " + detail::fmt(c.upper) + ", direct " + detail::fmt(c.direct));
    r.check("compositional upper within the factor of the direct energy" + at, c.upper <= upper_factor * c.direct,
            "upper / direct " + detail::fmt(c.upper / c.direct));
    r.check("compositional lower below the direct projected energy" + at,
            c.lower <= (1.0 + lower_tolerance) * c.direct_projected,
            "lower " + detail::fmt(c.lower) + ", direct projected " + detail::fmt(c.direct_projected));
}

inline ExperimentReport run_layer(const LayerExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("layer", e.name);
    r.s = e.s;
    r.p = e.p;
    r.ell = e.ell;
    const FractionalParams params{e.s, e.p, e.ell};
    const auto cal = calibration_options(e.seed.value_or(ctx.seed), ctx);
    const auto rec = measure_constants(params, cal);
    record_constants(r, rec.constants);
    for (int n : e.n_values) {
        const auto layer = make_layer_spec(n, static_cast<std::size_t>(e.ell));
        const auto inf = compositional_inf_lower(layer, rec.constants, ctx.workers);
        const double upper = compositional_upper(layer, rec.constants).value;
        r.rows.push_back(detail::row(n, upper, inf.value));
        if (e.direct) check_layer(r, n, cross_validate_layer(layer, rec.constants, inf.argmin, cal), 3.0, 0.5);
    }
    fill_local_slopes(r.rows);
    return r;
}

// ---------------------------------------------------------------------------------------------
// Threshold scan

/// "diverges" when the log2 slope reaches the threshold; at p = l a positive linear drift of R_n
/// marks the logarithmic case; otherwise "bounded".
inline std::string threshold_verdict(double log2_slope, double linear_slope, double p, int ell, double diverge_slope) {
    if (log2_slope >= diverge_slope) return "diverges";
    if (p == static_cast<double>(ell) && linear_slope > 0.0) return "marginal-logarithmic";
    return "bounded";
}

inline std::string expected_verdict(double p, int ell) {
    const double l = static_cast<double>(ell);
    return p > l ? "diverges" : p == l ? "marginal-logarithmic" : "bounded";
}

inline ExperimentReport run_threshold_case(const ThresholdExperiment& e, const ThresholdCase& tc, const RunContext& ctx) {
    auto r = detail::start_report("threshold", e.name);
    r.s = tc.s;
    r.p = tc.p;
    r.ell = e.ell;
    const FractionalParams params{tc.s, tc.p, e.ell};
    params.validate();
    if (!params.regime_sp_lt_ell())
        fail(ErrorKind::configuration, "threshold case s = " + detail::fmt(tc.s) + ", p = " + detail::fmt(tc.p) +
                                           " violates sp < l");
    const auto ell = static_cast<std::size_t>(e.ell);
    auto cal = calibration_options(e.seed.value_or(ctx.seed), ctx);
    const auto rec = measure_constants(params, cal);
    const auto& k = rec.constants;
    record_constants(r, k);
    r.metadata["upper_scheme"] = "compositional/upper";
    r.metadata["lower_scheme"] = compositional_lower(make_layer_spec(1, ell), k, Point(ell, 0.5)).scheme;
    std::vector<double> ns, logs, lin;
    for (int n = e.n_min; n <= e.n_max; ++n) {
        const auto layer = make_layer_spec(n, ell);
        const double upper = compositional_upper(layer, k).value;
        const auto inf = compositional_inf_lower(layer, k, ctx.workers);
        r.rows.push_back(detail::row(n, upper, inf.value));
        ns.push_back(n);
        logs.push_back(r.rows.back().log2_ratio());
        lin.push_back(r.rows.back().ratio());
        if (n <= e.cross_validate_max_n) {
            std::optional<double> known;
            for (std::size_t i = 0; i < cal.glue_levels.size(); ++i)
                if (cal.glue_levels[i] == n) known = rec.direct_layer_energies[i];
            check_layer(r, n, cross_validate_layer(layer, k, inf.argmin, cal, known), e.upper_factor,
                        e.lower_tolerance);
        }
    }
    fill_local_slopes(r.rows);
    const double slope = fit_slope(ns, logs), linear = fit_slope(ns, lin);
    const std::string verdict = threshold_verdict(slope, linear, tc.p, e.ell, e.diverge_slope);
    for (auto& row : r.rows) row.verdict = verdict;
    r.measurements["log2_slope"] = slope;
    r.measurements["linear_slope"] = linear;
    r.metadata["verdict"] = verdict;
    const std::string want = expected_verdict(tc.p, e.ell);
    r.check("verdict matches the regime", verdict == want, "got " + verdict + ", expected " + want);
    if (tc.p > static_cast<double>(e.ell))
        r.check("log2 slope close to p - l", std::abs(slope - (tc.p - e.ell)) <= e.slope_tolerance,
                "slope " + detail::fmt(slope) + ", p - l = " + detail::fmt(tc.p - e.ell));
    if (tc.p == static_cast<double>(e.ell)) {
        const double h16 = harmonic_sum(16, e.ell, tc.p), ln16 = std::log(16.0);
        r.measurements["harmonic_16"] = h16;
        r.measurements["log_16"] = ln16;
        r.check("harmonic sum H(16) and ln 16 match their decimal values",
                std::abs(h16 - 3.3807) <= 1e-4 && std::abs(ln16 - 2.7726) <= 1e-4,
                "H(16) = " + detail::fmt(h16) + ", ln 16 = " + detail::fmt(ln16));
    }
    return r;
}

inline std::vector<ExperimentReport> run_threshold(const ThresholdExperiment& e, const RunContext& ctx) {
    if (e.cases.size() > 1) {
        bool below = false, at_or_above = false;
        for (const auto& c : e.cases) (c.p < e.ell ? below : at_or_above) = true;
        require(below && at_or_above, ErrorKind::configuration, "threshold cases must have p values on both sides of l");
    }
    std::vector<ExperimentReport> out;
    for (const auto& c : e.cases) out.push_back(run_threshold_case(e, c, ctx));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Almost retraction

inline ExperimentReport run_almost(const AlmostExperiment& e, const RunContext& ctx) {
    auto r = detail::start_report("almost", e.name);
    r.s = e.s;
    r.p = e.p;
    r.metadata["layout"] = e.layout;
    AlmostCtrexSpec spec;
    spec.s = e.s;
    spec.p = e.p;
    spec.layout = e.layout == "unit" ? AlmostLayout::unit : AlmostLayout::compact;
    spec.validate();

    double slo = std::numeric_limits<double>::infinity(), shi = 0.0, hlo = slo, hhi = 0.0, degree = 0.0;
    for (int j = e.rate_min; j <= e.rate_max; ++j) {
        const auto rep = lipschitz_rate_check(build_almost_retraction({std::ldexp(1.0, -j), spec.cap_center, spec.iota}));
        slo = std::min(slo, rep.max_slope_eps), shi = std::max(shi, rep.max_slope_eps);
        hlo = std::min(hlo, rep.min_halfcap_slope_eps), hhi = std::max(hhi, rep.min_halfcap_slope_eps);
        degree = std::max(degree, std::abs(rep.degree));
    }
    r.measurements["max_slope_eps_min"] = slo;
    r.measurements["max_slope_eps_max"] = shi;
    r.measurements["halfcap_slope_eps_min"] = hlo;
    r.measurements["halfcap_slope_eps_max"] = hhi;
    r.measurements["max_abs_degree"] = degree;
    r.check("retraction has degree 0", degree <= 1e-9, "max |degree| " + detail::fmt(degree));
    r.check("max slope times eps independent of eps", shi / slo - 1.0 <= e.rate_tolerance,
            "range [" + detail::fmt(slo) + ", " + detail::fmt(shi) + "]");
    r.check("half-cap slope times eps independent of eps", hhi / hlo - 1.0 <= e.rate_tolerance,
            "range [" + detail::fmt(hlo) + ", " + detail::fmt(hhi) + "]");

    AlmostCalibration cal;
    cal.seed = e.seed.value_or(ctx.seed);
    cal.resolution.node_budget = ctx.node_budget;
    cal.energy = ctx.energy(PairScheme::treecode);
    const auto rec = measure_almost_constants(spec, cal);
    const auto& k = rec.constants;
    r.constants["c_prime"] = k.c_prime;
    r.constants["basic_energy"] = k.basic_energy;
    r.constants["cluster_factor"] = k.cluster_factor;
    r.constants["glue_factor"] = k.glue_factor;
    const auto scan = almost_projection_scan(spec, e.n_min, e.n_max, k, e.grid_points, ctx.workers);
    // rows are indexed by n with eps = 2^{-n}
    for (const auto& row : scan.rows) r.rows.push_back(detail::row(row.n, row.energy, row.projected));
    fill_local_slopes(r.rows);
    const double alpha = spec.alpha_value(), beta = spec.scaling_exponent();
    // the unit layout has support of length ~ 1/eps before rescaling
    const double support_target = spec.layout == AlmostLayout::compact ? beta : beta - 1.0;
    r.measurements["support_exponent"] = scan.support_exponent;
    r.measurements["energy_exponent"] = scan.energy_exponent;
    r.measurements["projected_exponent"] = scan.projected_exponent;
    r.constants["alpha"] = alpha;
    r.constants["beta"] = beta;
    r.check("regime sp < 1 < p", scan.regime_gate);
    r.check("support exponent", std::abs(scan.support_exponent / support_target - 1.0) <= e.support_tolerance,
            "measured " + detail::fmt(scan.support_exponent) + ", target " + detail::fmt(support_target));
    r.check("energy exponent alpha - 1", std::abs(scan.energy_exponent - (alpha - 1.0)) <= e.exponent_tolerance,
            "measured " + detail::fmt(scan.energy_exponent) + ", target " + detail::fmt(alpha - 1.0));
    r.check("projected exponent alpha - p",
            std::abs(scan.projected_exponent - (alpha - spec.p)) <= e.exponent_tolerance,
            "measured " + detail::fmt(scan.projected_exponent) + ", target " + detail::fmt(alpha - spec.p));
    return r;
}

// ---------------------------------------------------------------------------------------------
// Suite

inline std::vector<ExperimentReport> run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
    return std::visit(
        [&](const auto& e) -> std::vector<ExperimentReport> {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, SeminormExperiment>) return {run_seminorm(e, ctx)};
            else if constexpr (std::is_same_v<E, PatchExperiment>) return {run_patch(e, ctx)};
            else if constexpr (std::is_same_v<E, LayerExperiment>) return {run_layer(e, ctx)};
            else if constexpr (std::is_same_v<E, GeometryExperiment>) return {run_geometry(e, ctx)};
            else if constexpr (std::is_same_v<E, AveragingExperiment>) return {run_averaging(e, ctx)};
            else if constexpr (std::is_same_v<E, ThresholdExperiment>) return run_threshold(e, ctx);
            else return {run_almost(e, ctx)};
        },
        cfg);
}

struct SuiteResult {
    std::vector<ExperimentReport> reports;
    std::vector<std::filesystem::path> files;
    bool passed() const {
        return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.passed(); });
    }
};

/// Runs the experiments in declared order and writes their reports. A configuration error inside
/// an experiment is rethrown with the experiment's JSON pointer.
inline SuiteResult run_suite(const RunConfig& cfg, bool write = true,
                             const std::function<void(const ExperimentReport&)>& on_report = {}) {
    const auto ctx = make_context(cfg);
    SuiteResult out;
    for (std::size_t i = 0; i < cfg.experiments.size(); ++i) {
        std::vector<ExperimentReport> reports;
        try {
            reports = run_experiment(cfg.experiments[i], ctx);
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::configuration) throw;
            throw Error(ErrorKind::configuration,
                        "/experiments/" + std::to_string(i) + " (" + experiment_kind(cfg.experiments[i]) + "): " +
                            std::string(err.what()).substr(std::string(to_string(err.kind())).size() + 2));
        }
        for (auto& r : reports) {
            if (write)
                for (auto& f : emit_report(r, cfg.output_dir)) out.files.push_back(std::move(f));
            if (on_report) on_report(r);
            out.reports.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace spl
