// Command-line front end: one subcommand per experiment kind plus `suite`.
//
// Exit codes: 0 every assertion passed, 1 an assertion failed (or an experiment could not be
// evaluated), 2 usage or configuration error, 3 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spl/config.hpp"
#include "spl/harness.hpp"

namespace {

// Flags of every subcommand. Unset flags leave the configured value alone.
struct Overrides {
    std::optional<double> s, p, h, lo, hi, lambda, tolerance, alpha, radius, step;
    std::optional<int> ell, n_min, n_max, cv_max_n;
    std::optional<std::size_t> samples, shifts, n_mc, grid_points;
    std::optional<std::string> test, lemma, layout;
    std::vector<int> n_values;
    std::vector<double> h_values;
    bool no_direct = false, no_control = false;
};

template <class T, class V>
void set(T& field, const std::optional<V>& v) {
    if (v) field = *v;
}

void apply(spl::SeminormExperiment& e, const Overrides& o) {
    set(e.test, o.test);
    set(e.s, o.s);
    set(e.p, o.p);
    set(e.h, o.h);
    set(e.domain_lo, o.lo);
    set(e.domain_hi, o.hi);
    set(e.lambda, o.lambda);
    set(e.tolerance, o.tolerance);
}

void apply(spl::PatchExperiment& e, const Overrides& o) {
    set(e.s, o.s);
    set(e.p, o.p);
    set(e.ell, o.ell);
    set(e.shifts, o.shifts);
    if (!o.n_values.empty()) e.n_values = o.n_values;
}

void apply(spl::LayerExperiment& e, const Overrides& o) {
    set(e.s, o.s);
    set(e.p, o.p);
    set(e.ell, o.ell);
    if (!o.n_values.empty()) e.n_values = o.n_values;
    if (o.no_direct) e.direct = false;
}

void apply(spl::GeometryExperiment& e, const Overrides& o) {
    set(e.lemma, o.lemma);
    set(e.ell, o.ell);
    set(e.samples, o.samples);
    set(e.n_min, o.n_min);
    set(e.n_max, o.n_max);
    set(e.diffeo_radius, o.radius);
    set(e.angular_step, o.step);
}

void apply(spl::AveragingExperiment& e, const Overrides& o) {
    set(e.s, o.s);
    set(e.p, o.p);
    set(e.ell, o.ell);
    set(e.alpha, o.alpha);
    set(e.n_mc, o.n_mc);
    if (!o.h_values.empty()) e.h_values = o.h_values;
    if (o.no_control) e.control = false;
}

void apply(spl::ThresholdExperiment& e, const Overrides& o) {
    if (o.s || o.p) {
        spl::ThresholdCase c = e.cases.empty() ? spl::ThresholdCase{} : e.cases.front();
        set(c.s, o.s);
        set(c.p, o.p);
        e.cases = {c};
    }
    set(e.ell, o.ell);
    set(e.n_min, o.n_min);
    set(e.n_max, o.n_max);
    set(e.cross_validate_max_n, o.cv_max_n);
}

void apply(spl::AlmostExperiment& e, const Overrides& o) {
    set(e.s, o.s);
    set(e.p, o.p);
    set(e.layout, o.layout);
    set(e.n_min, o.n_min);
    set(e.n_max, o.n_max);
    set(e.grid_points, o.grid_points);
}

/// The first block of kind E in the loaded config, or defaults, with the flags applied.
template <class E>
spl::ExperimentConfig single(const spl::RunConfig& cfg, const Overrides& o) {
    E e{};
    for (const auto& x : cfg.experiments)
        if (const auto* found = std::get_if<E>(&x)) {
            e = *found;
            break;
        }
    apply(e, o);
    spl::ExperimentConfig out = e;
    spl::detail::validate_block(out, "/experiments/0");
    return out;
}

void print_report(const spl::ExperimentReport& r) {
    std::printf("%s %s\n", r.passed() ? "PASS" : "FAIL", r.file_stem().c_str());
    for (const auto& a : r.assertions)
        std::printf("  [%s] %s: %s\n", a.passed ? "ok" : "FAILED", a.name.c_str(), a.detail.c_str());
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical experiments on projections onto spheres in fractional Sobolev spaces"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand
    std::string config_path, output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> node_budget;
    std::optional<int> workers;
    bool print_config = false;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--output-dir", output_dir, "directory for CSV/JSON/SVG reports");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--node-budget", node_budget, "largest quadrature cloud allowed");
    app.add_option("--workers", workers, "worker threads (SPL_WORKERS takes precedence)");
    app.add_flag("--print-config", print_config, "print the effective configuration as JSON and exit");

    Overrides o;
    auto* seminorm = app.add_subcommand("seminorm", "indicator closed form or the dilation law");
    seminorm->add_option("--test", o.test, "indicator or scaling");
    seminorm->add_option("--s", o.s);
    seminorm->add_option("--p", o.p);
    seminorm->add_option("--spacing", o.h, "grid spacing");
    seminorm->add_option("--lo", o.lo, "left end of the sampled interval");
    seminorm->add_option("--hi", o.hi, "right end of the sampled interval");
    seminorm->add_option("--lambda", o.lambda, "dilation factor");
    seminorm->add_option("--tolerance", o.tolerance, "relative tolerance");

    auto* patch = app.add_subcommand("patch", "patch energies and the projected lower bound");
    patch->add_option("--s", o.s);
    patch->add_option("--p", o.p);
    patch->add_option("--ell", o.ell);
    patch->add_option("--n", o.n_values, "scale indices");
    patch->add_option("--shifts", o.shifts, "random shifts per level");

    auto* layer = app.add_subcommand("layer", "compositional bounds for glued layers");
    layer->add_option("--s", o.s);
    layer->add_option("--p", o.p);
    layer->add_option("--ell", o.ell);
    layer->add_option("--n", o.n_values, "scale indices");
    layer->add_flag("--no-direct", o.no_direct, "skip the direct quadrature cross-check");

    auto* geometry = app.add_subcommand("geometry", "chord lemmas, chord identity and the diffeomorphism check");
    geometry->add_option("--lemma", o.lemma, "geom1, geom2, chord or diffeo");
    geometry->add_option("--ell", o.ell);
    geometry->add_option("--samples", o.samples);
    geometry->add_option("--n-min", o.n_min);
    geometry->add_option("--n-max", o.n_max);
    geometry->add_option("--radius", o.radius, "largest shift for the diffeomorphism check");
    geometry->add_option("--step", o.step, "angular step for the diffeomorphism check");

    auto* averaging = app.add_subcommand("averaging", "Monte Carlo average over shifts");
    averaging->add_option("--s", o.s);
    averaging->add_option("--p", o.p);
    averaging->add_option("--ell", o.ell);
    averaging->add_option("--alpha", o.alpha, "radius of the shift ball");
    averaging->add_option("--n-mc", o.n_mc, "number of shifts");
    averaging->add_option("--spacing", o.h_values, "grid spacings, coarse to fine");
    averaging->add_flag("--no-control", o.no_control, "skip the p = l control");

    auto* threshold = app.add_subcommand("threshold", "lower/upper ratio across scales");
    threshold->add_option("--s", o.s);
    threshold->add_option("--p", o.p);
    threshold->add_option("--ell", o.ell);
    threshold->add_option("--n-min", o.n_min);
    threshold->add_option("--n-max", o.n_max);
    threshold->add_option("--cross-validate-max-n", o.cv_max_n, "largest n integrated directly");

    auto* almost = app.add_subcommand("almost", "almost retraction rates and exponents");
    almost->add_option("--s", o.s);
    almost->add_option("--p", o.p);
    almost->add_option("--layout", o.layout, "unit or compact");
    almost->add_option("--n-min", o.n_min);
    almost->add_option("--n-max", o.n_max);
    almost->add_option("--grid-points", o.grid_points, "xi grid points per axis");

    auto* suite = app.add_subcommand("suite", "every experiment of the configuration, in order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        spl::RunConfig cfg = config_path.empty() ? spl::RunConfig{} : spl::load_config(config_path);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (seed) cfg.seed = *seed;
        if (node_budget) cfg.node_budget = *node_budget;
        if (workers) cfg.worker_count = *workers;
        if (!suite->parsed()) {
            spl::ExperimentConfig one;
            if (seminorm->parsed()) one = single<spl::SeminormExperiment>(cfg, o);
            else if (patch->parsed()) one = single<spl::PatchExperiment>(cfg, o);
            else if (layer->parsed()) one = single<spl::LayerExperiment>(cfg, o);
            else if (geometry->parsed()) one = single<spl::GeometryExperiment>(cfg, o);
            else if (averaging->parsed()) one = single<spl::AveragingExperiment>(cfg, o);
            else if (threshold->parsed()) one = single<spl::ThresholdExperiment>(cfg, o);
            else one = single<spl::AlmostExperiment>(cfg, o);
            cfg.experiments = {one};
        }
        if (print_config) {
            std::cout << spl::config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
        const auto result = spl::run_suite(cfg, true, print_report);
        for (const auto& f : result.files) std::printf("wrote %s\n", f.string().c_str());
        return result.passed() ? 0 : 1;
    } catch (const spl::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        switch (e.kind()) {
        case spl::ErrorKind::configuration:
        case spl::ErrorKind::wrong_scheme: return 2;
        case spl::ErrorKind::io: return 3;
        default: return 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
