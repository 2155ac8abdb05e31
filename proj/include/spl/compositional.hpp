#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spl/chord_geometry.hpp"
#include "spl/counterexample.hpp"
#include "spl/energy.hpp"
#include "spl/parallel.hpp"
#include "spl/sphere_projection.hpp"

// Energy bounds for layers assembled from constants measured on single patches at small n.
//
// Upper bound. A patch is v_c = c chi + delta_n, with chi = cutoff(|x|) and delta_n the cluster of
// copies. Their supports barely interact, and measured patch energies match
// E(delta_n) + |c|^p E(chi) to well under one percent. Gluing the 2^{nl} patches multiplies the sum
// by a factor measured on a directly integrated small layer.
//
// Lower bound. Superadditivity over patch supports and the patch lemma give
//   E(P o (v_n - a)) >= C' 2^{(n-1)p} sum_k |P(c_k^+ - a) - P(c_k^- - a)|^p
// over any set of patches; C' is measured as a minimum over random shifts.

namespace spl {

/// Building-block constants for one (s, p, l).
struct CompositionalConstants {
    FractionalParams params;
    double c_prime = 0.0;        // min of projected energy / (chord^p 2^{(n-1)p}) over calibration shifts
    double basic_energy = 0.0;   // E of the unit basic profile (psi(|x-e|) - psi(|x+e|)) on R^l
    double collar_energy = 0.0;  // E of cutoff(|x|) on R^l
    double cluster_factor = 0.0; // measured E(delta_n) / (k^{sp} 16^{sp-l} 2^{(1-n)p} basic_energy), max over n
    double glue_factor = 0.0;    // measured E(v_n) / sum of patch models, max over calibrated layers
    bool measured = false;

    void require_measured() const {
        require(measured, ErrorKind::configuration,
                "compositional constants have not been measured; run the calibration first");
    }
};

struct CalibrationOptions {
    std::vector<int> levels = {1, 2};  // scale indices used to measure C' and the cluster factor
    std::vector<int> glue_levels = {1}; // layers integrated directly to measure the glue factor
    std::size_t shifts_per_level = 16;
    std::uint64_t seed = 20240601;
    PatchResolution resolution;
    EnergyOptions energy = [] {
        EnergyOptions o;
        o.scheme = PairScheme::treecode;
        return o;
    }();
};

/// Cloud of the clustered patch with c = 0 restricted to B_{1/2}: the region where the patch lemma's
/// projected lower bound is measured. Shifting the centre c is the same as shifting a by -c there.
inline QuadratureMap projected_region_cloud(int n, const FractionalParams& params, const PatchResolution& res) {
    const auto spec = make_patch_spec(Point(static_cast<std::size_t>(params.ell), 0.0), n, params);
    const auto q = patch_quadrature(spec, PatchStage::clustered, res);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < q.size(); ++i)
        if (norm(q.point(i)) <= 0.5) keep.push_back(i);
    return q.subset(keep);
}

/// E(P o (v_c - a), B_{1/2}) divided by chord^p 2^{(n-1)p}, from a c = 0 cloud.
inline double projected_lower_ratio(const QuadratureMap& cloud, int n, const FractionalParams& params,
                                    std::span<const double> c, std::span<const double> a, const EnergyOptions& opt,
                                    double* energy_out = nullptr) {
    Point shift(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) shift[i] = a[i] - c[i];
    const auto projected = shifted_projection(cloud, shift);
    const double e = gagliardo_energy(projected, params, opt).value;
    if (energy_out) *energy_out = e;
    const double chord = chord_exact({Point(c.begin(), c.end()), n, Point(a.begin(), a.end())}).identity;
    return e / (std::pow(chord, params.p) * std::pow(2.0, (n - 1) * params.p));
}

/// Energy of the scalar collar cutoff(|x|) over R^l.
inline double collar_energy(const FractionalParams& params, const PatchResolution& res, const EnergyOptions& opt) {
    const std::size_t ell = static_cast<std::size_t>(params.ell);
    AdaptiveQuadratureSpec q;
    q.domain = Box::cube(ell, res.domain_half_side);
    q.nu = 1;
    q.node_budget = res.node_budget;
    q.required_size = [&](const Box& b) {
        return std::max(res.collar_spacing, res.grading * detail::distance_to_collar(b));
    };
    q.evaluate = [](std::span<const double> x, std::span<double> out) { out[0] = profile::cutoff(norm(x)); };
    const auto cloud = build_adaptive_quadrature(q);
    const double zero = 0.0;
    return gagliardo_energy_whole_space(cloud, params, q.domain, {&zero, 1}, opt).value;
}

/// Energy of a full patch over R^l by direct quadrature.
inline double patch_energy(const PatchSpec& spec, PatchStage stage, const PatchResolution& res,
                           const EnergyOptions& opt) {
    const auto q = patch_quadrature(spec, stage, res);
    const auto bg = patch_background(spec, stage);
    return gagliardo_energy_whole_space(q, spec.params, patch_quadrature_domain(spec, stage, res), bg, opt).value;
}

/// Energy of a layer over R^l by direct quadrature.
inline double layer_energy(const LayerSpec& layer, const FractionalParams& params, const PatchResolution& res,
                           const EnergyOptions& opt, std::size_t* nodes = nullptr) {
    const double margin = 2.0;
    const auto q = layer_quadrature(layer, params, res, margin);
    if (nodes) *nodes = q.size();
    const Point zero(layer.ell, 0.0);
    return gagliardo_energy_whole_space(q, params, Box::cube(layer.ell, layer.half_side() + margin), zero, opt).value;
}

/// Model of E(delta_n): k^l copies, each the basic profile of amplitude 2^{1-n} scaled by 1/(16k).
inline double cluster_energy_model(int n, const CompositionalConstants& k) {
    const double sp = k.params.sp(), ell = static_cast<double>(k.params.ell);
    const double kk = static_cast<double>(cluster_count(n, k.params.s));
    return std::pow(kk, ell) * std::pow(kk, sp - ell) * std::pow(16.0, sp - ell) * std::pow(2.0, (1 - n) * k.params.p) *
           k.basic_energy;
}

/// Additive patch model E(delta_n) + |c|^p E(chi), with the measured cluster factor.
inline double patch_energy_model(int n, std::span<const double> c, const CompositionalConstants& k) {
    return k.cluster_factor * cluster_energy_model(n, k) + std::pow(norm(c), k.params.p) * k.collar_energy;
}

/// Everything the calibration measured, kept for reporting.
struct CalibrationRecord {
    CompositionalConstants constants;
    std::vector<double> ratio_samples; // projected lower ratios behind C'
    std::vector<double> cluster_factors;
    std::vector<double> glue_factors;
    std::vector<double> direct_layer_energies;
};

inline CalibrationRecord measure_constants(const FractionalParams& params, const CalibrationOptions& opt = {}) {
    params.validate();
    require(params.s < 1.0, ErrorKind::wrong_scheme, "patch constants are defined for 0 < s < 1");
    require(!opt.levels.empty() && !opt.glue_levels.empty() && opt.shifts_per_level >= 1, ErrorKind::configuration,
            "calibration needs at least one level and one shift");
    const std::size_t ell = static_cast<std::size_t>(params.ell);
    CalibrationRecord rec;
    auto& k = rec.constants;
    k.params = params;
    const Point zero(ell, 0.0);
    const auto base = make_patch_spec(zero, 1, params);
    k.basic_energy = patch_energy(base, PatchStage::basic, opt.resolution, opt.energy) /
                     std::pow(base.amplitude(), params.p);
    k.collar_energy = collar_energy(params, opt.resolution, opt.energy);
    k.cluster_factor = 1.0;
    k.c_prime = std::numeric_limits<double>::infinity();
    std::mt19937_64 g(opt.seed);
    for (int n : opt.levels) {
        const auto spec = make_patch_spec(zero, n, params);
        k.cluster_factor = 1.0;
        const double f = patch_energy(spec, PatchStage::clustered, opt.resolution, opt.energy) /
                         cluster_energy_model(n, k);
        rec.cluster_factors.push_back(f);
        const auto cloud = projected_region_cloud(n, params, opt.resolution);
        for (std::size_t i = 0; i < opt.shifts_per_level; ++i) {
            const Point c = random_in_ball(ell, g), a = random_in_ball(ell, g);
            const double r = projected_lower_ratio(cloud, n, params, c, a, opt.energy);
            rec.ratio_samples.push_back(r);
            k.c_prime = std::min(k.c_prime, r);
        }
    }
    k.cluster_factor = *std::max_element(rec.cluster_factors.begin(), rec.cluster_factors.end());
    k.glue_factor = 1.0;
    for (int n : opt.glue_levels) {
        const auto layer = make_layer_spec(n, ell);
        double model = 0.0;
        for (const auto& c : layer.centres) model += patch_energy_model(n, c, k);
        const double direct = layer_energy(layer, params, opt.resolution, opt.energy);
        rec.direct_layer_energies.push_back(direct);
        rec.glue_factors.push_back(direct / model);
    }
    k.glue_factor = std::max(1.0, *std::max_element(rec.glue_factors.begin(), rec.glue_factors.end()));
    k.measured = true;
    return rec;
}

/// Sum_{j=1}^{N} j^{l-1-p}: the discrete isoperimetric sum behind the p = l lower bound.
inline double harmonic_sum(std::size_t count, double ell, double p) {
    std::vector<double> terms(count);
    for (std::size_t j = 1; j <= count; ++j) terms[j - 1] = std::pow(static_cast<double>(j), ell - 1.0 - p);
    return pairwise_sum(terms);
}

enum class BoundMode { upper, lower };

/// Upper bound for the layer: glue factor times the summed patch models.
inline EnergyValue compositional_upper(const LayerSpec& layer, const CompositionalConstants& k) {
    k.require_measured();
    std::vector<double> terms;
    terms.reserve(layer.centres.size());
    for (const auto& c : layer.centres) terms.push_back(patch_energy_model(layer.n, c, k));
    EnergyValue e;
    e.value = k.glue_factor * pairwise_sum(terms);
    e.scheme = "compositional/upper";
    e.node_count = layer.centres.size();
    return e;
}

/// Index of the dyadic cube of the layer containing a (boundary points go to the lower cube).
inline std::size_t containing_cube(const LayerSpec& layer, std::span<const double> a) {
    const std::size_t per_axis = std::size_t{1} << layer.n;
    const double side = std::ldexp(1.0, 1 - layer.n);
    std::size_t flat = 0;
    for (std::size_t d = 0; d < layer.ell; ++d) {
        const double u = (a[d] + 1.0) / side;
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(per_axis - 1)));
        flat = flat * per_axis + i;
    }
    return flat;
}

/// Lower bound for the layer at shift a, charging the cube with index `own` (whose closed cube must
/// contain a) and, when p <= l, every other cube in the cone |cos phi| <= 1/8, |a - c| >= 2^{-n}.
inline double compositional_lower_value(const LayerSpec& layer, const CompositionalConstants& k,
                                        std::span<const double> a, std::size_t own) {
    const int n = layer.n;
    const Point av(a.begin(), a.end());
    std::vector<double> terms;
    terms.push_back(std::pow(chord_exact({layer.centres[own], n, av}).identity, k.params.p));
    if (!(k.params.p > static_cast<double>(k.params.ell))) {
        for (std::size_t i = 0; i < layer.centres.size(); ++i) {
            if (i == own) continue;
            const auto rep = geom2_check({layer.centres[i], n, av});
            if (rep.applicable) terms.push_back(std::pow(rep.chord, k.params.p));
        }
    }
    return k.c_prime * std::pow(2.0, (n - 1) * k.params.p) * pairwise_sum(terms);
}

inline EnergyValue compositional_lower(const LayerSpec& layer, const CompositionalConstants& k,
                                       std::span<const double> a) {
    k.require_measured();
    require(a.size() == layer.ell, ErrorKind::configuration, "shift dimension differs from l");
    EnergyValue e;
    e.value = compositional_lower_value(layer, k, a, containing_cube(layer, a));
    e.scheme = k.params.p > static_cast<double>(k.params.ell) ? "compositional/lower/containing-cube"
                                                               : "compositional/lower/cone";
    e.node_count = layer.centres.size();
    return e;
}

/// Mode dispatch used by the CLI.
inline EnergyValue compositional_energy(const LayerSpec& layer, BoundMode mode, const CompositionalConstants& k,
                                        const std::optional<Point>& a = std::nullopt) {
    if (mode == BoundMode::upper) return compositional_upper(layer, k);
    require(a.has_value(), ErrorKind::configuration, "the lower bound needs a shift");
    return compositional_lower(layer, k, *a);
}

/// Single patch: the additive model, or the patch lemma lower bound at a.
inline EnergyValue compositional_energy(const PatchSpec& spec, BoundMode mode, const CompositionalConstants& k,
                                        const std::optional<Point>& a = std::nullopt) {
    k.require_measured();
    EnergyValue e;
    if (mode == BoundMode::upper) {
        e.value = patch_energy_model(spec.n, spec.c, k);
        e.scheme = "compositional/patch-upper";
        return e;
    }
    require(a.has_value(), ErrorKind::configuration, "the lower bound needs a shift");
    const double chord = chord_exact({spec.c, spec.n, *a}).identity;
    e.value = k.c_prime * std::pow(chord, k.params.p) * std::pow(2.0, (spec.n - 1) * k.params.p);
    e.scheme = "compositional/patch-lower";
    return e;
}

struct InfLower {
    double value = 0.0;
    Point argmin;
    std::size_t candidates = 0;
};

/// Infimum of the lower bound over a in the closed unit ball, discretised by the centre and the
/// corners of every dyadic cube (each corner charged to the cube it came from).
inline InfLower compositional_inf_lower(const LayerSpec& layer, const CompositionalConstants& k,
                                        int workers = default_worker_count()) {
    k.require_measured();
    const std::size_t ell = layer.ell;
    const double half = std::ldexp(1.0, -layer.n);
    const std::size_t corners = std::size_t{1} << ell;
    std::vector<Point> best(layer.centres.size());
    std::vector<std::size_t> counted(layer.centres.size(), 0);
    const auto mins = run_indexed(
        layer.centres.size(),
        [&](std::size_t cube) {
            double m = std::numeric_limits<double>::infinity();
            Point a(ell);
            for (std::size_t s = 0; s <= corners; ++s) {
                for (std::size_t d = 0; d < ell; ++d) {
                    const double sign = s == 0 ? 0.0 : (((s - 1) >> d) & 1U ? 1.0 : -1.0);
                    a[d] = layer.centres[cube][d] + sign * half;
                }
                if (norm(a) > 1.0 + 1e-12) continue;
                ++counted[cube];
                const double v = compositional_lower_value(layer, k, a, cube);
                if (v < m) m = v, best[cube] = a;
            }
            return m;
        },
        workers);
    InfLower out;
    out.value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mins.size(); ++i) {
        out.candidates += counted[i];
        if (mins[i] < out.value) out.value = mins[i], out.argmin = best[i];
    }
    return out;
}

} // namespace spl
