#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "spl/energy.hpp"
#include "spl/error.hpp"
#include "spl/grid.hpp"
#include "spl/profiles.hpp"
#include "spl/quadrature.hpp"

// Two-value patches and dyadic layers of patches.
//
// Layout of the compactly supported patch v_c in R^l (all lengths in the patch frame):
//   * the cluster square [-1/8, 1/8]^l is cut into k^l cells of side 1/(4k);
//   * each cell carries a copy of the basic map w_c scaled by lambda = 1/(16k), whose nonconstant
//     part fills the central rectangle of the cell (half-extent 2 lambda along the axis, lambda across);
//   * v_c = c on the rest of B_{1/2}, then c * cutoff(|x|) which reaches 0 on |x| = 1.
// So v_c is supported in the unit ball and a layer can tile patches with pitch 2.

namespace spl {

inline constexpr double cluster_half_side = 0.125;

/// Smallest integer k with k^s >= 2^{n-1}, i.e. k^{sp} >= 2^{(n-1)p}.
inline std::size_t cluster_count(int n, double s) {
    const double k = std::exp2(static_cast<double>(n - 1) / s);
    return static_cast<std::size_t>(std::ceil(k * (1.0 - 1e-12)));
}

struct PatchSpec {
    Point c;          // centre value in R^l
    int n = 1;        // scale index; c+- = c +- 2^{1-n} e_axis
    FractionalParams params;
    std::size_t k = 1; // cluster count per axis
    std::size_t axis = 0;

    std::size_t ell() const { return c.size(); }
    double amplitude() const { return std::ldexp(1.0, 1 - n); }
    double cell_side() const { return 2.0 * cluster_half_side / static_cast<double>(k); }
    double copy_scale() const { return cell_side() / 4.0; }

    void validate() const {
        params.validate();
        require(n >= 1, ErrorKind::configuration, "scale index n must be at least 1");
        require(c.size() == static_cast<std::size_t>(params.ell), ErrorKind::configuration,
                "patch centre must have l components");
        require(axis < c.size(), ErrorKind::configuration, "displacement axis out of range");
        require(k >= 1, ErrorKind::configuration, "cluster count must be positive");
        // layer centres fill the closed unit cube, so c+- may leave the unit ball by up to 2^{1-n}
        for (double v : c)
            require(std::abs(v) <= 1.0 + 1e-12, ErrorKind::configuration, "patch centre outside the unit cube");
    }
};

inline PatchSpec make_patch_spec(Point c, int n, const FractionalParams& params, std::size_t axis = 0) {
    PatchSpec spec{std::move(c), n, params, cluster_count(n, params.s), axis};
    spec.validate();
    return spec;
}

/// Profile of the basic patch minus its centre value: (psi(|x - e|) - psi(|x + e|)) e.
inline double basic_profile(std::span<const double> x, std::size_t axis) {
    double plus = 0.0, minus = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
        const double e = a == axis ? 1.0 : 0.0;
        plus += (x[a] - e) * (x[a] - e);
        minus += (x[a] + e) * (x[a] + e);
    }
    return profile::cutoff(std::sqrt(plus)) - profile::cutoff(std::sqrt(minus));
}

/// Frame rectangle outside which the basic patch equals c.
inline Box basic_support(std::size_t ell, std::size_t axis) {
    Box b = Box::cube(ell, 1.0);
    b.lo[axis] = -2.0;
    b.hi[axis] = 2.0;
    return b;
}

namespace detail {

/// Index of the cluster cell containing coordinate t along one axis, or -1 outside the square.
inline long cluster_cell(double t, const PatchSpec& spec) {
    const double u = (t + cluster_half_side) / spec.cell_side();
    if (u < 0.0 || u >= static_cast<double>(spec.k)) return -1;
    return static_cast<long>(u);
}

inline double cluster_centre(long i, const PatchSpec& spec) {
    return -cluster_half_side + spec.cell_side() * (static_cast<double>(i) + 0.5);
}

/// Deviation of the clustered patch from c at x (scalar along the axis): a scaled basic profile in
/// the cell containing x, 0 off the cluster square.
inline double cluster_deviation(std::span<const double> x, const PatchSpec& spec) {
    const std::size_t ell = x.size();
    double xi[8];
    const double lam = spec.copy_scale();
    for (std::size_t a = 0; a < ell; ++a) {
        const long i = cluster_cell(x[a], spec);
        if (i < 0) return 0.0;
        xi[a] = (x[a] - cluster_centre(i, spec)) / lam;
    }
    return basic_profile({xi, ell}, spec.axis);
}

/// Nonconstant rectangle of the copy in cell `idx`.
inline Box copy_rect(std::span<const long> idx, const PatchSpec& spec) {
    const double lam = spec.copy_scale();
    Box b{Point(idx.size()), Point(idx.size())};
    for (std::size_t a = 0; a < idx.size(); ++a) {
        const double half = a == spec.axis ? 2.0 * lam : lam;
        const double centre = cluster_centre(idx[a], spec);
        b.lo[a] = centre - half;
        b.hi[a] = centre + half;
    }
    return b;
}

/// Distance from `box` to the nearest copy rectangle. Returns 0 for boxes much larger than a cell
/// that touch the cluster, which forces them to be split.
inline double distance_to_copies(const Box& box, const PatchSpec& spec) {
    const std::size_t ell = box.dim();
    const Box square = Box::cube(ell, cluster_half_side);
    const double cs = spec.cell_side();
    const double d_square = box.distance(square);
    if (d_square > cs) return d_square;
    double side = 0.0;
    for (std::size_t a = 0; a < ell; ++a) side = std::max(side, box.side(a));
    if (side > 4.0 * cs) return 0.0;
    std::vector<long> lo(ell), hi(ell), idx(ell);
    const long last = static_cast<long>(spec.k) - 1;
    for (std::size_t a = 0; a < ell; ++a) {
        lo[a] = std::clamp(static_cast<long>(std::floor((box.lo[a] + cluster_half_side) / cs)) - 1, 0L, last);
        hi[a] = std::clamp(static_cast<long>(std::floor((box.hi[a] + cluster_half_side) / cs)) + 1, 0L, last);
        idx[a] = lo[a];
    }
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        best = std::min(best, box.distance(copy_rect(idx, spec)));
        std::size_t a = 0;
        for (; a < ell; ++a) {
            if (idx[a] < hi[a]) {
                ++idx[a];
                break;
            }
            idx[a] = lo[a];
        }
        if (a == ell) break;
    }
    return best;
}

/// Distance from `box` to the annulus 1/2 <= |x| <= 1 where the collar varies.
inline double distance_to_collar(const Box& box) {
    const Point origin(box.dim(), 0.0);
    const double rmin = box.distance(origin);
    double rmax2 = 0.0;
    for (std::size_t a = 0; a < box.dim(); ++a) {
        const double far = std::max(std::abs(box.lo[a]), std::abs(box.hi[a]));
        rmax2 += far * far;
    }
    const double rmax = std::sqrt(rmax2);
    if (rmax < 0.5) return 0.5 - rmax;
    if (rmin > 1.0) return rmin - 1.0;
    return 0.0;
}

} // namespace detail

/// Which stage of the construction a patch evaluation returns.
enum class PatchStage { basic, clustered, full };

/// Value of the patch at x in the patch frame. The basic stage is the unscaled map w_c.
inline void patch_value(const PatchSpec& spec, PatchStage stage, std::span<const double> x, std::span<double> out) {
    const std::size_t ell = spec.ell();
    if (stage == PatchStage::basic) {
        const double dev = basic_profile(x, spec.axis);
        for (std::size_t a = 0; a < ell; ++a) out[a] = spec.c[a];
        out[spec.axis] += spec.amplitude() * dev;
        return;
    }
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    const double collar = stage == PatchStage::full ? profile::cutoff(std::sqrt(r2)) : 1.0;
    for (std::size_t a = 0; a < ell; ++a) out[a] = collar * spec.c[a];
    if (r2 <= 0.25) out[spec.axis] += spec.amplitude() * detail::cluster_deviation(x, spec);
}

/// Leaf size demanded for a patch-frame box by the adaptive quadrature of a patch.
struct PatchResolution {
    double nodes_per_unit = 8.0;      // nodes per unit length of the basic frame inside every copy
    double collar_spacing = 1.0 / 32; // leaf size across the collar annulus
    double grading = 0.25;            // leaf size / distance to the nearest feature away from features
    double domain_half_side = 4.0;
    std::size_t node_budget = 4'000'000;
};

inline double patch_required_size(const PatchSpec& spec, PatchStage stage, const PatchResolution& res, const Box& b) {
    double req = std::numeric_limits<double>::infinity();
    if (stage == PatchStage::basic) {
        const double d = b.distance(basic_support(spec.ell(), spec.axis));
        return std::max(1.0 / res.nodes_per_unit, res.grading * d);
    }
    const double fine = spec.copy_scale() / res.nodes_per_unit;
    req = std::max(fine, res.grading * detail::distance_to_copies(b, spec));
    if (stage == PatchStage::full)
        req = std::min(req, std::max(res.collar_spacing, res.grading * detail::distance_to_collar(b)));
    return req;
}

/// Adaptive cell-centred cloud of one patch stage over the cube of half-side res.domain_half_side
/// (scaled by 4 for the basic stage, whose frame is larger).
inline QuadratureMap patch_quadrature(const PatchSpec& spec, PatchStage stage, const PatchResolution& res = {}) {
    spec.validate();
    AdaptiveQuadratureSpec q;
    const double half = stage == PatchStage::basic ? 4.0 * res.domain_half_side : res.domain_half_side;
    q.domain = Box::cube(spec.ell(), half);
    q.nu = spec.ell();
    q.node_budget = res.node_budget;
    q.required_size = [&](const Box& b) { return patch_required_size(spec, stage, res, b); };
    q.evaluate = [&](std::span<const double> x, std::span<double> out) { patch_value(spec, stage, x, out); };
    return build_adaptive_quadrature(q);
}

/// Background value of a patch stage outside its support.
inline Point patch_background(const PatchSpec& spec, PatchStage stage) {
    return stage == PatchStage::full ? Point(spec.ell(), 0.0) : spec.c;
}

inline Box patch_quadrature_domain(const PatchSpec& spec, PatchStage stage, const PatchResolution& res = {}) {
    return Box::cube(spec.ell(), stage == PatchStage::basic ? 4.0 * res.domain_half_side : res.domain_half_side);
}

namespace detail {

inline SampledMap sample_patch(const PatchSpec& spec, PatchStage stage, const Grid& grid, const Box& support) {
    spec.validate();
    require(grid.dim() == spec.ell(), ErrorKind::configuration, "grid dimension differs from l");
    return sample_map(
        grid, spec.ell(), [&](std::span<const double> x, std::span<double> out) { patch_value(spec, stage, x, out); },
        support, patch_background(spec, stage));
}

} // namespace detail

/// w_c on a uniform grid. The transition annulus of the cutoff (width 1/2) needs at least 4 nodes.
inline SampledMap build_basic_patch(const PatchSpec& spec, const Grid& grid) {
    require(grid.spacing() <= profile::cutoff_transition_width / 4.0 + 1e-15, ErrorKind::resolution,
            "grid spacing " + std::to_string(grid.spacing()) + " leaves fewer than 4 nodes across the cutoff transition");
    return detail::sample_patch(spec, PatchStage::basic, grid, basic_support(spec.ell(), spec.axis));
}

/// k^l scaled copies of w_c in the cluster square, c elsewhere.
inline SampledMap build_clustered_patch(const PatchSpec& spec, const Grid& grid) {
    const double needed = spec.copy_scale() * profile::cutoff_transition_width / 4.0;
    require(grid.spacing() <= needed * (1.0 + 1e-9), ErrorKind::resolution,
            "grid spacing " + std::to_string(grid.spacing()) + " does not resolve copies scaled by " +
                std::to_string(spec.copy_scale()));
    // copies are centred in their cells and their rectangles fit the cells, so they cannot overlap
    const double cs = spec.cell_side(), lam = spec.copy_scale();
    require(2.0 * lam <= 0.5 * cs + 1e-15 && static_cast<double>(spec.k) * cs <= 2.0 * cluster_half_side + 1e-12,
            ErrorKind::geometry, "cluster copies overlap");
    return detail::sample_patch(spec, PatchStage::clustered, grid, Box::cube(spec.ell(), cluster_half_side));
}

/// The compactly supported patch v_c; equals 0 outside the unit ball.
inline SampledMap build_patch(const PatchSpec& spec, const Grid& grid) {
    const double needed = spec.copy_scale() * profile::cutoff_transition_width / 4.0;
    require(grid.spacing() <= needed * (1.0 + 1e-9), ErrorKind::resolution,
            "grid spacing " + std::to_string(grid.spacing()) + " does not resolve copies scaled by " +
                std::to_string(spec.copy_scale()));
    return detail::sample_patch(spec, PatchStage::full, grid, Box::cube(spec.ell(), 1.0));
}

/// The 2^{nl} centres of the dyadic cubes of side 2^{1-n} in [-1, 1]^l and the translations
/// placing patch i at pitch 2 in the same arrangement.
struct LayerSpec {
    int n = 1;
    std::size_t ell = 2;
    std::vector<Point> centres;
    std::vector<Point> offsets;

    double half_side() const { return std::ldexp(1.0, n); }
    Box domain() const { return Box::cube(ell, half_side()); }
};

inline LayerSpec make_layer_spec(int n, std::size_t ell) {
    require(n >= 1 && n <= 12, ErrorKind::configuration, "layer scale index must lie in 1..12");
    require(ell >= 2, ErrorKind::configuration, "ell must be at least 2");
    LayerSpec spec{n, ell, {}, {}};
    const std::size_t per_axis = std::size_t{1} << n;
    std::size_t total = 1;
    for (std::size_t a = 0; a < ell; ++a) total *= per_axis;
    std::vector<std::size_t> idx(ell, 0);
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t rest = t;
        Point c(ell), off(ell);
        for (std::size_t a = ell; a-- > 0;) {
            idx[a] = rest % per_axis;
            rest /= per_axis;
            c[a] = -1.0 + std::ldexp(2.0 * static_cast<double>(idx[a]) + 1.0, -n);
            off[a] = -static_cast<double>(per_axis) + 2.0 * static_cast<double>(idx[a]) + 1.0;
        }
        spec.centres.push_back(std::move(c));
        spec.offsets.push_back(std::move(off));
    }
    return spec;
}

/// Value of the layer v_n at x: the patch of the pitch-2 cell containing x.
inline void layer_value(const LayerSpec& layer, const std::vector<PatchSpec>& patches, std::span<const double> x,
                        std::span<double> out) {
    const std::size_t ell = layer.ell;
    const std::size_t per_axis = std::size_t{1} << layer.n;
    std::size_t flat = 0;
    double local[8];
    for (std::size_t a = 0; a < ell; ++a) {
        const double u = (x[a] + layer.half_side()) / 2.0;
        if (u < 0.0 || u >= static_cast<double>(per_axis)) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        const auto i = static_cast<std::size_t>(u);
        flat = flat * per_axis + i;
        local[a] = x[a] - layer.offsets[0][a] - 2.0 * static_cast<double>(i);
    }
    patch_value(patches[flat], PatchStage::full, {local, ell}, out);
}

inline std::vector<PatchSpec> layer_patches(const LayerSpec& layer, const FractionalParams& params) {
    std::vector<PatchSpec> patches;
    patches.reserve(layer.centres.size());
    for (const auto& c : layer.centres) patches.push_back(make_patch_spec(c, layer.n, params));
    return patches;
}

/// Adaptive cloud of the whole layer over the cube of half-side 2^n + margin.
inline QuadratureMap layer_quadrature(const LayerSpec& layer, const FractionalParams& params,
                                      const PatchResolution& res = {}, double margin = 2.0) {
    const auto patches = layer_patches(layer, params);
    const std::size_t per_axis = std::size_t{1} << layer.n;
    AdaptiveQuadratureSpec q;
    q.domain = Box::cube(layer.ell, layer.half_side() + margin);
    q.nu = layer.ell;
    q.node_budget = res.node_budget;
    const Box layer_box = layer.domain();
    q.required_size = [&](const Box& b) {
        const double d = b.distance(layer_box);
        if (d > 0.0) return std::max(res.collar_spacing, res.grading * d);
        double side = 0.0;
        for (std::size_t a = 0; a < layer.ell; ++a) side = std::max(side, b.side(a));
        if (side > 2.0) return 0.0;
        // visit the pitch-2 cells overlapping the box, in local patch coordinates
        std::vector<long> lo(layer.ell), hi(layer.ell), idx(layer.ell);
        for (std::size_t a = 0; a < layer.ell; ++a) {
            const long last = static_cast<long>(per_axis) - 1;
            lo[a] = std::clamp(static_cast<long>(std::floor((b.lo[a] + layer.half_side()) / 2.0)), 0L, last);
            hi[a] = std::clamp(static_cast<long>(std::floor((b.hi[a] + layer.half_side()) / 2.0)), 0L, last);
            idx[a] = lo[a];
        }
        double req = std::numeric_limits<double>::infinity();
        while (true) {
            std::size_t flat = 0;
            Box local = b;
            for (std::size_t a = 0; a < layer.ell; ++a) {
                flat = flat * per_axis + static_cast<std::size_t>(idx[a]);
                const double centre = -layer.half_side() + 2.0 * static_cast<double>(idx[a]) + 1.0;
                local.lo[a] -= centre;
                local.hi[a] -= centre;
            }
            req = std::min(req, patch_required_size(patches[flat], PatchStage::full, res, local));
            std::size_t a = 0;
            for (; a < layer.ell; ++a) {
                if (idx[a] < hi[a]) {
                    ++idx[a];
                    break;
                }
                idx[a] = lo[a];
            }
            if (a == layer.ell) break;
        }
        return req;
    };
    q.evaluate = [&](std::span<const double> x, std::span<double> out) { layer_value(layer, patches, x, out); };
    return build_adaptive_quadrature(q);
}

/// Glued layer on a uniform grid. Each patch is sampled on its own aligned sub-grid and placed by
/// translation; the budget guards the ambient node count.
struct LayerMap {
    SampledMap map;
    std::vector<Box> patch_supports;
};

inline LayerMap build_layer(const LayerSpec& layer, const FractionalParams& params, const Grid& grid,
                            std::size_t node_budget = 4'000'000) {
    require(grid.node_count() <= node_budget, ErrorKind::budget,
            "layer grid has " + std::to_string(grid.node_count()) + " nodes, above the budget of " +
                std::to_string(node_budget) + "; use compositional accounting instead");
    const auto patch_grid = make_grid(layer.ell, Box::cube(layer.ell, 1.0), grid.spacing());
    std::vector<GluePiece> pieces;
    LayerMap out;
    for (std::size_t i = 0; i < layer.centres.size(); ++i) {
        const auto spec = make_patch_spec(layer.centres[i], layer.n, params);
        pieces.push_back({build_patch(spec, patch_grid), Placement{layer.offsets[i], 1.0}});
        out.patch_supports.push_back(pieces.back().placement.apply(Box::cube(layer.ell, 1.0)));
    }
    out.map = glue_disjoint(pieces, grid, Point(layer.ell, 0.0));
    return out;
}

} // namespace spl
