#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spl/error.hpp"
#include "spl/grid.hpp"
#include "spl/parallel.hpp"
#include "spl/quadrature.hpp"
#include "spl/treecode.hpp"

namespace spl {

/// Smoothness s, integrability p and target codimension ell.
struct FractionalParams {
    double s = 0.5;
    double p = 2.0;
    int ell = 2;

    void validate() const {
        require(s > 0.0 && s <= 1.0, ErrorKind::configuration, "s must lie in (0, 1]");
        require(p >= 1.0 && std::isfinite(p), ErrorKind::configuration, "p must be finite and at least 1");
        require(ell >= 2, ErrorKind::configuration, "ell must be at least 2");
    }

    double sp() const { return s * p; }
    bool regime_sp_lt_ell() const { return s * p < static_cast<double>(ell); }
    bool regime_p_ge_ell() const { return p >= static_cast<double>(ell); }
};

/// A computed energy (p-th power seminorm) with the quadrature that produced it.
struct EnergyValue {
    double value = 0.0;
    std::string scheme;
    double spacing = 0.0;
    std::size_t node_count = 0;
    int workers = 1;
    bool divergent = false;
    double tail_bound = 0.0; // bound on pairs dropped by a cutoff radius, 0 without cutoff
};

enum class PairScheme { exact, treecode };

struct EnergyOptions {
    PairScheme scheme = PairScheme::exact;
    std::size_t block_size = 256;
    int workers = default_worker_count();
    std::optional<double> cutoff_radius;
    TreecodeOptions tree;
};

namespace detail {

/// Exact pair sum in cache-blocked tiles. Each tile pair is one task; partial sums are reduced
/// pairwise in tile order, so the result does not depend on the worker count.
inline double exact_pair_sum(const QuadratureMap& q, double p, double kernel_power, const EnergyOptions& opt) {
    const std::size_t n = q.size();
    if (n < 2) return 0.0;
    const std::size_t bs = std::max<std::size_t>(1, opt.block_size);
    const std::size_t tiles = (n + bs - 1) / bs;
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    jobs.reserve(tiles * (tiles + 1) / 2);
    for (std::size_t a = 0; a < tiles; ++a)
        for (std::size_t b = a; b < tiles; ++b) jobs.emplace_back(a, b);
    const double half_p = 0.5 * p, half_q = 0.5 * kernel_power;
    const double cutoff2 = opt.cutoff_radius ? (*opt.cutoff_radius) * (*opt.cutoff_radius)
                                             : std::numeric_limits<double>::infinity();
    const std::size_t m = q.dim, nu = q.nu;
    const double* pts = q.points.data();
    const double* vals = q.values.data();
    const double* w = q.weights.data();
    return parallel_sum(
        jobs.size(),
        [&](std::size_t job) {
            const auto [ta, tb] = jobs[job];
            const std::size_t i0 = ta * bs, i1 = std::min(n, i0 + bs);
            const std::size_t j0 = tb * bs, j1 = std::min(n, j0 + bs);
            double acc = 0.0;
            for (std::size_t i = i0; i < i1; ++i) {
                const std::size_t jstart = ta == tb ? i + 1 : j0;
                const double* xi = pts + i * m;
                const double* ui = vals + i * nu;
                double row = 0.0;
                for (std::size_t j = jstart; j < j1; ++j) {
                    double v2 = 0.0;
                    for (std::size_t c = 0; c < nu; ++c) {
                        const double dv = ui[c] - vals[j * nu + c];
                        v2 += dv * dv;
                    }
                    if (v2 == 0.0) continue;
                    double d2 = 0.0;
                    for (std::size_t a = 0; a < m; ++a) {
                        const double dx = xi[a] - pts[j * m + a];
                        d2 += dx * dx;
                    }
                    if (d2 == 0.0 || d2 > cutoff2) continue;
                    row += w[j] * pair_term(d2, v2, half_p, half_q);
                }
                acc += w[i] * row;
            }
            return 2.0 * acc;
        },
        opt.workers);
}

inline std::string describe(const EnergyOptions& opt, const char* what) {
    std::ostringstream os;
    os << what << '/';
    if (opt.scheme == PairScheme::exact)
        os << "exact/block=" << opt.block_size;
    else
        os << "treecode/separation=" << opt.tree.separation << "/leaf=" << opt.tree.leaf_size
           << "/quantum=" << opt.tree.quantum_fraction;
    if (opt.cutoff_radius) os << "/cutoff=" << *opt.cutoff_radius;
    os << "/workers=" << opt.workers;
    return os.str();
}

inline double total_weight(const QuadratureMap& q) {
    double w = 0.0;
    for (double x : q.weights) w += x;
    return w;
}

} // namespace detail

/// Gagliardo energy sum_{x != y} w_x w_y |u(x) - u(y)|^p / |x - y|^{m + sp} of a weighted cloud.
inline EnergyValue gagliardo_energy(const QuadratureMap& q, const FractionalParams& params,
                                    const EnergyOptions& opt = {}) {
    params.validate();
    require(params.s < 1.0, ErrorKind::wrong_scheme, "s = 1 has no Gagliardo energy; use dirichlet_energy");
    require(q.size() > 0, ErrorKind::configuration, "energy region is empty");
    const double kernel_power = static_cast<double>(q.dim) + params.sp();
    EnergyValue e;
    e.spacing = q.spacing;
    e.node_count = q.size();
    e.workers = opt.workers;
    e.scheme = detail::describe(opt, "gagliardo");
    e.value = opt.scheme == PairScheme::exact ? detail::exact_pair_sum(q, params.p, kernel_power, opt)
                                              : treecode_pair_sum(q, params.p, kernel_power, opt.tree, opt.workers);
    if (opt.cutoff_radius) {
        // every dropped pair has |u(x) - u(y)| <= 2 max|u| and |x - y| > R
        const double sup = q.max_abs_value();
        e.tail_bound = detail::total_weight(q) * std::pow(2.0 * sup, params.p) * unit_sphere_area(q.dim) *
                       std::pow(*opt.cutoff_radius, -params.sp()) / params.sp();
    }
    e.divergent = !std::isfinite(e.value);
    return e;
}

/// Gagliardo energy of a sampled map over a region: h^{2m} sum over region pairs.
inline EnergyValue gagliardo_energy(const SampledMap& u, const FractionalParams& params, const Region& region,
                                    const EnergyOptions& opt = {}) {
    require(params.s < 1.0, ErrorKind::wrong_scheme, "s = 1 has no Gagliardo energy; use dirichlet_energy");
    const auto q = to_quadrature(u, region);
    require(q.size() > 0, ErrorKind::configuration, "energy region is empty");
    return gagliardo_energy(q, params, opt);
}

/// Cross term sum over x in A, y in B (both orders) of the Gagliardo integrand.
inline double gagliardo_cross_energy(const QuadratureMap& a, const QuadratureMap& b, const FractionalParams& params) {
    const double half_p = 0.5 * params.p, half_q = 0.5 * (static_cast<double>(a.dim) + params.sp());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) {
            double v2 = 0.0, d2 = 0.0;
            for (std::size_t c = 0; c < a.nu; ++c) v2 += (a.value(i)[c] - b.value(j)[c]) * (a.value(i)[c] - b.value(j)[c]);
            for (std::size_t k = 0; k < a.dim; ++k)
                d2 += (a.point(i)[k] - b.point(j)[k]) * (a.point(i)[k] - b.point(j)[k]);
            row += b.weights[j] * detail::pair_term(d2, v2, half_p, half_q);
        }
        acc += a.weights[i] * row;
    }
    return 2.0 * acc;
}

/// Integral of |x - y|^{-(m + sp)} over y outside the box `domain`, for x inside it:
/// (1/sp) times the integral over directions of the exit distance to the power -sp.
inline double exterior_kernel_integral(std::span<const double> x, const Box& domain, double sp) {
    const std::size_t m = x.size();
    auto exit_distance = [&](std::span<const double> dir) {
        double t = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < m; ++a) {
            if (dir[a] > 0.0) t = std::min(t, (domain.hi[a] - x[a]) / dir[a]);
            if (dir[a] < 0.0) t = std::min(t, (x[a] - domain.lo[a]) / -dir[a]);
        }
        return t;
    };
    double sum = 0.0;
    if (m == 1) {
        sum = std::pow(domain.hi[0] - x[0], -sp) + std::pow(x[0] - domain.lo[0], -sp);
    } else if (m == 2) {
        constexpr int angles = 128;
        for (int k = 0; k < angles; ++k) {
            const double t = 2.0 * std::numbers::pi * (k + 0.5) / angles;
            const double dir[2] = {std::cos(t), std::sin(t)};
            sum += std::pow(exit_distance(dir), -sp);
        }
        sum *= 2.0 * std::numbers::pi / angles;
    } else {
        require(m == 3, ErrorKind::configuration, "exterior integral implemented for dimensions 1 to 3");
        constexpr int dirs = 512;
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < dirs; ++k) {
            const double z = 1.0 - (2.0 * k + 1.0) / dirs, r = std::sqrt(1.0 - z * z);
            const double dir[3] = {r * std::cos(golden * k), r * std::sin(golden * k), z};
            sum += std::pow(exit_distance(dir), -sp);
        }
        sum *= 4.0 * std::numbers::pi / dirs;
    }
    return sum / sp;
}

/// Gagliardo energy over all of R^m of a map equal to `background` outside `domain`, given a cloud
/// that covers `domain`: the pair sum plus twice the exact exterior contribution of every node.
inline EnergyValue gagliardo_energy_whole_space(const QuadratureMap& q, const FractionalParams& params,
                                                const Box& domain, std::span<const double> background,
                                                const EnergyOptions& opt = {}) {
    EnergyValue e = gagliardo_energy(q, params, opt);
    std::vector<double> terms(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        double v2 = 0.0;
        const auto v = q.value(i);
        for (std::size_t c = 0; c < q.nu; ++c) v2 += (v[c] - background[c]) * (v[c] - background[c]);
        if (v2 == 0.0) continue;
        terms[i] = q.weights[i] * std::pow(v2, 0.5 * params.p) * exterior_kernel_integral(q.point(i), domain, params.sp());
    }
    e.value += 2.0 * pairwise_sum(terms);
    e.scheme += "/exterior";
    e.divergent = !std::isfinite(e.value);
    return e;
}

/// Per-region energies for pairwise disjoint regions. Pairs crossing regions are dropped.
inline std::vector<EnergyValue> localized_energy_table(const SampledMap& u, const FractionalParams& params,
                                                       const std::vector<Region>& regions,
                                                       const EnergyOptions& opt = {}) {
    std::vector<std::vector<std::size_t>> node_sets;
    node_sets.reserve(regions.size());
    for (const auto& r : regions) node_sets.push_back(r.nodes(u.grid));
    std::vector<int> owner(u.grid.node_count(), -1);
    for (std::size_t r = 0; r < node_sets.size(); ++r)
        for (auto i : node_sets[r]) {
            require(owner[i] < 0, ErrorKind::geometry,
                    "regions " + std::to_string(owner[i]) + " and " + std::to_string(r) + " overlap");
            owner[i] = static_cast<int>(r);
        }
    const auto all = to_quadrature(u, Region::whole());
    std::vector<EnergyValue> out;
    out.reserve(regions.size());
    for (const auto& nodes : node_sets) out.push_back(gagliardo_energy(all.subset(nodes), params, opt));
    return out;
}

/// Central-difference Dirichlet energy sum_x w_x |Du(x)|_F^p. Weights are trapezoidal with respect
/// to the grid box, so linear data over the full grid integrate exactly. Neighbours outside the
/// grid or in `region.excluded` force one-sided differences, which the scheme string reports.
inline EnergyValue dirichlet_energy(const SampledMap& u, double p, const Region& region,
                                    const EnergyOptions& opt = {}) {
    require(p >= 1.0, ErrorKind::configuration, "p must be at least 1");
    const auto& g = u.grid;
    const auto nodes = region.nodes(g);
    require(!nodes.empty(), ErrorKind::configuration, "energy region is empty");
    const std::size_t m = g.dim(), nu = u.nu;
    const double h = g.spacing();
    std::vector<char> excluded(g.node_count(), 0);
    for (auto i : region.excluded) excluded[i] = 1;
    std::size_t one_sided = 0;
    std::vector<double> terms(nodes.size(), 0.0);
    std::vector<std::size_t> idx(m);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const std::size_t i = nodes[k];
        idx = g.multi_index(i);
        double frob2 = 0.0;
        double weight = std::pow(h, static_cast<double>(m));
        bool usable = true;
        for (std::size_t a = 0; a < m; ++a) {
            if (idx[a] == 0 || idx[a] + 1 == g.counts()[a]) weight *= 0.5;
            auto neighbour = [&](int offset) -> std::optional<std::size_t> {
                if (offset < 0 && idx[a] == 0) return std::nullopt;
                if (offset > 0 && idx[a] + 1 >= g.counts()[a]) return std::nullopt;
                auto j = idx;
                j[a] = offset < 0 ? idx[a] - 1 : idx[a] + 1;
                const std::size_t f = g.flat_index(j);
                if (excluded[f]) return std::nullopt;
                return f;
            };
            const auto lo = neighbour(-1), hi = neighbour(+1);
            std::size_t left = i, right = i;
            double span = 0.0;
            if (lo && hi) {
                left = *lo;
                right = *hi;
                span = 2.0 * h;
            } else if (hi) {
                right = *hi;
                span = h;
                ++one_sided;
            } else if (lo) {
                left = *lo;
                span = h;
                ++one_sided;
            } else {
                usable = false;
                break;
            }
            for (std::size_t c = 0; c < nu; ++c) {
                const double d = (u.value(right)[c] - u.value(left)[c]) / span;
                frob2 += d * d;
            }
        }
        if (usable) terms[k] = weight * std::pow(frob2, 0.5 * p);
    }
    EnergyValue e;
    e.value = pairwise_sum(terms);
    e.spacing = h;
    e.node_count = nodes.size();
    e.workers = 1;
    e.scheme = one_sided ? "dirichlet/central+one-sided" : "dirichlet/central";
    e.divergent = !std::isfinite(e.value);
    return e;
}

} // namespace spl
