#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "spl/error.hpp"
#include "spl/grid.hpp"

namespace spl {

/// Node set over which an energy is localized: the whole grid, a closed box or a closed ball,
/// minus an explicit list of excluded node indices.
struct Region {
    enum class Kind { whole, box, ball };

    Kind kind = Kind::whole;
    Box box;
    Point center;
    double radius = 0.0;
    std::vector<std::size_t> excluded; // sorted node indices

    static Region whole() { return {}; }
    static Region in_box(Box b) {
        Region r;
        r.kind = Kind::box;
        r.box = std::move(b);
        return r;
    }
    static Region in_ball(Point c, double radius) {
        Region r;
        r.kind = Kind::ball;
        r.center = std::move(c);
        r.radius = radius;
        return r;
    }

    bool contains_point(std::span<const double> x) const {
        switch (kind) {
        case Kind::whole: return true;
        case Kind::box: return box.contains(x, 1e-12);
        case Kind::ball: {
            double d2 = 0.0;
            for (std::size_t a = 0; a < x.size(); ++a) d2 += (x[a] - center[a]) * (x[a] - center[a]);
            return d2 <= radius * radius * (1.0 + 1e-12);
        }
        }
        return false;
    }

    Region without(std::vector<std::size_t> nodes) const {
        Region r = *this;
        r.excluded.insert(r.excluded.end(), nodes.begin(), nodes.end());
        std::sort(r.excluded.begin(), r.excluded.end());
        r.excluded.erase(std::unique(r.excluded.begin(), r.excluded.end()), r.excluded.end());
        return r;
    }

    /// Node indices of `grid` belonging to the region, ascending.
    std::vector<std::size_t> nodes(const Grid& grid) const {
        std::vector<std::size_t> out;
        Point x(grid.dim());
        auto ex = excluded.begin();
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            while (ex != excluded.end() && *ex < i) ++ex;
            if (ex != excluded.end() && *ex == i) continue;
            grid.node(i, x);
            if (contains_point(x)) out.push_back(i);
        }
        return out;
    }
};

/// A weighted point cloud carrying map values: the common input of every pair-sum energy.
struct QuadratureMap {
    std::size_t dim = 0;
    std::size_t nu = 0;
    std::vector<double> points;  // dim entries per node
    std::vector<double> weights; // one per node
    std::vector<double> values;  // nu entries per node
    double spacing = 0.0;        // finest node spacing, for reporting

    std::size_t size() const { return weights.size(); }
    std::span<const double> point(std::size_t i) const { return {points.data() + i * dim, dim}; }
    std::span<const double> value(std::size_t i) const { return {values.data() + i * nu, nu}; }
    std::span<double> value(std::size_t i) { return {values.data() + i * nu, nu}; }

    void push(std::span<const double> x, double w, std::span<const double> v) {
        points.insert(points.end(), x.begin(), x.end());
        weights.push_back(w);
        values.insert(values.end(), v.begin(), v.end());
    }

    void append(const QuadratureMap& other) {
        points.insert(points.end(), other.points.begin(), other.points.end());
        weights.insert(weights.end(), other.weights.begin(), other.weights.end());
        values.insert(values.end(), other.values.begin(), other.values.end());
        spacing = spacing == 0.0 ? other.spacing : std::min(spacing, other.spacing);
    }

    /// Sub-cloud of the listed nodes.
    QuadratureMap subset(std::span<const std::size_t> nodes) const {
        QuadratureMap q{dim, nu, {}, {}, {}, spacing};
        q.points.reserve(nodes.size() * dim);
        q.values.reserve(nodes.size() * nu);
        q.weights.reserve(nodes.size());
        for (auto i : nodes) q.push(point(i), weights[i], value(i));
        return q;
    }

    double max_abs_value() const {
        double m = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            double n2 = 0.0;
            for (double v : value(i)) n2 += v * v;
            m = std::max(m, std::sqrt(n2));
        }
        return m;
    }
};

/// Uniform-weight cloud (weight h^m) of the region's nodes.
inline QuadratureMap to_quadrature(const SampledMap& u, const Region& region) {
    const auto& g = u.grid;
    QuadratureMap q{g.dim(), u.nu, {}, {}, {}, g.spacing()};
    const double w = std::pow(g.spacing(), static_cast<double>(g.dim()));
    Point x(g.dim());
    for (auto i : region.nodes(g)) {
        g.node(i, x);
        q.push(x, w, u.value(i));
    }
    return q;
}

/// Maps a cloud through a pointwise function of the values, keeping nodes and weights.
inline QuadratureMap map_values(const QuadratureMap& q, std::size_t nu_out,
                                const std::function<void(std::span<const double>, std::span<double>)>& f) {
    QuadratureMap out{q.dim, nu_out, q.points, q.weights, std::vector<double>(q.size() * nu_out), q.spacing};
    for (std::size_t i = 0; i < q.size(); ++i) f(q.value(i), out.value(i));
    return out;
}

/// Surface measure of the unit sphere S^{m-1} in R^m.
inline double unit_sphere_area(std::size_t m) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * static_cast<double>(m)) / std::tgamma(0.5 * static_cast<double>(m));
}

/// Adaptive cell-centred quadrature of a function given pointwise: the box is split 2^m-fold until
/// each leaf is no larger than `required_size(leaf)`; every leaf contributes its centre with weight
/// equal to its volume. Leaves rejected by `keep` are dropped.
struct AdaptiveQuadratureSpec {
    Box domain;
    std::size_t nu = 1;
    std::function<double(const Box&)> required_size;
    std::function<void(std::span<const double>, std::span<double>)> evaluate;
    std::function<bool(std::span<const double>)> keep; // optional
    std::size_t node_budget = 4'000'000;
};

namespace detail {

inline void adaptive_split(const AdaptiveQuadratureSpec& spec, const Box& cell, QuadratureMap& out, Point& centre,
                           Point& value) {
    const std::size_t m = cell.dim();
    const double size = cell.side(0);
    if (size > spec.required_size(cell) * (1.0 + 1e-12)) {
        const std::size_t children = std::size_t{1} << m;
        for (std::size_t c = 0; c < children; ++c) {
            Box child = cell;
            for (std::size_t a = 0; a < m; ++a) {
                const double mid = 0.5 * (cell.lo[a] + cell.hi[a]);
                if ((c >> a) & 1U)
                    child.lo[a] = mid;
                else
                    child.hi[a] = mid;
            }
            adaptive_split(spec, child, out, centre, value);
        }
        return;
    }
    for (std::size_t a = 0; a < m; ++a) centre[a] = 0.5 * (cell.lo[a] + cell.hi[a]);
    if (spec.keep && !spec.keep(centre)) return;
    require(out.size() < spec.node_budget, ErrorKind::budget,
            "adaptive quadrature exceeds the node budget of " + std::to_string(spec.node_budget));
    spec.evaluate(centre, value);
    out.push(centre, cell.volume(), value);
    out.spacing = out.spacing == 0.0 ? size : std::min(out.spacing, size);
}

} // namespace detail

/// Domain must be a cube.
inline QuadratureMap build_adaptive_quadrature(const AdaptiveQuadratureSpec& spec) {
    const std::size_t m = spec.domain.dim();
    for (std::size_t a = 1; a < m; ++a)
        require(std::abs(spec.domain.side(a) - spec.domain.side(0)) <= 1e-12 * spec.domain.side(0),
                ErrorKind::configuration, "adaptive quadrature domain must be a cube");
    QuadratureMap out{m, spec.nu, {}, {}, {}, 0.0};
    Point centre(m), value(spec.nu);
    detail::adaptive_split(spec, spec.domain, out, centre, value);
    return out;
}

} // namespace spl
