#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spl/error.hpp"

namespace spl {

using Point = std::vector<double>;

inline std::string format_point(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
}

/// Axis-aligned closed box [lo, hi] in R^m.
struct Box {
    Point lo;
    Point hi;

    std::size_t dim() const { return lo.size(); }

    double side(std::size_t axis) const { return hi[axis] - lo[axis]; }

    bool contains(std::span<const double> x, double tol = 0.0) const {
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) return false;
        return true;
    }

    bool contains(const Box& other, double tol = 0.0) const {
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (other.lo[a] < lo[a] - tol || other.hi[a] > hi[a] + tol) return false;
        return true;
    }

    /// True when the open interiors intersect.
    bool interiors_overlap(const Box& other) const {
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (other.hi[a] <= lo[a] || other.lo[a] >= hi[a]) return false;
        return true;
    }

    /// Euclidean distance from `x` to the box (0 inside).
    double distance(std::span<const double> x) const {
        double d2 = 0.0;
        for (std::size_t a = 0; a < lo.size(); ++a) {
            const double excess = std::max({lo[a] - x[a], 0.0, x[a] - hi[a]});
            d2 += excess * excess;
        }
        return std::sqrt(d2);
    }

    /// Euclidean distance between two boxes (0 when they touch or overlap).
    double distance(const Box& other) const {
        double d2 = 0.0;
        for (std::size_t a = 0; a < lo.size(); ++a) {
            const double gap = std::max({other.lo[a] - hi[a], 0.0, lo[a] - other.hi[a]});
            d2 += gap * gap;
        }
        return std::sqrt(d2);
    }

    double volume() const {
        double v = 1.0;
        for (std::size_t a = 0; a < lo.size(); ++a) v *= side(a);
        return v;
    }

    static Box cube(std::size_t dim, double half_side, std::span<const double> center = {}) {
        Box b{Point(dim), Point(dim)};
        for (std::size_t a = 0; a < dim; ++a) {
            const double c = center.empty() ? 0.0 : center[a];
            b.lo[a] = c - half_side;
            b.hi[a] = c + half_side;
        }
        return b;
    }
};

/// Uniform lattice over a box: nodes lo + i*h, i in [0, counts[a]) per axis, last axis fastest.
class Grid {
public:
    Grid() = default;

    Grid(Point lower, std::vector<std::size_t> counts, double spacing)
        : lower_(std::move(lower)), counts_(std::move(counts)), spacing_(spacing) {}

    std::size_t dim() const { return lower_.size(); }
    double spacing() const { return spacing_; }
    const Point& lower() const { return lower_; }
    const std::vector<std::size_t>& counts() const { return counts_; }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (auto c : counts_) n *= c;
        return n;
    }

    Box box() const {
        Box b{lower_, lower_};
        for (std::size_t a = 0; a < dim(); ++a) b.hi[a] = lower_[a] + spacing_ * static_cast<double>(counts_[a] - 1);
        return b;
    }

    std::vector<std::size_t> multi_index(std::size_t flat) const {
        std::vector<std::size_t> idx(dim());
        for (std::size_t a = dim(); a-- > 0;) {
            idx[a] = flat % counts_[a];
            flat /= counts_[a];
        }
        return idx;
    }

    std::size_t flat_index(std::span<const std::size_t> idx) const {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < dim(); ++a) flat = flat * counts_[a] + idx[a];
        return flat;
    }

    double coordinate(std::size_t axis, std::size_t i) const {
        return lower_[axis] + spacing_ * static_cast<double>(i);
    }

    void node(std::size_t flat, std::span<double> out) const {
        for (std::size_t a = dim(); a-- > 0;) {
            out[a] = coordinate(a, flat % counts_[a]);
            flat /= counts_[a];
        }
    }

    Point node(std::size_t flat) const {
        Point x(dim());
        node(flat, x);
        return x;
    }

private:
    Point lower_;
    std::vector<std::size_t> counts_;
    double spacing_ = 0.0;
};

/// Builds a grid over `box` with spacing `h`. Side lengths must be multiples of h to 1e-9 relative;
/// they are snapped to the exact multiple.
inline Grid make_grid(std::size_t dim, const Box& box, double h) {
    require(dim >= 1, ErrorKind::configuration, "grid dimension must be at least 1");
    require(box.lo.size() == dim && box.hi.size() == dim, ErrorKind::configuration,
            "box corners do not match the grid dimension");
    require(h > 0.0 && std::isfinite(h), ErrorKind::configuration, "grid spacing must be positive");
    std::vector<std::size_t> counts(dim);
    for (std::size_t a = 0; a < dim; ++a) {
        const double side = box.side(a);
        require(side > 0.0, ErrorKind::configuration, "degenerate box along axis " + std::to_string(a));
        const double cells = side / h;
        const double snapped = std::round(cells);
        require(std::abs(cells - snapped) <= 1e-9 * std::max(1.0, cells), ErrorKind::configuration,
                "box side " + std::to_string(side) + " is not a multiple of spacing " + std::to_string(h));
        counts[a] = static_cast<std::size_t>(snapped) + 1;
    }
    return Grid(box.lo, std::move(counts), h);
}

/// Similarity x -> scale * x + translate.
struct Placement {
    Point translate;
    double scale = 1.0;

    Placement inverse() const {
        require(scale > 0.0, ErrorKind::configuration, "placement scale must be positive");
        Placement inv{Point(translate.size()), 1.0 / scale};
        for (std::size_t a = 0; a < translate.size(); ++a) inv.translate[a] = -translate[a] / scale;
        return inv;
    }

    void apply(std::span<const double> x, std::span<double> out) const {
        for (std::size_t a = 0; a < x.size(); ++a) out[a] = scale * x[a] + (translate.empty() ? 0.0 : translate[a]);
    }

    Box apply(const Box& b) const {
        Box out{Point(b.dim()), Point(b.dim())};
        apply(b.lo, out.lo);
        apply(b.hi, out.hi);
        return out;
    }
};

/// Values in R^nu attached to the nodes of a grid; constant outside `support`.
struct SampledMap {
    Grid grid;
    std::size_t nu = 1;
    std::vector<double> values; // node-major, nu entries per node
    Box support;
    Point constant;

    std::span<const double> value(std::size_t node) const { return {values.data() + node * nu, nu}; }
    std::span<double> value(std::size_t node) { return {values.data() + node * nu, nu}; }

    /// Checks the type invariants; throws a consistency error on violation.
    void validate() const {
        require(values.size() == grid.node_count() * nu, ErrorKind::consistency, "value array length mismatch");
        require(constant.size() == nu, ErrorKind::consistency, "outer constant has wrong dimension");
        const double tol = 1e-12 * std::max(1.0, grid.spacing());
        Point x(grid.dim());
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            grid.node(i, x);
            if (support.contains(x, tol)) continue;
            auto v = value(i);
            for (std::size_t c = 0; c < nu; ++c)
                require(v[c] == constant[c], ErrorKind::consistency,
                        "value outside support differs from the outer constant at node " + format_point(x));
        }
    }
};

using PointFunction = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Samples `f` inside `support` and assigns `constant` elsewhere.
inline SampledMap sample_map(const Grid& grid, std::size_t nu, const PointFunction& f, const Box& support,
                             const Point& constant) {
    require(constant.size() == nu, ErrorKind::configuration, "outer constant has wrong dimension");
    SampledMap u{grid, nu, std::vector<double>(grid.node_count() * nu), support, constant};
    const double tol = 1e-12 * std::max(1.0, grid.spacing());
    Point x(grid.dim());
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        grid.node(i, x);
        auto out = u.value(i);
        if (!support.contains(x, tol)) {
            std::copy(constant.begin(), constant.end(), out.begin());
            continue;
        }
        f(x, out);
        for (double v : out)
            require(std::isfinite(v), ErrorKind::evaluation, "non-finite value at node " + format_point(x));
    }
    return u;
}

/// v(x) = u((x - translate) / scale). The grid is transformed together with the map; values are copied.
inline SampledMap rescale_map(const SampledMap& u, const Placement& placement) {
    require(placement.scale > 0.0, ErrorKind::configuration, "placement scale must be positive");
    Point lower(u.grid.dim());
    placement.apply(u.grid.lower(), lower);
    SampledMap v = u;
    v.grid = Grid(std::move(lower), u.grid.counts(), u.grid.spacing() * placement.scale);
    v.support = placement.apply(u.support);
    return v;
}

/// Restriction of `u` to the nodes lying in `box`.
inline SampledMap restrict_map(const SampledMap& u, const Box& box) {
    const auto& g = u.grid;
    const double h = g.spacing();
    Point lower(g.dim());
    std::vector<std::size_t> first(g.dim()), counts(g.dim());
    for (std::size_t a = 0; a < g.dim(); ++a) {
        const double lo = std::max(box.lo[a], g.lower()[a]);
        const double hi = std::min(box.hi[a], g.box().hi[a]);
        const auto i0 = static_cast<std::size_t>(std::ceil((lo - g.lower()[a]) / h - 1e-9));
        const auto i1 = static_cast<std::size_t>(std::floor((hi - g.lower()[a]) / h + 1e-9));
        require(i1 >= i0, ErrorKind::geometry, "restriction box contains no grid nodes");
        first[a] = i0;
        counts[a] = i1 - i0 + 1;
        lower[a] = g.coordinate(a, i0);
    }
    Grid sub(std::move(lower), counts, h);
    SampledMap out{sub, u.nu, std::vector<double>(sub.node_count() * u.nu), u.support, u.constant};
    std::vector<std::size_t> idx(g.dim());
    for (std::size_t i = 0; i < sub.node_count(); ++i) {
        auto local = sub.multi_index(i);
        for (std::size_t a = 0; a < g.dim(); ++a) idx[a] = local[a] + first[a];
        auto src = u.value(g.flat_index(idx));
        std::copy(src.begin(), src.end(), out.value(i).begin());
    }
    return out;
}

struct GluePiece {
    SampledMap map;
    Placement placement;
};

/// Glues placed copies of the pieces onto `ambient`, with `background` everywhere else.
/// Piece grids must land on ambient nodes (same spacing, aligned lower corner).
inline SampledMap glue_disjoint(const std::vector<GluePiece>& pieces, const Grid& ambient, const Point& background) {
    const std::size_t nu = background.size();
    std::vector<SampledMap> placed;
    placed.reserve(pieces.size());
    const Box ambient_box = ambient.box();
    const double tol = 1e-9 * ambient.spacing();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& piece = pieces[i];
        require(piece.map.nu == nu, ErrorKind::consistency, "piece " + std::to_string(i) + " has wrong value dimension");
        require(piece.map.constant == background, ErrorKind::consistency,
                "piece " + std::to_string(i) + " outer constant differs from the background");
        placed.push_back(rescale_map(piece.map, piece.placement));
        require(ambient_box.contains(placed.back().support, tol), ErrorKind::geometry,
                "piece " + std::to_string(i) + " support leaves the ambient box");
    }
    for (std::size_t i = 0; i < placed.size(); ++i)
        for (std::size_t j = i + 1; j < placed.size(); ++j)
            require(!placed[i].support.interiors_overlap(placed[j].support), ErrorKind::geometry,
                    "supports of pieces " + std::to_string(i) + " and " + std::to_string(j) + " overlap");

    SampledMap out{ambient, nu, std::vector<double>(ambient.node_count() * nu), ambient_box, background};
    for (std::size_t n = 0; n < ambient.node_count(); ++n)
        std::copy(background.begin(), background.end(), out.value(n).begin());

    std::vector<int> owner(ambient.node_count(), -1);
    Point x(ambient.dim());
    std::vector<std::size_t> idx(ambient.dim());
    for (std::size_t p = 0; p < placed.size(); ++p) {
        const auto& v = placed[p];
        require(std::abs(v.grid.spacing() - ambient.spacing()) <= 1e-9 * ambient.spacing(), ErrorKind::geometry,
                "piece " + std::to_string(p) + " spacing differs from the ambient spacing");
        for (std::size_t n = 0; n < ambient.node_count(); ++n) {
            ambient.node(n, x);
            if (!v.support.contains(x, tol)) continue;
            for (std::size_t a = 0; a < ambient.dim(); ++a) {
                const double t = (x[a] - v.grid.lower()[a]) / v.grid.spacing();
                const double r = std::round(t);
                require(std::abs(t - r) <= 1e-6 && r >= 0.0 && r < static_cast<double>(v.grid.counts()[a]),
                        ErrorKind::geometry, "piece " + std::to_string(p) + " grid is not aligned with the ambient grid");
                idx[a] = static_cast<std::size_t>(r);
            }
            auto src = v.value(v.grid.flat_index(idx));
            auto dst = out.value(n);
            if (owner[n] >= 0) {
                require(std::equal(src.begin(), src.end(), dst.begin()), ErrorKind::geometry,
                        "pieces " + std::to_string(owner[n]) + " and " + std::to_string(p) +
                            " disagree on a shared boundary node " + format_point(x));
                continue;
            }
            owner[n] = static_cast<int>(p);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    if (!placed.empty()) {
        out.support = placed.front().support;
        for (const auto& v : placed)
            for (std::size_t a = 0; a < ambient.dim(); ++a) {
                out.support.lo[a] = std::min(out.support.lo[a], v.support.lo[a]);
                out.support.hi[a] = std::max(out.support.hi[a], v.support.hi[a]);
            }
    }
    return out;
}

} // namespace spl
