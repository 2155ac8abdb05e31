#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spl/error.hpp"
#include "spl/grid.hpp"
#include "spl/profiles.hpp"
#include "spl/quadrature.hpp"

// The model singular projection onto the unit sphere S^{l-1}, whose singular set is the origin.

namespace spl {

inline constexpr double default_singular_threshold = 1e-12;
inline constexpr double default_diffeo_radius = 0.5;
inline constexpr double default_degenerate_fraction = 0.01;

inline double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

/// A shift a together with the radius bound alpha that the sampling guarantees (|a| < alpha).
struct ShiftPoint {
    Point a;
    double radius_bound = 1.0;

    bool small_shift(double eps_diffeo = default_diffeo_radius) const { return norm(a) <= eps_diffeo; }
};

struct SingularHit {
    std::size_t node = 0;
    double distance = 0.0;
};

/// Uniform point of the closed ball of the given radius (rejection from the cube).
inline Point random_in_ball(std::size_t ell, std::mt19937_64& g, double radius = 1.0) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Point a(ell);
    while (true) {
        for (auto& v : a) v = d(g);
        if (norm(a) <= 1.0) break;
    }
    for (auto& v : a) v *= radius;
    return a;
}

/// P(x) = x / |x|.
inline void project(std::span<const double> x, std::span<double> out,
                    double delta_sing = default_singular_threshold) {
    const double r = norm(x);
    if (!(r > delta_sing)) fail(ErrorKind::singular_hit, "projection of " + format_point(x) + " hits the singular set");
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / r;
}

inline Point project(std::span<const double> x, double delta_sing = default_singular_threshold) {
    Point out(x.size());
    project(x, out, delta_sing);
    return out;
}

struct ShiftedProjection {
    SampledMap map;
    std::vector<SingularHit> hits;

    /// The region with every hit node removed.
    Region admissible(const Region& base = Region::whole()) const {
        std::vector<std::size_t> nodes;
        nodes.reserve(hits.size());
        for (const auto& h : hits) nodes.push_back(h.node);
        return base.without(std::move(nodes));
    }
};

/// Nodewise P(u(x) - a). Hit nodes keep the value 0 and are listed; they must be excluded from
/// energy regions via `admissible`.
inline ShiftedProjection shifted_projection(const SampledMap& u, const ShiftPoint& shift,
                                            double delta_sing = default_singular_threshold,
                                            double degenerate_fraction = default_degenerate_fraction) {
    require(u.nu == shift.a.size(), ErrorKind::configuration, "shift dimension differs from the map's value dimension");
    ShiftedProjection out{u, {}};
    Point y(u.nu);
    auto push = [&](std::span<const double> v, std::span<double> dst, std::size_t node) {
        for (std::size_t c = 0; c < u.nu; ++c) y[c] = v[c] - shift.a[c];
        const double r = norm(y);
        if (r <= delta_sing) {
            if (node != static_cast<std::size_t>(-1)) out.hits.push_back({node, r});
            std::fill(dst.begin(), dst.end(), 0.0);
            return false;
        }
        for (std::size_t c = 0; c < u.nu; ++c) dst[c] = y[c] / r;
        return true;
    };
    for (std::size_t i = 0; i < u.grid.node_count(); ++i) push(u.value(i), out.map.value(i), i);
    Point projected_constant(u.nu);
    push(u.constant, projected_constant, static_cast<std::size_t>(-1));
    out.map.constant = projected_constant;
    const double fraction = static_cast<double>(out.hits.size()) / static_cast<double>(u.grid.node_count());
    require(fraction <= degenerate_fraction, ErrorKind::degenerate,
            "shift " + format_point(shift.a) + " hits the singular set at " + std::to_string(out.hits.size()) +
                " nodes; it sits on a plateau of the map");
    return out;
}

/// Same as above for a weighted cloud: hit nodes are dropped from the returned cloud.
inline QuadratureMap shifted_projection(const QuadratureMap& q, std::span<const double> a,
                                        std::vector<SingularHit>* hits = nullptr,
                                        double delta_sing = default_singular_threshold) {
    QuadratureMap out{q.dim, q.nu, {}, {}, {}, q.spacing};
    out.points.reserve(q.points.size());
    out.values.reserve(q.values.size());
    out.weights.reserve(q.size());
    Point y(q.nu);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const auto v = q.value(i);
        for (std::size_t c = 0; c < q.nu; ++c) y[c] = v[c] - a[c];
        const double r = norm(y);
        if (r <= delta_sing) {
            if (hits) hits->push_back({i, r});
            continue;
        }
        for (double& c : y) c /= r;
        out.push(q.point(i), q.weights[i], y);
    }
    return out;
}

/// Largest value of |DP(x)| |x| over the samples, where |DP| is the operator norm of the analytic
/// Jacobian (I - x x^T / |x|^2) / |x|. The norm is computed by power iteration on the matrix.
inline double jacobian_blowup_check(const std::vector<Point>& samples) {
    double worst = 0.0;
    for (const auto& x : samples) {
        const double r = norm(x);
        if (!(r > 0.0)) fail(ErrorKind::singular_hit, "zero sample in the Jacobian check");
        const std::size_t l = x.size();
        std::vector<double> J(l * l);
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = 0; j < l; ++j) J[i * l + j] = ((i == j ? 1.0 : 0.0) - x[i] * x[j] / (r * r)) / r;
        // start orthogonal-ish to x so the iteration does not sit in the kernel
        Point v(l, 1.0);
        v[0] = -1.0;
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            Point w(l, 0.0);
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 0; j < l; ++j) w[i] += J[i * l + j] * v[j];
            const double nw = norm(w);
            if (nw == 0.0) {
                v.assign(l, 0.0);
                v[(it + 1) % l] = 1.0;
                continue;
            }
            lambda = nw / norm(v);
            for (std::size_t i = 0; i < l; ++i) v[i] = w[i] / nw;
        }
        worst = std::max(worst, lambda * r);
    }
    return worst;
}

/// Smooth extension of the nearest-point projection onto S^{l-1}: eta(|x|) x/|x| with eta the cubic
/// smoothstep rescaled to [0, 1 - iota] and equal to 1 beyond.
inline Point nearest_point_extension(std::span<const double> x, double iota) {
    require(iota > 0.0 && iota < 1.0, ErrorKind::configuration, "tube radius must lie in (0, 1)");
    const double r = norm(x);
    Point out(x.size(), 0.0);
    if (r == 0.0) return out;
    const double eta = profile::smoothstep3(r / (1.0 - iota));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = eta * x[i] / r;
    return out;
}

struct DiffeoReport {
    bool injective = false;
    double min_jacobian = 0.0;
    double total_turn = 0.0; // unwrapped angle swept by the image, 2 pi for a degree-one map
    std::size_t samples = 0;
};

/// For l = 2: samples theta -> P(x(theta) - a) on the unit circle and checks that the induced angle
/// map is strictly increasing with total turn 2 pi. min_jacobian is the analytic derivative
/// (1 - a.x) / |x - a|^2 minimised over the samples.
inline DiffeoReport restricted_diffeo_check(const ShiftPoint& shift, double angular_step) {
    require(shift.a.size() == 2, ErrorKind::configuration, "the diffeomorphism check is implemented for l = 2");
    require(angular_step > 0.0 && angular_step < 1.0, ErrorKind::configuration, "angular step must lie in (0, 1)");
    require(norm(shift.a) < 1.0, ErrorKind::configuration, "the shift must lie inside the unit disc");
    const double two_pi = 2.0 * std::numbers::pi;
    const auto count = static_cast<std::size_t>(std::ceil(two_pi / angular_step));
    DiffeoReport rep;
    rep.samples = count;
    rep.min_jacobian = std::numeric_limits<double>::infinity();
    rep.injective = true;
    const double a0 = shift.a[0], a1 = shift.a[1];
    double prev = 0.0;
    for (std::size_t k = 0; k <= count; ++k) {
        const double theta = two_pi * static_cast<double>(k) / static_cast<double>(count);
        const double x0 = std::cos(theta), x1 = std::sin(theta);
        const double y0 = x0 - a0, y1 = x1 - a1;
        const double r2 = y0 * y0 + y1 * y1;
        if (!(std::sqrt(r2) > default_singular_threshold))
            fail(ErrorKind::singular_hit, "circle sample coincides with the shift");
        const double psi = std::atan2(y1, y0);
        if (k < count) rep.min_jacobian = std::min(rep.min_jacobian, (1.0 - a0 * x0 - a1 * x1) / r2);
        if (k == 0) {
            prev = psi;
            continue;
        }
        double step = psi - prev;
        while (step <= -std::numbers::pi) step += two_pi;
        while (step > std::numbers::pi) step -= two_pi;
        if (!(step > 0.0)) rep.injective = false;
        rep.total_turn += step;
        prev = psi;
    }
    if (std::abs(rep.total_turn - two_pi) > 1e-9) rep.injective = false;
    return rep;
}

} // namespace spl
