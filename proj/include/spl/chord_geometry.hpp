#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "spl/error.hpp"
#include "spl/grid.hpp"
#include "spl/parallel.hpp"
#include "spl/sphere_projection.hpp"

namespace spl {

/// Two values c+- = c +- 2^{1-n} e_1 and a shift a, all in R^l.
struct ChordCase {
    Point c;
    int n = 1;
    Point a;

    double half_gap() const { return std::ldexp(1.0, 1 - n); }
    Point c_plus() const {
        Point p = c;
        p[0] += half_gap();
        return p;
    }
    Point c_minus() const {
        Point p = c;
        p[0] -= half_gap();
        return p;
    }

    /// Coordinates of a - c in the plane spanned by e_1 and the perpendicular part of a - c.
    std::pair<double, double> planar_offset() const {
        double perp2 = 0.0;
        for (std::size_t i = 1; i < c.size(); ++i) perp2 += (a[i] - c[i]) * (a[i] - c[i]);
        return {a[0] - c[0], std::sqrt(perp2)};
    }

    double x1() const {
        const auto [d1, dp] = planar_offset();
        return std::hypot(half_gap() - d1, dp);
    }
    double x2() const {
        const auto [d1, dp] = planar_offset();
        return std::hypot(half_gap() + d1, dp);
    }
    double distance() const {
        const auto [d1, dp] = planar_offset();
        return std::hypot(d1, dp);
    }
    /// cos phi with phi the angle between a - c and e_1; NaN when a = c.
    double cos_phi() const {
        const double r = distance();
        return r > 0.0 ? planar_offset().first / r : std::numeric_limits<double>::quiet_NaN();
    }
};

struct ChordValue {
    double identity = 0.0; // law-of-cosines route
    double direct = 0.0;   // |P(c+ - a) - P(c- - a)| in the reduced plane
    double discrepancy() const { return std::abs(identity - direct); }
};

/// Chord length two ways. The law of cosines gives |D|^2 = (|c+ - c-|^2 - (x1 - x2)^2) / (x1 x2)
/// with |c+ - c-| = 2^{2-n}; the direct route projects both points.
inline ChordValue chord_exact(const ChordCase& k) {
    require(k.c.size() == k.a.size() && k.c.size() >= 2, ErrorKind::configuration, "chord case dimensions differ");
    const double x1 = k.x1(), x2 = k.x2();
    if (!(x1 > 0.0 && x2 > 0.0)) fail(ErrorKind::singular_hit, "shift " + format_point(k.a) + " equals c+ or c-");
    const double g = k.half_gap();
    ChordValue v;
    const auto [d1, dp] = k.planar_offset();
    // 4 g^2 - (x1 - x2)^2 factors as (2g - |x1 - x2|)(2g + |x1 - x2|) with x1 - x2 = -4 g d1 / (x1 + x2).
    // The first factor is 2g S / (x1 + x2), S = x1 + x2 - 2|d1| written as a sum of nonnegative terms,
    // so nearly collinear shifts (chord close to 0) do not cancel.
    const double sum = x1 + x2, ad = std::abs(d1);
    const double slack = dp * dp / (x1 + std::abs(g - d1)) + dp * dp / (x2 + std::abs(g + d1)) +
                         2.0 * std::max(0.0, g - ad);
    v.identity = 2.0 * g / sum * std::sqrt(slack * (sum + 2.0 * ad) / (x1 * x2));
    const double p0 = (g - d1) / x1, p1 = -dp / x1;
    const double m0 = (-g - d1) / x2, m1 = -dp / x2;
    v.direct = std::hypot(p0 - m0, p1 - m1);
    return v;
}

struct LemmaReport {
    bool applicable = false;
    double chord = 0.0;
    double bound_ratio = 0.0;
};

/// Empirical constants for the two lower-bound lemmas (l = 2), rounded down from estimate_constant
/// with 10^5 samples per n over n = 1..8: 1.7017 (cube corner) and 0.8945 (at |a - c| = 2^{-n}).
struct ChordConstants {
    double geom1 = 1.70;
    double geom2 = 0.89;
};

/// a in the closed cube of inradius 2^{-n} about c: chord bounded below by a constant.
inline LemmaReport geom1_check(const ChordCase& k, const ChordConstants& constants = {}) {
    LemmaReport r;
    const double half = std::ldexp(1.0, -k.n);
    r.applicable = true;
    for (std::size_t i = 0; i < k.c.size(); ++i)
        if (std::abs(k.a[i] - k.c[i]) > half * (1.0 + 1e-15)) r.applicable = false;
    if (!r.applicable) return r;
    r.chord = chord_exact(k).identity;
    r.bound_ratio = r.chord / constants.geom1;
    return r;
}

/// |cos phi| <= 1/8 and |a - c| >= 2^{-n}: chord bounded below by a constant times 2^{1-n} / |a - c|.
inline LemmaReport geom2_check(const ChordCase& k) {
    LemmaReport r;
    const double dist = k.distance();
    const double cphi = k.cos_phi();
    r.applicable = dist >= std::ldexp(1.0, -k.n) && std::abs(cphi) <= 0.125;
    if (!r.applicable) return r;
    r.chord = chord_exact(k).identity;
    r.bound_ratio = r.chord / (k.half_gap() / dist);
    return r;
}

enum class ChordLemma { geom1, geom2 };

struct ConstantEstimate {
    double value = std::numeric_limits<double>::infinity();
    ChordCase argmin;
    std::size_t applicable = 0;
    std::map<int, double> per_n; // minimum per scale index
    double spread() const {      // (max - min) / min over the per-n minima
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& [n, v] : per_n) lo = std::min(lo, v), hi = std::max(hi, v);
        return (hi - lo) / lo;
    }
};

namespace detail {

/// One applicable case for the lemma at scale n, drawn with generator g.
inline ChordCase draw_case(ChordLemma lemma, int n, std::size_t ell, std::mt19937_64& g) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    ChordCase k{Point(ell), n, Point(ell)};
    for (auto& v : k.c) v = unit(g);
    const double half = std::ldexp(1.0, -n);
    if (lemma == ChordLemma::geom1) {
        for (std::size_t i = 0; i < ell; ++i) k.a[i] = k.c[i] + half * unit(g);
        return k;
    }
    // distance log-uniform in [2^{-n}, 2], direction with |cos phi| <= 1/8
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double rho = half * std::exp(u01(g) * std::log(2.0 / half));
    const double cphi = 0.125 * unit(g);
    Point perp(ell, 0.0);
    double pn = 0.0;
    while (pn < 1e-3) {
        for (std::size_t i = 1; i < ell; ++i) perp[i] = unit(g);
        pn = norm(perp);
    }
    const double sphi = std::sqrt(1.0 - cphi * cphi);
    k.a[0] = k.c[0] + rho * cphi;
    for (std::size_t i = 1; i < ell; ++i) k.a[i] = k.c[i] + rho * sphi * perp[i] / pn;
    return k;
}

} // namespace detail

/// Minimum over `samples` pseudo-random applicable cases per scale index n in [n_lo, n_hi] of the
/// normalised chord (geom1: the chord; geom2: chord |a - c| / 2^{1-n}). Samples are split into a
/// fixed number of chunks, each with its own generator, so the result does not depend on workers.
inline ConstantEstimate estimate_constant(ChordLemma lemma, int n_lo, int n_hi, std::size_t samples,
                                          std::uint64_t seed, std::size_t ell = 2,
                                          int workers = default_worker_count()) {
    require(samples >= 1000, ErrorKind::configuration, "constant estimation needs at least 1000 samples");
    require(n_lo >= 1 && n_hi >= n_lo, ErrorKind::configuration, "invalid scale range");
    require(ell >= 2, ErrorKind::configuration, "ell must be at least 2");
    constexpr std::size_t chunks = 64;
    ConstantEstimate est;
    for (int n = n_lo; n <= n_hi; ++n) {
        std::vector<ChordCase> best(chunks);
        std::vector<std::size_t> counted(chunks, 0);
        const auto mins = run_indexed(
            chunks,
            [&](std::size_t chunk) {
                std::seed_seq sq{seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(chunk),
                                 static_cast<std::uint64_t>(lemma)};
                std::mt19937_64 g(sq);
                const std::size_t begin = samples * chunk / chunks, end = samples * (chunk + 1) / chunks;
                double m = std::numeric_limits<double>::infinity();
                for (std::size_t i = begin; i < end; ++i) {
                    const auto k = detail::draw_case(lemma, n, ell, g);
                    const auto rep = lemma == ChordLemma::geom1 ? geom1_check(k, {1.0, 1.0}) : geom2_check(k);
                    if (!rep.applicable) continue;
                    ++counted[chunk];
                    if (rep.bound_ratio < m) m = rep.bound_ratio, best[chunk] = k;
                }
                return m;
            },
            workers);
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < chunks; ++c) {
            est.applicable += counted[c];
            if (mins[c] < m) m = mins[c];
            if (mins[c] < est.value) est.value = mins[c], est.argmin = best[c];
        }
        est.per_n[n] = m;
    }
    if (est.applicable == 0) fail(ErrorKind::sampling, "no applicable sample was drawn");
    return est;
}

} // namespace spl
