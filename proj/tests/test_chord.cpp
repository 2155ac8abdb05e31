#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spl/chord_geometry.hpp"

using namespace spl;

namespace {

// direct computation in R^l without the planar reduction
double chord_full(const ChordCase& k) {
    const auto p = project([&] {
        Point v = k.c_plus();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= k.a[i];
        return v;
    }());
    const auto m = project([&] {
        Point v = k.c_minus();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= k.a[i];
        return v;
    }());
    double d2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d2 += (p[i] - m[i]) * (p[i] - m[i]);
    return std::sqrt(d2);
}

} // namespace

TEST(Chord, Examples) {
    const auto a = chord_exact({{0.0, 0.0}, 1, {0.0, 1.0}});
    EXPECT_NEAR(a.identity, std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(a.direct, std::sqrt(2.0), 1e-15);
    const auto b = chord_exact({{0.3, -0.1}, 3, {0.3, -0.1}});
    EXPECT_NEAR(b.identity, 2.0, 1e-15);
    const auto c = chord_exact({{0.0, 0.0}, 2, {0.0, 1.0}});
    // c+- = (+-1/2, 0) seen from (0, 1): P-images (1/2, -1)/|.| and (-1/2, -1)/|.|, chord 1/sqrt(5/4)
    EXPECT_NEAR(c.identity, 2.0 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(c.direct, 2.0 / std::sqrt(5.0), 1e-15);
    try {
        chord_exact({{0.0, 0.0}, 1, {1.0, 0.0}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::singular_hit);
    }
}

TEST(Chord, PlanarReductionMatchesFullSpace) {
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    for (std::size_t ell : {2u, 3u, 5u})
        for (int i = 0; i < 2000; ++i) {
            ChordCase k{Point(ell), 1 + i % 6, Point(ell)};
            for (std::size_t j = 0; j < ell; ++j) k.c[j] = d(g), k.a[j] = d(g);
            const auto v = chord_exact(k);
            EXPECT_NEAR(v.direct, chord_full(k), 1e-12);
            EXPECT_NEAR(v.identity, chord_full(k), 1e-12);
        }
}

TEST(Chord, SeparationIsExact) {
    for (int n = 1; n <= 10; ++n) {
        ChordCase k{{0.37, -1.3}, n, {0.0, 0.0}};
        EXPECT_EQ(k.c_plus()[0] - k.c_minus()[0], std::ldexp(1.0, 2 - n));
    }
}

TEST(Geom1, Gate) {
    const ChordConstants cst{0.5, 1.0};
    const auto centre = geom1_check({{0.0, 0.0}, 3, {0.0, 0.0}}, cst);
    EXPECT_TRUE(centre.applicable);
    EXPECT_NEAR(centre.chord, 2.0, 1e-15);
    EXPECT_NEAR(centre.bound_ratio, 4.0, 1e-15);
    const auto corner = geom1_check({{0.0, 0.0}, 3, {0.125, 0.125}}, cst);
    EXPECT_TRUE(corner.applicable);
    // corner in units of 2^{-n}: c+ - a = (1, -1), c- - a = (-3, -1)
    const double corner_chord = std::hypot(1.0 / std::sqrt(2.0) + 3.0 / std::sqrt(10.0), -1.0 / std::sqrt(2.0) + 1.0 / std::sqrt(10.0));
    EXPECT_NEAR(corner.chord, corner_chord, 1e-14);
    EXPECT_FALSE(geom1_check({{0.0, 0.0}, 3, {0.13, 0.0}}, cst).applicable);
}

TEST(Geom2, Gate) {
    const auto r = geom2_check({{0.0, 0.0}, 2, {0.0, 1.0}});
    EXPECT_TRUE(r.applicable);
    EXPECT_NEAR(r.chord, 2.0 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(r.bound_ratio, 4.0 / std::sqrt(5.0), 1e-15);
    EXPECT_FALSE(geom2_check({{0.0, 0.0}, 2, {0.5, 0.0}}).applicable);
    EXPECT_FALSE(geom2_check({{0.0, 0.0}, 4, {0.0, std::ldexp(1.0, -5)}}).applicable);
    EXPECT_FALSE(geom2_check({{0.0, 0.0}, 4, {0.0, 0.0}}).applicable);
}

TEST(Chord, MonotoneAlongDiagonal) {
    double prev = 3.0;
    for (double t = 0.25; t < 20.0; t *= 1.3) {
        const double v = chord_exact({{0.0, 0.0}, 2, {t, t}}).identity;
        EXPECT_LT(v, prev);
        prev = v;
    }
}

TEST(Estimate, StableAcrossScales) {
    const auto g1 = estimate_constant(ChordLemma::geom1, 1, 6, 20000, 1);
    EXPECT_GT(g1.value, 0.0);
    EXPECT_LT(g1.spread(), 0.1);
    // the corner is the sharp configuration; sampling approaches it from above
    const double corner = std::hypot(1.0 / std::sqrt(2.0) + 3.0 / std::sqrt(10.0), 1.0 / std::sqrt(10.0) - 1.0 / std::sqrt(2.0));
    EXPECT_GE(g1.value, corner - 1e-12);
    EXPECT_LT(g1.value, corner * 1.02);
    const auto g2 = estimate_constant(ChordLemma::geom2, 1, 6, 20000, 1);
    EXPECT_GT(g2.value, 0.0);
    EXPECT_LT(g2.spread(), 0.1);
    const auto again = estimate_constant(ChordLemma::geom2, 1, 6, 20000, 1, 2, 3);
    EXPECT_EQ(again.value, g2.value);
    EXPECT_THROW(estimate_constant(ChordLemma::geom1, 1, 2, 10, 1), Error);
}
