#include <gtest/gtest.h>

#include <cmath>

#include "spl/grid.hpp"
#include "spl/profiles.hpp"

using namespace spl;

namespace {

Box box1(double lo, double hi) { return Box{{lo}, {hi}}; }

void bump2(std::span<const double> x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    out[0] = profile::cutoff(r);
    out[1] = x[0] * profile::cutoff(r);
}

} // namespace

TEST(MakeGrid, ThreeNodeLine) {
    const auto g = make_grid(1, box1(0.0, 1.0), 0.5);
    ASSERT_EQ(g.node_count(), 3u);
    EXPECT_EQ(g.node(0)[0], 0.0);
    EXPECT_EQ(g.node(1)[0], 0.5);
    EXPECT_EQ(g.node(2)[0], 1.0);
}

TEST(MakeGrid, CoarseSquare) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 1.0);
    EXPECT_EQ(g.node_count(), 9u);
}

TEST(MakeGrid, CountMatchesEnumeration) {
    const std::vector<Box> boxes = {box1(-1.0, 2.0), Box{{0.0, -0.5}, {1.0, 0.25}},
                                    Box{{0.0, 0.0, 0.0}, {0.5, 0.75, 1.0}}};
    for (const auto& b : boxes) {
        const double h = 0.25;
        const auto g = make_grid(b.dim(), b, h);
        std::size_t formula = 1;
        for (std::size_t a = 0; a < b.dim(); ++a) formula *= static_cast<std::size_t>(std::lround(b.side(a) / h)) + 1;
        std::size_t enumerated = 0;
        for (std::size_t i = 0; i < g.node_count(); ++i)
            if (b.contains(g.node(i), 1e-12)) ++enumerated;
        EXPECT_EQ(g.node_count(), formula);
        EXPECT_EQ(enumerated, formula);
        EXPECT_EQ(g.flat_index(g.multi_index(g.node_count() - 1)), g.node_count() - 1);
    }
}

TEST(MakeGrid, RejectsBadInput) {
    EXPECT_THROW(make_grid(1, box1(0.0, 1.0), 0.3), Error);
    EXPECT_THROW(make_grid(0, Box{}, 0.1), Error);
    EXPECT_THROW(make_grid(1, box1(1.0, 1.0), 0.1), Error);
    try {
        make_grid(1, box1(0.0, 1.0), 0.3);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
    }
}

TEST(MakeGrid, SnapsWithinTolerance) {
    const auto g = make_grid(1, box1(0.0, 1.0), 0.1 * (1.0 + 1e-12));
    EXPECT_EQ(g.node_count(), 11u);
}

TEST(SampleMap, ConstantAndIdentity) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.25);
    const auto c = sample_map(g, 2, [](auto, auto out) { out[0] = 3.0, out[1] = -1.0; }, g.box(), {0.0, 0.0});
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        EXPECT_EQ(c.value(i)[0], 3.0);
        EXPECT_EQ(c.value(i)[1], -1.0);
    }
    const auto id = sample_map(g, 2, [](auto x, auto out) { out[0] = x[0], out[1] = x[1]; }, g.box(), {0.0, 0.0});
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const auto x = g.node(i);
        EXPECT_EQ(id.value(i)[0], x[0]);
        EXPECT_EQ(id.value(i)[1], x[1]);
    }
}

TEST(SampleMap, CutoffProfileRange) {
    const auto g = make_grid(2, Box::cube(2, 1.5), 0.1);
    const auto u = sample_map(g, 1, [](auto x, auto out) { out[0] = profile::cutoff(std::hypot(x[0], x[1])); },
                              g.box(), {0.0});
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        const auto x = g.node(i);
        const double r = std::hypot(x[0], x[1]);
        const double v = u.value(i)[0];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        if (r <= 0.5) EXPECT_EQ(v, 1.0);
        if (r >= 1.0) EXPECT_EQ(v, 0.0);
    }
}

TEST(SampleMap, NonFiniteNamesNode) {
    const auto g = make_grid(1, box1(-1.0, 1.0), 0.5);
    try {
        sample_map(g, 1, [](auto x, auto out) { out[0] = 1.0 / x[0]; }, g.box(), {0.0});
        FAIL() << "expected an evaluation error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::evaluation);
        EXPECT_NE(std::string(e.what()).find("(0)"), std::string::npos) << e.what();
    }
}

TEST(SampleMap, ConstantOutsideSupport) {
    const auto g = make_grid(2, Box::cube(2, 2.0), 0.125);
    const auto u = sample_map(g, 2, bump2, Box::cube(2, 1.0), {0.0, 0.0});
    EXPECT_NO_THROW(u.validate());
    auto broken = u;
    broken.value(0)[0] = 1e-300;
    EXPECT_THROW(broken.validate(), Error);
}

TEST(Rescale, IdentityAndConstant) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.125);
    const auto u = sample_map(g, 2, bump2, g.box(), {0.0, 0.0});
    const auto v = rescale_map(u, Placement{{0.0, 0.0}, 1.0});
    EXPECT_EQ(v.values, u.values);
    EXPECT_EQ(v.grid.lower(), u.grid.lower());
    const auto c = sample_map(g, 1, [](auto, auto out) { out[0] = 2.0; }, g.box(), {2.0});
    const auto cv = rescale_map(c, Placement{{0.3, -1.0}, 3.5});
    for (double x : cv.values) EXPECT_EQ(x, 2.0);
}

TEST(Rescale, InverseIsBitIdentical) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.125);
    const auto u = sample_map(g, 2, bump2, g.box(), {0.0, 0.0});
    const Placement pl{{0.7, -0.2}, 2.5};
    const auto back = rescale_map(rescale_map(u, pl), pl.inverse());
    EXPECT_EQ(back.values, u.values);
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(back.grid.lower()[a], u.grid.lower()[a], 1e-15);
    EXPECT_NEAR(back.grid.spacing(), u.grid.spacing(), 1e-16);
}

TEST(Restrict, KeepsValues) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.25);
    const auto u = sample_map(g, 2, bump2, g.box(), {0.0, 0.0});
    const auto r = restrict_map(u, Box{{0.0, -0.5}, {1.0, 0.5}});
    EXPECT_EQ(r.grid.node_count(), 25u);
    for (std::size_t i = 0; i < r.grid.node_count(); ++i) {
        const auto x = r.grid.node(i);
        Point v(2);
        bump2(x, v);
        EXPECT_EQ(r.value(i)[0], v[0]);
        EXPECT_EQ(r.value(i)[1], v[1]);
    }
}

TEST(Glue, SinglePieceIsItself) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.125);
    const auto u = sample_map(g, 2, bump2, g.box(), {0.0, 0.0});
    const auto out = glue_disjoint({{u, Placement{{0.0, 0.0}, 1.0}}}, g, {0.0, 0.0});
    EXPECT_EQ(out.values, u.values);
}

TEST(Glue, DyadicLayerOfFourPieces) {
    // four unit patches on the standard grid of 2^{n l} cubes, n = 1, l = 2, side 2^{1-n} = 1
    const auto g = make_grid(2, Box::cube(2, 0.5), 0.0625);
    const auto u = sample_map(g, 1, [](auto x, auto out) { out[0] = profile::cutoff(2.0 * std::hypot(x[0], x[1])); },
                              g.box(), {0.0});
    const auto ambient = make_grid(2, Box::cube(2, 1.0), 0.0625);
    std::vector<GluePiece> pieces;
    for (double cx : {-0.5, 0.5})
        for (double cy : {-0.5, 0.5}) pieces.push_back({u, Placement{{cx, cy}, 1.0}});
    const auto out = glue_disjoint(pieces, ambient, {0.0});
    for (const auto& piece : pieces) {
        const auto placed = rescale_map(piece.map, piece.placement);
        const auto back = restrict_map(out, placed.support);
        EXPECT_EQ(back.values, placed.values);
    }
}

TEST(Glue, ErrorsNameTheProblem) {
    const auto g = make_grid(1, box1(0.0, 1.0), 0.125);
    const auto u = sample_map(g, 1, [](auto x, auto out) { out[0] = std::sin(M_PI * x[0]); }, g.box(), {0.0});
    const auto ambient = make_grid(1, box1(0.0, 4.0), 0.125);
    try {
        glue_disjoint({{u, {{0.0}, 1.0}}, {u, {{0.5}, 1.0}}}, ambient, {0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::geometry);
        EXPECT_NE(std::string(e.what()).find("0 and 1"), std::string::npos);
    }
    auto shifted = u;
    shifted.constant = {1.0};
    try {
        glue_disjoint({{shifted, {{0.0}, 1.0}}}, ambient, {0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::consistency);
    }
}
