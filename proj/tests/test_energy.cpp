#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spl/energy.hpp"
#include "spl/profiles.hpp"

using namespace spl;

namespace {

SampledMap bump1d(double h, double lo = -1.0, double hi = 1.0) {
    const auto g = make_grid(1, Box{{lo}, {hi}}, h);
    return sample_map(g, 1, [](auto x, auto out) { out[0] = profile::cutoff(std::abs(x[0])); }, g.box(), {0.0});
}

EnergyOptions serial() {
    EnergyOptions o;
    o.workers = 1;
    return o;
}

// Gagliardo energy of the indicator of (0,1) on [lo, hi] for kernel exponent 1 + sp = 1.5, p = 2:
// 2 * int_0^1 int_{y outside (0,1)} |x - y|^{-1.5} dy dx, outer integral by composite Gauss-Legendre
// after the substitution x = t^2 which removes the endpoint singularity.
double indicator_oracle(double lo, double hi) {
    auto inner = [&](double x) {
        // antiderivative of |x - y|^{-3/2} in y is +-2 |x - y|^{-1/2}
        return 2.0 * (1.0 / std::sqrt(x) - 1.0 / std::sqrt(x - lo)) +
               2.0 * (1.0 / std::sqrt(1.0 - x) - 1.0 / std::sqrt(hi - x));
    };
    const double gx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
    const double gw[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                          0.2369268850561891};
    // symmetric about 1/2: integrate over (0, 1/2] twice with x = t^2
    const int panels = 200;
    const double tmax = std::sqrt(0.5);
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double a = tmax * k / panels, b = tmax * (k + 1) / panels;
        for (int j = 0; j < 5; ++j) {
            const double t = 0.5 * (a + b) + 0.5 * (b - a) * gx[j];
            total += 0.5 * (b - a) * gw[j] * inner(t * t) * 2.0 * t;
        }
    }
    return 2.0 * 2.0 * total;
}

} // namespace

TEST(Params, RegimeFlags) {
    FractionalParams a{0.4, 2.5, 2};
    EXPECT_TRUE(a.regime_sp_lt_ell());
    EXPECT_TRUE(a.regime_p_ge_ell());
    FractionalParams b{1.0, 1.5, 2};
    EXPECT_TRUE(b.regime_sp_lt_ell());
    EXPECT_FALSE(b.regime_p_ge_ell());
    EXPECT_THROW((FractionalParams{0.0, 2.0, 2}.validate()), Error);
    EXPECT_THROW((FractionalParams{0.5, 0.5, 2}.validate()), Error);
    EXPECT_THROW((FractionalParams{0.5, 2.0, 1}.validate()), Error);
}

TEST(Gagliardo, ConstantIsZero) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 0.1);
    const auto u = sample_map(g, 2, [](auto, auto out) { out[0] = 1.0, out[1] = 2.0; }, g.box(), {1.0, 2.0});
    EXPECT_EQ(gagliardo_energy(u, {0.5, 2.0, 2}, Region::whole(), serial()).value, 0.0);
}

TEST(Gagliardo, Errors) {
    const auto u = bump1d(0.1);
    try {
        gagliardo_energy(u, {1.0, 2.0, 2}, Region::whole());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::wrong_scheme);
    }
    try {
        gagliardo_energy(u, {0.5, 2.0, 2}, Region::in_ball({5.0}, 0.1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::configuration);
    }
}

TEST(Gagliardo, IndicatorOracle) {
    // infinite-domain value 4 / (sp (1 - sp)) at sp = 1/2 is 16; on [-2, 3] the truncated value is
    // 16 (1 + sqrt2 - sqrt3)
    const double oracle = indicator_oracle(-2.0, 3.0);
    EXPECT_NEAR(oracle, 16.0 * (1.0 + std::sqrt(2.0) - std::sqrt(3.0)), 1e-3);
    EXPECT_NEAR(indicator_oracle(-1e12, 1e12), 16.0, 1e-3);
    const double h = 1e-2;
    const auto g = make_grid(1, Box{{-2.0}, {3.0}}, h);
    const auto u = sample_map(g, 1, [](auto x, auto out) { out[0] = (x[0] > 0.0 && x[0] < 1.0) ? 1.0 : 0.0; },
                              g.box(), {0.0});
    const double e = gagliardo_energy(u, {0.25, 2.0, 2}, Region::whole()).value;
    EXPECT_NEAR(e / oracle, 1.0, 0.3);
}

TEST(Gagliardo, ExactScalingUnderGridTransform) {
    const auto u = bump1d(0.01);
    const FractionalParams fp{0.3, 2.0, 2};
    const double e0 = gagliardo_energy(u, fp, Region::whole(), serial()).value;
    const double e1 = gagliardo_energy(rescale_map(u, {{0.25}, 2.0}), fp, Region::whole(), serial()).value;
    EXPECT_NEAR(e1 / e0, std::pow(2.0, 1.0 - fp.sp()), 1e-12 * std::pow(2.0, 0.4));
}

TEST(Gagliardo, ResolutionConvergence) {
    const FractionalParams fp{0.3, 2.0, 2};
    const double a = gagliardo_energy(bump1d(0.01), fp, Region::whole()).value;
    const double b = gagliardo_energy(bump1d(0.005), fp, Region::whole()).value;
    EXPECT_LT(std::abs(a - b) / b, 0.05);
}

TEST(Gagliardo, DeterministicAcrossWorkers) {
    const auto u = bump1d(0.002);
    const FractionalParams fp{0.4, 2.5, 2};
    EnergyOptions one = serial(), many = serial();
    many.workers = 4;
    one.block_size = many.block_size = 64;
    const double a = gagliardo_energy(u, fp, Region::whole(), one).value;
    const double b = gagliardo_energy(u, fp, Region::whole(), many).value;
    EXPECT_EQ(a, b);
}

TEST(Gagliardo, CutoffReportsTailBound) {
    const auto u = bump1d(0.01, -3.0, 3.0);
    const FractionalParams fp{0.5, 2.0, 2};
    EnergyOptions opt = serial();
    const double full = gagliardo_energy(u, fp, Region::whole(), opt).value;
    opt.cutoff_radius = 1.5;
    const auto cut = gagliardo_energy(u, fp, Region::whole(), opt);
    EXPECT_LE(cut.value, full);
    EXPECT_GT(cut.tail_bound, 0.0);
    EXPECT_LE(full - cut.value, cut.tail_bound);
}

TEST(Localized, SuperadditiveWithExplicitCrossTerm) {
    const auto g = make_grid(1, Box{{-2.0}, {2.0}}, 0.02);
    const auto u = sample_map(
        g, 1, [](auto x, auto out) { out[0] = profile::cutoff(std::abs(4.0 * (x[0] + 1.0))) + 2.0 * profile::cutoff(std::abs(4.0 * (x[0] - 1.0))); },
        g.box(), {0.0});
    const FractionalParams fp{0.4, 2.0, 2};
    const auto left = Region::in_box(Box{{-2.0}, {-0.01}});
    const auto right = Region::in_box(Box{{0.01}, {2.0}});
    const auto table = localized_energy_table(u, fp, {left, right}, serial());
    const auto whole = gagliardo_energy(u, fp, Region::whole(), serial()).value;
    const auto qa = to_quadrature(u, left), qb = to_quadrature(u, right);
    const double cross = gagliardo_cross_energy(qa, qb, fp);
    // the node x = 0 belongs to neither region; recover its contribution separately
    const auto both = gagliardo_energy(to_quadrature(u, Region::in_box(Box{{-2.0}, {-0.01}})), fp, serial()).value;
    EXPECT_EQ(both, table[0].value);
    EXPECT_LE(table[0].value + table[1].value, whole);
    const auto lr = to_quadrature(u, Region::in_box(Box{{-2.0}, {2.0}}).without(Region::in_ball({0.0}, 1e-9).nodes(g)));
    const double union_energy = gagliardo_energy(lr, fp, serial()).value;
    EXPECT_NEAR(union_energy, table[0].value + table[1].value + cross, 1e-10 * union_energy);
    EXPECT_THROW(localized_energy_table(u, fp, {left, Region::whole()}), Error);
}

TEST(Localized, WholeRegionMatches) {
    const auto u = bump1d(0.02);
    const FractionalParams fp{0.4, 2.0, 2};
    EXPECT_EQ(localized_energy_table(u, fp, {Region::whole()}, serial())[0].value,
              gagliardo_energy(u, fp, Region::whole(), serial()).value);
}

TEST(Dirichlet, IdentityOnDisc) {
    const auto g = make_grid(2, Box::cube(2, 1.05), 0.01);
    const auto u = sample_map(g, 2, [](auto x, auto out) { out[0] = x[0], out[1] = x[1]; }, g.box(), {0.0, 0.0});
    const auto e = dirichlet_energy(u, 2.0, Region::in_ball({0.0, 0.0}, 1.0));
    EXPECT_NEAR(e.value / (2.0 * std::numbers::pi), 1.0, 0.02);
    EXPECT_EQ(e.scheme, "dirichlet/central");
}

TEST(Dirichlet, LinearMapExact) {
    const auto g = make_grid(2, Box{{0.0, 0.0}, {1.0, 2.0}}, 0.125);
    const double A[2][2] = {{1.0, -2.0}, {0.5, 3.0}};
    const auto u = sample_map(
        g, 2, [&](auto x, auto out) { out[0] = A[0][0] * x[0] + A[0][1] * x[1], out[1] = A[1][0] * x[0] + A[1][1] * x[1]; },
        g.box(), {0.0, 0.0});
    const double frob = std::sqrt(1.0 + 4.0 + 0.25 + 9.0);
    for (double p : {1.0, 2.0, 3.5}) {
        const auto e = dirichlet_energy(u, p, Region::whole());
        EXPECT_NEAR(e.value, std::pow(frob, p) * 2.0, 1e-12 * e.value);
        EXPECT_EQ(e.scheme, "dirichlet/central+one-sided");
    }
    const auto c = sample_map(g, 1, [](auto, auto out) { out[0] = 4.0; }, g.box(), {4.0});
    EXPECT_EQ(dirichlet_energy(c, 2.0, Region::whole()).value, 0.0);
}

TEST(Treecode, AgreesWithExactSum) {
    const auto g = make_grid(2, Box::cube(2, 1.0), 1.0 / 32);
    const auto u = sample_map(
        g, 2,
        [](auto x, auto out) {
            out[0] = profile::cutoff(4.0 * std::hypot(x[0] - 0.3, x[1]));
            out[1] = std::sin(3.0 * x[0]) * profile::cutoff(std::hypot(x[0], x[1]));
        },
        g.box(), {0.0, 0.0});
    const auto q = to_quadrature(u, Region::whole());
    const FractionalParams fp{0.4, 2.5, 2};
    EnergyOptions opt = serial();
    const double exact = gagliardo_energy(q, fp, opt).value;
    opt.scheme = PairScheme::treecode;
    const auto tree = gagliardo_energy(q, fp, opt);
    EXPECT_NEAR(tree.value / exact, 1.0, 0.02);
    EXPECT_NE(tree.scheme.find("treecode"), std::string::npos);
    opt.workers = 3;
    EXPECT_EQ(gagliardo_energy(q, fp, opt).value, tree.value);
}
