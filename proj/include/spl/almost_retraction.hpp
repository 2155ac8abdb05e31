#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spl/energy.hpp"
#include "spl/error.hpp"
#include "spl/fit.hpp"
#include "spl/parallel.hpp"
#include "spl/profiles.hpp"
#include "spl/quadrature.hpp"
#include "spl/sphere_projection.hpp"

// Almost retractions of the plane onto the unit circle and the counterexample for the method of
// almost projection on a one-dimensional domain.

namespace spl {

namespace detail {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Angle reduced to (-pi, pi].
inline double wrap_angle(double t) {
    t = std::remainder(t, two_pi);
    return t <= -std::numbers::pi ? t + two_pi : t;
}

} // namespace detail

/// Cap K = closed arc of half-width epsilon around the angle cap_center.
struct AlmostRetractionSpec {
    double epsilon = 0.1;
    double cap_center = 0.0;
    double iota = 0.3; // tube radius of the nearest-point extension

    void validate() const {
        require(epsilon > 0.0 && epsilon < std::numbers::pi / 4.0, ErrorKind::configuration,
                "epsilon must lie in (0, pi/4)");
        require(iota > 0.0 && iota < 1.0, ErrorKind::configuration, "iota must lie in (0, 1)");
        require(std::isfinite(cap_center), ErrorKind::configuration, "cap centre must be finite");
    }
};

/// P_eps on S^1 in angle coordinates t relative to the cap centre: the identity off [-eps, eps]; on
/// the cap, the angle runs backwards from -eps to eps - 2 pi, so the circle map has degree 0. The
/// slope is -S on the core and moves to +1 through cubic smoothsteps of width tau = eps / 10 at both
/// ends; S = (tau + 2 pi - 2 eps) / (2 eps - tau) makes the traversal close up.
class AlmostRetraction {
public:
    explicit AlmostRetraction(const AlmostRetractionSpec& spec) : spec_(spec) {
        spec_.validate();
        tau_ = 0.1 * spec_.epsilon;
        core_slope_ = (tau_ + detail::two_pi - 2.0 * spec_.epsilon) / (2.0 * spec_.epsilon - tau_);
    }

    const AlmostRetractionSpec& spec() const { return spec_; }
    double epsilon() const { return spec_.epsilon; }
    double core_slope() const { return core_slope_; }
    double smoothing_width() const { return tau_; }

    /// Continuous lift of the image angle. Degree 0 makes it periodic: lift(theta + 2 pi) = lift(theta).
    double lift(double theta) const {
        const double eps = spec_.epsilon;
        double t = detail::wrap_angle(theta - spec_.cap_center);
        if (t < -eps) t += detail::two_pi; // t in [-eps, 2 pi - eps)
        double g;
        if (t <= eps) g = -eps + cap_integral(t);
        else g = t - detail::two_pi;
        return spec_.cap_center + g;
    }

    /// Derivative of the lift.
    double slope(double theta) const {
        const double eps = spec_.epsilon;
        const double t = detail::wrap_angle(theta - spec_.cap_center);
        if (std::abs(t) >= eps) return 1.0;
        const double u = (eps - std::abs(t)) / tau_;
        if (u >= 1.0) return -core_slope_;
        return 1.0 - (1.0 + core_slope_) * profile::smoothstep3(u);
    }

    Point on_circle(double theta) const {
        const double g = lift(theta);
        return {std::cos(g), std::sin(g)};
    }

    /// Extension to R^2 as exp(i eta(|y|) lift(arg y)), eta a cubic smoothstep equal to 1 on |y| >= 1.
    Point operator()(std::span<const double> y) const {
        const double r = norm(y);
        if (r == 0.0) return {1.0, 0.0};
        const double g = profile::smoothstep3(r) * lift(std::atan2(y[1], y[0]));
        return {std::cos(g), std::sin(g)};
    }

    /// P_eps composed with the nearest-point extension of tube radius iota.
    Point after_nearest_point(std::span<const double> y) const {
        const auto z = nearest_point_extension(y, spec_.iota);
        return (*this)(z);
    }

private:
    /// Integral of the slope over [-eps, t], t in [-eps, eps].
    double cap_integral(double t) const {
        const double eps = spec_.epsilon, tau = tau_, S = core_slope_;
        auto ramp = [&](double u) { return tau * (u - (1.0 + S) * profile::smoothstep3_integral(u)); };
        const double first = ramp(1.0);
        if (t <= -eps + tau) return ramp((t + eps) / tau);
        if (t <= eps - tau) return first - S * (t - (-eps + tau));
        const double total = -(detail::two_pi - 2.0 * eps);
        return total - ramp((eps - t) / tau);
    }

    AlmostRetractionSpec spec_;
    double tau_ = 0.0;
    double core_slope_ = 0.0;
};

inline AlmostRetraction build_almost_retraction(const AlmostRetractionSpec& spec) { return AlmostRetraction(spec); }

struct RateReport {
    double epsilon = 0.0;
    double step = 0.0;
    double max_slope_eps = 0.0;        // max finite-difference slope times eps
    double min_halfcap_slope_eps = 0.0; // min slope over the half cap times eps
    double degree = 0.0;               // summed angle increments / 2 pi
    double max_jump = 0.0;             // largest angular jump between neighbouring samples
    double identity_slope_error = 0.0; // max |slope - 1| off the cap
    bool passes() const {
        return max_slope_eps <= detail::two_pi && min_halfcap_slope_eps >= 1.0 &&
               max_jump <= 3.0 * step * max_slope_eps / epsilon;
    }
};

/// Finite-difference survey of the circle map at angular step eps * step_fraction.
inline RateReport lipschitz_rate_check(const AlmostRetraction& P, double step_fraction = 0.01) {
    require(step_fraction > 0.0 && step_fraction <= 0.1, ErrorKind::configuration,
            "step fraction must lie in (0, 0.1]");
    const double eps = P.epsilon();
    RateReport rep;
    rep.epsilon = eps;
    const auto count = static_cast<std::size_t>(std::ceil(detail::two_pi / (eps * step_fraction)));
    rep.step = detail::two_pi / static_cast<double>(count);
    rep.min_halfcap_slope_eps = std::numeric_limits<double>::infinity();
    const double c = P.spec().cap_center;
    double total = 0.0;
    double prev = P.lift(c - std::numbers::pi);
    for (std::size_t j = 1; j <= count; ++j) {
        const double a = c - std::numbers::pi + rep.step * static_cast<double>(j - 1);
        const double b = a + rep.step;
        const double image = P.lift(b);
        const double d = detail::wrap_angle(image - prev);
        prev = image;
        total += d;
        const double slope = std::abs(d) / rep.step;
        rep.max_jump = std::max(rep.max_jump, std::abs(d));
        rep.max_slope_eps = std::max(rep.max_slope_eps, slope * eps);
        const double ta = detail::wrap_angle(a - c), tb = detail::wrap_angle(b - c);
        if (std::abs(ta) <= eps / 2.0 && std::abs(tb) <= eps / 2.0)
            rep.min_halfcap_slope_eps = std::min(rep.min_halfcap_slope_eps, slope * eps);
        if (std::min(std::abs(ta), std::abs(tb)) >= eps && std::abs(ta) < std::numbers::pi - rep.step)
            rep.identity_slope_error = std::max(rep.identity_slope_error, std::abs(slope - 1.0));
    }
    rep.degree = total / detail::two_pi;
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Counterexample on a one-dimensional domain.

/// unit: every patch lives on [-1, 1] and has k = ceil(eps^{-1/s}) copies, so v_eps has support of
/// length ~ 1/eps. compact: patches are shrunk to [-eps, eps] and k grows to ceil(eps^{-(p+1-sp)/(sp)})
/// to keep each cluster's energy of order one, so v_eps has support of bounded length.
enum class AlmostLayout { unit, compact };

struct AlmostCtrexSpec {
    double s = 0.4;
    double p = 1.5;
    double alpha = 0.0; // 0 selects (1 + min(p, 3)) / 2
    double iota = 0.3;
    double c_small = 0.25;                          // c_i+- = c_i +- c eps / 2 in angle
    double centre_density = 4.0 * std::numbers::pi; // |I| = ceil(density / eps)
    std::size_t centre_count = 0;                   // overrides |I| when positive
    double cap_center = 0.0;
    AlmostLayout layout = AlmostLayout::unit;

    double alpha_value() const { return alpha > 0.0 ? alpha : 0.5 * (1.0 + std::min(p, 3.0)); }
    bool regime_sp_lt_one() const { return s * p < 1.0; }
    bool regime_p_gt_one() const { return p > 1.0; }
    bool supercritical() const { return regime_sp_lt_one() && regime_p_gt_one(); }
    /// Exponent beta of the rescaling w_eps(x) = v_eps(x / eps^beta).
    double scaling_exponent() const { return alpha_value() / (1.0 - s * p); }
    FractionalParams params() const { return {s, p, 2}; }

    void validate() const {
        require(s > 0.0 && s < 1.0, ErrorKind::configuration, "s must lie in (0, 1)");
        require(p >= 1.0 && std::isfinite(p), ErrorKind::configuration, "p must be finite and at least 1");
        require(regime_sp_lt_one(), ErrorKind::configuration, "the construction needs sp < 1");
        const double a = alpha_value();
        if (regime_p_gt_one())
            require(a > 1.0 && a < p, ErrorKind::configuration, "alpha must lie in (1, p)");
        else
            require(a >= 1.0, ErrorKind::configuration, "alpha must be at least 1");
        require(iota > 0.0 && iota < 1.0, ErrorKind::configuration, "iota must lie in (0, 1)");
        require(c_small > 0.0 && c_small <= 1.0, ErrorKind::configuration, "c_small must lie in (0, 1]");
        require(centre_density > 0.0, ErrorKind::configuration, "centre density must be positive");
    }
};

/// One v_eps: centres, cluster size and frame scale.
struct AlmostLayer {
    AlmostCtrexSpec spec;
    double epsilon = 0.0;
    std::vector<double> angles; // c_i as angles
    std::size_t k = 1;          // copies per cluster
    double patch_scale = 1.0;   // frame [-r, r]
    double half_gap = 0.0;      // c_i+- = c_i +- half_gap

    std::size_t size() const { return angles.size(); }
    double cell_side() const { return patch_scale / (4.0 * static_cast<double>(k)); }
    double copy_scale() const { return cell_side() / 4.0; }
    /// Patch i occupies [offset(i) - r, offset(i) + r].
    double offset(std::size_t i) const {
        return patch_scale * (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(size()));
    }
    /// Half-length of the interval outside which v_eps equals the base point.
    double support_radius() const { return patch_scale * static_cast<double>(size()); }
};

inline AlmostLayer make_almost_layer(const AlmostCtrexSpec& spec, double epsilon) {
    spec.validate();
    require(epsilon > 0.0 && epsilon < std::numbers::pi / 4.0, ErrorKind::configuration,
            "epsilon must lie in (0, pi/4)");
    AlmostLayer L;
    L.spec = spec;
    L.epsilon = epsilon;
    const std::size_t count = spec.centre_count > 0
                                  ? spec.centre_count
                                  : static_cast<std::size_t>(std::ceil(spec.centre_density / epsilon * (1.0 - 1e-12)));
    for (std::size_t i = 0; i < count; ++i)
        L.angles.push_back(-std::numbers::pi + detail::two_pi * (static_cast<double>(i) + 0.5) /
                                                   static_cast<double>(count));
    const double sp = spec.s * spec.p;
    const double k_exponent = spec.layout == AlmostLayout::unit ? 1.0 / spec.s : (spec.p + 1.0 - sp) / sp;
    L.k = static_cast<std::size_t>(std::ceil(std::pow(epsilon, -k_exponent) * (1.0 - 1e-12)));
    L.patch_scale = spec.layout == AlmostLayout::unit ? 1.0 : epsilon;
    L.half_gap = spec.c_small * epsilon / 2.0;
    return L;
}

namespace detail {

/// Deviation of the cluster in the unit frame y in [-1, 1]: k copies of the 1D basic profile
/// psi(|t - 1|) - psi(|t + 1|) on [-1/8, 1/8].
inline double almost_cluster_deviation(double y, std::size_t k) {
    const double cs = 0.25 / static_cast<double>(k), lam = cs / 4.0;
    const double u = (y + 0.125) / cs;
    if (u < 0.0 || u >= static_cast<double>(k)) return 0.0;
    const double centre = -0.125 + cs * (std::floor(u) + 0.5);
    const double t = (y - centre) / lam;
    return profile::cutoff(std::abs(t - 1.0)) - profile::cutoff(std::abs(t + 1.0));
}

} // namespace detail

/// Angle of v_eps at x (the base point has angle 0).
inline double almost_angle(const AlmostLayer& L, double x) {
    const double r = L.patch_scale;
    const double u = (x + L.support_radius()) / (2.0 * r);
    if (u < 0.0 || u >= static_cast<double>(L.size())) return 0.0;
    const auto i = static_cast<std::size_t>(u);
    const double y = (x - L.offset(i)) / r;
    return L.angles[i] * profile::cutoff(std::abs(y)) + L.half_gap * detail::almost_cluster_deviation(y, L.k);
}

/// Parts of v_eps that a cloud may be restricted to.
enum class AlmostPart { layer, single_cluster };

struct AlmostResolution {
    double nodes_per_copy = 32.0;  // nodes across the nonconstant part (4 copy scales) of a copy
    double collar_nodes = 64.0;    // nodes across each collar transition
    double grading = 0.25;
    double margin = 2.0;           // extra room around the support, in patch scales
    std::size_t node_budget = 4'000'000;
};

namespace detail {

/// Leaf size wanted near x for the layer cloud, per unit patch frame.
inline double almost_required_size(const AlmostLayer& L, const AlmostResolution& res, const Box& b) {
    const double r = L.patch_scale;
    const double fine = 4.0 * L.copy_scale() / res.nodes_per_copy;
    const double collar = 0.5 * r / res.collar_nodes;
    const double lo = b.lo[0], hi = b.hi[0];
    const double R = L.support_radius();
    if (hi < -R) return std::max(collar, res.grading * (-R - hi));
    if (lo > R) return std::max(collar, res.grading * (lo - R));
    if (hi - lo > 2.0 * r) return 0.0;
    double req = std::numeric_limits<double>::infinity();
    const long first = std::max(0L, static_cast<long>(std::floor((lo + R) / (2.0 * r))));
    const long last = std::min(static_cast<long>(L.size()) - 1, static_cast<long>(std::floor((hi + R) / (2.0 * r))));
    for (long i = first; i <= last; ++i) {
        const double o = L.offset(static_cast<std::size_t>(i));
        const double ylo = (lo - o) / r, yhi = (hi - o) / r;
        // cluster square [-1/8, 1/8]
        const double dc = std::max({0.0, -0.125 - yhi, ylo - 0.125}) * r;
        if (dc == 0.0 && (yhi - ylo) > 0.25 / static_cast<double>(L.k)) return 0.0;
        req = std::min(req, std::max(fine, res.grading * dc));
        if (dc == 0.0) {
            // inside the square: distance to the nearest copy's nonconstant part is 0 (copies tile)
            req = std::min(req, fine);
        }
        // collar transitions 1/2 <= |y| <= 1
        auto gap = [](double a, double b2, double c0, double c1) { return std::max({0.0, c0 - b2, a - c1}); };
        const double dcol = std::min(gap(ylo, yhi, 0.5, 1.0), gap(ylo, yhi, -1.0, -0.5)) * r;
        req = std::min(req, std::max(collar, res.grading * dcol));
    }
    return req;
}

} // namespace detail

/// Adaptive cloud of v_eps (S^1-valued, nu = 2) over [-R - margin r, R + margin r].
inline QuadratureMap almost_quadrature(const AlmostLayer& L, const AlmostResolution& res = {}) {
    AdaptiveQuadratureSpec q;
    const double half = L.support_radius() + res.margin * L.patch_scale;
    q.domain = Box::cube(1, half);
    q.nu = 2;
    q.node_budget = res.node_budget;
    q.required_size = [&](const Box& b) { return detail::almost_required_size(L, res, b); };
    q.evaluate = [&](std::span<const double> x, std::span<double> out) {
        const double a = almost_angle(L, x[0]);
        out[0] = std::cos(a);
        out[1] = std::sin(a);
    };
    return build_adaptive_quadrature(q);
}

inline Box almost_quadrature_domain(const AlmostLayer& L, const AlmostResolution& res = {}) {
    return Box::cube(1, L.support_radius() + res.margin * L.patch_scale);
}

/// Sampled v_eps on a uniform grid; the grid must resolve the copies with at least 4 nodes each.
inline SampledMap build_almost_counterexample(const AlmostLayer& L, const Grid& grid) {
    require(grid.dim() == 1, ErrorKind::configuration, "the almost counterexample lives on a 1D domain");
    require(grid.spacing() <= L.copy_scale() + 1e-15, ErrorKind::resolution,
            "grid spacing does not resolve copies of scale " + std::to_string(L.copy_scale()));
    require(grid.node_count() <= 4'000'000, ErrorKind::budget,
            "grid exceeds the node budget; use the compositional scan instead");
    return sample_map(
        grid, 2,
        [&](std::span<const double> x, std::span<double> out) {
            const double a = almost_angle(L, x[0]);
            out[0] = std::cos(a);
            out[1] = std::sin(a);
        },
        Box::cube(1, L.support_radius()), Point{1.0, 0.0});
}

/// Image under F = P_eps o Pi o (. - xi) of the point of S^1 with angle theta, as an angle.
inline double almost_image_angle(const AlmostRetraction& P, double theta, std::span<const double> xi) {
    const double y0 = std::cos(theta) - xi[0], y1 = std::sin(theta) - xi[1];
    return P.lift(std::atan2(y1, y0));
}

/// Constants measured on small epsilon by direct quadrature.
struct AlmostConstants {
    double c_prime = 0.0;        // min projected cluster energy / (k (lam r)^{1-sp} E_b chord^p)
    double basic_energy = 0.0;   // E of the scalar 1D basic profile
    double cluster_factor = 0.0; // measured cluster energy / k (lam r)^{1-sp} h^p E_b
    double glue_factor = 0.0;    // measured E(v_eps) / model
    std::vector<double> collar_table; // E of the collar at angle theta, sampled on [0, pi]
    bool measured = false;

    void require_measured() const {
        require(measured, ErrorKind::configuration, "almost-projection constants have not been measured");
    }
    double collar_energy(double theta) const {
        const double t = std::abs(theta) / std::numbers::pi * static_cast<double>(collar_table.size() - 1);
        const auto i = std::min(static_cast<std::size_t>(t), collar_table.size() - 2);
        const double w = t - static_cast<double>(i);
        return (1.0 - w) * collar_table[i] + w * collar_table[i + 1];
    }
};

namespace detail {

inline QuadratureMap scalar_cloud_1d(double half, double fine, double grading, const Box& feature,
                                     const std::function<double(double)>& f) {
    AdaptiveQuadratureSpec q;
    q.domain = Box::cube(1, half);
    q.nu = 1;
    q.required_size = [&](const Box& b) { return std::max(fine, grading * b.distance(feature)); };
    q.evaluate = [&](std::span<const double> x, std::span<double> out) { out[0] = f(x[0]); };
    return build_adaptive_quadrature(q);
}

/// Cloud of the cluster of patch i of L alone (values on S^1), restricted to its square.
inline QuadratureMap almost_cluster_cloud(const AlmostLayer& L, double centre_angle, const AlmostResolution& res) {
    AdaptiveQuadratureSpec q;
    q.domain = Box::cube(1, 0.125 * L.patch_scale);
    q.nu = 2;
    const double fine = 4.0 * L.copy_scale() / res.nodes_per_copy;
    q.required_size = [fine](const Box&) { return fine; };
    q.evaluate = [&](std::span<const double> x, std::span<double> out) {
        const double a = centre_angle + L.half_gap * almost_cluster_deviation(x[0] / L.patch_scale, L.k);
        out[0] = std::cos(a);
        out[1] = std::sin(a);
    };
    return build_adaptive_quadrature(q);
}

/// k (lam r)^{1-sp} E_b: energy of the cluster per unit amplitude^p in the copy-scaling model.
inline double cluster_unit_energy(const AlmostLayer& L, double basic_energy) {
    const double sp = L.spec.s * L.spec.p;
    return static_cast<double>(L.k) * std::pow(L.copy_scale(), 1.0 - sp) * basic_energy;
}

} // namespace detail

struct AlmostCalibration {
    std::vector<double> epsilons = {0.25, 0.125}; // C' and the cluster factor
    double glue_epsilon = 0.25;                   // direct layer energy
    std::size_t shifts = 16;
    std::size_t collar_samples = 33;
    std::uint64_t seed = 20240607;
    AlmostResolution resolution;
    EnergyOptions energy = [] {
        EnergyOptions o;
        o.scheme = PairScheme::treecode;
        return o;
    }();
};

/// Additive model of E(v_eps): clusters plus collars, times the glue factor.
inline double almost_upper_model(const AlmostLayer& L, const AlmostConstants& k) {
    const double sp = L.spec.s * L.spec.p;
    const double cluster = k.cluster_factor * detail::cluster_unit_energy(L, k.basic_energy) *
                           std::pow(L.half_gap, L.spec.p);
    std::vector<double> terms;
    terms.reserve(L.size());
    for (double a : L.angles) terms.push_back(cluster + std::pow(L.patch_scale, 1.0 - sp) * k.collar_energy(a));
    return k.glue_factor * pairwise_sum(terms);
}

/// Sum over patches of C' k (lam r)^{1-sp} E_b |F(c+) - F(c-)|^p for the shift xi.
inline double almost_lower_model(const AlmostLayer& L, const AlmostConstants& k, const AlmostRetraction& P,
                                 std::span<const double> xi) {
    const double unit = k.c_prime * detail::cluster_unit_energy(L, k.basic_energy);
    std::vector<double> terms;
    terms.reserve(L.size());
    for (double a : L.angles) {
        const double d = almost_image_angle(P, a + L.half_gap, xi) - almost_image_angle(P, a - L.half_gap, xi);
        terms.push_back(std::pow(2.0 * std::abs(std::sin(0.5 * d)), L.spec.p));
    }
    return unit * pairwise_sum(terms);
}

struct AlmostCalibrationRecord {
    AlmostConstants constants;
    std::vector<double> ratio_samples;
    std::vector<double> cluster_factors;
    double direct_layer_energy = 0.0;
};

inline AlmostCalibrationRecord measure_almost_constants(const AlmostCtrexSpec& spec,
                                                        const AlmostCalibration& cal = {}) {
    spec.validate();
    require(!cal.epsilons.empty() && cal.shifts >= 1 && cal.collar_samples >= 2, ErrorKind::configuration,
            "calibration needs epsilons, shifts and collar samples");
    const auto params = spec.params();
    AlmostCalibrationRecord rec;
    auto& k = rec.constants;
    const Box core = Box::cube(1, 2.0);
    const auto basic = detail::scalar_cloud_1d(16.0, 1.0 / 32.0, 0.25, core, [](double t) {
        return profile::cutoff(std::abs(t - 1.0)) - profile::cutoff(std::abs(t + 1.0));
    });
    const double zero = 0.0;
    k.basic_energy = gagliardo_energy_whole_space(basic, params, Box::cube(1, 16.0), {&zero, 1}, cal.energy).value;
    for (std::size_t j = 0; j < cal.collar_samples; ++j) {
        const double theta = std::numbers::pi * static_cast<double>(j) / static_cast<double>(cal.collar_samples - 1);
        AdaptiveQuadratureSpec q;
        q.domain = Box::cube(1, 4.0);
        q.nu = 2;
        const Box collar = Box::cube(1, 1.0);
        q.required_size = [&](const Box& b) { return std::max(1.0 / 128.0, 0.25 * b.distance(collar)); };
        q.evaluate = [&](std::span<const double> x, std::span<double> out) {
            const double a = theta * profile::cutoff(std::abs(x[0]));
            out[0] = std::cos(a);
            out[1] = std::sin(a);
        };
        const auto cloud = build_adaptive_quadrature(q);
        const Point base{1.0, 0.0};
        k.collar_table.push_back(gagliardo_energy_whole_space(cloud, params, q.domain, base, cal.energy).value);
    }
    std::mt19937_64 g(cal.seed);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    k.c_prime = std::numeric_limits<double>::infinity();
    for (double eps : cal.epsilons) {
        const auto L = make_almost_layer(spec, eps);
        const auto P = build_almost_retraction({eps, spec.cap_center, spec.iota});
        const double unit = detail::cluster_unit_energy(L, k.basic_energy);
        // cluster factor from the scalar-like cluster around angle 0
        const auto cloud0 = detail::almost_cluster_cloud(L, 0.0, cal.resolution);
        rec.cluster_factors.push_back(gagliardo_energy(cloud0, params, cal.energy).value /
                                      (unit * std::pow(L.half_gap, spec.p)));
        for (std::size_t t = 0; t < cal.shifts; ++t) {
            // centres near the cap make the chord large; draw half of them there
            const double centre = t % 2 == 0 ? angle(g) : spec.cap_center + eps * (2.0 * (angle(g) / std::numbers::pi));
            const Point xi = random_in_ball(2, g, spec.iota);
            const auto cloud = detail::almost_cluster_cloud(L, centre, cal.resolution);
            QuadratureMap img = cloud;
            for (std::size_t i = 0; i < img.size(); ++i) {
                auto v = img.value(i);
                const double a = almost_image_angle(P, std::atan2(v[1], v[0]), xi);
                v[0] = std::cos(a);
                v[1] = std::sin(a);
            }
            const double d = almost_image_angle(P, centre + L.half_gap, xi) - almost_image_angle(P, centre - L.half_gap, xi);
            const double chord = 2.0 * std::abs(std::sin(0.5 * d));
            const double r = gagliardo_energy(img, params, cal.energy).value / (unit * std::pow(chord, spec.p));
            rec.ratio_samples.push_back(r);
            k.c_prime = std::min(k.c_prime, r);
        }
    }
    k.cluster_factor = *std::max_element(rec.cluster_factors.begin(), rec.cluster_factors.end());
    k.glue_factor = 1.0;
    const auto L = make_almost_layer(spec, cal.glue_epsilon);
    const auto q = almost_quadrature(L, cal.resolution);
    const Point base{1.0, 0.0};
    rec.direct_layer_energy =
        gagliardo_energy_whole_space(q, params, almost_quadrature_domain(L, cal.resolution), base, cal.energy).value;
    k.glue_factor = std::max(1.0, rec.direct_layer_energy / almost_upper_model(L, k));
    k.measured = true;
    return rec;
}

/// Direct quadrature energy of v_eps over R, or of P_eps o Pi o (v_eps - xi) when a retraction is given.
inline double almost_direct_energy(const AlmostLayer& L, const AlmostResolution& res, const EnergyOptions& opt,
                                   const AlmostRetraction* P = nullptr, std::span<const double> xi = {}) {
    auto q = almost_quadrature(L, res);
    Point base{1.0, 0.0};
    if (P) {
        require(xi.size() == 2, ErrorKind::configuration, "the shift xi must have two components");
        auto push = [&](std::span<double> v) {
            const double a = almost_image_angle(*P, std::atan2(v[1], v[0]), xi);
            v[0] = std::cos(a);
            v[1] = std::sin(a);
        };
        for (std::size_t i = 0; i < q.size(); ++i) push(q.value(i));
        push(base);
    }
    return gagliardo_energy_whole_space(q, L.spec.params(), almost_quadrature_domain(L, res), base, opt).value;
}

struct AlmostScanRow {
    int n = 0;
    double epsilon = 0.0;
    std::size_t centres = 0;
    std::size_t k = 0;
    double support_radius = 0.0; // of w_eps
    double energy = 0.0;         // upper model of E(w_eps)
    double projected = 0.0;      // inf over the xi grid of the lower model of the projected energy of w_eps
    Point xi_star;
    bool interior = false; // the minimising xi is not on the outer ring of the grid
};

struct AlmostScanReport {
    AlmostCtrexSpec spec;
    AlmostConstants constants;
    std::vector<AlmostScanRow> rows;
    // exponents e with value ~ eps^e, from least-squares fits of log2 value against n
    double support_exponent = 0.0;
    double energy_exponent = 0.0;
    double projected_exponent = 0.0;
    bool regime_gate = false; // sp < 1 < p
};

/// Uniform xi grid of side `points` on [-iota, iota]^2, keeping |xi| < iota.
inline std::vector<Point> xi_grid(double iota, std::size_t points) {
    require(points >= 3, ErrorKind::configuration, "the xi grid needs at least 3 points per axis");
    std::vector<Point> out;
    const double h = 2.0 * iota / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i)
        for (std::size_t j = 0; j < points; ++j) {
            const Point xi{-iota + h * static_cast<double>(i), -iota + h * static_cast<double>(j)};
            if (norm(xi) < iota * (1.0 - 1e-12)) out.push_back(xi);
        }
    return out;
}

/// Rescaled energies of w_eps = v_eps(. / eps^beta) for eps = 2^{-n}, n in [n_lo, n_hi]: the energy
/// scales by eps^{beta (1 - sp)} = eps^alpha in one dimension.
inline AlmostScanReport almost_projection_scan(const AlmostCtrexSpec& spec, int n_lo, int n_hi,
                                               const AlmostConstants& k, std::size_t grid_points = 21,
                                               int workers = default_worker_count()) {
    spec.validate();
    k.require_measured();
    require(n_lo >= 1 && n_hi >= n_lo + 1, ErrorKind::configuration, "the scan needs at least two scales");
    AlmostScanReport rep;
    rep.spec = spec;
    rep.constants = k;
    rep.regime_gate = spec.supercritical();
    const auto xis = xi_grid(spec.iota, grid_points);
    const double h = 2.0 * spec.iota / static_cast<double>(grid_points - 1);
    const double beta = spec.scaling_exponent();
    std::vector<double> ns, ls, le, lp;
    for (int n = n_lo; n <= n_hi; ++n) {
        const double eps = std::ldexp(1.0, -n);
        const auto L = make_almost_layer(spec, eps);
        const auto P = build_almost_retraction({eps, spec.cap_center, spec.iota});
        const auto lows = run_indexed(
            xis.size(), [&](std::size_t i) { return almost_lower_model(L, k, P, xis[i]); }, workers);
        const auto best = static_cast<std::size_t>(std::min_element(lows.begin(), lows.end()) - lows.begin());
        const double scale = std::pow(eps, beta * (1.0 - spec.s * spec.p));
        AlmostScanRow row;
        row.n = n;
        row.epsilon = eps;
        row.centres = L.size();
        row.k = L.k;
        row.support_radius = std::pow(eps, beta) * L.support_radius();
        row.energy = scale * almost_upper_model(L, k);
        row.projected = scale * lows[best];
        row.xi_star = xis[best];
        row.interior = norm(row.xi_star) < spec.iota - 1.5 * h;
        rep.rows.push_back(row);
        ns.push_back(n);
        ls.push_back(std::log2(row.support_radius));
        le.push_back(std::log2(row.energy));
        lp.push_back(std::log2(row.projected));
    }
    rep.support_exponent = -fit_slope(ns, ls);
    rep.energy_exponent = -fit_slope(ns, le);
    rep.projected_exponent = -fit_slope(ns, lp);
    return rep;
}

} // namespace spl
