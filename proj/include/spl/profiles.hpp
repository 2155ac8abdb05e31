#pragma once

#include <algorithm>

// Fixed smooth radial profiles shared by the constructions.

namespace spl::profile {

/// Quintic smoothstep 6t^5 - 15t^4 + 10t^3 on [0,1], clamped outside. C^2 at both ends.
inline double smoothstep5(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

/// Cubic smoothstep t^2 (3 - 2t), clamped. C^1 at both ends.
inline double smoothstep3(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

/// Antiderivative of smoothstep3 on [0,1] with value 0 at 0: t^3 - t^4/2.
inline double smoothstep3_integral(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t - 0.5 * t * t * t * t;
}

/// Radial cutoff: 1 on [0, 1/2], 0 on [1, inf), quintic transition in between.
inline double cutoff(double r) { return 1.0 - smoothstep5((r - 0.5) / 0.5); }

/// Width of the cutoff transition annulus.
inline constexpr double cutoff_transition_width = 0.5;

} // namespace spl::profile
