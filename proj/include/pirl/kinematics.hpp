#pragma once

#include <cmath>

#include "pirl/common.hpp"

namespace pirl {

// Kinematic state of a vehicle. Curvature is carried along so consecutive
// actions of a policy chain continuously; it defaults to 0 for plain poses.
struct VehicleState {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;    // rad, (-pi, pi]
    double speed = 0.0;  // m/s, never negative
    double curvature = 0.0;  // 1/m
    double time = 0.0;   // s

    Vec2 position() const { return {x, y}; }
};

// One sampled control primitive: constant longitudinal acceleration and
// constant curvature change rate held for `duration` seconds.
struct ControlAction {
    double accel = 0.0;           // m/s^2
    double curvature_rate = 0.0;  // 1/(m*s)
    double duration = 0.0;        // s
};

constexpr double kIntegrationSubStep = 0.05;  // s

// Explicit sub-stepped kinematic update. Heading advances with the mean
// turn rate of the sub-step and position follows the mid-step heading, which
// keeps the 0.05 s grid within centimeters of a 1 ms reference over a
// planning horizon. Speed clamps at zero instead of reversing.
inline VehicleState integrate(const VehicleState& state, const ControlAction& action, double dt) {
    if (dt <= 0.0) throw DimensionError("integrate: dt must be positive");
    const int n = static_cast<int>(std::ceil(dt / kIntegrationSubStep - 1e-12));
    const double h = dt / static_cast<double>(n);
    VehicleState s = state;
    for (int i = 0; i < n; ++i) {
        const double v0 = s.speed;
        const double v1 = std::max(0.0, v0 + action.accel * h);
        const double k0 = s.curvature;
        const double k1 = k0 + action.curvature_rate * h;
        const double v_avg = 0.5 * (v0 + v1);
        const double turn = v_avg * 0.5 * (k0 + k1) * h;
        const double yaw_mid = s.yaw + 0.5 * turn;
        s.x += v_avg * h * std::cos(yaw_mid);
        s.y += v_avg * h * std::sin(yaw_mid);
        s.yaw = wrap_angle(s.yaw + turn);
        s.speed = v1;
        s.curvature = k1;
        s.time += h;
    }
    return s;
}

}  // namespace pirl
