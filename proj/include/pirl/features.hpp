#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pirl/common.hpp"
#include "pirl/config.hpp"

namespace pirl {

constexpr int kFeatureCount = 15;

// Fixed feature order. Every per-step feature is normalized to [0, 1] by the
// saturation constants below before integration.
inline const std::array<std::string, kFeatureCount>& feature_names() {
    static const std::array<std::string, kFeatureCount> names = {
        "lat_offset",         // distance from the nearest lane center
        "heading_dev",        // misalignment with the lane direction
        "off_road",           // indicator, saturates several features when set
        "lon_accel",          // commanded acceleration magnitude
        "lon_jerk",           // step change of commanded acceleration
        "lat_accel",          // v^2 * kappa
        "lat_jerk",           // step change of lateral acceleration
        "curvature",          // |kappa|
        "speed_dev",          // deviation from the target speed
        "progress_shortfall", // lag behind an ideal target-speed progress profile
        "lane_change_delay",  // lateral motion scheduled late in the horizon
        "lat_overshoot",      // crossing past the target lane center
        "obj_proximity",      // saturating inverse spatio-temporal gap
        "stop_violation",     // speed above the braking envelope of an active stop line
        "cp_corridor",        // lateral deviation from the checkpoint lane
    };
    return names;
}

struct FeatureConfig {
    double gamma = 1.0;  // per-second discount over the finite horizon

    double lat_offset_sat = 3.5;       // m
    double heading_dev_sat = 0.7854;   // rad
    double accel_sat = 4.0;            // m/s^2
    double lon_jerk_sat = 40.0;        // m/s^3 (step changes count against this)
    double lat_accel_sat = 4.0;        // m/s^2
    double lat_jerk_sat = 40.0;        // m/s^3
    double curvature_sat = 0.08;       // 1/m
    double latvel_sat = 1.5;           // m/s, lane-change delay scale
    double overshoot_sat = 1.75;       // m
    double proximity_range = 20.0;     // m, gap at which the object feature fades out
    double vehicle_radius = 2.5;       // m, disc approximation for the gap
    double stop_region = 60.0;         // m, braking envelope lookahead
    double stop_cross = 0.5;           // m past the line still penalized
    double stop_decel = 1.6;           // m/s^2 comfortable braking for the envelope
    double stop_speed_sat = 5.0;       // m/s
    double stop_free_speed = 0.3;      // m/s allowed at the line
    double corridor_sat = 7.0;         // m
    double corridor_range = 250.0;     // m remaining distance that arms cp_corridor

    static FeatureConfig from_config(const Config& cfg) {
        FeatureConfig f;
        f.gamma = cfg.get_double("features.gamma", f.gamma);
        f.lat_offset_sat = cfg.get_double("features.lat_offset_sat", f.lat_offset_sat);
        f.heading_dev_sat = cfg.get_double("features.heading_dev_sat", f.heading_dev_sat);
        f.accel_sat = cfg.get_double("features.accel_sat", f.accel_sat);
        f.lon_jerk_sat = cfg.get_double("features.lon_jerk_sat", f.lon_jerk_sat);
        f.lat_accel_sat = cfg.get_double("features.lat_accel_sat", f.lat_accel_sat);
        f.lat_jerk_sat = cfg.get_double("features.lat_jerk_sat", f.lat_jerk_sat);
        f.curvature_sat = cfg.get_double("features.curvature_sat", f.curvature_sat);
        f.latvel_sat = cfg.get_double("features.latvel_sat", f.latvel_sat);
        f.overshoot_sat = cfg.get_double("features.overshoot_sat", f.overshoot_sat);
        f.proximity_range = cfg.get_double("features.proximity_range", f.proximity_range);
        f.vehicle_radius = cfg.get_double("features.vehicle_radius", f.vehicle_radius);
        f.stop_region = cfg.get_double("features.stop_region", f.stop_region);
        f.stop_decel = cfg.get_double("features.stop_decel", f.stop_decel);
        f.stop_speed_sat = cfg.get_double("features.stop_speed_sat", f.stop_speed_sat);
        f.corridor_sat = cfg.get_double("features.corridor_sat", f.corridor_sat);
        f.corridor_range = cfg.get_double("features.corridor_range", f.corridor_range);
        return f;
    }
};

// Discounted left-endpoint quadrature of a sampled per-step profile:
//   sum_k gamma^{t_k} * values[k] * dt,  t_k = k * dt.
// This is the single integration rule behind every path-integral feature.
inline double discounted_path_integral(const std::vector<double>& values, double dt, double gamma) {
    if (dt <= 0.0) throw DimensionError("discounted_path_integral: dt must be positive");
    if (gamma <= 0.0) throw DimensionError("discounted_path_integral: gamma must be positive");
    const double log_gamma = std::log(gamma);
    double acc = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double t = static_cast<double>(k) * dt;
        acc += std::exp(log_gamma * t) * values[k] * dt;
    }
    return acc;
}

}  // namespace pirl
