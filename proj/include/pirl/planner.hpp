#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <vector>

#include "pirl/features.hpp"
#include "pirl/kinematics.hpp"
#include "pirl/rng.hpp"
#include "pirl/world.hpp"

namespace pirl {

// Linear reward weights theta, one non-negative entry per feature. The
// reward of a step is R = -theta . f, so every feature acts as a penalty.
struct RewardWeights {
    std::vector<double> theta;

    RewardWeights() : theta(kFeatureCount, 0.0) {}
    explicit RewardWeights(std::vector<double> t) : theta(std::move(t)) { validate(); }

    void validate() const {
        if (theta.size() != kFeatureCount)
            throw DimensionError("RewardWeights: expected " + std::to_string(kFeatureCount) +
                                 " weights, got " + std::to_string(theta.size()));
        for (double v : theta) {
            if (!std::isfinite(v)) throw DimensionError("RewardWeights: non-finite entry");
            if (v < 0.0) throw DimensionError("RewardWeights: negative entry");
        }
    }

    static RewardWeights random(Rng& rng) {
        std::vector<double> t(kFeatureCount);
        for (double& v : t) v = rng.uniform();
        return RewardWeights(std::move(t));
    }
};

// Spatio-temporal sample of a policy at one of the M time-equidistant
// control points: lateral offset in the ego start frame, yaw relative to the
// ego start heading, and route progress gained since the cycle start.
struct ControlPoint {
    double lat_offset = 0.0;
    double yaw = 0.0;
    double progress = 0.0;
};

struct Policy {
    std::vector<ControlAction> actions;
    std::vector<VehicleState> states;  // sub-step grid, states[0] is the ego state
    std::vector<double> pi_features;   // K discounted path integrals
    std::vector<ControlPoint> control_points;
    std::vector<VehicleState> cp_states;  // states at the control-point times
    double value = 0.0;
    double final_progress = 0.0;
};

struct PolicySet {
    long cycle = 0;
    VehicleState ego;
    std::vector<Policy> policies;
    bool sorted = false;
};

struct PlannerConfig {
    int branching = 4;
    int depth = 4;
    double horizon = 6.0;        // s
    int n_control_points = 13;   // M
    double cycle_period = 1.5;   // s of each policy executed per MPC cycle
    double substep = 0.05;       // s, state grid resolution
    long policy_cap = 20000;     // refuse B^D beyond this

    double accel_min = -4.0;     // m/s^2
    double accel_max = 2.5;
    double accel_sigma = 1.2;
    double brake_accel = -3.0;   // dedicated braking branch
    double speed_gain_tau = 4.0; // s, comfort accel time constant
    double lat_accel_limit = 3.5;   // m/s^2, caps sampled curvature
    double curv_rate_max = 0.05;    // 1/(m s)
    double curvature_abs_max = 0.06;  // 1/m, absolute windup bound for sampled targets
    double min_curv_speed = 5.0;    // m/s floor in the curvature cap

    double expert_progress_bonus = 0.05;  // value per meter in expert selection
    double collision_margin = 0.4;        // m footprint inflation
    double ego_length = 4.5;
    double ego_width = 2.0;

    FeatureConfig features;

    int steps_per_action() const {
        return static_cast<int>(std::lround(horizon / substep)) / depth;
    }

    void validate() const {
        if (branching < 1 || depth < 1) throw ConfigError("planner: branching and depth must be >= 1");
        if (horizon <= 0.0 || substep <= 0.0) throw ConfigError("planner: horizon and substep must be positive");
        if (cycle_period > horizon + 1e-9) throw ConfigError("planner: cycle period exceeds horizon");
        const long steps = std::lround(horizon / substep);
        if (steps % depth != 0) throw ConfigError("planner: horizon/substep must divide by depth");
        if (n_control_points < 2) throw ConfigError("planner: need at least 2 control points");
        if (steps % (n_control_points - 1) != 0)
            throw ConfigError("planner: control points must align with the state grid");
        double count = std::pow(static_cast<double>(branching), depth);
        if (count > static_cast<double>(policy_cap))
            throw CapacityError("planner: B^D = " + std::to_string(static_cast<long>(count)) +
                                " exceeds cap " + std::to_string(policy_cap));
    }

    static PlannerConfig from_config(const Config& cfg) {
        PlannerConfig p;
        p.branching = static_cast<int>(cfg.get_int("planner.branching", p.branching));
        p.depth = static_cast<int>(cfg.get_int("planner.depth", p.depth));
        p.horizon = cfg.get_double("planner.horizon", p.horizon);
        p.n_control_points = static_cast<int>(cfg.get_int("planner.control_points", p.n_control_points));
        p.cycle_period = cfg.get_double("planner.cycle_period", p.cycle_period);
        p.substep = cfg.get_double("planner.substep", p.substep);
        p.policy_cap = cfg.get_int("planner.policy_cap", p.policy_cap);
        p.accel_min = cfg.get_double("planner.accel_min", p.accel_min);
        p.accel_max = cfg.get_double("planner.accel_max", p.accel_max);
        p.accel_sigma = cfg.get_double("planner.accel_sigma", p.accel_sigma);
        p.brake_accel = cfg.get_double("planner.brake_accel", p.brake_accel);
        p.lat_accel_limit = cfg.get_double("planner.lat_accel_limit", p.lat_accel_limit);
        p.curv_rate_max = cfg.get_double("planner.curv_rate_max", p.curv_rate_max);
        p.curvature_abs_max = cfg.get_double("planner.curvature_abs_max", p.curvature_abs_max);
        p.expert_progress_bonus = cfg.get_double("planner.expert_progress_bonus", p.expert_progress_bonus);
        p.collision_margin = cfg.get_double("planner.collision_margin", p.collision_margin);
        p.features = FeatureConfig::from_config(cfg);
        p.validate();
        return p;
    }
};

// Per-cycle snapshot of everything the feature engine queries: the route
// table toward the active checkpoint, object predictions on the sub-step
// grid, and the stop lines that were still active when the cycle started.
struct CycleContext {
    const RoadNetwork* net = nullptr;
    int n_loop_lanes = 0;
    RouteTable route;
    int target_lane = 0;
    double initial_remaining = 0.0;
    double initial_offset_target = 0.0;  // signed offset to the target lane at cycle start
    std::vector<std::vector<PredictedPose>> predictions;  // [vehicle][substep]
    std::vector<TrafficVehicle> vehicle_dims;
    std::vector<std::vector<double>> active_stop_arcs;  // per active line: arc per loop lane
    double target_speed = 0.0;
    VehicleState ego;
    LaneQueryCache ego_cache;  // warm start template for policy rollouts
};

inline CycleContext build_cycle_context(const World& world, const VehicleState& ego,
                                        const PlannerConfig& cfg) {
    CycleContext ctx;
    ctx.net = &world.network();
    ctx.n_loop_lanes = world.scenario().n_loop_lanes;
    ctx.target_speed = world.scenario().target_speed;
    ctx.ego = ego;

    const Checkpoint& cp = world.next_checkpoint();
    ctx.target_lane = cp.lane;
    ctx.route = ctx.net->route_table(ctx.net->to_segment(cp.lane, cp.arc));

    LaneQueryResult q = ctx.net->lane_query(ego.position(), ego.yaw, &ctx.ego_cache);
    try {
        ctx.initial_remaining = ctx.net->route_progress(q.lane, q.arc, ctx.route);
    } catch (const NoRouteError&) {
        // off the route (e.g. on an exit): saturate, features handle the rest
        ctx.initial_remaining =
            ctx.net->lanes[static_cast<std::size_t>(cp.lane)].centerline.length();
    }

    const Polyline& target_cl = ctx.net->lanes[static_cast<std::size_t>(cp.lane)].centerline;
    ctx.initial_offset_target = target_cl.project(ego.position()).offset;

    const int n_steps = static_cast<int>(std::lround(cfg.horizon / cfg.substep));
    for (const TrafficVehicle& v : world.vehicles()) {
        ctx.predictions.push_back(predict_object(*ctx.net, v, cfg.horizon, cfg.substep));
        ctx.vehicle_dims.push_back(v);
        if (static_cast<int>(ctx.predictions.back().size()) < n_steps + 1)
            throw DimensionError("prediction shorter than rollout grid");
    }
    for (std::size_t i = 0; i < world.scenario().stop_lines.size(); ++i)
        if (world.stop_line_active(i))
            ctx.active_stop_arcs.push_back(world.scenario().stop_lines[i].lane_arc);
    return ctx;
}

namespace detail {

// Acceleration of the dedicated braking branch: track a stop at the nearest
// active stop line, match a slow lead vehicle, or plain hard braking when
// neither applies. Gives every tree level a sustained deceleration option
// that actually terminates where the environment demands it.
inline double braking_branch_accel(const CycleContext& ctx, const VehicleState& s,
                                   const PlannerConfig& cfg) {
    double accel = cfg.brake_accel;
    LaneQueryResult q = ctx.net->lane_query(s.position(), s.yaw);
    if (q.lane >= 0 && q.lane < ctx.n_loop_lanes) {
        const Polyline& cl = ctx.net->lanes[static_cast<std::size_t>(q.lane)].centerline;
        const double L = cl.length();
        double line_req = std::numeric_limits<double>::infinity();
        for (const auto& arcs : ctx.active_stop_arcs) {
            double fwd = arcs[static_cast<std::size_t>(q.lane)] - q.arc;
            fwd = std::fmod(fwd, L);
            if (fwd < 0.0) fwd += L;
            if (fwd > cfg.features.stop_region) continue;
            line_req = std::min(line_req, -s.speed * s.speed / (2.0 * std::max(fwd - 0.5, 0.3)));
        }
        if (std::isfinite(line_req)) accel = clampd(line_req, cfg.accel_min, 0.0);
        // lead vehicle ahead in lane: regulate toward its speed at a
        // speed-dependent desired gap
        for (std::size_t vi = 0; vi < ctx.predictions.size(); ++vi) {
            const PredictedPose& o = ctx.predictions[vi][0];
            Polyline::Projection pr = cl.project(o.position);
            if (std::fabs(pr.offset) > 0.6 * ctx.net->lanes[static_cast<std::size_t>(q.lane)].width) continue;
            double fwd = pr.s - q.arc;
            fwd = std::fmod(fwd, L);
            if (fwd < 0.0) fwd += L;
            if (fwd > 50.0) continue;
            const double v_obj = ctx.vehicle_dims[vi].speed;
            const double gap_des = 8.0 + 1.2 * s.speed;
            const double a_follow = clampd(0.5 * (v_obj - s.speed) + 0.15 * (fwd - gap_des),
                                           cfg.accel_min, cfg.accel_max);
            accel = std::min(accel, a_follow);
        }
    }
    return clampd(accel, cfg.accel_min, 0.0);
}

// Curvature toward a neighbor lane center (critically damped in the lateral
// error and relative heading), the center of the stratified steer branches.
inline double lane_tracking_curvature(const CycleContext& ctx, const VehicleState& s,
                                      int lane_offset, const PlannerConfig& cfg) {
    LaneQueryResult q = ctx.net->lane_query(s.position(), s.yaw);
    if (q.lane < 0) return 0.0;
    int target = q.lane;
    if (q.lane < ctx.n_loop_lanes) {
        target = q.lane + lane_offset;
        if (target < 0) target = 0;
        if (target >= ctx.n_loop_lanes) target = ctx.n_loop_lanes - 1;
    }
    const Polyline& cl = ctx.net->lanes[static_cast<std::size_t>(target)].centerline;
    Polyline::Projection pr = cl.project(s.position());
    const double psi = angle_diff(s.yaw, cl.heading_at(pr.s));
    const double v2 = std::max(s.speed * s.speed, cfg.min_curv_speed * cfg.min_curv_speed);
    const double omega = 0.4;   // rad/s, ~5 s lateral settle
    const double zeta = 1.6;    // overdamped against the 1.5 s action hold
    double kappa = -(omega * omega * pr.offset + 2.0 * zeta * omega * s.speed * psi) / v2;
    // stay on the arc when the lane itself curves
    const double lane_heading_ahead = cl.heading_at(cl.wrap_s(pr.s + std::max(s.speed, 1.0)));
    kappa += angle_diff(lane_heading_ahead, cl.heading_at(pr.s)) / std::max(s.speed, 1.0);
    const double k_lim = std::min(cfg.lat_accel_limit / v2, cfg.curvature_abs_max);
    return clampd(kappa, -k_lim, k_lim);
}

// Rolls one action forward on the sub-step grid, appending every sub-step
// state. Re-running this on a stored action sequence reproduces the stored
// states bit-exactly, which the dataset integrity checks rely on.
inline void roll_action(std::vector<VehicleState>& states, const ControlAction& a, int n_sub,
                        double substep) {
    VehicleState s = states.back();
    for (int i = 0; i < n_sub; ++i) {
        s = integrate(s, a, substep);
        states.push_back(s);
    }
}

struct StepFeatureScratch {
    LaneQueryCache lane_cache;
    int target_hint = -1;
    double prev_accel = 0.0;
    double prev_lat_accel = 0.0;
    double prev_offset_target = 0.0;
    double min_remaining = 0.0;
    std::vector<double> stop_prev_fwd;
    bool stop_latched = false;
};

}  // namespace detail

// Discounted path integrals of the K per-step features along one policy.
// Per-step values are normalized to [0, 1] by the feature saturation
// constants; the integral therefore lies in [0, horizon] per feature.
inline std::vector<double> path_integral_features(const Policy& policy, const CycleContext& ctx,
                                                  const PlannerConfig& cfg) {
    const FeatureConfig& fc = cfg.features;
    const double dt = cfg.substep;
    const int n_steps = static_cast<int>(policy.states.size()) - 1;
    const int steps_per_action = cfg.steps_per_action();
    std::array<std::vector<double>, kFeatureCount> per_step;
    for (auto& v : per_step) v.assign(static_cast<std::size_t>(n_steps), 0.0);

    detail::StepFeatureScratch scratch;
    scratch.lane_cache = ctx.ego_cache;
    scratch.min_remaining = ctx.initial_remaining;
    const Polyline& target_cl = ctx.net->lanes[static_cast<std::size_t>(ctx.target_lane)].centerline;
    const double sign0 = ctx.initial_offset_target >= 0.0 ? 1.0 : -1.0;
    const bool overshoot_armed = std::fabs(ctx.initial_offset_target) > 0.3;

    for (int k = 0; k < n_steps; ++k) {
        const VehicleState& s = policy.states[static_cast<std::size_t>(k)];
        const ControlAction& act = policy.actions[static_cast<std::size_t>(k / steps_per_action)];
        const double t = static_cast<double>(k) * dt;

        LaneQueryResult q = ctx.net->lane_query(s.position(), s.yaw, &scratch.lane_cache);
        per_step[0][static_cast<std::size_t>(k)] =
            q.on_network ? clamp01(std::fabs(q.lateral_offset) / fc.lat_offset_sat) : 1.0;
        per_step[1][static_cast<std::size_t>(k)] =
            q.on_network ? clamp01(std::fabs(q.heading_deviation) / fc.heading_dev_sat) : 1.0;
        per_step[2][static_cast<std::size_t>(k)] = q.on_network ? 0.0 : 1.0;

        per_step[3][static_cast<std::size_t>(k)] = clamp01(std::fabs(act.accel) / fc.accel_sat);
        if (k > 0)
            per_step[4][static_cast<std::size_t>(k)] =
                clamp01(std::fabs(act.accel - scratch.prev_accel) / dt / fc.lon_jerk_sat);
        scratch.prev_accel = act.accel;

        const double lat_acc = s.speed * s.speed * s.curvature;
        per_step[5][static_cast<std::size_t>(k)] = clamp01(std::fabs(lat_acc) / fc.lat_accel_sat);
        if (k > 0)
            per_step[6][static_cast<std::size_t>(k)] =
                clamp01(std::fabs(lat_acc - scratch.prev_lat_accel) / dt / fc.lat_jerk_sat);
        scratch.prev_lat_accel = lat_acc;

        per_step[7][static_cast<std::size_t>(k)] = clamp01(std::fabs(s.curvature) / fc.curvature_sat);
        per_step[8][static_cast<std::size_t>(k)] =
            clamp01(std::fabs(s.speed - ctx.target_speed) / ctx.target_speed);

        // progress shortfall: fraction of the target-speed progress not yet
        // achieved at time t. The running minimum keeps policies that pass
        // the checkpoint from being charged the wrap-around distance.
        double remaining = std::numeric_limits<double>::infinity();
        try {
            remaining = ctx.net->route_progress(q.lane, q.arc, ctx.route);
        } catch (const NoRouteError&) {
        }
        scratch.min_remaining = std::min(scratch.min_remaining, remaining);
        const double gained = ctx.initial_remaining - scratch.min_remaining;
        const double achievable = ctx.target_speed * std::max(t, dt);
        per_step[9][static_cast<std::size_t>(k)] =
            std::isfinite(gained) ? clamp01((achievable - gained) / achievable) : 1.0;

        Polyline::Projection tp = target_cl.project(s.position(), scratch.target_hint);
        scratch.target_hint = target_cl.last_segment();
        if (k > 0) {
            const double latvel = (tp.offset - scratch.prev_offset_target) / dt;
            per_step[10][static_cast<std::size_t>(k)] =
                clamp01(std::fabs(latvel) / fc.latvel_sat) * (t / cfg.horizon);
        }
        scratch.prev_offset_target = tp.offset;
        if (overshoot_armed) {
            const double over = std::max(0.0, -sign0 * tp.offset);
            per_step[11][static_cast<std::size_t>(k)] = clamp01(over / fc.overshoot_sat);
        }

        if (!ctx.predictions.empty()) {
            double min_gap = std::numeric_limits<double>::infinity();
            for (const auto& pred : ctx.predictions) {
                const Vec2 d = pred[static_cast<std::size_t>(k)].position - s.position();
                min_gap = std::min(min_gap, d.norm() - 2.0 * fc.vehicle_radius);
            }
            per_step[12][static_cast<std::size_t>(k)] =
                clamp01((fc.proximity_range - std::max(0.0, min_gap)) / fc.proximity_range);
        }

        if (!ctx.active_stop_arcs.empty() && q.lane >= 0 && q.lane < ctx.n_loop_lanes) {
            const Polyline& cl = ctx.net->lanes[static_cast<std::size_t>(q.lane)].centerline;
            const double L = cl.length();
            if (scratch.stop_prev_fwd.empty())
                scratch.stop_prev_fwd.assign(ctx.active_stop_arcs.size(), -1.0);
            double worst = 0.0;
            for (std::size_t li = 0; li < ctx.active_stop_arcs.size(); ++li) {
                double fwd = ctx.active_stop_arcs[li][static_cast<std::size_t>(q.lane)] - q.arc;
                fwd = std::fmod(fwd, L);
                if (fwd < 0.0) fwd += L;
                // rolling over an active line at speed is a violation for the
                // rest of the horizon, not a one-step bump
                const double prev = scratch.stop_prev_fwd[li];
                if (prev >= 0.0 && prev <= 3.0 && fwd > 0.5 * L &&
                    s.speed > fc.stop_free_speed + 0.2)
                    scratch.stop_latched = true;
                scratch.stop_prev_fwd[li] = fwd;
                if (fwd <= fc.stop_region) {
                    const double allowed = std::sqrt(2.0 * fc.stop_decel * fwd) + fc.stop_free_speed;
                    worst = std::max(worst, clamp01((s.speed - allowed) / fc.stop_speed_sat));
                }
            }
            per_step[13][static_cast<std::size_t>(k)] = scratch.stop_latched ? 1.0 : worst;
        }

        if (std::isfinite(scratch.min_remaining)) {
            // armed by the running minimum so the pull toward the checkpoint
            // lane persists through the crossing instead of collapsing the
            // moment the station is passed
            const double arm =
                clamp01((fc.corridor_range - scratch.min_remaining) / fc.corridor_range);
            per_step[14][static_cast<std::size_t>(k)] =
                arm * clamp01(std::fabs(tp.offset) / fc.corridor_sat);
        }
    }

    std::vector<double> out(kFeatureCount);
    for (int i = 0; i < kFeatureCount; ++i)
        out[static_cast<std::size_t>(i)] = discounted_path_integral(per_step[static_cast<std::size_t>(i)], dt, fc.gamma);
    return out;
}

// Fills control points (ego-frame lateral offset, relative yaw, route
// progress) and the control-point states used by the distance metric.
inline void fill_control_points(Policy& policy, const CycleContext& ctx, const PlannerConfig& cfg) {
    const int n_steps = static_cast<int>(policy.states.size()) - 1;
    const int stride = n_steps / (cfg.n_control_points - 1);
    const double c0 = std::cos(ctx.ego.yaw), s0 = std::sin(ctx.ego.yaw);
    policy.control_points.clear();
    policy.cp_states.clear();
    LaneQueryCache cache = ctx.ego_cache;
    double min_remaining = ctx.initial_remaining;
    for (int j = 0; j < cfg.n_control_points; ++j) {
        const VehicleState& s = policy.states[static_cast<std::size_t>(j * stride)];
        ControlPoint cp;
        const double dx = s.x - ctx.ego.x, dy = s.y - ctx.ego.y;
        cp.lat_offset = -s0 * dx + c0 * dy;
        cp.yaw = angle_diff(s.yaw, ctx.ego.yaw);
        LaneQueryResult q = ctx.net->lane_query(s.position(), s.yaw, &cache);
        double remaining = std::numeric_limits<double>::infinity();
        try {
            remaining = ctx.net->route_progress(q.lane, q.arc, ctx.route);
        } catch (const NoRouteError&) {
        }
        if (std::isfinite(remaining)) min_remaining = std::min(min_remaining, remaining);
        cp.progress = ctx.initial_remaining - min_remaining;
        policy.control_points.push_back(cp);
        policy.cp_states.push_back(s);
    }
    policy.final_progress = policy.control_points.back().progress;
}

// Samples the action tree and assembles all B^D policies with features and
// control points. Deterministic for a given seed: the tree is expanded in
// depth-first order with a fixed branch layout (comfort, brake, then random
// draws), so the random stream is consumed identically run to run.
inline PolicySet sample_policy_set(const CycleContext& ctx, const VehicleState& ego,
                                   const PlannerConfig& cfg, std::uint64_t seed, long cycle = 0) {
    cfg.validate();
    Rng rng(seed);
    const double action_duration = cfg.horizon / static_cast<double>(cfg.depth);
    const int n_sub = cfg.steps_per_action();

    PolicySet set;
    set.cycle = cycle;
    set.ego = ego;

    std::vector<ControlAction> action_stack;
    std::vector<VehicleState> states;
    states.push_back(ego);

    auto sample_branch = [&](const VehicleState& s, int branch, int level) {
        ControlAction a;
        a.duration = action_duration;
        const double comfort = clampd((ctx.target_speed - s.speed) / cfg.speed_gain_tau,
                                      cfg.accel_min, cfg.accel_max);
        const double v_eff = std::max(s.speed, cfg.min_curv_speed);
        const double k_lim = std::min(cfg.lat_accel_limit / (v_eff * v_eff), cfg.curvature_abs_max);
        auto rate_toward = [&](double k_target) {
            return clampd((k_target - s.curvature) / action_duration, -cfg.curv_rate_max,
                          cfg.curv_rate_max);
        };
        if (branch == 0) {
            a.accel = comfort;
            a.curvature_rate = rate_toward(detail::lane_tracking_curvature(ctx, s, 0, cfg));
        } else if (branch == 1) {
            a.accel = detail::braking_branch_accel(ctx, s, cfg);
            a.curvature_rate = rate_toward(detail::lane_tracking_curvature(ctx, s, 0, cfg));
        } else if (branch == 2 || branch == 3) {
            // stratified lateral branches: noisy tracking of a neighbor lane
            // center; direction alternates with depth so both sides stay
            // reachable at any branching factor
            a.accel = rng.truncated_normal(comfort, 0.5 * cfg.accel_sigma, cfg.accel_min, cfg.accel_max);
            int dir = branch == 2 ? 1 : -1;
            if (level % 2 == 1) dir = -dir;
            const double center = detail::lane_tracking_curvature(ctx, s, dir, cfg);
            const double k_target = rng.truncated_normal(center, 0.15 * k_lim, -k_lim, k_lim);
            a.curvature_rate = rate_toward(k_target);
        } else {
            a.accel = rng.truncated_normal(comfort, cfg.accel_sigma, cfg.accel_min, cfg.accel_max);
            const double k_target = rng.truncated_normal(0.0, 0.6 * k_lim, -k_lim, k_lim);
            a.curvature_rate = rate_toward(k_target);
        }
        return a;
    };

    std::function<void(int)> expand = [&](int level) {
        if (level == cfg.depth) {
            Policy p;
            p.actions = action_stack;
            p.states = states;
            fill_control_points(p, ctx, cfg);
            p.pi_features = path_integral_features(p, ctx, cfg);
            set.policies.push_back(std::move(p));
            return;
        }
        const VehicleState node_state = states.back();
        const std::size_t state_mark = states.size();
        for (int b = 0; b < cfg.branching; ++b) {
            ControlAction a = sample_branch(node_state, b, level);
            action_stack.push_back(a);
            detail::roll_action(states, a, n_sub, cfg.substep);
            expand(level + 1);
            action_stack.pop_back();
            states.resize(state_mark);
        }
    };
    expand(0);
    return set;
}

inline PolicySet sample_policy_set(const World& world, const VehicleState& ego,
                                   const PlannerConfig& cfg, std::uint64_t seed, long cycle = 0) {
    cfg.validate();
    CycleContext ctx = build_cycle_context(world, ego, cfg);
    return sample_policy_set(ctx, ego, cfg, seed, cycle);
}

// Fills every policy value with -theta . f and returns the argmax index, ties
// broken by the lowest index.
inline int evaluate(PolicySet& set, const RewardWeights& weights) {
    weights.validate();
    if (set.policies.empty()) throw DimensionError("evaluate: empty policy set");
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.policies.size(); ++i) {
        Policy& p = set.policies[i];
        if (p.pi_features.size() != kFeatureCount)
            throw DimensionError("evaluate: policy has " + std::to_string(p.pi_features.size()) +
                                 " features, expected " + std::to_string(kFeatureCount));
        double v = 0.0;
        for (int k = 0; k < kFeatureCount; ++k)
            v -= weights.theta[static_cast<std::size_t>(k)] * p.pi_features[static_cast<std::size_t>(k)];
        p.value = v;
        if (v > best_value) {
            best_value = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Stable sort by final route progress, ascending. Returns `order` with
// order[new_index] = old_index so demonstration indices can be remapped.
inline std::vector<int> sort_policies_by_progress(PolicySet& set) {
    std::vector<int> order(set.policies.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return set.policies[static_cast<std::size_t>(a)].final_progress <
               set.policies[static_cast<std::size_t>(b)].final_progress;
    });
    std::vector<Policy> sorted;
    sorted.reserve(set.policies.size());
    for (int idx : order) sorted.push_back(std::move(set.policies[static_cast<std::size_t>(idx)]));
    set.policies = std::move(sorted);
    set.sorted = true;
    return order;
}

namespace detail {

inline bool policy_collides(const Policy& policy, const CycleContext& ctx, const PlannerConfig& cfg,
                            double* min_gap_out = nullptr) {
    bool collides = false;
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < policy.states.size(); ++k) {
        const VehicleState& s = policy.states[k];
        for (std::size_t vi = 0; vi < ctx.predictions.size(); ++vi) {
            const PredictedPose& o = ctx.predictions[vi][k];
            const double center_dist = (o.position - s.position()).norm();
            min_gap = std::min(min_gap, center_dist);
            if (center_dist > 8.0) continue;
            OrientedBox ego_box{s.position(), s.yaw, cfg.ego_length + cfg.collision_margin,
                                cfg.ego_width + cfg.collision_margin};
            const TrafficVehicle& dims = ctx.vehicle_dims[vi];
            OrientedBox obj_box{o.position, o.yaw, dims.length + cfg.collision_margin,
                                dims.width + cfg.collision_margin};
            if (boxes_overlap(ego_box, obj_box)) {
                collides = true;
                if (!min_gap_out) return true;
            }
        }
    }
    if (min_gap_out) *min_gap_out = min_gap;
    return collides;
}

}  // namespace detail

struct ExpertSelection {
    int index = 0;
    bool fallback = false;       // every policy collided; picked max clearance instead
    int n_collision_free = 0;
};

// Model-based expert choice used only for data collection: discard policies
// whose swept footprint hits a predicted object, then take the best value
// plus a progress bonus.
inline ExpertSelection expert_select(PolicySet& set, const CycleContext& ctx,
                                     const RewardWeights& expert_theta, const PlannerConfig& cfg) {
    evaluate(set, expert_theta);
    ExpertSelection sel;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_gap = -std::numeric_limits<double>::infinity();
    int best_gap_idx = 0;
    for (std::size_t i = 0; i < set.policies.size(); ++i) {
        const Policy& p = set.policies[i];
        double min_gap = 0.0;
        const bool hit = detail::policy_collides(p, ctx, cfg, &min_gap);
        if (min_gap > best_gap) {
            best_gap = min_gap;
            best_gap_idx = static_cast<int>(i);
        }
        if (hit) continue;
        ++sel.n_collision_free;
        const double score = p.value + cfg.expert_progress_bonus * p.final_progress;
        if (score > best_score) {
            best_score = score;
            sel.index = static_cast<int>(i);
        }
    }
    if (sel.n_collision_free == 0) {
        std::cerr << "[pirl] warning: all policies collide, falling back to max clearance\n";
        sel.index = best_gap_idx;
        sel.fallback = true;
    }
    return sel;
}

struct MpcStepResult {
    std::vector<VehicleState> executed;  // sub-step trace over the cycle period
    PolicySet next_set;
    int chosen_index = 0;
    bool expert_fallback = false;
};

// One model-predictive iteration: pick the optimal policy of `current`,
// execute its first cycle-period segment while the world advances in
// lockstep, then sample the next cycle's policy set from the new state.
inline MpcStepResult mpc_step(World& world, PolicySet& current, const RewardWeights& theta,
                              const PlannerConfig& cfg, bool expert_mode, std::uint64_t next_seed) {
    cfg.validate();
    MpcStepResult result;
    CycleContext ctx = build_cycle_context(world, current.ego, cfg);
    if (expert_mode) {
        ExpertSelection sel = expert_select(current, ctx, theta, cfg);
        result.chosen_index = sel.index;
        result.expert_fallback = sel.fallback;
    } else {
        result.chosen_index = evaluate(current, theta);
    }

    const Policy& chosen = current.policies[static_cast<std::size_t>(result.chosen_index)];
    const int n_exec = static_cast<int>(std::lround(cfg.cycle_period / cfg.substep));
    result.executed.assign(chosen.states.begin(), chosen.states.begin() + n_exec + 1);
    for (int k = 1; k <= n_exec; ++k) {
        world.step(cfg.substep);
        world.observe_ego(result.executed[static_cast<std::size_t>(k)]);
    }
    result.next_set = sample_policy_set(world, result.executed.back(), cfg, next_seed, current.cycle + 1);
    return result;
}

}  // namespace pirl
