#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pirl/config.hpp"
#include "pirl/kinematics.hpp"
#include "pirl/rng.hpp"
#include "pirl/road_network.hpp"

namespace pirl {

struct TrafficVehicle {
    int lane = 0;
    double arc = 0.0;    // m along the lane centerline, wraps on loops
    double speed = 0.0;  // m/s, constant for the vehicle's lifetime
    double length = 4.5;
    double width = 2.0;
};

// A stop line spans all loop lanes at one station. `lane_arc[l]` is the arc
// position of the line on lane l.
struct StopLine {
    double ref_arc = 0.0;  // station on the middle lane
    std::vector<double> lane_arc;
};

struct Checkpoint {
    int lane = 0;
    double arc = 0.0;
};

struct Scenario {
    RoadNetwork network;
    int n_loop_lanes = 0;  // lanes that belong to the oval itself (exits excluded)
    std::vector<Checkpoint> checkpoints;
    std::vector<StopLine> stop_lines;
    std::vector<TrafficVehicle> vehicles;
    VehicleState ego_start;
    double target_speed = 70.0 / 3.6;
    std::uint64_t rng_seed = 0;
    std::string id;
};

struct PredictedPose {
    Vec2 position;
    double yaw = 0.0;
    double t = 0.0;
};

// Constant-velocity prediction along the vehicle's own lane. Returns
// floor(horizon/dt)+1 poses at t = 0, dt, 2*dt, ...
inline std::vector<PredictedPose> predict_object(const RoadNetwork& net, const TrafficVehicle& v,
                                                 double horizon, double dt) {
    if (horizon <= 0.0 || dt <= 0.0) throw DimensionError("predict_object: horizon and dt must be positive");
    const Polyline& cl = net.lanes.at(static_cast<std::size_t>(v.lane)).centerline;
    const int n = static_cast<int>(std::floor(horizon / dt + 1e-12)) + 1;
    std::vector<PredictedPose> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double s = cl.wrap_s(v.arc + v.speed * t);
        out.push_back({cl.point_at(s), cl.heading_at(s), t});
    }
    return out;
}

inline VehicleState pose_on_lane(const RoadNetwork& net, int lane, double arc, double speed) {
    const Polyline& cl = net.lanes.at(static_cast<std::size_t>(lane)).centerline;
    VehicleState s;
    const Vec2 p = cl.point_at(cl.wrap_s(arc));
    s.x = p.x;
    s.y = p.y;
    s.yaw = cl.heading_at(cl.wrap_s(arc));
    s.speed = speed;
    return s;
}

// Mutable simulation state on top of an immutable Scenario. Traffic advances
// at constant velocity and wraps around the oval; the ego is driven
// externally by the planner and reported back through observe_ego so stop
// lines and checkpoints can update.
class World {
public:
    explicit World(Scenario scenario)
        : scenario_(std::move(scenario)),
          vehicles_(scenario_.vehicles),
          stop_active_(scenario_.stop_lines.size(), true) {}

    const Scenario& scenario() const { return scenario_; }
    const RoadNetwork& network() const { return scenario_.network; }
    const std::vector<TrafficVehicle>& vehicles() const { return vehicles_; }
    double time() const { return time_; }

    void step(double dt) {
        for (TrafficVehicle& v : vehicles_) {
            const Polyline& cl = scenario_.network.lanes[static_cast<std::size_t>(v.lane)].centerline;
            v.arc = cl.wrap_s(v.arc + v.speed * dt);
        }
        time_ += dt;
    }

    bool stop_line_active(std::size_t i) const { return stop_active_.at(i); }
    std::size_t active_stop_count() const {
        std::size_t n = 0;
        for (bool a : stop_active_)
            if (a) ++n;
        return n;
    }

    std::size_t next_checkpoint_index() const { return next_checkpoint_ % scenario_.checkpoints.size(); }
    const Checkpoint& next_checkpoint() const {
        return scenario_.checkpoints[next_checkpoint_index()];
    }
    std::size_t checkpoints_hit() const { return next_checkpoint_; }

    // Forward arc distance from an ego lane position to a stop line, on the
    // given lane, in [0, lane length).
    double stop_line_gap(std::size_t line, int lane, double ego_arc) const {
        const StopLine& sl = scenario_.stop_lines.at(line);
        const Polyline& cl = scenario_.network.lanes.at(static_cast<std::size_t>(lane)).centerline;
        double d = sl.lane_arc.at(static_cast<std::size_t>(lane)) - ego_arc;
        const double L = cl.length();
        d = std::fmod(d, L);
        if (d < 0.0) d += L;
        return d;
    }

    // Updates stop-line satisfaction and checkpoint progress from the ego
    // state. Call once per simulation step, after step().
    void observe_ego(const VehicleState& ego) {
        LaneQueryResult q = scenario_.network.lane_query(ego.position(), ego.yaw, &ego_cache_);
        if (!q.on_network || q.lane >= scenario_.n_loop_lanes) return;

        for (std::size_t i = 0; i < scenario_.stop_lines.size(); ++i) {
            if (!stop_active_[i]) continue;
            const double gap = stop_line_gap(i, q.lane, q.arc);
            if (gap <= 2.0 && ego.speed < 0.3) stop_active_[i] = false;
        }

        const Checkpoint& cp = next_checkpoint();
        const Polyline& cp_cl = scenario_.network.lanes[static_cast<std::size_t>(cp.lane)].centerline;
        Polyline::Projection pr = cp_cl.project(ego.position());
        double fwd = cp.arc - pr.s;
        const double L = cp_cl.length();
        fwd = std::fmod(fwd, L);
        if (fwd < 0.0) fwd += L;
        double signed_d = fwd <= 0.5 * L ? fwd : fwd - L;  // negative once just passed
        const double corridor = 0.5 * scenario_.network.lanes[static_cast<std::size_t>(cp.lane)].width + 0.75;
        if (have_prev_cp_dist_ && prev_cp_dist_ > 0.0 && signed_d <= 0.0 && prev_cp_dist_ < 15.0 &&
            std::fabs(pr.distance) <= corridor) {
            ++next_checkpoint_;
            have_prev_cp_dist_ = false;
        } else {
            prev_cp_dist_ = signed_d;
            have_prev_cp_dist_ = true;
        }
    }

private:
    Scenario scenario_;
    std::vector<TrafficVehicle> vehicles_;
    std::vector<bool> stop_active_;
    std::size_t next_checkpoint_ = 0;
    double time_ = 0.0;
    double prev_cp_dist_ = 0.0;
    bool have_prev_cp_dist_ = false;
    LaneQueryCache ego_cache_;
};

// Builds a scenario from the [track] and [scenario] sections of a config
// document. Traffic spawns on random loop lanes with a minimum arc gap ahead
// of the ego; spawning velocity is uniform in the configured kph band.
inline Scenario make_scenario(const Config& cfg) {
    OvalSpec spec;
    spec.n_lanes = static_cast<int>(cfg.get_int("track.n_lanes", 3));
    spec.lane_width = cfg.get_double("track.lane_width", 3.5);
    spec.straight_length = cfg.get_double("track.straight_length", 300.0);
    spec.radius = cfg.get_double("track.radius", 50.0);
    spec.with_exits = cfg.get_bool("track.exits", true);

    Scenario sc;
    sc.network = build_oval_network(spec);
    sc.n_loop_lanes = spec.n_lanes;
    sc.rng_seed = cfg.get_u64("scenario.seed", 1);
    sc.target_speed = cfg.get_double("scenario.target_speed_kph", 70.0) / 3.6;
    sc.id = cfg.get_string("scenario.id", "oval");

    const int ego_lane = static_cast<int>(cfg.get_int("scenario.ego_lane", 1));
    const double ego_arc = cfg.get_double("scenario.ego_arc", 5.0);
    const double ego_speed = cfg.get_double("scenario.ego_speed", 0.0);
    sc.ego_start = pose_on_lane(sc.network, ego_lane, ego_arc, ego_speed);

    auto cp_entries = cfg.get_list("scenario.checkpoints");
    if (cp_entries.empty())
        cp_entries = {"0:220", "2:450", "0:680", "2:880"};
    for (const auto& e : cp_entries) {
        auto colon = e.find(':');
        if (colon == std::string::npos) throw ConfigError("checkpoint entry must be lane:arc, got " + e);
        Checkpoint cp;
        cp.lane = std::stoi(e.substr(0, colon));
        cp.arc = std::stod(e.substr(colon + 1));
        if (cp.lane < 0 || cp.lane >= sc.n_loop_lanes) throw ConfigError("checkpoint lane out of range");
        sc.checkpoints.push_back(cp);
    }

    std::vector<double> stop_arcs = cfg.get_double_list("scenario.stop_lines");
    if (!cfg.has("scenario.stop_lines")) stop_arcs = {150.0, 600.0};
    const int mid_lane = spec.n_lanes / 2;
    const Polyline& mid = sc.network.lanes[static_cast<std::size_t>(mid_lane)].centerline;
    for (double a : stop_arcs) {
        StopLine sl;
        sl.ref_arc = a;
        const Vec2 p = mid.point_at(mid.wrap_s(a));
        for (int l = 0; l < sc.n_loop_lanes; ++l) {
            Polyline::Projection pr = sc.network.lanes[static_cast<std::size_t>(l)].centerline.project(p);
            sl.lane_arc.push_back(pr.s);
        }
        sc.stop_lines.push_back(std::move(sl));
    }

    const int n_vehicles = static_cast<int>(cfg.get_int("scenario.n_vehicles", 0));
    if (n_vehicles > 15) throw ConfigError("scenario allows at most 15 vehicles");
    const double v_min = cfg.get_double("scenario.vehicle_speed_min_kph", 25.0) / 3.6;
    const double v_max = cfg.get_double("scenario.vehicle_speed_max_kph", 35.0) / 3.6;
    const double min_gap = cfg.get_double("scenario.spawn_min_gap", 200.0);
    Rng rng(derive_seed(sc.rng_seed, 17));  // traffic stream
    for (int i = 0; i < n_vehicles; ++i) {
        TrafficVehicle v;
        for (int attempt = 0; attempt < 256; ++attempt) {
            v.lane = rng.uniform_int(0, sc.n_loop_lanes - 1);
            const Polyline& cl = sc.network.lanes[static_cast<std::size_t>(v.lane)].centerline;
            Polyline::Projection ego_pr = cl.project(sc.ego_start.position());
            const double gap_budget = cl.length() - min_gap - 30.0;
            if (gap_budget <= 0.0) throw ConfigError("track too short for spawn gap");
            v.arc = cl.wrap_s(ego_pr.s + min_gap + rng.uniform() * gap_budget);
            v.speed = rng.uniform(v_min, v_max);
            bool clear = true;
            for (const TrafficVehicle& o : sc.vehicles) {
                if (o.lane != v.lane) continue;
                double d = std::fabs(o.arc - v.arc);
                d = std::min(d, cl.length() - d);
                if (d < 15.0) clear = false;
            }
            if (clear) break;
        }
        sc.vehicles.push_back(v);
    }
    return sc;
}

}  // namespace pirl
