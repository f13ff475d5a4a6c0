#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pirl/kinematics.hpp"
#include "pirl/planner.hpp"

namespace pirl {

struct OdometrySample {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    double v = 0.0;
};

struct OdometryRecord {
    std::vector<OdometrySample> samples;
    std::map<std::string, std::string> meta;  // header comments, e.g. config_hash

    void validate() const {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const OdometrySample& s = samples[i];
            if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
                !std::isfinite(s.yaw) || !std::isfinite(s.v))
                throw DatasetError("odometry: non-finite sample");
            if (i > 0 && s.t <= samples[i - 1].t)
                throw DatasetError("odometry: time not strictly increasing");
        }
    }

    double t_begin() const { return samples.empty() ? 0.0 : samples.front().t; }
    double t_end() const { return samples.empty() ? 0.0 : samples.back().t; }

    // Linear interpolation in t; yaw interpolates along the shortest arc.
    OdometrySample at(double t) const {
        if (samples.empty() || t < t_begin() - 1e-9 || t > t_end() + 1e-9)
            throw InsufficientOdometryError("odometry does not cover t=" + std::to_string(t));
        if (t <= t_begin()) return samples.front();
        if (t >= t_end()) return samples.back();
        std::size_t lo = 0, hi = samples.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (samples[mid].t <= t)
                lo = mid;
            else
                hi = mid;
        }
        const OdometrySample& a = samples[lo];
        const OdometrySample& b = samples[hi];
        const double u = (t - a.t) / (b.t - a.t);
        OdometrySample out;
        out.t = t;
        out.x = a.x + u * (b.x - a.x);
        out.y = a.y + u * (b.y - a.y);
        out.yaw = wrap_angle(a.yaw + u * angle_diff(b.yaw, a.yaw));
        out.v = a.v + u * (b.v - a.v);
        return out;
    }
};

inline void write_odometry_csv(const std::string& path, const OdometryRecord& odo) {
    std::ofstream f(path);
    if (!f) throw DatasetError("cannot write odometry: " + path);
    for (const auto& [k, v] : odo.meta) f << "# " << k << " = " << v << "\n";
    f << "t,x,y,yaw,v\n";
    char buf[256];
    for (const OdometrySample& s : odo.samples) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.x, s.y, s.yaw, s.v);
        f << buf;
    }
}

inline OdometryRecord read_odometry_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DatasetError("cannot open odometry: " + path);
    OdometryRecord odo;
    std::string line;
    bool header_seen = false;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find('=');
            if (eq != std::string::npos) {
                auto strip = [](std::string s) {
                    std::size_t b = s.find_first_not_of(" \t#");
                    std::size_t e = s.find_last_not_of(" \t\r");
                    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
                };
                odo.meta[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;  // column header
            continue;
        }
        std::istringstream ss(line);
        OdometrySample s;
        char comma;
        ss >> s.t >> comma >> s.x >> comma >> s.y >> comma >> s.yaw >> comma >> s.v;
        if (!ss) throw DatasetError("malformed odometry row: " + line);
        odo.samples.push_back(s);
    }
    odo.validate();
    return odo;
}

struct DistanceWeights {
    double pos = 1.0;
    double yaw = 2.0;
    double speed = 0.5;

    static DistanceWeights from_config(const Config& cfg) {
        DistanceWeights w;
        w.pos = cfg.get_double("demos.w_pos", w.pos);
        w.yaw = cfg.get_double("demos.w_yaw", w.yaw);
        w.speed = cfg.get_double("demos.w_speed", w.speed);
        return w;
    }
};

// The sampled policy selected as geometrically closest to the expert
// odometry; by construction it is a member of the policy set.
struct Demonstration {
    int index = 0;
    double distance = 0.0;
};

// Weighted Euclidean distance between two control-point state sequences:
// sqrt of the per-point mean of weighted squared position, yaw and speed
// differences. Symmetric, zero on identical sequences.
inline double control_point_distance(const std::vector<VehicleState>& a,
                                     const std::vector<VehicleState>& b,
                                     const DistanceWeights& w = {}) {
    if (a.size() != b.size() || a.empty())
        throw DimensionError("control_point_distance: size mismatch " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double dx = a[j].x - b[j].x;
        const double dy = a[j].y - b[j].y;
        const double dpsi = angle_diff(a[j].yaw, b[j].yaw);
        const double dv = a[j].speed - b[j].speed;
        acc += w.pos * (dx * dx + dy * dy) + w.yaw * dpsi * dpsi + w.speed * dv * dv;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

// Distance of a policy to the expert odometry, sampled at the policy's
// control-point times. Throws when the odometry does not span the horizon.
inline double policy_distance(const Policy& policy, const OdometryRecord& odometry,
                              const DistanceWeights& w = {}) {
    if (policy.cp_states.empty()) throw DimensionError("policy_distance: control points not filled");
    std::vector<VehicleState> ref;
    ref.reserve(policy.cp_states.size());
    for (const VehicleState& s : policy.cp_states) {
        OdometrySample o = odometry.at(s.time);
        VehicleState r;
        r.x = o.x;
        r.y = o.y;
        r.yaw = o.yaw;
        r.speed = o.v;
        r.time = o.t;
        ref.push_back(r);
    }
    return control_point_distance(policy.cp_states, ref, w);
}

// Argmin of policy_distance over the set, ties broken by the lowest index.
inline Demonstration select_demonstration(const PolicySet& set, const OdometryRecord& odometry,
                                          const DistanceWeights& w = {}) {
    if (set.policies.empty()) throw DimensionError("select_demonstration: empty policy set");
    Demonstration demo;
    demo.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < set.policies.size(); ++i) {
        const double d = policy_distance(set.policies[i], odometry, w);
        if (d < demo.distance) {
            demo.distance = d;
            demo.index = static_cast<int>(i);
        }
    }
    return demo;
}

}  // namespace pirl
