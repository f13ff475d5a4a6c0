#pragma once

#include <limits>
#include <queue>
#include <vector>

#include "pirl/common.hpp"
#include "pirl/geometry.hpp"

namespace pirl {

struct Lane {
    int id = 0;
    double width = 0.0;
    Polyline centerline;
    // Arc positions where the route graph cuts this lane into segments.
    std::vector<double> cut_s;
};

// Directed piece of a lane, the unit of the route graph. Segments never wrap:
// loops are closed by the last segment ending at the first one's junction.
struct Segment {
    int id = 0;
    int lane = 0;
    double s_begin = 0.0;
    double s_end = 0.0;
    int start_junction = 0;
    int end_junction = 0;

    double length() const { return s_end - s_begin; }
};

// Extra directed connection between junctions (lane changes, merges).
struct GraphEdge {
    int from_junction = 0;
    int to_junction = 0;
    double cost = 0.0;
};

struct NetworkPosition {
    int segment = 0;
    double s = 0.0;  // local arc within the segment, from s_begin
};

struct LaneQueryResult {
    bool on_network = false;  // false marks the off-network penalty case
    int lane = -1;
    double lateral_offset = 0.0;   // signed, left of travel positive
    double heading_deviation = 0.0;
    double arc = 0.0;              // arc position along the lane centerline
    double distance = 0.0;         // unsigned distance to the nearest centerline
};

// Warm-start state for repeated lane queries along a continuous rollout.
struct LaneQueryCache {
    std::vector<int> segment_hint;
};

// Remaining-distance table for one goal; see RoadNetwork::route_table.
// When the network models parallel loop lanes, the goal is projected onto
// every loop lane (`lane_goal_arc`) so lane changes toward the goal are not
// restricted to junctions.
struct RouteTable {
    int goal_segment = 0;
    double goal_s = 0.0;
    int goal_lane = 0;
    std::vector<double> junction_to_goal;  // shortest m from junction to goal segment start
    std::vector<double> lane_goal_arc;     // per lane; NaN where not applicable
    double lane_change_cost = 0.0;
};

class RoadNetwork {
public:
    std::vector<Lane> lanes;
    std::vector<Segment> segments;
    std::vector<GraphEdge> extra_edges;  // lane changes, exit merges
    std::vector<int> exit_segments;
    int junction_count = 0;
    double off_road_shoulder = 0.5;  // on-network corridor beyond the lane edge
    // Set when loop lanes run parallel (the oval): lane changes are then legal
    // anywhere, not only at junctions, and route tables use goal projections.
    int parallel_loop_lanes = 0;  // number of leading lanes forming the loop
    std::vector<std::pair<int, double>> junction_station;  // (lane, arc); (-1, 0) for exits

    void validate() const {
        for (const Lane& l : lanes) {
            if (l.width <= 0.0) throw ConfigError("lane width must be positive");
            check_simple(l.centerline);
        }
        for (const Segment& seg : segments) {
            if (seg.length() <= 0.0) throw ConfigError("segment with non-positive length");
            if (seg.start_junction < 0 || seg.start_junction >= junction_count ||
                seg.end_junction < 0 || seg.end_junction >= junction_count)
                throw ConfigError("segment junction out of range");
        }
    }

    // Maps a lane arc position onto the segment covering it.
    NetworkPosition to_segment(int lane_id, double arc) const {
        const Lane& lane = lanes.at(static_cast<std::size_t>(lane_id));
        arc = lane.centerline.wrap_s(arc);
        for (const Segment& seg : segments) {
            if (seg.lane != lane_id) continue;
            if (arc >= seg.s_begin - 1e-9 && arc < seg.s_end) return {seg.id, std::max(0.0, arc - seg.s_begin)};
        }
        // wrap case: arc == lane length lands on the first segment of the lane
        for (const Segment& seg : segments)
            if (seg.lane == lane_id && seg.s_begin <= 1e-9) return {seg.id, 0.0};
        throw NoRouteError("arc position not covered by any segment");
    }

    // Dijkstra from every junction to the goal segment's start (computed on
    // the reversed graph in one pass). The table is reused for all progress
    // queries of a planning cycle.
    RouteTable route_table(const NetworkPosition& goal) const {
        const Segment& gseg = segments.at(static_cast<std::size_t>(goal.segment));
        RouteTable table;
        table.goal_segment = goal.segment;
        table.goal_s = goal.s;
        table.goal_lane = gseg.lane;

        // project the goal point onto every loop lane so lateral moves toward
        // the goal are not quantized to junctions
        table.lane_goal_arc.assign(lanes.size(), std::numeric_limits<double>::quiet_NaN());
        if (parallel_loop_lanes > 0 && gseg.lane < parallel_loop_lanes) {
            const Lane& glane = lanes[static_cast<std::size_t>(gseg.lane)];
            table.lane_change_cost = glane.width;
            const Vec2 gp = glane.centerline.point_at(glane.centerline.wrap_s(gseg.s_begin + goal.s));
            for (int l = 0; l < parallel_loop_lanes; ++l) {
                const Lane& lane = lanes[static_cast<std::size_t>(l)];
                Polyline::Projection pr = lane.centerline.project(gp);
                if (pr.distance <= static_cast<double>(parallel_loop_lanes) * lane.width + 2.0)
                    table.lane_goal_arc[static_cast<std::size_t>(l)] = pr.s;
            }
        }

        std::vector<std::vector<std::pair<int, double>>> rev(static_cast<std::size_t>(junction_count));
        for (const Segment& seg : segments)
            rev[static_cast<std::size_t>(seg.end_junction)].push_back({seg.start_junction, seg.length()});
        for (const GraphEdge& e : extra_edges)
            rev[static_cast<std::size_t>(e.to_junction)].push_back({e.from_junction, e.cost});

        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist(static_cast<std::size_t>(junction_count), inf);
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dist[static_cast<std::size_t>(gseg.start_junction)] = 0.0;
        pq.push({0.0, gseg.start_junction});
        // seed every loop junction with its direct lateral route to the goal
        // so the junction table stays a consistent metric
        if (!junction_station.empty()) {
            for (int j = 0; j < junction_count; ++j) {
                auto [lane_id, arc] = junction_station[static_cast<std::size_t>(j)];
                const double direct = direct_to_goal(lane_id, arc, table);
                if (std::isfinite(direct) && direct < dist[static_cast<std::size_t>(j)]) {
                    dist[static_cast<std::size_t>(j)] = direct;
                    pq.push({direct, j});
                }
            }
        }
        while (!pq.empty()) {
            auto [d, j] = pq.top();
            pq.pop();
            if (d > dist[static_cast<std::size_t>(j)] + 1e-12) continue;
            for (auto [k, w] : rev[static_cast<std::size_t>(j)]) {
                double nd = d + w;
                if (nd < dist[static_cast<std::size_t>(k)] - 1e-12) {
                    dist[static_cast<std::size_t>(k)] = nd;
                    pq.push({nd, k});
                }
            }
        }
        table.junction_to_goal = std::move(dist);
        return table;
    }

    // Remaining shortest-path distance from a network position to the goal.
    double route_progress(const NetworkPosition& pos, const RouteTable& table) const {
        const Segment& seg = segments.at(static_cast<std::size_t>(pos.segment));
        double best = std::numeric_limits<double>::infinity();
        if (pos.segment == table.goal_segment && table.goal_s >= pos.s - 1e-9)
            best = std::max(0.0, table.goal_s - pos.s);
        const double via = table.junction_to_goal[static_cast<std::size_t>(seg.end_junction)];
        if (std::isfinite(via)) best = std::min(best, (seg.length() - pos.s) + via + table.goal_s);
        const double direct = direct_to_goal(seg.lane, seg.s_begin + pos.s, table);
        if (std::isfinite(direct)) best = std::min(best, direct);
        if (!std::isfinite(best)) throw NoRouteError("no route from segment " + std::to_string(pos.segment) +
                                                     " to segment " + std::to_string(table.goal_segment));
        return best;
    }

    double route_progress(int lane_id, double arc, const RouteTable& table) const {
        return route_progress(to_segment(lane_id, arc), table);
    }

    // Nearest-centerline query over all lanes. Off-network states are not an
    // error: the result is flagged and carries the nearest lane anyway so the
    // feature engine can apply its saturated penalty.
    LaneQueryResult lane_query(const Vec2& position, double yaw, LaneQueryCache* cache = nullptr) const {
        LaneQueryResult best;      // nearest over all lanes
        LaneQueryResult best_loop; // nearest over loop lanes only
        best.distance = best_loop.distance = std::numeric_limits<double>::infinity();
        if (cache && cache->segment_hint.size() != lanes.size())
            cache->segment_hint.assign(lanes.size(), -1);
        for (std::size_t i = 0; i < lanes.size(); ++i) {
            const Lane& lane = lanes[i];
            int hint = cache ? cache->segment_hint[i] : -1;
            Polyline::Projection pr = lane.centerline.project(position, hint);
            if (cache) cache->segment_hint[i] = lane.centerline.last_segment();
            auto fill = [&](LaneQueryResult& r) {
                r.distance = pr.distance;
                r.lane = lane.id;
                r.lateral_offset = pr.offset;
                r.arc = pr.s;
                r.heading_deviation = angle_diff(yaw, lane.centerline.heading_at(pr.s));
            };
            if (pr.distance < best.distance) fill(best);
            if (parallel_loop_lanes > 0 && lane.id < parallel_loop_lanes &&
                pr.distance < best_loop.distance)
                fill(best_loop);
        }
        // exit ramps shadow the outer lane near their mouth; a position that
        // is clearly inside a loop lane's corridor classifies as that lane
        if (best_loop.lane >= 0 &&
            best_loop.distance <= 0.5 * lanes[static_cast<std::size_t>(best_loop.lane)].width)
            best = best_loop;
        if (best.lane >= 0) {
            const Lane& lane = lanes[static_cast<std::size_t>(best.lane)];
            best.on_network = best.distance <= 0.5 * lane.width + off_road_shoulder;
        }
        return best;
    }

private:
    // Forward distance along the position's own lane to the projected goal
    // station plus the lateral cost of the lane offset. Infinity when the
    // network does not model parallel loop lanes.
    double direct_to_goal(int lane_id, double arc, const RouteTable& table) const {
        if (lane_id < 0 || lane_id >= parallel_loop_lanes) return std::numeric_limits<double>::infinity();
        if (table.lane_goal_arc.empty()) return std::numeric_limits<double>::infinity();
        const double goal_arc = table.lane_goal_arc[static_cast<std::size_t>(lane_id)];
        if (!std::isfinite(goal_arc)) return std::numeric_limits<double>::infinity();
        const Polyline& cl = lanes[static_cast<std::size_t>(lane_id)].centerline;
        double fwd = goal_arc - arc;
        const double len = cl.length();
        fwd = std::fmod(fwd, len);
        if (fwd < 0.0) fwd += len;
        return fwd + table.lane_change_cost * std::abs(lane_id - table.goal_lane);
    }

    static void check_simple(const Polyline& pl) {
        const auto& p = pl.points();
        const std::size_t n = pl.loop() ? p.size() : p.size() - 1;
        auto seg_intersect = [&](std::size_t i, std::size_t j) {
            const Vec2 a = p[i], b = p[(i + 1) % p.size()];
            const Vec2 c = p[j], d = p[(j + 1) % p.size()];
            const Vec2 ab = b - a, cd = d - c;
            const double den = ab.cross(cd);
            if (std::fabs(den) < 1e-15) return false;
            const double t = (c - a).cross(cd) / den;
            const double u = (c - a).cross(ab) / den;
            return t > 1e-9 && t < 1.0 - 1e-9 && u > 1e-9 && u < 1.0 - 1e-9;
        };
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 2; j < n; ++j) {
                if (pl.loop() && i == 0 && j == n - 1) continue;  // closing adjacency
                if (seg_intersect(i, j)) throw ConfigError("lane centerline self-intersects");
            }
        }
    }
};

// Stadium oval: two straights joined by half circles, `n_lanes` parallel
// lanes, lane 0 innermost. Two exit stubs leave the outer lane, one per
// straight, so route queries must honor the mission instead of blindly
// following connectivity.
struct OvalSpec {
    int n_lanes = 3;
    double lane_width = 3.5;
    double straight_length = 300.0;
    double radius = 50.0;  // centerline radius of the middle lane
    int straight_cuts = 4;
    int arc_cuts = 2;
    double exit_length = 60.0;
    bool with_exits = true;
};

inline RoadNetwork build_oval_network(const OvalSpec& spec = {}) {
    RoadNetwork net;
    const double mid = 0.5 * static_cast<double>(spec.n_lanes - 1);
    const int cuts_per_lane = 2 * spec.straight_cuts + 2 * spec.arc_cuts;

    for (int li = 0; li < spec.n_lanes; ++li) {
        const double off = (mid - static_cast<double>(li)) * spec.lane_width;  // left-of-travel offset
        const double r = spec.radius - off;
        const double y0 = off;                 // bottom straight, heading +x
        const double y1 = 2.0 * spec.radius - off;  // top straight, heading -x
        std::vector<Vec2> pts;
        std::vector<std::size_t> cut_idx;

        auto sample_line = [&](Vec2 a, Vec2 b, int n_cuts) {
            const int steps_per_cut = 30;
            const int total = n_cuts * steps_per_cut;
            for (int k = 0; k < total; ++k) {
                if (k % steps_per_cut == 0) cut_idx.push_back(pts.size());
                double t = static_cast<double>(k) / static_cast<double>(total);
                pts.push_back(a + t * (b - a));
            }
        };
        auto sample_arc = [&](Vec2 c, double phi0, double phi1, int n_cuts) {
            const int steps_per_cut = 60;
            const int total = n_cuts * steps_per_cut;
            for (int k = 0; k < total; ++k) {
                if (k % steps_per_cut == 0) cut_idx.push_back(pts.size());
                double phi = phi0 + (phi1 - phi0) * static_cast<double>(k) / static_cast<double>(total);
                pts.push_back({c.x + r * std::cos(phi), c.y + r * std::sin(phi)});
            }
        };

        sample_line({0.0, y0}, {spec.straight_length, y0}, spec.straight_cuts);
        sample_arc({spec.straight_length, spec.radius}, -0.5 * kPi, 0.5 * kPi, spec.arc_cuts);
        sample_line({spec.straight_length, y1}, {0.0, y1}, spec.straight_cuts);
        sample_arc({0.0, spec.radius}, 0.5 * kPi, 1.5 * kPi, spec.arc_cuts);

        Lane lane;
        lane.id = li;
        lane.width = spec.lane_width;
        lane.centerline = Polyline(pts, true);
        for (std::size_t idx : cut_idx) lane.cut_s.push_back(lane.centerline.arc_at(idx));
        net.lanes.push_back(std::move(lane));
    }

    net.parallel_loop_lanes = spec.n_lanes;

    // junction (lane, cut) -> id; segments chain the cuts around each loop
    auto jct = [&](int lane, int cut) { return lane * cuts_per_lane + (cut % cuts_per_lane); };
    net.junction_count = spec.n_lanes * cuts_per_lane;
    for (int li = 0; li < spec.n_lanes; ++li)
        for (int c = 0; c < cuts_per_lane; ++c)
            net.junction_station.push_back({li, net.lanes[static_cast<std::size_t>(li)].cut_s[static_cast<std::size_t>(c)]});
    for (int li = 0; li < spec.n_lanes; ++li) {
        const Lane& lane = net.lanes[static_cast<std::size_t>(li)];
        for (int c = 0; c < cuts_per_lane; ++c) {
            Segment seg;
            seg.id = static_cast<int>(net.segments.size());
            seg.lane = li;
            seg.s_begin = lane.cut_s[static_cast<std::size_t>(c)];
            seg.s_end = c + 1 < cuts_per_lane ? lane.cut_s[static_cast<std::size_t>(c + 1)]
                                              : lane.centerline.length();
            seg.start_junction = jct(li, c);
            seg.end_junction = jct(li, c + 1);
            net.segments.push_back(seg);
        }
    }
    for (int li = 0; li + 1 < spec.n_lanes; ++li) {
        for (int c = 0; c < cuts_per_lane; ++c) {
            net.extra_edges.push_back({jct(li, c), jct(li + 1, c), spec.lane_width});
            net.extra_edges.push_back({jct(li + 1, c), jct(li, c), spec.lane_width});
        }
    }

    if (spec.with_exits) {
        // one stub per straight, leaving the outer lane at the straight's last cut
        const int outer = spec.n_lanes - 1;
        const Lane& lane = net.lanes[static_cast<std::size_t>(outer)];
        const double off = (mid - static_cast<double>(outer)) * spec.lane_width;
        const int exit_cuts[2] = {spec.straight_cuts - 1,
                                  2 * spec.straight_cuts + spec.arc_cuts - 1};
        const double ramp_out = 4.0;  // lateral drift of the stub
        for (int e = 0; e < 2; ++e) {
            const int cut = exit_cuts[e];
            const double s0 = lane.cut_s[static_cast<std::size_t>(cut)];
            const Vec2 a = lane.centerline.point_at(s0);
            const Vec2 t = lane.centerline.tangent_at(s0);
            const Vec2 right{t.y, -t.x};
            std::vector<Vec2> pts;
            const int n = 20;
            for (int k = 0; k <= n; ++k) {
                double u = static_cast<double>(k) / n;
                pts.push_back(a + (u * spec.exit_length) * t + (u * u * ramp_out) * right);
            }
            Lane exit_lane;
            exit_lane.id = static_cast<int>(net.lanes.size());
            exit_lane.width = spec.lane_width;
            exit_lane.centerline = Polyline(pts, false);
            exit_lane.cut_s = {0.0};
            const int end_j = net.junction_count++;
            net.junction_station.push_back({-1, 0.0});
            Segment seg;
            seg.id = static_cast<int>(net.segments.size());
            seg.lane = exit_lane.id;
            seg.s_begin = 0.0;
            seg.s_end = exit_lane.centerline.length();
            seg.start_junction = jct(outer, cut);
            seg.end_junction = end_j;
            net.exit_segments.push_back(seg.id);
            net.segments.push_back(seg);
            net.lanes.push_back(std::move(exit_lane));
            (void)off;
        }
    }

    net.validate();
    return net;
}

}  // namespace pirl
