#pragma once

#include <algorithm>
#include <vector>

#include "pirl/common.hpp"

namespace pirl {

// Arc-length parameterized 2-D polyline. When `loop` is set, arc positions
// wrap modulo the total length and the closing segment back to pts[0] is
// implied (pts must not repeat the first point).
class Polyline {
public:
    Polyline() = default;
    Polyline(std::vector<Vec2> pts, bool loop) : pts_(std::move(pts)), loop_(loop) {
        if (pts_.size() < 2) throw DimensionError("Polyline: need at least 2 points");
        s_.resize(pts_.size());
        s_[0] = 0.0;
        for (std::size_t i = 1; i < pts_.size(); ++i)
            s_[i] = s_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
        length_ = s_.back();
        if (loop_) length_ += (pts_.front() - pts_.back()).norm();
        for (std::size_t i = 1; i < pts_.size(); ++i)
            if (s_[i] <= s_[i - 1]) throw DimensionError("Polyline: arc length not strictly increasing");
    }

    double length() const { return length_; }
    bool loop() const { return loop_; }
    std::size_t size() const { return pts_.size(); }
    const std::vector<Vec2>& points() const { return pts_; }
    double arc_at(std::size_t idx) const { return s_.at(idx); }

    double wrap_s(double s) const {
        if (!loop_) return clampd(s, 0.0, length_);
        s = std::fmod(s, length_);
        if (s < 0.0) s += length_;
        return s;
    }

    Vec2 point_at(double s) const {
        std::size_t i;
        double t;
        locate(s, i, t);
        const Vec2 a = pts_[i];
        const Vec2 b = pts_[(i + 1) % pts_.size()];
        return a + t * (b - a);
    }

    // Unit tangent of the segment containing s.
    Vec2 tangent_at(double s) const {
        std::size_t i;
        double t;
        locate(s, i, t);
        Vec2 d = pts_[(i + 1) % pts_.size()] - pts_[i];
        double n = d.norm();
        return n > 0.0 ? d * (1.0 / n) : Vec2{1.0, 0.0};
    }

    double heading_at(double s) const {
        Vec2 t = tangent_at(s);
        return std::atan2(t.y, t.x);
    }

    struct Projection {
        double s = 0.0;         // arc position of the nearest point
        double distance = 0.0;  // unsigned distance
        double offset = 0.0;    // signed lateral offset, left of travel positive
        Vec2 point;
    };

    // Exact nearest point over all segments. `hint_segment` (when >= 0)
    // restricts the search to a window around a previous result, which keeps
    // repeated queries along a rollout cheap; the window is validated against
    // a guard band so a stale hint degrades to the full search.
    Projection project(const Vec2& p, int hint_segment = -1, int window = 8) const {
        const std::size_t nseg = loop_ ? pts_.size() : pts_.size() - 1;
        Projection best;
        best.distance = 1e300;
        auto scan = [&](std::size_t i) {
            const Vec2 a = pts_[i];
            const Vec2 b = pts_[(i + 1) % pts_.size()];
            const Vec2 ab = b - a;
            const double len2 = ab.squared_norm();
            double t = len2 > 0.0 ? clampd((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
            const Vec2 q = a + t * ab;
            const double d = (p - q).norm();
            if (d < best.distance) {
                best.distance = d;
                best.point = q;
                best.s = wrap_s(s_[i] + t * std::sqrt(len2));
                best.offset = ab.cross(p - a) >= 0.0 ? d : -d;
                last_segment_ = static_cast<int>(i);
            }
        };
        if (hint_segment >= 0) {
            for (int k = -window; k <= window; ++k) {
                long i = hint_segment + k;
                if (loop_) {
                    i = ((i % static_cast<long>(nseg)) + static_cast<long>(nseg)) % static_cast<long>(nseg);
                } else if (i < 0 || i >= static_cast<long>(nseg)) {
                    continue;
                }
                scan(static_cast<std::size_t>(i));
            }
            // adjacent-step queries move less than one window of segments;
            // anything farther means the hint was stale
            if (best.distance < hint_guard_) return best;
            best.distance = 1e300;
        }
        for (std::size_t i = 0; i < nseg; ++i) scan(i);
        return best;
    }

    int last_segment() const { return last_segment_; }

private:
    void locate(double s, std::size_t& seg, double& t) const {
        s = wrap_s(s);
        auto it = std::upper_bound(s_.begin(), s_.end(), s);
        std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
        if (!loop_ && i >= pts_.size() - 1) i = pts_.size() - 2;
        if (loop_ && i >= pts_.size()) i = pts_.size() - 1;
        const double s0 = s_[i];
        const double s1 = i + 1 < pts_.size() ? s_[i + 1] : length_;
        const double len = s1 - s0;
        t = len > 0.0 ? (s - s0) / len : 0.0;
        seg = i;
    }

    std::vector<Vec2> pts_;
    std::vector<double> s_;
    double length_ = 0.0;
    bool loop_ = false;
    double hint_guard_ = 30.0;
    mutable int last_segment_ = -1;
};

// Oriented rectangle footprint used for collision checks.
struct OrientedBox {
    Vec2 center;
    double yaw = 0.0;
    double length = 0.0;  // along yaw
    double width = 0.0;

    std::vector<Vec2> corners() const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double hl = 0.5 * length, hw = 0.5 * width;
        std::vector<Vec2> out(4);
        out[0] = {center.x + c * hl - s * hw, center.y + s * hl + c * hw};
        out[1] = {center.x + c * hl + s * hw, center.y + s * hl - c * hw};
        out[2] = {center.x - c * hl + s * hw, center.y - s * hl - c * hw};
        out[3] = {center.x - c * hl - s * hw, center.y - s * hl + c * hw};
        return out;
    }
};

// Separating-axis overlap test for two oriented boxes.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    auto separated = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q, const Vec2& axis) {
        double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
        for (const Vec2& v : p) {
            double d = v.dot(axis);
            pmin = std::min(pmin, d);
            pmax = std::max(pmax, d);
        }
        for (const Vec2& v : q) {
            double d = v.dot(axis);
            qmin = std::min(qmin, d);
            qmax = std::max(qmax, d);
        }
        return pmax < qmin || qmax < pmin;
    };
    for (int i = 0; i < 2; ++i) {
        const auto& poly = i == 0 ? ca : cb;
        for (int k = 0; k < 2; ++k) {
            Vec2 edge = poly[(k + 1) % 4] - poly[k];
            Vec2 axis{-edge.y, edge.x};
            if (separated(ca, cb, axis)) return false;
        }
    }
    return true;
}

}  // namespace pirl
