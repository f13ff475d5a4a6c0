#include <gtest/gtest.h>

#include "pirl/geometry.hpp"
#include "pirl/rng.hpp"

using namespace pirl;

TEST(Polyline, ArcLengthAndLookup) {
    Polyline pl({{0, 0}, {10, 0}, {10, 10}}, false);
    EXPECT_DOUBLE_EQ(pl.length(), 20.0);
    Vec2 p = pl.point_at(15.0);
    EXPECT_NEAR(p.x, 10.0, 1e-12);
    EXPECT_NEAR(p.y, 5.0, 1e-12);
    EXPECT_NEAR(pl.heading_at(5.0), 0.0, 1e-12);
    EXPECT_NEAR(pl.heading_at(15.0), 0.5 * kPi, 1e-12);
}

TEST(Polyline, LoopWraps) {
    Polyline pl({{0, 0}, {10, 0}, {10, 10}, {0, 10}}, true);
    EXPECT_DOUBLE_EQ(pl.length(), 40.0);
    Vec2 p = pl.point_at(45.0);  // wraps to 5
    EXPECT_NEAR(p.x, 5.0, 1e-12);
    EXPECT_NEAR(p.y, 0.0, 1e-12);
    EXPECT_NEAR(pl.wrap_s(-5.0), 35.0, 1e-12);
}

TEST(Polyline, ProjectionSignedOffset) {
    Polyline pl({{0, 0}, {100, 0}}, false);
    auto pr = pl.project({30.0, 2.0});
    EXPECT_NEAR(pr.s, 30.0, 1e-12);
    EXPECT_NEAR(pr.offset, 2.0, 1e-12);  // left of +x travel is +y
    pr = pl.project({30.0, -1.5});
    EXPECT_NEAR(pr.offset, -1.5, 1e-12);
}

TEST(Polyline, HintedProjectionMatchesFull) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 200; ++i) {
        double a = 2.0 * kPi * i / 200.0;
        pts.push_back({50.0 * std::cos(a), 50.0 * std::sin(a)});
    }
    Polyline pl(pts, true);
    Rng rng(3);
    int hint = -1;
    double s_prev = 0.0;
    for (int k = 0; k < 50; ++k) {
        double s = s_prev + rng.uniform(0.0, 2.0);
        s_prev = s;
        Vec2 p = pl.point_at(pl.wrap_s(s)) + Vec2{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        auto full = pl.project(p);
        auto hinted = pl.project(p, hint);
        hint = pl.last_segment();
        EXPECT_NEAR(full.distance, hinted.distance, 1e-9);
        EXPECT_NEAR(full.s, hinted.s, 1e-9);
    }
}

TEST(OrientedBoxes, OverlapAndSeparation) {
    OrientedBox a{{0, 0}, 0.0, 4.0, 2.0};
    OrientedBox b{{3.0, 0.0}, 0.0, 4.0, 2.0};
    EXPECT_TRUE(boxes_overlap(a, b));
    b.center = {5.0, 0.0};
    EXPECT_FALSE(boxes_overlap(a, b));
    // rotated by 45 deg, the near corner sits 2.12 m from b's center
    b.yaw = 0.25 * kPi;
    b.center = {4.0, 0.0};
    EXPECT_TRUE(boxes_overlap(a, b));
    b.center = {4.2, 0.0};
    EXPECT_FALSE(boxes_overlap(a, b));
}

TEST(Angles, WrapAndDiff) {
    EXPECT_NEAR(wrap_angle(3.0 * kPi), kPi, 1e-12);
    EXPECT_NEAR(angle_diff(-3.0, 3.0), 2.0 * kPi - 6.0, 1e-12);
    EXPECT_NEAR(wrap_angle(-kPi), kPi, 1e-12);  // (-pi, pi]
}
