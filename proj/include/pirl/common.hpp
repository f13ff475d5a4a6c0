#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pirl {

constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

// Signed shortest rotation from angle `a` to angle `b`.
inline double angle_diff(double b, double a) { return wrap_angle(b - a); }

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double clampd(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {s * v.x, s * v.y}; }

// Error hierarchy. Every contract violation throws a typed error so callers
// (and the CLI) can map failures to distinct exit codes.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoRouteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientOdometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct HashMismatchError : DatasetError {
    using DatasetError::DatasetError;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for config fingerprints recorded in dataset manifests.
inline std::uint64_t fnv1a64(const std::string& data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline double logsumexp(const std::vector<double>& v) {
    if (v.empty()) throw DimensionError("logsumexp: empty input");
    double m = v[0];
    for (double x : v)
        if (x > m) m = x;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace pirl
