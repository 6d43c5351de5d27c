#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace lidarsim {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

/// Normalize an angle to [-pi, pi).
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

/// 3D vector / point in meters. World frame is right-handed, z-up.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? *this / n : Vec3{};
    }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix, used for rigid rotations.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }

    static Mat3 rotation_z(double yaw) {
        const double c = std::cos(yaw);
        const double s = std::sin(yaw);
        return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
    }

    double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
    double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

/// Rigid transform. The rotation matrix is authoritative; `yaw` is the
/// z-rotation component and is exact for yaw-only poses (the only kind used
/// for obstacle placement).
struct RigidPose {
    Vec3 translation;
    double yaw = 0.0;
    Mat3 rotation;

    RigidPose() = default;

    static RigidPose from_yaw(const Vec3& t, double yaw_rad) {
        RigidPose p;
        p.translation = t;
        p.yaw = wrap_angle(yaw_rad);
        p.rotation = Mat3::rotation_z(p.yaw);
        return p;
    }

    static RigidPose from_matrix(const Vec3& t, const Mat3& r) {
        RigidPose p;
        p.translation = t;
        p.rotation = r;
        p.yaw = wrap_angle(std::atan2(r(1, 0), r(0, 0)));
        return p;
    }

    Vec3 apply(const Vec3& v) const { return rotation * v + translation; }

    /// Rotate a direction without translating.
    Vec3 rotate(const Vec3& v) const { return rotation * v; }

    /// this ∘ other: apply `other` first, then this.
    RigidPose compose(const RigidPose& other) const {
        return from_matrix(rotation * other.translation + translation,
                           rotation * other.rotation);
    }

    RigidPose inverse() const {
        Mat3 rt = rotation.transposed();
        return from_matrix(-(rt * translation), rt);
    }

    bool is_identity() const {
        return translation.squared_norm() == 0.0 && yaw == 0.0;
    }
};

/// Upright (yaw-only) oriented bounding box.
struct Obb {
    Vec3 center;
    Vec3 half_extents;  // all > 0
    double yaw = 0.0;

    /// Point coordinates in the box frame.
    Vec3 to_box_frame(const Vec3& p) const {
        const Vec3 d = p - center;
        const double c = std::cos(yaw), s = std::sin(yaw);
        return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
    }

    Vec3 from_box_frame(const Vec3& b) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        return Vec3{c * b.x - s * b.y, s * b.x + c * b.y, b.z} + center;
    }

    bool contains(const Vec3& p, double pad = 0.0) const {
        const Vec3 b = to_box_frame(p);
        return std::abs(b.x) <= half_extents.x + pad &&
               std::abs(b.y) <= half_extents.y + pad &&
               std::abs(b.z) <= half_extents.z + pad;
    }

    std::array<Vec3, 8> corners() const {
        std::array<Vec3, 8> out;
        int i = 0;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0})
                for (double sz : {-1.0, 1.0})
                    out[static_cast<std::size_t>(i++)] = from_box_frame(
                        {sx * half_extents.x, sy * half_extents.y, sz * half_extents.z});
        return out;
    }

    /// Ground-projected rectangle corners (counter-clockwise).
    std::array<Vec3, 4> footprint(double inflate = 0.0) const {
        const double hx = half_extents.x + inflate;
        const double hy = half_extents.y + inflate;
        return {from_box_frame({-hx, -hy, 0}), from_box_frame({hx, -hy, 0}),
                from_box_frame({hx, hy, 0}), from_box_frame({-hx, hy, 0})};
    }

    /// Transform by a yaw-only pose. The result is again an upright box.
    Obb transformed(const RigidPose& pose) const {
        Obb out;
        out.center = pose.apply(center);
        out.half_extents = half_extents;
        out.yaw = wrap_angle(yaw + pose.yaw);
        return out;
    }
};

/// 2D footprint overlap of two upright boxes, separating-axis test.
/// `margin` inflates both rectangles before testing.
bool obb_footprint_overlap(const Obb& a, const Obb& b, double margin = 0.0);

/// Axis-aligned bounds helper.
struct Aabb {
    Vec3 min{1e300, 1e300, 1e300};
    Vec3 max{-1e300, -1e300, -1e300};

    void expand(const Vec3& p) {
        min.x = std::min(min.x, p.x);
        min.y = std::min(min.y, p.y);
        min.z = std::min(min.z, p.z);
        max.x = std::max(max.x, p.x);
        max.y = std::max(max.y, p.y);
        max.z = std::max(max.z, p.z);
    }
    bool valid() const { return min.x <= max.x; }
    Vec3 center() const { return (min + max) * 0.5; }
};

std::vector<Vec3> transform_points(const std::vector<Vec3>& pts, const RigidPose& pose);

}  // namespace lidarsim
