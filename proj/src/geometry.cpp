#include "lidarsim/geometry.hpp"

namespace lidarsim {

namespace {

// Projection interval of a rectangle's corners onto an axis.
void project(const std::array<Vec3, 4>& corners, double ax, double ay, double& lo, double& hi) {
    lo = hi = corners[0].x * ax + corners[0].y * ay;
    for (int i = 1; i < 4; ++i) {
        const double d = corners[static_cast<std::size_t>(i)].x * ax +
                         corners[static_cast<std::size_t>(i)].y * ay;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
}

}  // namespace

bool obb_footprint_overlap(const Obb& a, const Obb& b, double margin) {
    const auto ca = a.footprint(margin * 0.5);
    const auto cb = b.footprint(margin * 0.5);
    // Two candidate separating axes per rectangle: its edge normals.
    const double axes[4][2] = {{std::cos(a.yaw), std::sin(a.yaw)},
                               {-std::sin(a.yaw), std::cos(a.yaw)},
                               {std::cos(b.yaw), std::sin(b.yaw)},
                               {-std::sin(b.yaw), std::cos(b.yaw)}};
    for (const auto& axis : axes) {
        double alo, ahi, blo, bhi;
        project(ca, axis[0], axis[1], alo, ahi);
        project(cb, axis[0], axis[1], blo, bhi);
        if (ahi < blo || bhi < alo) return false;
    }
    return true;
}

std::vector<Vec3> transform_points(const std::vector<Vec3>& pts, const RigidPose& pose) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const Vec3& p : pts) out.push_back(pose.apply(p));
    return out;
}

}  // namespace lidarsim
