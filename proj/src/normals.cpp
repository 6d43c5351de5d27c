#include "lidarsim/normals.hpp"

#include <Eigen/Dense>

namespace lidarsim {

std::vector<Vec3> estimate_point_normals(const std::vector<Vec3>& points,
                                         const SpatialGridIndex& index, double radius,
                                         const Vec3& view_origin) {
    std::vector<Vec3> normals(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        const std::vector<std::uint32_t> neighbors = index.query(p, radius);

        Vec3 normal;
        if (neighbors.size() < 3) {
            normal = (view_origin - p).norm() > 1e-12 ? (view_origin - p).normalized()
                                                      : Vec3{0.0, 0.0, 1.0};
        } else {
            Vec3 mean;
            for (std::size_t j : neighbors) mean = mean + points[j];
            mean = mean * (1.0 / static_cast<double>(neighbors.size()));

            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (std::size_t j : neighbors) {
                const Vec3 d = points[j] - mean;
                const Eigen::Vector3d e(d.x, d.y, d.z);
                cov += e * e.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
            const Eigen::Vector3d n = solver.eigenvectors().col(0);  // smallest eigenvalue
            normal = {n.x(), n.y(), n.z()};
            const double nn = normal.norm();
            normal = nn > 1e-12 ? normal * (1.0 / nn) : Vec3{0.0, 0.0, 1.0};
        }
        if (normal.dot(view_origin - p) < 0.0) normal = normal * -1.0;
        normals[i] = normal;
    }
    return normals;
}

}  // namespace lidarsim
