#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"

namespace lidarsim {

/// Surface material as seen by the pulse-energy model.
struct Material {
    double reflectivity = 0.8;  // in [0, 1]
    bool transparent = false;   // transparent surfaces return no pulse
};

/// Indexed triangle mesh in its model frame. Model convention: origin on the
/// ground contact plane, +x forward, real-world scale in meters.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<std::uint32_t> tri_materials;  // slot per triangle, indexes `materials`
    std::vector<Material> materials;
    std::vector<std::string> material_names;

    std::size_t triangle_count() const { return triangles.size(); }

    Vec3 triangle_normal(std::size_t t) const {
        const auto& tri = triangles[t];
        const Vec3 a = vertices[tri[0]];
        return (vertices[tri[1]] - a).cross(vertices[tri[2]] - a).normalized();
    }

    double triangle_area(std::size_t t) const {
        const auto& tri = triangles[t];
        const Vec3 a = vertices[tri[0]];
        return 0.5 * (vertices[tri[1]] - a).cross(vertices[tri[2]] - a).norm();
    }

    Aabb bounds() const;

    /// Drops zero-area triangles in place; returns how many were removed.
    std::size_t remove_degenerate(double area_eps = 1e-12);

    TriangleMesh transformed(const RigidPose& pose) const;

    /// Throws ValidationError on out-of-range indices or size mismatches.
    void validate() const;
};

struct ObjLoadStats {
    std::size_t degenerate_dropped = 0;
};

/// Wavefront OBJ loader. Supports v/f records, polygon fan triangulation,
/// negative indices, and `usemtl` group switches mapped to material slots.
/// Material names containing "glass" are marked transparent. `base_material`
/// seeds every slot's reflectivity.
TriangleMesh load_obj(const std::filesystem::path& path,
                      const Material& base_material = Material{},
                      ObjLoadStats* stats = nullptr);

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Axis-aligned box mesh builder (12 triangles), used for fixtures and demos.
TriangleMesh make_box_mesh(const Vec3& min, const Vec3& max, std::uint32_t material_slot = 0);

}  // namespace lidarsim
