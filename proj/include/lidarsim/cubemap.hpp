#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/mesh.hpp"

namespace lidarsim {

enum class CubeFace : int { PosX = 0, NegX = 1, PosY = 2, NegY = 3, PosZ = 4, NegZ = 5 };

inline constexpr int kCubeFaceCount = 6;
inline constexpr std::uint32_t kBackgroundInstance = 0;

/// Face basis: `forward` is the face axis, `right`/`up` span the face plane.
struct FaceBasis {
    Vec3 forward, right, up;
};
FaceBasis face_basis(CubeFace face);

struct FacePixel {
    CubeFace face = CubeFace::PosX;
    int u = 0;
    int v = 0;
};

/// Projects a direction onto the cube: the face is the axis of the largest
/// absolute component (ties broken x > y > z), (u, v) the perspective pixel.
/// Throws ValidationError on a zero direction.
FacePixel direction_to_face_pixel(const Vec3& direction, int resolution);

/// Continuous face coordinates in [-1, 1] for a direction known to lie on `face`.
void face_coords(const Vec3& direction, CubeFace face, double& s, double& t);

/// Center direction of a pixel (unit length).
Vec3 face_pixel_direction(CubeFace face, int u, int v, int resolution);

/// Per-pixel depth (range in meters, +inf = sky), unit normal, material and
/// instance IDs for the six faces of a cube centered at the sensor.
class CubeFaceMaps {
public:
    static constexpr float kSky = std::numeric_limits<float>::infinity();

    CubeFaceMaps() = default;
    explicit CubeFaceMaps(int resolution);

    int resolution() const { return res_; }

    float depth(CubeFace f, int u, int v) const { return depth_[plane(f, u, v)]; }
    Vec3 normal(CubeFace f, int u, int v) const {
        const std::size_t i = plane(f, u, v);
        return {normal_x_[i], normal_y_[i], normal_z_[i]};
    }
    std::uint32_t material(CubeFace f, int u, int v) const { return material_[plane(f, u, v)]; }
    std::uint32_t instance(CubeFace f, int u, int v) const { return instance_[plane(f, u, v)]; }
    bool is_sky(CubeFace f, int u, int v) const { return !std::isfinite(depth(f, u, v)); }

    /// Depth test + write; keeps the nearer surface. `epsilon` biases in
    /// favor of the already stored sample.
    void write_sample(CubeFace f, int u, int v, float depth, const Vec3& normal,
                      std::uint32_t material, std::uint32_t instance, float epsilon = 0.0f);

    /// 16-bit grayscale PGM dump of one face's depth, scaled so that
    /// value = round(depth / max_depth * 65534) and 65535 marks sky.
    void dump_depth_pgm(CubeFace f, const std::filesystem::path& path, double max_depth) const;

private:
    std::size_t plane(CubeFace f, int u, int v) const {
        return (static_cast<std::size_t>(f) * static_cast<std::size_t>(res_) +
                static_cast<std::size_t>(v)) *
                   static_cast<std::size_t>(res_) +
               static_cast<std::size_t>(u);
    }

    int res_ = 0;
    std::vector<float> depth_;
    std::vector<float> normal_x_, normal_y_, normal_z_;
    std::vector<std::uint32_t> material_;
    std::vector<std::uint32_t> instance_;
};

struct SplatParams {
    double radius = 0.03;        // meters; scanner point spacing
    double depth_epsilon = 0.0;  // depth-test bias
};

/// Scene content handed to the rasterizer. Meshes are in world frame;
/// background arrays are referenced, not copied.
struct SceneGeometry {
    const std::vector<Vec3>* background_points = nullptr;
    const std::vector<Vec3>* background_normals = nullptr;      // may be null
    const std::vector<std::uint32_t>* background_materials = nullptr;  // may be null

    struct MeshInstance {
        const TriangleMesh* mesh = nullptr;  // world frame
        std::uint32_t instance_id = 0;       // 1-based; 0 is the background
        std::uint32_t material_base = 0;     // offset into `materials`
    };
    std::vector<MeshInstance> meshes;

    std::vector<Material> materials;  // slot 0 = background material
};

/// Splats background points as sensor-facing disks and rasterizes obstacle
/// triangles into the same z-buffered cube maps. Transparent materials are
/// skipped. Unwritten pixels remain sky.
CubeFaceMaps render_cube_maps(const SceneGeometry& scene, const Vec3& origin,
                              const SplatParams& splat, int resolution);

}  // namespace lidarsim
