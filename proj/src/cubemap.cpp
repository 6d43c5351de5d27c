#include "lidarsim/cubemap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lidarsim/errors.hpp"

namespace lidarsim {

FaceBasis face_basis(CubeFace face) {
    switch (face) {
        case CubeFace::PosX: return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        case CubeFace::NegX: return {{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}};
        case CubeFace::PosY: return {{0, 1, 0}, {-1, 0, 0}, {0, 0, 1}};
        case CubeFace::NegY: return {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
        case CubeFace::PosZ: return {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
        case CubeFace::NegZ: return {{0, 0, -1}, {1, 0, 0}, {0, -1, 0}};
    }
    throw ValidationError("invalid cube face");
}

namespace {

CubeFace dominant_face(const Vec3& d) {
    const double ax = std::abs(d.x), ay = std::abs(d.y), az = std::abs(d.z);
    if (ax >= ay && ax >= az) return d.x >= 0.0 ? CubeFace::PosX : CubeFace::NegX;
    if (ay >= az) return d.y >= 0.0 ? CubeFace::PosY : CubeFace::NegY;
    return d.z >= 0.0 ? CubeFace::PosZ : CubeFace::NegZ;
}

int coord_to_pixel(double s, int resolution) {
    const int p = static_cast<int>(std::floor((s + 1.0) * 0.5 * resolution));
    return std::clamp(p, 0, resolution - 1);
}

double pixel_to_coord(int p, int resolution) {
    return (static_cast<double>(p) + 0.5) / resolution * 2.0 - 1.0;
}

}  // namespace

void face_coords(const Vec3& direction, CubeFace face, double& s, double& t) {
    const FaceBasis basis = face_basis(face);
    const double f = direction.dot(basis.forward);
    s = direction.dot(basis.right) / f;
    t = direction.dot(basis.up) / f;
}

FacePixel direction_to_face_pixel(const Vec3& direction, int resolution) {
    if (resolution < 1) throw ValidationError("cube resolution must be positive");
    if (!(direction.squared_norm() > 0.0))
        throw ValidationError("cannot project a zero direction");
    FacePixel pixel;
    pixel.face = dominant_face(direction);
    double s = 0.0, t = 0.0;
    face_coords(direction, pixel.face, s, t);
    pixel.u = coord_to_pixel(s, resolution);
    pixel.v = coord_to_pixel(t, resolution);
    return pixel;
}

Vec3 face_pixel_direction(CubeFace face, int u, int v, int resolution) {
    const FaceBasis basis = face_basis(face);
    const double s = pixel_to_coord(u, resolution);
    const double t = pixel_to_coord(v, resolution);
    return (basis.forward + basis.right * s + basis.up * t).normalized();
}

CubeFaceMaps::CubeFaceMaps(int resolution) : res_(resolution) {
    if (resolution < 1) throw ValidationError("cube resolution must be positive");
    const std::size_t n = static_cast<std::size_t>(kCubeFaceCount) *
                          static_cast<std::size_t>(resolution) *
                          static_cast<std::size_t>(resolution);
    depth_.assign(n, kSky);
    normal_x_.assign(n, 0.0f);
    normal_y_.assign(n, 0.0f);
    normal_z_.assign(n, 0.0f);
    material_.assign(n, 0);
    instance_.assign(n, kBackgroundInstance);
}

void CubeFaceMaps::write_sample(CubeFace f, int u, int v, float depth, const Vec3& normal,
                                std::uint32_t material, std::uint32_t instance, float epsilon) {
    const std::size_t i = plane(f, u, v);
    if (!(depth < depth_[i] - epsilon)) return;
    depth_[i] = depth;
    normal_x_[i] = static_cast<float>(normal.x);
    normal_y_[i] = static_cast<float>(normal.y);
    normal_z_[i] = static_cast<float>(normal.z);
    material_[i] = material;
    instance_[i] = instance;
}

void CubeFaceMaps::dump_depth_pgm(CubeFace f, const std::filesystem::path& path,
                                  double max_depth) const {
    if (!(max_depth > 0.0)) throw ValidationError("PGM depth scale must be positive");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << res_ << " " << res_ << "\n65535\n";
    std::string buf;
    buf.reserve(static_cast<std::size_t>(res_) * res_ * 2);
    for (int v = res_ - 1; v >= 0; --v) {
        for (int u = 0; u < res_; ++u) {
            const float d = depth(f, u, v);
            std::uint16_t value = 65535;  // sky
            if (std::isfinite(d)) {
                const double scaled = std::llround(d / max_depth * 65534.0);
                value = static_cast<std::uint16_t>(std::clamp(scaled, 0.0, 65534.0));
            }
            buf.push_back(static_cast<char>(value >> 8));
            buf.push_back(static_cast<char>(value & 0xff));
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

constexpr double kNearClip = 1e-4;

const Material& material_of(const SceneGeometry& scene, std::uint32_t slot) {
    if (slot >= scene.materials.size()) slot = 0;
    return scene.materials[slot];
}

void splat_point(CubeFaceMaps& maps, const Vec3& rel, const Vec3& normal, std::uint32_t material,
                 double radius, float epsilon) {
    const double r = rel.norm();
    if (r <= kNearClip) return;
    const Vec3 dir = rel / r;
    const double alpha = std::asin(std::min(radius / r, 1.0));
    const int res = maps.resolution();

    for (int fi = 0; fi < kCubeFaceCount; ++fi) {
        const auto face = static_cast<CubeFace>(fi);
        const FaceBasis basis = face_basis(face);
        const double f = dir.dot(basis.forward);
        if (f < 0.4) continue;  // disk cannot reach a face this oblique
        const double s0 = dir.dot(basis.right) / f;
        const double t0 = dir.dot(basis.up) / f;
        // conservative footprint of an angular cone in face coordinates
        const double spread = 2.0 * alpha / f + 2.0 / res;
        if (std::abs(s0) > 1.0 + spread || std::abs(t0) > 1.0 + spread) continue;

        const int du = static_cast<int>(std::ceil(spread * 0.5 * res)) + 1;
        const int u0 = coord_to_pixel(s0, res);
        const int v0 = coord_to_pixel(t0, res);
        const int u_lo = std::max(0, u0 - du), u_hi = std::min(res - 1, u0 + du);
        const int v_lo = std::max(0, v0 - du), v_hi = std::min(res - 1, v0 + du);
        for (int v = v_lo; v <= v_hi; ++v) {
            for (int u = u_lo; u <= u_hi; ++u) {
                const Vec3 ray = face_pixel_direction(face, u, v, res);
                const double denom = ray.dot(dir);
                if (denom <= 1e-9) continue;
                // sensor-facing disk through the point
                const double t_hit = r / denom;
                const Vec3 offset = ray * t_hit - rel;
                if (offset.squared_norm() > radius * radius) continue;
                Vec3 n = normal;
                if (n.dot(ray) > 0.0) n = -n;
                maps.write_sample(face, u, v, static_cast<float>(t_hit), n, material,
                                  kBackgroundInstance, epsilon);
            }
        }
    }
}

/// Sutherland-Hodgman clip of a polygon against plane dot(v, axis) >= near.
std::size_t clip_near(const Vec3* in, std::size_t count, const Vec3& axis, double near,
                      Vec3* out) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const Vec3& a = in[i];
        const Vec3& b = in[(i + 1) % count];
        const double fa = a.dot(axis) - near;
        const double fb = b.dot(axis) - near;
        if (fa >= 0.0) out[n++] = a;
        if ((fa >= 0.0) != (fb >= 0.0)) {
            const double t = fa / (fa - fb);
            out[n++] = a + (b - a) * t;
        }
    }
    return n;
}

void rasterize_triangle_on_face(CubeFaceMaps& maps, CubeFace face, const Vec3& v0, const Vec3& v1,
                                const Vec3& v2, const Vec3& plane_normal, double plane_offset,
                                std::uint32_t material, std::uint32_t instance, float epsilon) {
    const FaceBasis basis = face_basis(face);
    // quick rejection: fully behind the face plane
    if (v0.dot(basis.forward) <= kNearClip && v1.dot(basis.forward) <= kNearClip &&
        v2.dot(basis.forward) <= kNearClip)
        return;

    Vec3 poly_in[3] = {v0, v1, v2};
    Vec3 poly[8];
    const std::size_t n = clip_near(poly_in, 3, basis.forward, kNearClip, poly);
    if (n < 3) return;

    const int res = maps.resolution();
    double px[8], py[8];
    for (std::size_t i = 0; i < n; ++i) {
        const double f = poly[i].dot(basis.forward);
        px[i] = (poly[i].dot(basis.right) / f + 1.0) * 0.5 * res - 0.5;
        py[i] = (poly[i].dot(basis.up) / f + 1.0) * 0.5 * res - 0.5;
    }

    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double ax = px[0], ay = py[0];
        const double bx = px[k], by = py[k];
        const double cx = px[k + 1], cy = py[k + 1];
        const double area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if (std::abs(area) < 1e-18) continue;
        const double sign = area > 0.0 ? 1.0 : -1.0;

        const int u_lo = std::max(0, static_cast<int>(std::floor(std::min({ax, bx, cx}))));
        const int u_hi = std::min(res - 1, static_cast<int>(std::ceil(std::max({ax, bx, cx}))));
        const int v_lo = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}))));
        const int v_hi = std::min(res - 1, static_cast<int>(std::ceil(std::max({ay, by, cy}))));
        if (u_lo > u_hi || v_lo > v_hi) continue;

        for (int v = v_lo; v <= v_hi; ++v) {
            const double pyc = static_cast<double>(v);
            for (int u = u_lo; u <= u_hi; ++u) {
                const double pxc = static_cast<double>(u);
                // inclusive edge functions: boundary pixels belong to both
                // triangles sharing the edge, the depth test arbitrates
                const double e0 = sign * ((bx - ax) * (pyc - ay) - (by - ay) * (pxc - ax));
                if (e0 < 0.0) continue;
                const double e1 = sign * ((cx - bx) * (pyc - by) - (cy - by) * (pxc - bx));
                if (e1 < 0.0) continue;
                const double e2 = sign * ((ax - cx) * (pyc - cy) - (ay - cy) * (pxc - cx));
                if (e2 < 0.0) continue;

                const Vec3 ray = face_pixel_direction(face, u, v, res);
                const double denom = ray.dot(plane_normal);
                if (std::abs(denom) < 1e-12) continue;
                const double range = plane_offset / denom;
                if (range <= kNearClip) continue;
                Vec3 store_normal = plane_normal;
                if (store_normal.dot(ray) > 0.0) store_normal = -store_normal;
                maps.write_sample(face, u, v, static_cast<float>(range), store_normal, material,
                                  instance, epsilon);
            }
        }
    }
}

}  // namespace

CubeFaceMaps render_cube_maps(const SceneGeometry& scene, const Vec3& origin,
                              const SplatParams& splat, int resolution) {
    if (resolution < 1) throw ValidationError("cube resolution must be positive");
    if (!(splat.radius > 0.0)) throw ValidationError("splat radius must be positive");
    if (splat.depth_epsilon < 0.0) throw ValidationError("depth epsilon must be non-negative");
    if (!origin.finite()) throw ValidationError("render origin must be finite");
    if (scene.materials.empty())
        throw ValidationError("scene geometry needs at least the background material slot");

    CubeFaceMaps maps(resolution);
    const auto eps = static_cast<float>(splat.depth_epsilon);

    if (scene.background_points) {
        const auto& points = *scene.background_points;
        if (scene.background_normals && scene.background_normals->size() != points.size())
            throw ValidationError("background normal count does not match the point count");
        if (scene.background_materials && scene.background_materials->size() != points.size())
            throw ValidationError("background material count does not match the point count");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::uint32_t slot =
                scene.background_materials ? (*scene.background_materials)[i] : 0;
            if (material_of(scene, slot).transparent) continue;
            const Vec3 rel = points[i] - origin;
            const Vec3 normal = scene.background_normals
                                    ? (*scene.background_normals)[i]
                                    : (rel.squared_norm() > 0.0 ? -rel.normalized()
                                                                : Vec3{0, 0, 1});
            splat_point(maps, rel, normal, slot, splat.radius, eps);
        }
    }

    for (const auto& inst : scene.meshes) {
        if (!inst.mesh) throw ValidationError("scene mesh instance without a mesh");
        if (inst.instance_id == kBackgroundInstance)
            throw ValidationError("mesh instance IDs start at 1");
        const TriangleMesh& mesh = *inst.mesh;
        for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
            const std::uint32_t local_slot = mesh.tri_materials.empty() ? 0 : mesh.tri_materials[t];
            const std::uint32_t slot = inst.material_base + local_slot;
            if (material_of(scene, slot).transparent) continue;

            const auto& tri = mesh.triangles[t];
            const Vec3 a = mesh.vertices[tri[0]] - origin;
            const Vec3 b = mesh.vertices[tri[1]] - origin;
            const Vec3 c = mesh.vertices[tri[2]] - origin;
            const Vec3 n = (b - a).cross(c - a);
            const double nn = n.norm();
            if (nn < 1e-18) continue;
            const Vec3 unit_n = n / nn;
            const double plane_offset = a.dot(unit_n);
            for (int fi = 0; fi < kCubeFaceCount; ++fi)
                rasterize_triangle_on_face(maps, static_cast<CubeFace>(fi), a, b, c, unit_n,
                                           plane_offset, slot, inst.instance_id, eps);
        }
    }
    return maps;
}

}  // namespace lidarsim
