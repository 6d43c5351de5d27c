#include "lidarsim/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"

namespace lidarsim {

namespace {

/// World-frame copies of the placed meshes plus the geometry views into them.
struct BuiltScene {
    std::vector<TriangleMesh> meshes;
    SceneGeometry geometry;
};

BuiltScene build_scene_geometry(const ScenePlacement& placement, const BackgroundScene& scene,
                                const ObstacleLibrary& library, const RenderOptions& options) {
    if (options.background_reflectivity < 0.0 || options.background_reflectivity > 1.0)
        throw ValidationError("background reflectivity must lie in [0, 1]");

    BuiltScene built;
    built.geometry.background_points = &scene.cloud.points;
    if (scene.normals.size() == scene.cloud.points.size())
        built.geometry.background_normals = &scene.normals;

    Material background;
    background.reflectivity = options.background_reflectivity;
    built.geometry.materials.push_back(background);

    built.meshes.reserve(placement.obstacles.size());
    for (std::size_t i = 0; i < placement.obstacles.size(); ++i) {
        const PlacedObstacle& placed = placement.obstacles[i];
        const ObstacleModel& model = library.model(placed.model_id);
        const auto material_base = static_cast<std::uint32_t>(built.geometry.materials.size());
        for (const Material& m : model.mesh.materials) built.geometry.materials.push_back(m);
        built.meshes.push_back(model.mesh.transformed(placed.pose));

        SceneGeometry::MeshInstance inst;
        inst.instance_id = static_cast<std::uint32_t>(i + 1);
        inst.material_base = material_base;
        built.geometry.meshes.push_back(inst);
    }
    // pointers bound after the mesh vector stops growing
    for (std::size_t i = 0; i < built.meshes.size(); ++i)
        built.geometry.meshes[i].mesh = &built.meshes[i];
    return built;
}

/// The stored sample sits on the pixel-center ray; reproject along the beam
/// through the sample's tangent plane for sub-pixel accuracy.
double reproject_range(const CubeFaceMaps& maps, const FacePixel& pixel, const Vec3& dir) {
    const double pixel_range = maps.depth(pixel.face, pixel.u, pixel.v);
    Vec3 normal = maps.normal(pixel.face, pixel.u, pixel.v);
    const double nn = normal.norm();
    if (nn <= 0.0) return pixel_range;
    normal = normal / nn;

    const Vec3 pixel_ray = face_pixel_direction(pixel.face, pixel.u, pixel.v, maps.resolution());
    const double beam_dot = dir.dot(normal);
    if (std::abs(beam_dot) <= 1e-9) return pixel_range;
    const double reprojected = pixel_range * pixel_ray.dot(normal) / beam_dot;
    return reprojected > 0.0 ? reprojected : pixel_range;
}

}  // namespace

std::optional<double> beam_range_lookup(const CubeFaceMaps& maps, const Vec3& direction) {
    const FacePixel pixel = direction_to_face_pixel(direction, maps.resolution());
    if (maps.is_sky(pixel.face, pixel.u, pixel.v)) return std::nullopt;
    return reproject_range(maps, pixel, direction.normalized());
}

CubeFaceMaps render_frame_cube_maps(const ScenePlacement& placement, const BackgroundScene& scene,
                                    const ObstacleLibrary& library, const RigidPose& sensor_pose,
                                    const RenderOptions& options) {
    const BuiltScene built = build_scene_geometry(placement, scene, library, options);
    return render_cube_maps(built.geometry, sensor_pose.translation, options.splat,
                            options.cube_resolution);
}

SimulatedFrame simulate_frame(const ScenePlacement& placement, const BackgroundScene& scene,
                              const ObstacleLibrary& library, const SensorModel& sensor,
                              const RigidPose& sensor_pose, std::uint64_t rng_seed,
                              const RenderOptions& options) {
    sensor.config.validate();
    const BuiltScene built = build_scene_geometry(placement, scene, library, options);
    const CubeFaceMaps maps = render_cube_maps(built.geometry, sensor_pose.translation,
                                               options.splat, options.cube_resolution);

    const std::vector<BeamSample> beams =
        generate_beam_directions(sensor.beams, sensor.config, derive_seed(rng_seed, 1));
    std::mt19937_64 noise_rng = make_engine(derive_seed(rng_seed, 2));
    std::normal_distribution<double> distance_noise(0.0, sensor.config.distance_noise_sigma);

    const EnergyModel energy_model = sensor.config.energy_model();
    const double threshold = energy_model.threshold;
    const double max_range = sensor.config.max_range;

    SimulatedFrame frame;
    frame.stats.candidates = beams.size();
    frame.points.reserve(beams.size());

    for (const BeamSample& beam : beams) {
        const Vec3 world_dir = sensor_pose.rotate(beam.direction);
        const FacePixel pixel = direction_to_face_pixel(world_dir, maps.resolution());
        if (maps.is_sky(pixel.face, pixel.u, pixel.v)) {
            ++frame.stats.sky_discards;
            continue;
        }

        const double range = reproject_range(maps, pixel, world_dir);
        const Vec3 stored_normal = maps.normal(pixel.face, pixel.u, pixel.v);
        const double nn = stored_normal.norm();
        const Vec3 normal = nn > 0.0 ? stored_normal / nn : -world_dir;
        const double beam_dot = world_dir.dot(normal);

        if (range > max_range) {
            ++frame.stats.range_discards;
            continue;
        }

        const std::uint32_t material_slot = maps.material(pixel.face, pixel.u, pixel.v);
        const double reflectivity = material_slot < built.geometry.materials.size()
                                        ? built.geometry.materials[material_slot].reflectivity
                                        : options.background_reflectivity;
        const double cos_incidence = std::clamp(std::abs(beam_dot), 0.0, 1.0);
        const double incidence = std::acos(cos_incidence);
        const double energy = return_energy(energy_model, reflectivity, incidence, range);
        if (energy < threshold) {
            ++frame.stats.low_energy_discards;
            continue;
        }

        SimulatedPoint point;
        point.position = beam.direction * (range + distance_noise(noise_rng));
        point.beam = beam.beam;
        point.instance = maps.instance(pixel.face, pixel.u, pixel.v);
        point.material = material_slot;
        point.energy = energy;
        frame.points.push_back(point);
        ++frame.stats.emitted;
    }
    return frame;
}

}  // namespace lidarsim
