#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lidarsim/background.hpp"
#include "lidarsim/cubemap.hpp"
#include "lidarsim/placement.hpp"
#include "lidarsim/sensor.hpp"

namespace lidarsim {

/// One returned pulse. Position is in the sensor frame.
struct SimulatedPoint {
    Vec3 position;
    std::uint32_t beam = 0;
    std::uint32_t instance = 0;  // 0 = background, k = k-th placed obstacle
    std::uint32_t material = 0;
    double energy = 0.0;
};

struct FrameStats {
    std::size_t candidates = 0;
    std::size_t sky_discards = 0;
    std::size_t low_energy_discards = 0;
    std::size_t range_discards = 0;
    std::size_t emitted = 0;
};

struct RenderOptions {
    int cube_resolution = 1024;
    SplatParams splat;
    double background_reflectivity = 0.8;
};

struct SimulatedFrame {
    std::vector<SimulatedPoint> points;
    FrameStats stats;
};

/// Renders the hybrid scene into cube maps around the sensor, then walks the
/// beam stream: sky pixels and sub-threshold returns are discarded, everything
/// else becomes a point at the looked-up range plus distance noise.
/// Deterministic per seed.
SimulatedFrame simulate_frame(const ScenePlacement& placement, const BackgroundScene& scene,
                              const ObstacleLibrary& library, const SensorModel& sensor,
                              const RigidPose& sensor_pose, std::uint64_t rng_seed,
                              const RenderOptions& options = {});

/// The cube maps a frame would use, exposed for inspection and debug dumps.
CubeFaceMaps render_frame_cube_maps(const ScenePlacement& placement,
                                    const BackgroundScene& scene,
                                    const ObstacleLibrary& library,
                                    const RigidPose& sensor_pose,
                                    const RenderOptions& options = {});

/// Surface range along `direction` implied by rendered cube maps: the
/// nearest pixel's depth reprojected through its stored tangent plane.
/// Absent for sky pixels.
std::optional<double> beam_range_lookup(const CubeFaceMaps& maps, const Vec3& direction);

}  // namespace lidarsim
