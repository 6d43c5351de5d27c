#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lidarsim/placement.hpp"
#include "lidarsim/simulate.hpp"

namespace lidarsim {

/// Ground-truth record for one placed obstacle. `obb` is absent when the
/// instance received no points (or fewer than the label threshold).
struct ObstacleRecord {
    std::uint32_t instance = 0;
    std::string category;
    std::string model_id;
    RigidPose pose;  // sensor frame
    std::optional<Obb> obb;
};

/// Simulated points plus auto-generated labels for one frame.
struct AnnotatedFrame {
    std::vector<SimulatedPoint> points;
    std::vector<ObstacleRecord> obstacles;
    RigidPose sensor_pose;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    FrameStats stats;
};

/// Shrinks the pose-transformed canonical box to the instance points: per
/// axis, [min, max] of the points padded by `pad`, clamped into the canonical
/// interval inflated by the same pad. Absent when there are no points.
std::optional<Obb> fit_obb(const std::vector<Vec3>& instance_points, const Obb& canonical,
                           const RigidPose& pose, double pad);

struct AnnotateOptions {
    std::size_t min_label_points = 1;
    /// Box padding; by convention 3x the sensor's distance-noise sigma.
    double obb_pad = 0.015;
};

/// Groups frame points by instance and fits one box per placed obstacle.
/// Poses and boxes are expressed in the sensor frame.
AnnotatedFrame annotate_frame(const SimulatedFrame& frame, const ScenePlacement& placement,
                              const ObstacleLibrary& library, const RigidPose& sensor_pose,
                              const AnnotateOptions& options = {});

/// Independently keeps each point with probability 1 - drop_ratio, then
/// re-validates labels (instances reduced below the label threshold lose
/// their box). Deterministic per seed.
AnnotatedFrame apply_dropout(const AnnotatedFrame& frame, double drop_ratio,
                             std::uint64_t rng_seed, std::size_t min_label_points = 1);

enum class FrameFormat { Native, KittiLike };

/// Native bundle: points.bin (x, y, z float32 + instance, class uint32 per
/// record), labels.txt (`category cx cy cz l w h yaw` per obstacle), and
/// meta.json. Kitti-like adds velodyne-style points plus reduced label lines.
void write_frame(const AnnotatedFrame& frame, const std::filesystem::path& dir,
                 FrameFormat format = FrameFormat::Native);

/// Inverse of write_frame for the native format.
AnnotatedFrame read_frame(const std::filesystem::path& dir);

/// Class ID recorded per point in the native format: the obstacle category
/// for instance points, `unknown` (0) for background returns.
std::uint32_t point_class_id(const SimulatedPoint& point,
                             const std::vector<ObstacleRecord>& obstacles,
                             const ClassTable& classes);

}  // namespace lidarsim
