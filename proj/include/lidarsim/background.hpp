#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "lidarsim/grid_index.hpp"
#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

/// 2D height grid over the x-y extent of a scene. Cell heights live at cell
/// centers; queries interpolate bilinearly over valid neighbors.
class GroundModel {
public:
    GroundModel() = default;
    GroundModel(double origin_x, double origin_y, double cell_size, int nx, int ny);

    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }
    double cell_size() const { return cell_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }

    bool in_grid(int ix, int iy) const { return ix >= 0 && ix < nx_ && iy >= 0 && iy < ny_; }
    bool valid(int ix, int iy) const;
    double cell_height(int ix, int iy) const;
    void set_cell(int ix, int iy, double height);

    /// Cell containing (x, y); may be outside the grid.
    std::pair<int, int> cell_of(double x, double y) const;
    double cell_center_x(int ix) const { return origin_x_ + (ix + 0.5) * cell_; }
    double cell_center_y(int iy) const { return origin_y_ + (iy + 0.5) * cell_; }

    /// Bilinear interpolation over the four surrounding cell centers,
    /// renormalized over the valid ones. Absent outside coverage or when all
    /// four neighbors are invalid.
    std::optional<double> height_at(double x, double y) const;

    void save(const std::filesystem::path& path) const;
    static GroundModel load(const std::filesystem::path& path);

    bool operator==(const GroundModel&) const = default;

private:
    double origin_x_ = 0.0, origin_y_ = 0.0;
    double cell_ = 0.5;
    int nx_ = 0, ny_ = 0;
    std::vector<float> heights_;
    std::vector<std::uint8_t> valid_;
};

/// Grid cells (in ground-model coordinates) whose ground surface was occluded
/// by a removed obstacle.
struct HoleFootprints {
    double origin_x = 0.0, origin_y = 0.0;
    double cell_size = 0.5;
    std::vector<std::pair<int, int>> cells;
};

struct RemoveMovableOptions {
    double cell_size = 0.5;
    /// A removed point counts as ground-adjacent when its z is within this
    /// distance above the lowest surviving ground point in the 3x3 cell
    /// neighborhood (or unconditionally when no ground survives nearby).
    double ground_adjacency = 2.0;
};

struct RemoveMovableResult {
    SemanticPointCloud cloud;
    HoleFootprints holes;
    std::map<std::uint32_t, std::size_t> removed_per_class;
};

/// Strips every point whose label is in `movable_classes` and reports the
/// ground-shadow cells left behind.
RemoveMovableResult remove_movable(const SemanticPointCloud& cloud,
                                   const std::set<std::uint32_t>& movable_classes,
                                   const RemoveMovableOptions& options = {});

/// Per-cell robust ground height: the 5th percentile of ground-labeled point
/// z values in each cell. Throws NoGroundPointsError when the cloud has no
/// ground labels.
GroundModel build_ground_model(const SemanticPointCloud& cloud, double cell_size = 0.5);

struct FillHolesResult {
    SemanticPointCloud cloud;
    std::vector<std::pair<int, int>> unfillable;  // holes left open
    std::size_t points_added = 0;
};

/// Resamples synthetic ground points into hole cells at `target_spacing`,
/// interpolating z from surrounding valid ground cells. Fills inward in
/// passes so that the interior of large holes is reached. Pre-existing points
/// are never moved or relabeled.
FillHolesResult fill_holes(const SemanticPointCloud& cloud, const GroundModel& ground,
                           const HoleFootprints& holes, double target_spacing = 0.03);

/// Cleaned scene ready for simulation: no movable labels remain, ground is
/// queryable, points are indexed and carry estimated normals.
struct BackgroundScene {
    SemanticPointCloud cloud;
    GroundModel ground;
    SpatialGridIndex index;             // indexes cloud.points
    std::vector<Vec3> normals;          // per point, unit, sign unoriented
    std::map<std::uint32_t, std::size_t> removed_per_class;
    std::size_t holes_filled = 0;
    std::size_t holes_unfillable = 0;

    BackgroundScene() = default;
    BackgroundScene(const BackgroundScene&) = delete;
    BackgroundScene& operator=(const BackgroundScene&) = delete;
    BackgroundScene(BackgroundScene&&) = default;
    BackgroundScene& operator=(BackgroundScene&&) = default;
};

struct BackgroundBuildOptions {
    double ground_cell_size = 0.5;
    double fill_spacing = 0.03;       // matches scanner resolution
    double index_cell_size = 0.5;
    double normal_radius = 0.25;
    RemoveMovableOptions removal;
    bool fill = true;
};

/// remove_movable + build_ground_model + fill_holes + index + normals.
/// `movable_classes` defaults to the cloud's registered movable set.
BackgroundScene build_background_scene(const SemanticPointCloud& cloud,
                                       const BackgroundBuildOptions& options = {},
                                       const std::set<std::uint32_t>* movable_classes = nullptr);

/// Scene bundle directory: cloud.ply + ground.grid + scene.json.
void save_scene_bundle(const BackgroundScene& scene, const std::filesystem::path& dir);
BackgroundScene load_scene_bundle(const std::filesystem::path& dir,
                                  const BackgroundBuildOptions& options = {});

}  // namespace lidarsim
