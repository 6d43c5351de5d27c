#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lidarsim/background.hpp"
#include "lidarsim/geometry.hpp"

namespace lidarsim {

/// Square weight stencil added around every annotated obstacle cell.
/// Center-normalized to 1.0, symmetric under 90-degree rotation.
struct GaussianTemplate {
    int k = 2;                    // half-width in cells
    std::vector<double> weights;  // (2k+1)^2, row-major

    static GaussianTemplate gaussian(int k, double sigma_cells);
    static GaussianTemplate from_weights(int k, std::vector<double> weights);

    double at(int m, int n) const {  // m, n in [-k, k]
        return weights[static_cast<std::size_t>((m + k) * (2 * k + 1) + (n + k))];
    }
    void validate() const;
};

/// One obstacle record from an annotated dataset.
struct ObstacleAnnotation {
    std::string category;
    Vec3 position;
    double yaw = 0.0;
};

struct Bounds2D {
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
    bool contains(double x, double y) const {
        return x >= min_x && x < max_x && y >= min_y && y < max_y;
    }
};

/// Grid of placement weights and per-cell direction accumulators for one
/// obstacle category. Directions are stored as template-weighted unit-vector
/// sums so that averaging is well defined across the angle wrap.
class ProbabilityMap {
public:
    ProbabilityMap() = default;
    ProbabilityMap(std::string category, double origin_x, double origin_y, double cell_size,
                   int nx, int ny);

    const std::string& category() const { return category_; }
    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }
    double cell_size() const { return cell_; }
    int nx() const { return nx_; }
    int ny() const { return ny_; }

    bool in_grid(int ix, int iy) const { return ix >= 0 && ix < nx_ && iy >= 0 && iy < ny_; }
    std::pair<int, int> cell_of(double x, double y) const;
    double cell_center_x(int ix) const { return origin_x_ + (ix + 0.5) * cell_; }
    double cell_center_y(int iy) const { return origin_y_ + (iy + 0.5) * cell_; }

    double weight(int ix, int iy) const { return w_[idx(ix, iy)]; }
    double dir_x(int ix, int iy) const { return dx_[idx(ix, iy)]; }
    double dir_y(int ix, int iy) const { return dy_[idx(ix, iy)]; }

    /// Adds `t` centered on the cell containing (x, y); cells falling off the
    /// grid edge are clipped. The direction accumulator receives
    /// template-weighted (cos yaw, sin yaw).
    void add_observation(double x, double y, double yaw, const GaussianTemplate& t);

    /// Preferred heading of a cell, absent when nothing accumulated there.
    std::optional<double> resolved_direction(int ix, int iy) const;

    double total_weight() const;

    void save(const std::filesystem::path& path) const;
    static ProbabilityMap load(const std::filesystem::path& path);

    void validate() const;

private:
    std::size_t idx(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) +
               static_cast<std::size_t>(ix);
    }

    std::string category_;
    double origin_x_ = 0.0, origin_y_ = 0.0;
    double cell_ = 0.5;
    int nx_ = 0, ny_ = 0;
    std::vector<double> w_;
    std::vector<double> dx_;
    std::vector<double> dy_;
};

/// Builds one map per category present in `annotations`. Throws
/// ValidationError naming the first annotation that falls outside `bounds`.
std::map<std::string, ProbabilityMap> build_probability_maps(
    const std::vector<ObstacleAnnotation>& annotations, const Bounds2D& bounds,
    double cell_size, const GaussianTemplate& t);

struct SamplePosesOptions {
    double max_range = 120.0;          // restrict to cells within sensor range
    double yaw_jitter_sigma = deg_to_rad(5.0);
};

/// Weighted random sampling of obstacle poses from a map, restricted to cells
/// within sensor range of the scanner. Positions are jittered uniformly
/// within the chosen cell, yaw follows the cell's resolved direction plus
/// Gaussian jitter, z snaps to the ground model. Throws NoPlacementMassError
/// when the restricted weight is zero.
std::vector<RigidPose> sample_poses(const ProbabilityMap& map, const RigidPose& scanner_pose,
                                    std::size_t count, std::uint64_t rng_seed,
                                    const GroundModel& ground,
                                    const SamplePosesOptions& options = {});

/// Same, drawing from a caller-owned engine (used by scene composition).
std::vector<RigidPose> sample_poses(const ProbabilityMap& map, const RigidPose& scanner_pose,
                                    std::size_t count, std::mt19937_64& rng,
                                    const GroundModel& ground,
                                    const SamplePosesOptions& options = {});

/// Annotation text records: `category x y z yaw`, '#' comments allowed.
std::vector<ObstacleAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<ObstacleAnnotation>& annotations,
                      const std::filesystem::path& path);

}  // namespace lidarsim
