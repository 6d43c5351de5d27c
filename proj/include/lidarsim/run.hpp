#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lidarsim/annotation.hpp"
#include "lidarsim/sensor.hpp"

namespace lidarsim {

/// Everything a reproducible simulation run needs. Loaded from a versioned
/// key-value file; every path is resolved against the config file location
/// and checked before any output is written.
struct RunConfig {
    std::filesystem::path background_bundle;
    std::filesystem::path library_manifest;
    std::filesystem::path maps_dir;
    std::filesystem::path sensor_config_path;
    std::filesystem::path prior_path;  // optional; empty = uniform over targets
    std::filesystem::path output_dir;

    std::size_t frames = 1;
    std::uint64_t master_seed = 0;
    double dropout_ratio = 0.0;
    std::map<std::string, std::size_t> target_counts;
    std::size_t total_obstacles = 0;  // alternative to explicit targets

    double sensor_x = 0.0;
    double sensor_y = 0.0;
    double sensor_mount_height = 1.8;
    double sensor_yaw_deg = 0.0;

    int cube_resolution = 1024;
    double splat_radius = 0.03;
    double background_reflectivity = 0.8;
    double clearance_margin = 0.3;
    double yaw_jitter_sigma_deg = 5.0;
    std::size_t max_attempts_factor = 100;
    std::size_t min_label_points = 1;
    double high_frequency_ratio = 0.9;
    FrameFormat frame_format = FrameFormat::Native;

    std::uint64_t config_hash = 0;  // hash of the config file bytes

    void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

struct FrameSummary {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::size_t candidate_beams = 0;
    std::size_t emitted_points = 0;
    std::size_t kept_points = 0;  // after dropout
    std::size_t obstacles_placed = 0;
    std::size_t obstacles_labeled = 0;
    bool placement_exhausted = false;
};

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t master_seed = 0;
    std::vector<FrameSummary> frames;
};

/// Simulates `config.frames` frames into `config.output_dir`, one bundle per
/// frame plus manifest.json. Frames run in parallel up to `workers`
/// (LIDARSIM_WORKERS in the CLI); outputs are byte-identical regardless of
/// worker count. Bundles are written to a temp directory and renamed.
RunManifest run_simulation(const RunConfig& config, unsigned workers = 1);

/// clean-background: read labeled cloud, strip movables, fill holes, write a
/// scene bundle. Returns the per-class removal counts for reporting.
struct CleanBackgroundResult {
    std::map<std::string, std::size_t> removed_per_class;
    std::size_t holes_filled = 0;
    std::size_t holes_unfillable = 0;
    std::size_t output_points = 0;
};
CleanBackgroundResult run_clean_background(const std::filesystem::path& input_cloud,
                                           const std::filesystem::path& bundle_dir,
                                           const BackgroundBuildOptions& options = {});

/// build-map: annotations -> one probability-map file per category (plus the
/// learned category prior). Throws NoAnnotationsError on an empty input.
std::vector<std::filesystem::path> run_build_maps(const std::filesystem::path& annotations_path,
                                                  const std::filesystem::path& out_dir,
                                                  double cell_size, int template_k,
                                                  double template_sigma_cells);

/// calibrate: per-beam point sets (label = beam index) -> beam table CSV.
BeamTable run_calibrate(const std::filesystem::path& cloud_path,
                        const std::filesystem::path& out_csv);

struct StatsReport {
    std::size_t frames = 0;
    double mean_points = 0.0;
    double stddev_points = 0.0;
    std::map<std::string, std::size_t> obstacles_per_category;
    std::vector<std::size_t> point_counts;
};
/// stats: aggregate point/obstacle statistics over a directory of native
/// frame bundles. Throws ValidationError when none are found.
StatsReport run_stats(const std::filesystem::path& frames_dir);

}  // namespace lidarsim
