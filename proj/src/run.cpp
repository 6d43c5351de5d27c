#include "lidarsim/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "lidarsim/config.hpp"
#include "lidarsim/errors.hpp"
#include "lidarsim/point_cloud_io.hpp"
#include "lidarsim/rng.hpp"
#include "lidarsim/simulate.hpp"

namespace lidarsim {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& raw) {
    std::filesystem::path p(raw);
    return p.is_relative() ? base / p : p;
}

std::string frame_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06zu", index);
    return buf;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << text;
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void RunConfig::validate() const {
    if (background_bundle.empty()) throw ValidationError("run config needs background_bundle");
    if (library_manifest.empty()) throw ValidationError("run config needs library");
    if (maps_dir.empty()) throw ValidationError("run config needs maps_dir");
    if (sensor_config_path.empty()) throw ValidationError("run config needs sensor_config");
    if (output_dir.empty()) throw ValidationError("run config needs output_dir");
    if (dropout_ratio < 0.0 || dropout_ratio >= 1.0)
        throw ValidationError("dropout_ratio must lie in [0, 1)");
    if (target_counts.empty() && total_obstacles == 0)
        throw ValidationError("run config needs either target counts or total_obstacles");
    if (!target_counts.empty() && total_obstacles != 0)
        throw ValidationError("give either explicit targets or total_obstacles, not both");
    if (cube_resolution < 16) throw ValidationError("cube_resolution must be at least 16");
    if (!(splat_radius > 0.0)) throw ValidationError("splat_radius must be positive");
    if (background_reflectivity < 0.0 || background_reflectivity > 1.0)
        throw ValidationError("background_reflectivity must lie in [0, 1]");
    if (clearance_margin < 0.0) throw ValidationError("clearance_margin must be non-negative");
    if (yaw_jitter_sigma_deg < 0.0) throw ValidationError("yaw jitter must be non-negative");
    if (max_attempts_factor < 1) throw ValidationError("max_attempts_factor must be positive");
    if (min_label_points < 1) throw ValidationError("min_label_points must be positive");
    if (high_frequency_ratio < 0.0 || high_frequency_ratio > 1.0)
        throw ValidationError("high_frequency_ratio must lie in [0, 1]");
}

RunConfig load_run_config(const std::filesystem::path& path) {
    KeyValueFile kv = KeyValueFile::parse(path, "lidarsim_run", 1);
    const auto base = path.parent_path();

    RunConfig config;
    config.background_bundle = resolve(base, kv.get_string("background_bundle"));
    config.library_manifest = resolve(base, kv.get_string("library"));
    config.maps_dir = resolve(base, kv.get_string("maps_dir"));
    config.sensor_config_path = resolve(base, kv.get_string("sensor_config"));
    if (kv.has("prior")) config.prior_path = resolve(base, kv.get_string("prior"));
    config.output_dir = resolve(base, kv.get_string("output_dir"));

    config.frames = static_cast<std::size_t>(kv.get_int_or("frames", 1));
    config.master_seed = static_cast<std::uint64_t>(kv.get_int_or("master_seed", 0));
    config.dropout_ratio = kv.get_double_or("dropout_ratio", 0.0);
    for (const auto& tokens : kv.take_all("target")) {
        if (tokens.size() != 2)
            throw ValidationError("'target' expects `target <category> <count>` in '" +
                                  path.string() + "'");
        std::size_t count = 0;
        try {
            count = std::stoull(tokens[1]);
        } catch (const std::exception&) {
            throw ValidationError("target count for '" + tokens[0] + "' is not a number");
        }
        if (config.target_counts.count(tokens[0]) != 0)
            throw ValidationError("duplicate target for category '" + tokens[0] + "'");
        config.target_counts[tokens[0]] = count;
    }
    config.total_obstacles = static_cast<std::size_t>(kv.get_int_or("total_obstacles", 0));

    config.sensor_x = kv.get_double_or("sensor_x", 0.0);
    config.sensor_y = kv.get_double_or("sensor_y", 0.0);
    config.sensor_mount_height = kv.get_double_or("sensor_mount_height", 1.8);
    config.sensor_yaw_deg = kv.get_double_or("sensor_yaw_deg", 0.0);

    config.cube_resolution = static_cast<int>(kv.get_int_or("cube_resolution", 1024));
    config.splat_radius = kv.get_double_or("splat_radius", 0.03);
    config.background_reflectivity = kv.get_double_or("background_reflectivity", 0.8);
    config.clearance_margin = kv.get_double_or("clearance_margin", 0.3);
    config.yaw_jitter_sigma_deg = kv.get_double_or("yaw_jitter_sigma_deg", 5.0);
    config.max_attempts_factor =
        static_cast<std::size_t>(kv.get_int_or("max_attempts_factor", 100));
    config.min_label_points = static_cast<std::size_t>(kv.get_int_or("min_label_points", 1));
    config.high_frequency_ratio = kv.get_double_or("high_frequency_ratio", 0.9);

    const std::string format = kv.get_string_or("frame_format", "native");
    if (format == "native")
        config.frame_format = FrameFormat::Native;
    else if (format == "kitti-like" || format == "kitti")
        config.frame_format = FrameFormat::KittiLike;
    else
        throw ValidationError("frame_format must be 'native' or 'kitti-like'");

    kv.finish();
    config.config_hash = hash_file(path);
    config.validate();
    return config;
}

namespace {

struct LoadedRun {
    BackgroundScene scene;
    ObstacleLibrary library;
    std::map<std::string, ProbabilityMap> maps;
    SensorModel sensor;
    CategoryPrior prior;
    std::map<std::string, std::size_t> targets;
    RigidPose sensor_pose;
};

std::map<std::string, std::size_t> split_total(const CategoryPrior& prior, std::size_t total,
                                               const std::map<std::string, ProbabilityMap>& maps,
                                               const ObstacleLibrary& library) {
    // restrict to categories that can actually be placed, renormalize, round
    // by largest remainder so the counts sum to the requested total
    std::vector<std::pair<std::string, double>> usable;
    double mass = 0.0;
    for (const auto& [cat, f] : prior.frequency) {
        if (maps.count(cat) == 0 || !library.has_category(cat)) continue;
        usable.emplace_back(cat, f);
        mass += f;
    }
    if (usable.empty() || mass <= 0.0)
        throw ValidationError("no prior category has both a probability map and library models");

    std::map<std::string, std::size_t> targets;
    std::vector<std::pair<double, std::string>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cat, f] : usable) {
        const double share = f / mass * static_cast<double>(total);
        const auto base = static_cast<std::size_t>(std::floor(share));
        targets[cat] = base;
        assigned += base;
        remainders.emplace_back(share - static_cast<double>(base), cat);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned)
        ++targets[remainders[i % remainders.size()].second];
    return targets;
}

LoadedRun load_run_inputs(const RunConfig& config) {
    LoadedRun run;
    run.scene = load_scene_bundle(config.background_bundle);
    run.library = load_library(config.library_manifest);

    if (!std::filesystem::is_directory(config.maps_dir))
        throw IoError("maps directory '" + config.maps_dir.string() + "' does not exist");
    std::vector<std::filesystem::path> map_files;
    for (const auto& entry : std::filesystem::directory_iterator(config.maps_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pmap")
            map_files.push_back(entry.path());
    std::sort(map_files.begin(), map_files.end());
    for (const auto& file : map_files) {
        ProbabilityMap map = ProbabilityMap::load(file);
        const std::string category = map.category();
        run.maps.emplace(category, std::move(map));
    }
    if (run.maps.empty())
        throw ValidationError("no probability maps (*.pmap) in '" + config.maps_dir.string() +
                              "'");

    const SensorConfig sensor_config = load_sensor_config(config.sensor_config_path);
    run.sensor = make_sensor_model(sensor_config, derive_seed(config.master_seed, 0));

    if (!config.prior_path.empty()) {
        run.prior = load_prior(config.prior_path, config.high_frequency_ratio);
    } else {
        // uniform over whichever categories the run will place
        std::vector<std::string> cats;
        if (!config.target_counts.empty()) {
            for (const auto& [cat, n] : config.target_counts) cats.push_back(cat);
        } else {
            for (const auto& [cat, map] : run.maps)
                if (run.library.has_category(cat)) cats.push_back(cat);
        }
        if (cats.empty()) throw ValidationError("no categories available to build a prior");
        for (const auto& cat : cats)
            run.prior.frequency[cat] = 1.0 / static_cast<double>(cats.size());
        run.prior.high_frequency_ratio = config.high_frequency_ratio;
    }
    run.prior.high_frequency_ratio = config.high_frequency_ratio;
    run.prior.validate();

    run.targets = config.target_counts.empty()
                      ? split_total(run.prior, config.total_obstacles, run.maps, run.library)
                      : config.target_counts;
    for (const auto& [cat, count] : run.targets) {
        if (run.maps.count(cat) == 0)
            throw ValidationError("no probability map for target category '" + cat + "'");
        if (!run.library.has_category(cat)) throw UnknownCategoryError(cat);
        if (run.prior.frequency.count(cat) == 0)
            throw ValidationError("prior lacks target category '" + cat + "'");
    }

    const auto ground_z =
        run.scene.ground.height_at(config.sensor_x, config.sensor_y).value_or(0.0);
    run.sensor_pose = RigidPose::from_yaw(
        {config.sensor_x, config.sensor_y, ground_z + config.sensor_mount_height},
        deg_to_rad(config.sensor_yaw_deg));
    return run;
}

FrameSummary simulate_one_frame_impl(const RunConfig& config, const LoadedRun& run,
                                     std::size_t index) {
    const std::uint64_t frame_seed = derive_seed(config.master_seed, index + 1);

    ComposeOptions compose_options;
    compose_options.clearance_margin = config.clearance_margin;
    compose_options.max_attempts_factor = config.max_attempts_factor;
    compose_options.sampling.max_range = run.sensor.config.max_range;
    compose_options.sampling.yaw_jitter_sigma = deg_to_rad(config.yaw_jitter_sigma_deg);
    const ComposeResult composed =
        compose_scene(run.scene, run.maps, run.prior, run.library, run.targets, run.sensor_pose,
                      derive_seed(frame_seed, 0), compose_options);

    RenderOptions render_options;
    render_options.cube_resolution = config.cube_resolution;
    render_options.splat.radius = config.splat_radius;
    render_options.background_reflectivity = config.background_reflectivity;
    const SimulatedFrame simulated =
        simulate_frame(composed.placement, run.scene, run.library, run.sensor, run.sensor_pose,
                       derive_seed(frame_seed, 1), render_options);

    AnnotateOptions annotate_options;
    annotate_options.min_label_points = config.min_label_points;
    annotate_options.obb_pad = 3.0 * run.sensor.config.distance_noise_sigma;
    AnnotatedFrame annotated = annotate_frame(simulated, composed.placement, run.library,
                                              run.sensor_pose, annotate_options);
    annotated.seed = frame_seed;
    annotated.config_hash = config.config_hash;

    if (config.dropout_ratio > 0.0)
        annotated = apply_dropout(annotated, config.dropout_ratio, derive_seed(frame_seed, 2),
                                  config.min_label_points);

    const std::string name = frame_dir_name(index);
    const std::filesystem::path final_dir = config.output_dir / name;
    const std::filesystem::path tmp_dir = config.output_dir / (name + ".tmp");
    std::filesystem::remove_all(tmp_dir);
    write_frame(annotated, tmp_dir, config.frame_format);
    std::filesystem::remove_all(final_dir);
    std::filesystem::rename(tmp_dir, final_dir);

    FrameSummary summary;
    summary.index = index;
    summary.seed = frame_seed;
    summary.candidate_beams = simulated.stats.candidates;
    summary.emitted_points = simulated.stats.emitted;
    summary.kept_points = annotated.points.size();
    summary.obstacles_placed = composed.placement.obstacles.size();
    summary.obstacles_labeled = static_cast<std::size_t>(
        std::count_if(annotated.obstacles.begin(), annotated.obstacles.end(),
                      [](const ObstacleRecord& r) { return r.obb.has_value(); }));
    summary.placement_exhausted = composed.exhausted;
    return summary;
}

/// Any stage failure aborts the run naming the frame it happened in.
FrameSummary simulate_one_frame(const RunConfig& config, const LoadedRun& run,
                                std::size_t index) {
    const std::string where = "frame " + std::to_string(index) + ": ";
    try {
        return simulate_one_frame_impl(config, run, index);
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    } catch (const Error& e) {
        throw Error(where + e.what());
    } catch (const std::exception& e) {
        throw Error(where + e.what());
    }
}

}  // namespace

RunManifest run_simulation(const RunConfig& config, unsigned workers) {
    config.validate();
    const LoadedRun run = load_run_inputs(config);
    std::filesystem::create_directories(config.output_dir);

    RunManifest manifest;
    manifest.config_hash = config.config_hash;
    manifest.master_seed = config.master_seed;
    manifest.frames.resize(config.frames);

    const unsigned thread_count =
        std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(config.frames)));
    if (thread_count == 1) {
        for (std::size_t i = 0; i < config.frames; ++i)
            manifest.frames[i] = simulate_one_frame(config, run, i);
    } else {
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::exception_ptr first_error;
        auto worker = [&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= config.frames) return;
                {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (first_error) return;
                }
                try {
                    manifest.frames[i] = simulate_one_frame(config, run, i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        threads.reserve(thread_count);
        for (unsigned t = 0; t < thread_count; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    nlohmann::json j;
    j["version"] = 1;
    j["config_hash"] = manifest.config_hash;
    j["master_seed"] = manifest.master_seed;
    nlohmann::json frames = nlohmann::json::array();
    for (const FrameSummary& f : manifest.frames) {
        frames.push_back({{"index", f.index},
                          {"dir", frame_dir_name(f.index)},
                          {"seed", f.seed},
                          {"candidate_beams", f.candidate_beams},
                          {"emitted_points", f.emitted_points},
                          {"kept_points", f.kept_points},
                          {"obstacles_placed", f.obstacles_placed},
                          {"obstacles_labeled", f.obstacles_labeled},
                          {"placement_exhausted", f.placement_exhausted}});
    }
    j["frames"] = std::move(frames);
    atomic_write_text(config.output_dir / "manifest.json", j.dump(2) + "\n");
    return manifest;
}

CleanBackgroundResult run_clean_background(const std::filesystem::path& input_cloud,
                                           const std::filesystem::path& bundle_dir,
                                           const BackgroundBuildOptions& options) {
    const SemanticPointCloud cloud = read_point_cloud(input_cloud);
    if (!cloud.labels_from_file)
        throw ValidationError("'" + input_cloud.string() +
                              "' carries no per-point labels; cleaning needs a labeled cloud");

    BackgroundScene scene = build_background_scene(cloud, options);

    const std::filesystem::path tmp_dir = bundle_dir.string() + ".tmp";
    std::filesystem::remove_all(tmp_dir);
    save_scene_bundle(scene, tmp_dir);
    std::filesystem::remove_all(bundle_dir);
    std::filesystem::rename(tmp_dir, bundle_dir);

    CleanBackgroundResult result;
    for (const auto& [cls, count] : scene.removed_per_class)
        result.removed_per_class[scene.cloud.classes.name_of(cls)] = count;
    result.holes_filled = scene.holes_filled;
    result.holes_unfillable = scene.holes_unfillable;
    result.output_points = scene.cloud.size();
    return result;
}

std::vector<std::filesystem::path> run_build_maps(const std::filesystem::path& annotations_path,
                                                  const std::filesystem::path& out_dir,
                                                  double cell_size, int template_k,
                                                  double template_sigma_cells) {
    const std::vector<ObstacleAnnotation> annotations = load_annotations(annotations_path);
    if (annotations.empty()) throw NoAnnotationsError();

    double min_x = annotations[0].position.x, max_x = min_x;
    double min_y = annotations[0].position.y, max_y = min_y;
    for (const auto& a : annotations) {
        min_x = std::min(min_x, a.position.x);
        max_x = std::max(max_x, a.position.x);
        min_y = std::min(min_y, a.position.y);
        max_y = std::max(max_y, a.position.y);
    }
    // leave room for the whole template stencil around edge annotations
    const double margin = (template_k + 0.5) * cell_size;
    Bounds2D bounds;
    bounds.min_x = min_x - margin;
    bounds.min_y = min_y - margin;
    bounds.max_x = max_x + margin;
    bounds.max_y = max_y + margin;

    const GaussianTemplate t = GaussianTemplate::gaussian(template_k, template_sigma_cells);
    std::map<std::string, ProbabilityMap> maps =
        build_probability_maps(annotations, bounds, cell_size, t);

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    for (const auto& [category, map] : maps) {
        const auto path = out_dir / (category + ".pmap");
        map.save(path);
        written.push_back(path);
    }
    save_prior(CategoryPrior::from_annotations(annotations), out_dir / "prior.txt");
    return written;
}

BeamTable run_calibrate(const std::filesystem::path& cloud_path,
                        const std::filesystem::path& out_csv) {
    const SemanticPointCloud cloud = read_point_cloud(cloud_path);
    if (!cloud.labels_from_file)
        throw ValidationError("'" + cloud_path.string() +
                              "' carries no labels; calibration needs per-point beam indices");

    std::map<std::uint32_t, std::vector<Vec3>> by_beam;
    for (std::size_t i = 0; i < cloud.size(); ++i)
        by_beam[cloud.labels[i]].push_back(cloud.points[i]);

    std::uint32_t expected = 0;
    BeamTable table;
    for (const auto& [beam, points] : by_beam) {
        if (beam != expected)
            throw ValidationError("beam indices must be contiguous from 0; missing beam " +
                                  std::to_string(expected));
        ++expected;
        const BeamFit fit = fit_beam_cone(points);
        table.vertical_angle_deg.push_back(fit.vertical_angle_deg);
        table.variance_deg2.push_back(fit.variance_deg2);
    }
    table.validate();
    table.save_csv(out_csv);
    return table;
}

StatsReport run_stats(const std::filesystem::path& frames_dir) {
    if (!std::filesystem::is_directory(frames_dir))
        throw ValidationError("'" + frames_dir.string() + "' is not a directory");

    std::vector<std::filesystem::path> frame_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(frames_dir))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json"))
            frame_dirs.push_back(entry.path());
    std::sort(frame_dirs.begin(), frame_dirs.end());
    if (frame_dirs.empty())
        throw ValidationError("no frame bundles under '" + frames_dir.string() + "'");

    StatsReport report;
    for (const auto& dir : frame_dirs) {
        const AnnotatedFrame frame = read_frame(dir);
        report.point_counts.push_back(frame.points.size());
        for (const ObstacleRecord& record : frame.obstacles)
            if (record.obb) ++report.obstacles_per_category[record.category];
    }
    report.frames = report.point_counts.size();
    double mean = 0.0;
    for (std::size_t n : report.point_counts) mean += static_cast<double>(n);
    mean /= static_cast<double>(report.frames);
    double ss = 0.0;
    for (std::size_t n : report.point_counts) {
        const double d = static_cast<double>(n) - mean;
        ss += d * d;
    }
    report.mean_points = mean;
    report.stddev_points = std::sqrt(ss / static_cast<double>(report.frames));
    return report;
}

}  // namespace lidarsim
