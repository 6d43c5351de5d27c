#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "lidarsim/background.hpp"
#include "lidarsim/config.hpp"
#include "lidarsim/errors.hpp"
#include "lidarsim/mesh.hpp"
#include "lidarsim/point_cloud_io.hpp"
#include "lidarsim/probability_map.hpp"
#include "lidarsim/rng.hpp"
#include "lidarsim/run.hpp"

using namespace lidarsim;
using testutil::TempDir;
using testutil::write_text;

namespace {

SemanticPointCloud labeled_world_cloud() {
    SemanticPointCloud cloud;
    const std::uint32_t ground = *cloud.classes.find("ground");
    const std::uint32_t car = *cloud.classes.find("car");
    for (int iy = -15; iy <= 15; ++iy)
        for (int ix = -15; ix <= 15; ++ix)
            cloud.add({static_cast<double>(ix), static_cast<double>(iy), 0.0}, ground);
    // a parked car to strip out
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 3; ++k)
                cloud.add({6.0 + i * 0.5, 6.0 + j * 0.4, 0.3 + k * 0.4}, car);
    cloud.labels_from_file = true;
    return cloud;
}

/// Complete miniature run directory: background bundle, two-model library,
/// probability maps, sensor config and run config.
struct World {
    TempDir tmp;
    std::filesystem::path run_cfg;

    explicit World(std::size_t frames = 2, std::uint64_t seed = 42) {
        write_point_cloud(labeled_world_cloud(), tmp / "world.ply", CloudFormat::Ply);
        run_clean_background(tmp / "world.ply", tmp / "bundle");

        std::filesystem::create_directories(tmp / "library");
        save_obj(make_box_mesh({-1.6, -0.8, 0.0}, {1.6, 0.8, 1.4}), tmp / "library" / "car.obj");
        save_obj(make_box_mesh({-0.2, -0.2, 0.0}, {0.2, 0.2, 0.6}),
                 tmp / "library" / "cone.obj");
        write_text(tmp / "library" / "library.txt",
                   "car0 car car.obj high 0.8\n"
                   "cone0 traffic_cone cone.obj high 0.7\n");

        std::vector<ObstacleAnnotation> annotations;
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> pos(-9.0, 9.0);
        std::uniform_real_distribution<double> yaw(-kPi, kPi);
        for (int i = 0; i < 40; ++i)
            annotations.push_back({"car", {pos(rng), pos(rng), 0.0}, yaw(rng)});
        for (int i = 0; i < 20; ++i)
            annotations.push_back({"traffic_cone", {pos(rng), pos(rng), 0.0}, yaw(rng)});
        save_annotations(annotations, tmp / "annotations.txt");
        run_build_maps(tmp / "annotations.txt", tmp / "maps", 1.0, 2, 1.0);

        SensorConfig sensor;
        sensor.channels = 16;
        sensor.azimuth_step_deg = 2.0;
        save_sensor_config(sensor, tmp / "sensor.cfg");

        std::ostringstream cfg;
        cfg << "lidarsim_run 1\n"
            << "background_bundle bundle\n"
            << "library library/library.txt\n"
            << "maps_dir maps\n"
            << "sensor_config sensor.cfg\n"
            << "prior maps/prior.txt\n"
            << "output_dir out\n"
            << "frames " << frames << "\n"
            << "master_seed " << seed << "\n"
            << "target car 2\n"
            << "target traffic_cone 1\n"
            << "cube_resolution 128\n"
            << "splat_radius 0.8\n";
        run_cfg = tmp / "run.cfg";
        write_text(run_cfg, cfg.str());
    }
};

}  // namespace

TEST_CASE("run config parsing") {
    TempDir tmp;

    SUBCASE("full file with relative paths") {
        write_text(tmp / "run.cfg",
                   "lidarsim_run 1\n"
                   "background_bundle scene\n"
                   "library lib/library.txt\n"
                   "maps_dir maps\n"
                   "sensor_config sensor.cfg\n"
                   "output_dir frames\n"
                   "frames 7\n"
                   "master_seed 99\n"
                   "dropout_ratio 0.125\n"
                   "target car 3\n"
                   "target pedestrian 2\n"
                   "sensor_x 1.5\n"
                   "sensor_mount_height 2.1\n"
                   "cube_resolution 256\n"
                   "splat_radius 0.1\n"
                   "min_label_points 4\n"
                   "frame_format kitti-like\n");
        const RunConfig config = load_run_config(tmp / "run.cfg");
        CHECK(config.background_bundle == tmp / "scene");
        CHECK(config.library_manifest == tmp / "lib" / "library.txt");
        CHECK(config.maps_dir == tmp / "maps");
        CHECK(config.sensor_config_path == tmp / "sensor.cfg");
        CHECK(config.output_dir == tmp / "frames");
        CHECK(config.prior_path.empty());
        CHECK(config.frames == 7);
        CHECK(config.master_seed == 99);
        CHECK(config.dropout_ratio == 0.125);
        REQUIRE(config.target_counts.size() == 2);
        CHECK(config.target_counts.at("car") == 3);
        CHECK(config.target_counts.at("pedestrian") == 2);
        CHECK(config.sensor_x == 1.5);
        CHECK(config.sensor_y == 0.0);
        CHECK(config.sensor_mount_height == 2.1);
        CHECK(config.cube_resolution == 256);
        CHECK(config.splat_radius == 0.1);
        CHECK(config.min_label_points == 4);
        CHECK(config.frame_format == FrameFormat::KittiLike);
        CHECK(config.config_hash == hash_file(tmp / "run.cfg"));
        // untouched knobs keep their defaults
        CHECK(config.yaw_jitter_sigma_deg == 5.0);
        CHECK(config.high_frequency_ratio == 0.9);
    }
    SUBCASE("defaults and validation failures") {
        const std::string base =
            "lidarsim_run 1\nbackground_bundle b\nlibrary l\nmaps_dir m\n"
            "sensor_config s\noutput_dir o\n";
        write_text(tmp / "ok.cfg", base + "total_obstacles 5\nframes 0\n");
        const RunConfig ok = load_run_config(tmp / "ok.cfg");
        CHECK(ok.frames == 0);  // dry run: manifest only
        CHECK(ok.total_obstacles == 5);
        CHECK(ok.frame_format == FrameFormat::Native);

        write_text(tmp / "unknown.cfg", base + "total_obstacles 5\nbogus_key 1\n");
        CHECK_THROWS_AS(load_run_config(tmp / "unknown.cfg"), ValidationError);
        write_text(tmp / "magic.cfg", "other_magic 1\n");
        CHECK_THROWS_AS(load_run_config(tmp / "magic.cfg"), ParseError);
        write_text(tmp / "no_targets.cfg", base);
        CHECK_THROWS_AS(load_run_config(tmp / "no_targets.cfg"), ValidationError);
        write_text(tmp / "both.cfg", base + "total_obstacles 5\ntarget car 2\n");
        CHECK_THROWS_AS(load_run_config(tmp / "both.cfg"), ValidationError);
        write_text(tmp / "dropout.cfg", base + "total_obstacles 5\ndropout_ratio 1.0\n");
        CHECK_THROWS_AS(load_run_config(tmp / "dropout.cfg"), ValidationError);
        write_text(tmp / "res.cfg", base + "total_obstacles 5\ncube_resolution 8\n");
        CHECK_THROWS_AS(load_run_config(tmp / "res.cfg"), ValidationError);
        write_text(tmp / "fmt.cfg", base + "total_obstacles 5\nframe_format pcap\n");
        CHECK_THROWS_AS(load_run_config(tmp / "fmt.cfg"), ValidationError);
        write_text(tmp / "dup.cfg", base + "target car 2\ntarget car 3\n");
        CHECK_THROWS_AS(load_run_config(tmp / "dup.cfg"), ValidationError);
        write_text(tmp / "missing.cfg", "lidarsim_run 1\ntotal_obstacles 5\n");
        CHECK_THROWS_AS(load_run_config(tmp / "missing.cfg"), ValidationError);
        CHECK_THROWS_AS(load_run_config(tmp / "absent.cfg"), IoError);
    }
}

TEST_CASE("clean-background stage") {
    TempDir tmp;

    SUBCASE("strips movables and writes a loadable bundle") {
        write_point_cloud(labeled_world_cloud(), tmp / "world.ply", CloudFormat::Ply);
        const CleanBackgroundResult result =
            run_clean_background(tmp / "world.ply", tmp / "bundle");
        CHECK(result.removed_per_class.at("car") == 60);
        // the original ground survives; shadow holes are refilled more densely
        CHECK(result.output_points >= labeled_world_cloud().size() - 60);
        CHECK(result.holes_filled > 0);

        const BackgroundScene scene = load_scene_bundle(tmp / "bundle");
        CHECK(scene.cloud.size() == result.output_points);
        const std::uint32_t car = *scene.cloud.classes.find("car");
        for (std::uint32_t label : scene.cloud.labels) CHECK(label != car);
        CHECK(scene.ground.height_at(0.0, 0.0).has_value());
    }
    SUBCASE("unlabeled input is rejected") {
        write_text(tmp / "plain.ply",
                   "ply\nformat ascii 1.0\nelement vertex 3\n"
                   "property float x\nproperty float y\nproperty float z\nend_header\n"
                   "0 0 0\n1 0 0\n0 1 0\n");
        CHECK_THROWS_AS(run_clean_background(tmp / "plain.ply", tmp / "bundle"),
                        ValidationError);
    }
}

TEST_CASE("build-map stage") {
    TempDir tmp;
    std::vector<ObstacleAnnotation> annotations{
        {"car", {2.0, 3.0, 0.0}, 0.1},
        {"car", {-4.0, 1.0, 0.0}, 0.5},
        {"pedestrian", {0.0, -2.0, 0.0}, -0.3},
    };
    save_annotations(annotations, tmp / "ann.txt");

    const auto written = run_build_maps(tmp / "ann.txt", tmp / "maps", 0.5, 2, 1.0);
    REQUIRE(written.size() == 2);
    CHECK(std::filesystem::exists(tmp / "maps" / "car.pmap"));
    CHECK(std::filesystem::exists(tmp / "maps" / "pedestrian.pmap"));
    CHECK(std::filesystem::exists(tmp / "maps" / "prior.txt"));

    const ProbabilityMap car = ProbabilityMap::load(tmp / "maps" / "car.pmap");
    CHECK(car.category() == "car");
    // both annotation centers carry the template peak
    const auto [ax, ay] = car.cell_of(2.0, 3.0);
    CHECK(car.weight(ax, ay) == doctest::Approx(1.0));
    const auto [bx, by] = car.cell_of(-4.0, 1.0);
    CHECK(car.weight(bx, by) == doctest::Approx(1.0));

    const CategoryPrior prior = load_prior(tmp / "maps" / "prior.txt");
    CHECK(prior.frequency.at("car") == doctest::Approx(2.0 / 3.0));
    CHECK(prior.frequency.at("pedestrian") == doctest::Approx(1.0 / 3.0));

    write_text(tmp / "empty.txt", "# category x y z yaw\n");
    CHECK_THROWS_AS(run_build_maps(tmp / "empty.txt", tmp / "maps2", 0.5, 2, 1.0),
                    NoAnnotationsError);
}

TEST_CASE("calibrate stage recovers beam angles from labeled returns") {
    TempDir tmp;
    const std::vector<double> true_deg{-5.0, -2.0, 0.5, 3.0};
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> uaz(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> udist(4.0, 50.0);
    std::normal_distribution<double> noise(0.0, 0.05);

    SemanticPointCloud cloud;
    for (std::uint32_t beam = 0; beam < true_deg.size(); ++beam) {
        for (int i = 0; i < 400; ++i) {
            const double el = deg_to_rad(true_deg[beam] + noise(rng));
            const double az = uaz(rng), d = udist(rng);
            cloud.add({d * std::cos(el) * std::cos(az), d * std::cos(el) * std::sin(az),
                       d * std::sin(el)},
                      beam);
        }
    }
    cloud.labels_from_file = true;
    write_point_cloud(cloud, tmp / "beams.ply", CloudFormat::Ply);

    const BeamTable table = run_calibrate(tmp / "beams.ply", tmp / "beams.csv");
    REQUIRE(table.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(table.vertical_angle_deg[i] - true_deg[i]) < 0.02);
        CHECK(std::sqrt(table.variance_deg2[i]) == doctest::Approx(0.05).epsilon(0.25));
    }
    const BeamTable reread = BeamTable::load_csv(tmp / "beams.csv");
    CHECK(reread.size() == 4);

    SUBCASE("gaps in the beam numbering are rejected") {
        SemanticPointCloud gap = cloud;
        for (auto& label : gap.labels)
            if (label == 2) label = 5;
        write_point_cloud(gap, tmp / "gap.ply", CloudFormat::Ply);
        CHECK_THROWS_AS(run_calibrate(tmp / "gap.ply", tmp / "gap.csv"), ValidationError);
    }
}

TEST_CASE("simulation runs end to end deterministically") {
    World world;
    const RunConfig config = load_run_config(world.run_cfg);

    RunConfig run_a = config;
    run_a.output_dir = world.tmp / "out_a";
    const RunManifest manifest = run_simulation(run_a, 1);

    REQUIRE(manifest.frames.size() == 2);
    CHECK(manifest.master_seed == 42);
    CHECK(manifest.config_hash == config.config_hash);
    for (const FrameSummary& f : manifest.frames) {
        CHECK(f.candidate_beams == 16u * 180u);
        CHECK(f.emitted_points > 100);
        CHECK(f.obstacles_placed == 3);
        CHECK(f.seed == derive_seed(42, f.index + 1));
        CHECK(!f.placement_exhausted);
    }
    CHECK(std::filesystem::exists(run_a.output_dir / "manifest.json"));
    CHECK(std::filesystem::exists(run_a.output_dir / "frame_000000" / "points.bin"));
    CHECK(std::filesystem::exists(run_a.output_dir / "frame_000001" / "meta.json"));

    // frames carry annotated obstacle points
    const AnnotatedFrame frame = read_frame(run_a.output_dir / "frame_000000");
    CHECK(frame.points.size() == manifest.frames[0].kept_points);
    CHECK(frame.obstacles.size() == 3);
    std::size_t instance_points = 0;
    for (const SimulatedPoint& p : frame.points)
        if (p.instance != 0) ++instance_points;
    CHECK(instance_points > 0);

    SUBCASE("same seed, same bytes; more workers, same bytes") {
        RunConfig run_b = config;
        run_b.output_dir = world.tmp / "out_b";
        run_simulation(run_b, 1);
        std::string why;
        CHECK_MESSAGE(testutil::trees_equal(run_a.output_dir, run_b.output_dir, &why), why);

        RunConfig run_c = config;
        run_c.output_dir = world.tmp / "out_c";
        run_simulation(run_c, 3);
        CHECK_MESSAGE(testutil::trees_equal(run_a.output_dir, run_c.output_dir, &why), why);
    }
    SUBCASE("different master seed, different points") {
        RunConfig run_d = config;
        run_d.master_seed = 31337;
        run_d.output_dir = world.tmp / "out_d";
        run_simulation(run_d, 1);
        CHECK(testutil::read_bytes(run_a.output_dir / "frame_000000" / "points.bin") !=
              testutil::read_bytes(run_d.output_dir / "frame_000000" / "points.bin"));
    }
    SUBCASE("stats stage aggregates the output directory") {
        const StatsReport report = run_stats(run_a.output_dir);
        CHECK(report.frames == 2);
        REQUIRE(report.point_counts.size() == 2);
        CHECK(report.point_counts[0] == manifest.frames[0].kept_points);
        const double expected_mean =
            0.5 * static_cast<double>(manifest.frames[0].kept_points +
                                      manifest.frames[1].kept_points);
        CHECK(report.mean_points == doctest::Approx(expected_mean));
        std::size_t labeled = 0;
        for (const auto& [cat, n] : report.obstacles_per_category) labeled += n;
        CHECK(labeled <= 6);

        CHECK_THROWS_AS(run_stats(world.tmp / "nowhere"), ValidationError);
        std::filesystem::create_directories(world.tmp / "hollow");
        CHECK_THROWS_AS(run_stats(world.tmp / "hollow"), ValidationError);
    }
}

TEST_CASE("dropout and kitti format flow through the pipeline") {
    World world;
    RunConfig config = load_run_config(world.run_cfg);
    config.frames = 1;

    RunConfig plain = config;
    plain.output_dir = world.tmp / "plain";
    const RunManifest base = run_simulation(plain, 1);

    RunConfig dropped = config;
    dropped.dropout_ratio = 0.4;
    dropped.output_dir = world.tmp / "dropped";
    const RunManifest thinned = run_simulation(dropped, 1);
    CHECK(thinned.frames[0].emitted_points == base.frames[0].emitted_points);
    CHECK(thinned.frames[0].kept_points < base.frames[0].kept_points);
    const double n = static_cast<double>(base.frames[0].emitted_points);
    const double sigma = std::sqrt(n * 0.4 * 0.6);
    CHECK(std::abs(static_cast<double>(thinned.frames[0].kept_points) - n * 0.6) <=
          4.0 * sigma);

    RunConfig kitti = config;
    kitti.frame_format = FrameFormat::KittiLike;
    kitti.output_dir = world.tmp / "kitti";
    const RunManifest k = run_simulation(kitti, 1);
    const auto velodyne = world.tmp / "kitti" / "frame_000000" / "velodyne.bin";
    REQUIRE(std::filesystem::exists(velodyne));
    CHECK(std::filesystem::file_size(velodyne) == 16 * k.frames[0].kept_points);
}

TEST_CASE("frame failures name the frame and keep the error type") {
    World world;
    RunConfig config = load_run_config(world.run_cfg);
    config.frames = 1;
    config.output_dir = world.tmp / "never";

    // all probability mass beyond sensor range: composition cannot start
    std::vector<ObstacleAnnotation> far{{"car", {500.0, 500.0, 0.0}, 0.0},
                                        {"traffic_cone", {505.0, 500.0, 0.0}, 0.0}};
    save_annotations(far, world.tmp / "far.txt");
    run_build_maps(world.tmp / "far.txt", world.tmp / "far_maps", 1.0, 2, 1.0);
    config.maps_dir = world.tmp / "far_maps";
    config.prior_path = world.tmp / "far_maps" / "prior.txt";

    try {
        run_simulation(config, 1);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("frame 0:") != std::string::npos);
    }
}
