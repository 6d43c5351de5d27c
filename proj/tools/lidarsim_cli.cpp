#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lidarsim/errors.hpp"
#include "lidarsim/point_cloud_io.hpp"
#include "lidarsim/run.hpp"

namespace {

using namespace lidarsim;

unsigned resolve_workers(unsigned flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("LIDARSIM_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
            throw ValidationError("LIDARSIM_WORKERS must be a positive integer");
        }
        throw ValidationError("LIDARSIM_WORKERS must be a positive integer");
    }
    return 1;
}

int cmd_clean_background(const std::string& input, const std::string& output,
                         const BackgroundBuildOptions& options) {
    const CleanBackgroundResult result = run_clean_background(input, output, options);
    std::cout << "scene bundle written to " << output << "\n";
    std::cout << "  points kept: " << result.output_points << "\n";
    for (const auto& [name, count] : result.removed_per_class)
        std::cout << "  removed " << name << ": " << count << "\n";
    std::cout << "  ground holes filled: " << result.holes_filled << "\n";
    if (result.holes_unfillable > 0)
        std::cout << "  ground holes left open: " << result.holes_unfillable << "\n";
    return 0;
}

int cmd_build_map(const std::string& annotations, const std::string& output, double cell_size,
                  int template_k, double template_sigma) {
    if (template_sigma <= 0.0) template_sigma = template_k > 0 ? template_k / 2.0 : 0.5;
    const auto written = run_build_maps(annotations, output, cell_size, template_k,
                                        template_sigma);
    std::cout << "wrote " << written.size() << " probability maps to " << output << "\n";
    for (const auto& path : written) std::cout << "  " << path.filename().string() << "\n";
    return 0;
}

int cmd_calibrate(const std::string& input, const std::string& output) {
    const BeamTable table = run_calibrate(input, output);
    std::cout << "calibrated " << table.size() << " beams -> " << output << "\n";
    std::cout << "  vertical span: " << table.vertical_angle_deg.front() << " to "
              << table.vertical_angle_deg.back() << " deg\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, unsigned workers_flag) {
    const RunConfig config = load_run_config(config_path);
    const unsigned workers = resolve_workers(workers_flag);
    const RunManifest manifest = run_simulation(config, workers);
    std::cout << "simulated " << manifest.frames.size() << " frames into "
              << config.output_dir.string() << "\n";
    for (const FrameSummary& f : manifest.frames) {
        std::cout << "  frame " << f.index << ": " << f.kept_points << " points, "
                  << f.obstacles_placed << " obstacles (" << f.obstacles_labeled << " labeled)";
        if (f.placement_exhausted) std::cout << " [placement exhausted]";
        std::cout << "\n";
    }
    return 0;
}

int cmd_stats(const std::string& frames_dir, bool csv) {
    const StatsReport report = run_stats(frames_dir);
    if (csv) {
        std::cout << "frames,mean_points,stddev_points\n";
        std::cout << report.frames << "," << report.mean_points << "," << report.stddev_points
                  << "\n";
        std::cout << "category,labeled_obstacles\n";
        for (const auto& [category, count] : report.obstacles_per_category)
            std::cout << category << "," << count << "\n";
    } else {
        std::cout << "frames: " << report.frames << "\n";
        std::cout << "points per frame: mean " << report.mean_points << ", stddev "
                  << report.stddev_points << "\n";
        for (const auto& [category, count] : report.obstacles_per_category)
            std::cout << "labeled " << category << ": " << count << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------ demo

TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b) {
    TriangleMesh out = a;
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (const auto& tri : b.triangles)
        out.triangles.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
    out.tri_materials.insert(out.tri_materials.end(), b.tri_materials.begin(),
                             b.tri_materials.end());
    return out;
}

int cmd_make_demo(const std::string& output) {
    namespace fs = std::filesystem;
    const fs::path dir(output);
    fs::create_directories(dir / "models");

    // labeled background: flat ground square, two building walls, a few
    // parked cars that clean-background will strip out
    SemanticPointCloud cloud;
    cloud.labels_from_file = true;
    const auto ground = ClassTable::kGround;
    const auto building = *cloud.classes.find("building");
    const auto car = *cloud.classes.find("car");
    for (int iy = 0; iy <= 228; ++iy)
        for (int ix = 0; ix <= 228; ++ix)
            cloud.add({-40.0 + ix * 0.35088, -40.0 + iy * 0.35088, 0.0}, ground);
    for (int iz = 1; iz <= 17; ++iz) {
        for (int ix = 0; ix <= 216; ++ix) {
            cloud.add({-38.0 + ix * 0.35, 39.5, iz * 0.35}, building);
            cloud.add({39.5, -38.0 + ix * 0.35, iz * 0.35}, building);
        }
    }
    const Vec3 parked[3] = {{-12.0, 8.0, 0.0}, {15.0, -18.0, 0.0}, {4.0, 22.0, 0.0}};
    for (const Vec3& base : parked)
        for (int iz = 0; iz < 5; ++iz)
            for (int iy = 0; iy < 6; ++iy)
                for (int ix = 0; ix < 14; ++ix)
                    cloud.add({base.x - 2.1 + ix * 0.3, base.y - 0.75 + iy * 0.3,
                               0.15 + iz * 0.3},
                              car);
    write_point_cloud(cloud, dir / "background.ply", CloudFormat::Ply, CloudEncoding::Binary);

    // obstacle meshes
    TriangleMesh car_mesh =
        merge_meshes(make_box_mesh({-2.1, -0.9, 0.0}, {2.1, 0.9, 0.9}),
                     make_box_mesh({-1.0, -0.8, 0.9}, {1.2, 0.8, 1.5}));
    car_mesh.materials.assign(1, Material{});
    car_mesh.material_names.assign(1, "body");
    save_obj(car_mesh, dir / "models" / "car.obj");
    save_obj(make_box_mesh({-0.25, -0.25, 0.0}, {0.25, 0.25, 1.7}),
             dir / "models" / "pedestrian.obj");
    save_obj(make_box_mesh({-0.2, -0.2, 0.0}, {0.2, 0.2, 0.7}), dir / "models" / "cone.obj");

    {
        std::ofstream out(dir / "library.txt");
        out << "# id category mesh group reflectivity\n";
        out << "car_a car models/car.obj high 0.7\n";
        out << "car_b car models/car.obj low 0.6\n";
        out << "ped_a pedestrian models/pedestrian.obj high 0.5\n";
        out << "cone_a traffic_cone models/cone.obj high 0.6\n";
    }

    // annotations drive the probability maps; clustered like curbside parking
    std::vector<ObstacleAnnotation> annotations;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto scatter = [&](const std::string& category, std::size_t count, double cx, double cy,
                       double spread, double yaw) {
        for (std::size_t i = 0; i < count; ++i) {
            ObstacleAnnotation a;
            a.category = category;
            a.position = {cx + (unit(rng) * 2.0 - 1.0) * spread,
                          cy + (unit(rng) * 2.0 - 1.0) * spread, 0.0};
            a.yaw = yaw + (unit(rng) * 2.0 - 1.0) * 0.3;
            annotations.push_back(a);
        }
    };
    scatter("car", 20, -15.0, -10.0, 8.0, 0.0);
    scatter("car", 20, 12.0, 10.0, 8.0, 1.5707963);
    scatter("pedestrian", 12, 0.0, -20.0, 6.0, 0.0);
    scatter("traffic_cone", 12, -5.0, 15.0, 5.0, 0.0);
    save_annotations(annotations, dir / "annotations.txt");

    SensorConfig sensor;
    save_sensor_config(sensor, dir / "sensor.cfg");

    {
        std::ofstream out(dir / "run.cfg");
        out << "lidarsim_run 1\n";
        out << "background_bundle bundle\n";
        out << "library library.txt\n";
        out << "maps_dir maps\n";
        out << "sensor_config sensor.cfg\n";
        out << "prior maps/prior.txt\n";
        out << "output_dir frames\n";
        out << "frames 2\n";
        out << "master_seed 42\n";
        out << "target car 6\n";
        out << "target pedestrian 3\n";
        out << "target traffic_cone 3\n";
        out << "cube_resolution 512\n";
        // disks must span the scan's point spacing or beams slip between them
        out << "splat_radius 0.25\n";
    }

    std::cout << "demo workspace written to " << dir.string() << "\n";
    std::cout << "next steps:\n";
    std::cout << "  lidarsim clean-background -i " << (dir / "background.ply").string() << " -o "
              << (dir / "bundle").string() << "\n";
    std::cout << "  lidarsim build-map -a " << (dir / "annotations.txt").string() << " -o "
              << (dir / "maps").string() << "\n";
    std::cout << "  lidarsim simulate -c " << (dir / "run.cfg").string() << "\n";
    std::cout << "  lidarsim stats " << (dir / "frames").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven LiDAR frame simulator"};
    app.require_subcommand(1);

    std::string input, output, config_path, frames_dir, annotations;
    double cell_size = 0.5;
    int template_k = 2;
    double template_sigma = -1.0;
    unsigned workers = 0;
    bool csv = false;
    BackgroundBuildOptions background_options;
    bool no_fill = false;

    auto* clean = app.add_subcommand("clean-background",
                                     "Strip movable obstacles from a labeled cloud and build a "
                                     "scene bundle");
    clean->add_option("-i,--input", input, "labeled point cloud (.ply/.pcd)")->required();
    clean->add_option("-o,--output", output, "scene bundle directory")->required();
    clean->add_option("--ground-cell", background_options.ground_cell_size,
                      "ground raster cell size in meters");
    clean->add_option("--fill-spacing", background_options.fill_spacing,
                      "synthetic ground point spacing in meters");
    clean->add_option("--removal-cell", background_options.removal.cell_size,
                      "hole footprint cell size in meters");
    clean->add_option("--normal-radius", background_options.normal_radius,
                      "neighborhood radius for normal estimation");
    clean->add_flag("--no-fill", no_fill, "skip hole filling");

    auto* build = app.add_subcommand("build-map",
                                     "Learn per-category placement probability maps from "
                                     "annotations");
    build->add_option("-a,--annotations", annotations, "annotation file (category x y z yaw)")
        ->required();
    build->add_option("-o,--output", output, "output directory for .pmap files")->required();
    build->add_option("--cell-size", cell_size, "map cell size in meters");
    build->add_option("--template-k", template_k, "stencil half-width in cells");
    build->add_option("--template-sigma", template_sigma,
                      "stencil sigma in cells (default: k/2)");

    auto* calibrate = app.add_subcommand("calibrate",
                                         "Fit per-beam vertical angles and noise from a cloud "
                                         "labeled with beam indices");
    calibrate->add_option("-i,--input", input, "point cloud with beam-index labels")->required();
    calibrate->add_option("-o,--output", output, "beam table CSV to write")->required();

    auto* simulate = app.add_subcommand("simulate", "Run a configured simulation");
    simulate->add_option("-c,--config", config_path, "run config file")->required();
    simulate->add_option("--workers", workers,
                         "parallel frame workers (default: LIDARSIM_WORKERS or 1)");

    auto* stats = app.add_subcommand("stats", "Aggregate statistics over simulated frames");
    stats->add_option("frames", frames_dir, "directory of frame bundles")->required();
    stats->add_flag("--csv", csv, "emit CSV instead of text");

    auto* demo = app.add_subcommand("make-demo",
                                    "Write a small self-contained demo workspace");
    demo->add_option("-o,--output", output, "demo directory")->required();

    try {
        app.parse(argc, argv);
        if (clean->parsed()) {
            background_options.fill = !no_fill;
            return cmd_clean_background(input, output, background_options);
        }
        if (build->parsed())
            return cmd_build_map(annotations, output, cell_size, template_k, template_sigma);
        if (calibrate->parsed()) return cmd_calibrate(input, output);
        if (simulate->parsed()) return cmd_simulate(config_path, workers);
        if (stats->parsed()) return cmd_stats(frames_dir, csv);
        if (demo->parsed()) return cmd_make_demo(output);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const lidarsim::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
