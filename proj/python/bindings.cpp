#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lidarsim/annotation.hpp"
#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"
#include "lidarsim/run.hpp"
#include "lidarsim/sensor.hpp"

namespace py = pybind11;
using namespace lidarsim;

namespace {

py::dict pose_dict(const RigidPose& pose) {
    py::dict d;
    d["x"] = pose.translation.x;
    d["y"] = pose.translation.y;
    d["z"] = pose.translation.z;
    d["yaw"] = pose.yaw;
    return d;
}

py::dict manifest_dict(const RunManifest& manifest) {
    py::dict d;
    d["config_hash"] = manifest.config_hash;
    d["master_seed"] = manifest.master_seed;
    py::list frames;
    for (const FrameSummary& f : manifest.frames) {
        py::dict fd;
        fd["index"] = f.index;
        fd["seed"] = f.seed;
        fd["candidate_beams"] = f.candidate_beams;
        fd["emitted_points"] = f.emitted_points;
        fd["kept_points"] = f.kept_points;
        fd["obstacles_placed"] = f.obstacles_placed;
        fd["obstacles_labeled"] = f.obstacles_labeled;
        fd["placement_exhausted"] = f.placement_exhausted;
        frames.append(fd);
    }
    d["frames"] = frames;
    return d;
}

py::dict frame_dict(const AnnotatedFrame& frame) {
    const ClassTable classes = ClassTable::standard();
    const py::ssize_t n = static_cast<py::ssize_t>(frame.points.size());
    py::array_t<float> positions({n, py::ssize_t(3)});
    py::array_t<std::uint32_t> instance(n);
    py::array_t<std::uint32_t> class_id(n);
    auto pos = positions.mutable_unchecked<2>();
    auto in = instance.mutable_unchecked<1>();
    auto cl = class_id.mutable_unchecked<1>();
    for (py::ssize_t i = 0; i < n; ++i) {
        const SimulatedPoint& p = frame.points[static_cast<std::size_t>(i)];
        pos(i, 0) = static_cast<float>(p.position.x);
        pos(i, 1) = static_cast<float>(p.position.y);
        pos(i, 2) = static_cast<float>(p.position.z);
        in(i) = p.instance;
        cl(i) = point_class_id(p, frame.obstacles, classes);
    }

    py::list obstacles;
    for (const ObstacleRecord& r : frame.obstacles) {
        py::dict od;
        od["instance"] = r.instance;
        od["category"] = r.category;
        od["model_id"] = r.model_id;
        od["pose"] = pose_dict(r.pose);
        if (r.obb) {
            py::dict bd;
            bd["center"] = py::make_tuple(r.obb->center.x, r.obb->center.y, r.obb->center.z);
            bd["half_extents"] = py::make_tuple(r.obb->half_extents.x, r.obb->half_extents.y,
                                                r.obb->half_extents.z);
            bd["yaw"] = r.obb->yaw;
            od["obb"] = bd;
        } else {
            od["obb"] = py::none();
        }
        obstacles.append(od);
    }

    py::dict d;
    d["positions"] = positions;
    d["instance"] = instance;
    d["class_id"] = class_id;
    d["obstacles"] = obstacles;
    d["sensor_pose"] = pose_dict(frame.sensor_pose);
    d["seed"] = frame.seed;
    d["config_hash"] = frame.config_hash;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Scan-and-simulate LiDAR frame generator";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const ParseError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });

    py::enum_<IncidenceConvention>(m, "IncidenceConvention")
        .value("LITERAL", IncidenceConvention::Literal)
        .value("COMPLEMENTARY", IncidenceConvention::Complementary);

    py::class_<EnergyModel>(m, "EnergyModel")
        .def(py::init<>())
        .def_readwrite("e_emit", &EnergyModel::e_emit)
        .def_readwrite("sigma_air", &EnergyModel::sigma_air)
        .def_readwrite("threshold", &EnergyModel::threshold)
        .def_readwrite("convention", &EnergyModel::convention);

    m.def("return_energy", &return_energy, py::arg("model"), py::arg("reflectivity"),
          py::arg("incident_angle"), py::arg("distance"),
          "Received pulse energy for a surface hit; the incident angle is "
          "measured from the surface normal in radians.");

    py::class_<BeamTable>(m, "BeamTable")
        .def(py::init<>())
        .def_readwrite("vertical_angle_deg", &BeamTable::vertical_angle_deg)
        .def_readwrite("variance_deg2", &BeamTable::variance_deg2)
        .def("__len__", &BeamTable::size)
        .def("validate", &BeamTable::validate)
        .def("save_csv", &BeamTable::save_csv, py::arg("path"))
        .def_static("load_csv", &BeamTable::load_csv, py::arg("path"));

    py::class_<SensorConfig>(m, "SensorConfig")
        .def(py::init<>())
        .def_readwrite("channels", &SensorConfig::channels)
        .def_readwrite("vertical_fov_min_deg", &SensorConfig::vertical_fov_min_deg)
        .def_readwrite("vertical_fov_max_deg", &SensorConfig::vertical_fov_max_deg)
        .def_readwrite("horizontal_fov_deg", &SensorConfig::horizontal_fov_deg)
        .def_readwrite("azimuth_step_deg", &SensorConfig::azimuth_step_deg)
        .def_readwrite("max_range", &SensorConfig::max_range)
        .def_readwrite("e_emit", &SensorConfig::e_emit)
        .def_readwrite("sigma_air", &SensorConfig::sigma_air)
        .def_readwrite("energy_threshold", &SensorConfig::energy_threshold)
        .def_readwrite("distance_noise_sigma", &SensorConfig::distance_noise_sigma)
        .def_readwrite("azimuth_noise_sigma_deg", &SensorConfig::azimuth_noise_sigma_deg)
        .def_readwrite("beam_noise_sigma_deg", &SensorConfig::beam_noise_sigma_deg)
        .def_readwrite("beam_angle_jitter_sigma_deg", &SensorConfig::beam_angle_jitter_sigma_deg)
        .def_readwrite("incidence_convention", &SensorConfig::incidence_convention)
        .def("resolved_threshold", &SensorConfig::resolved_threshold)
        .def("validate", &SensorConfig::validate);

    m.def("ideal_beam_table", &ideal_beam_table, py::arg("config"),
          "Evenly spaced beam angles over the configured vertical field of view.");
    m.def("load_sensor_config", &load_sensor_config, py::arg("path"));
    m.def("save_sensor_config", &save_sensor_config, py::arg("config"), py::arg("path"));

    m.def("derive_seed", &derive_seed, py::arg("master_seed"), py::arg("index"),
          "Stable per-index child seed of a master seed.");

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("background_bundle", &RunConfig::background_bundle)
        .def_readwrite("library_manifest", &RunConfig::library_manifest)
        .def_readwrite("maps_dir", &RunConfig::maps_dir)
        .def_readwrite("sensor_config_path", &RunConfig::sensor_config_path)
        .def_readwrite("prior_path", &RunConfig::prior_path)
        .def_readwrite("output_dir", &RunConfig::output_dir)
        .def_readwrite("frames", &RunConfig::frames)
        .def_readwrite("master_seed", &RunConfig::master_seed)
        .def_readwrite("dropout_ratio", &RunConfig::dropout_ratio)
        .def_readwrite("target_counts", &RunConfig::target_counts)
        .def_readwrite("total_obstacles", &RunConfig::total_obstacles)
        .def_readwrite("sensor_x", &RunConfig::sensor_x)
        .def_readwrite("sensor_y", &RunConfig::sensor_y)
        .def_readwrite("sensor_mount_height", &RunConfig::sensor_mount_height)
        .def_readwrite("sensor_yaw_deg", &RunConfig::sensor_yaw_deg)
        .def_readwrite("cube_resolution", &RunConfig::cube_resolution)
        .def_readwrite("splat_radius", &RunConfig::splat_radius)
        .def_readwrite("background_reflectivity", &RunConfig::background_reflectivity)
        .def_readwrite("clearance_margin", &RunConfig::clearance_margin)
        .def_readwrite("min_label_points", &RunConfig::min_label_points)
        .def("validate", &RunConfig::validate);

    m.def("load_run_config", &load_run_config, py::arg("path"));

    m.def(
        "simulate",
        [](const RunConfig& config, unsigned workers) {
            RunManifest manifest;
            {
                py::gil_scoped_release release;
                manifest = run_simulation(config, workers);
            }
            return manifest_dict(manifest);
        },
        py::arg("config"), py::arg("workers") = 1,
        "Simulate the configured frames; returns the run manifest.");

    m.def(
        "clean_background",
        [](const std::filesystem::path& input_cloud, const std::filesystem::path& bundle_dir) {
            const CleanBackgroundResult r = run_clean_background(input_cloud, bundle_dir);
            py::dict d;
            d["removed_per_class"] = r.removed_per_class;
            d["holes_filled"] = r.holes_filled;
            d["holes_unfillable"] = r.holes_unfillable;
            d["output_points"] = r.output_points;
            return d;
        },
        py::arg("input_cloud"), py::arg("bundle_dir"),
        "Strip movable objects from a labeled scan and write a scene bundle.");

    m.def("build_maps", &run_build_maps, py::arg("annotations"), py::arg("out_dir"),
          py::arg("cell_size") = 0.5, py::arg("template_k") = 2,
          py::arg("template_sigma_cells") = 1.0,
          "Accumulate annotations into per-category placement maps.");

    m.def("calibrate", &run_calibrate, py::arg("cloud"), py::arg("out_csv"),
          "Fit per-beam vertical angles and noise from labeled returns.");

    m.def(
        "stats",
        [](const std::filesystem::path& frames_dir) {
            const StatsReport r = run_stats(frames_dir);
            py::dict d;
            d["frames"] = r.frames;
            d["mean_points"] = r.mean_points;
            d["stddev_points"] = r.stddev_points;
            d["obstacles_per_category"] = r.obstacles_per_category;
            d["point_counts"] = r.point_counts;
            return d;
        },
        py::arg("frames_dir"), "Aggregate statistics over a directory of frame bundles.");

    m.def(
        "read_frame",
        [](const std::filesystem::path& dir) { return frame_dict(read_frame(dir)); },
        py::arg("dir"), "Load one simulated frame bundle (points, labels, boxes).");
}
