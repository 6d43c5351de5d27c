#include "lidarsim/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"

namespace lidarsim {

namespace {

constexpr char kPointsMagic[8] = {'L', 'S', 'I', 'M', 'F', 'R', 'P', 'T'};
constexpr std::uint32_t kPointsVersion = 1;

struct AxisInterval {
    double lo, hi;
};

}  // namespace

std::optional<Obb> fit_obb(const std::vector<Vec3>& instance_points, const Obb& canonical,
                           const RigidPose& pose, double pad) {
    if (instance_points.empty()) return std::nullopt;
    if (pad < 0.0) throw ValidationError("box padding must be non-negative");

    const RigidPose to_model = pose.inverse();
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi = -lo;
    for (const Vec3& p : instance_points) {
        const Vec3 b = canonical.to_box_frame(to_model.apply(p));
        lo.x = std::min(lo.x, b.x);
        lo.y = std::min(lo.y, b.y);
        lo.z = std::min(lo.z, b.z);
        hi.x = std::max(hi.x, b.x);
        hi.y = std::max(hi.y, b.y);
        hi.z = std::max(hi.z, b.z);
    }

    // Per axis: the point interval padded outward, clamped into the canonical
    // interval inflated by the same pad. Both containment guarantees follow:
    // the box never exceeds canonical + pad, and a point can only fall outside
    // box + pad if it already lay beyond canonical + 2 pad.
    auto fit_axis = [pad](double pts_lo, double pts_hi, double half) -> AxisInterval {
        AxisInterval f;
        f.lo = std::max(pts_lo - pad, -half - pad);
        f.hi = std::min(pts_hi + pad, half + pad);
        if (f.lo > f.hi) {
            const double mid = std::clamp(0.5 * (pts_lo + pts_hi), -half - pad, half + pad);
            f.lo = f.hi = mid;
        }
        return f;
    };
    const AxisInterval fx = fit_axis(lo.x, hi.x, canonical.half_extents.x);
    const AxisInterval fy = fit_axis(lo.y, hi.y, canonical.half_extents.y);
    const AxisInterval fz = fit_axis(lo.z, hi.z, canonical.half_extents.z);

    Obb fitted;
    const Vec3 center_box{0.5 * (fx.lo + fx.hi), 0.5 * (fy.lo + fy.hi), 0.5 * (fz.lo + fz.hi)};
    fitted.center = pose.apply(canonical.from_box_frame(center_box));
    fitted.half_extents = {std::max(0.5 * (fx.hi - fx.lo), 1e-6),
                           std::max(0.5 * (fy.hi - fy.lo), 1e-6),
                           std::max(0.5 * (fz.hi - fz.lo), 1e-6)};
    fitted.yaw = wrap_angle(canonical.yaw + pose.yaw);
    return fitted;
}

AnnotatedFrame annotate_frame(const SimulatedFrame& frame, const ScenePlacement& placement,
                              const ObstacleLibrary& library, const RigidPose& sensor_pose,
                              const AnnotateOptions& options) {
    if (options.obb_pad < 0.0) throw ValidationError("box padding must be non-negative");

    AnnotatedFrame out;
    out.points = frame.points;
    out.stats = frame.stats;
    out.sensor_pose = sensor_pose;

    const RigidPose world_to_sensor = sensor_pose.inverse();
    std::vector<RigidPose> rel_poses;
    rel_poses.reserve(placement.obstacles.size());
    for (const PlacedObstacle& placed : placement.obstacles)
        rel_poses.push_back(world_to_sensor.compose(placed.pose));

    // A return whose reprojected position lies far outside its obstacle's
    // canonical box is a lookup artifact near a silhouette edge, not credible
    // obstacle evidence; hand it back to the background before fitting.
    std::vector<std::vector<Vec3>> instance_points(placement.obstacles.size());
    for (SimulatedPoint& p : out.points) {
        if (p.instance == 0) continue;
        const std::size_t idx = p.instance - 1;
        if (idx >= placement.obstacles.size())
            throw ValidationError("frame point references instance " +
                                  std::to_string(p.instance) + " but only " +
                                  std::to_string(placement.obstacles.size()) +
                                  " obstacles were placed");
        const Obb& canonical = library.model(placement.obstacles[idx].model_id).canonical_obb;
        const Vec3 b = canonical.to_box_frame(rel_poses[idx].inverse().apply(p.position));
        const double gate = 2.0 * options.obb_pad;
        if (std::abs(b.x) > canonical.half_extents.x + gate ||
            std::abs(b.y) > canonical.half_extents.y + gate ||
            std::abs(b.z) > canonical.half_extents.z + gate) {
            p.instance = 0;
            continue;
        }
        instance_points[idx].push_back(p.position);
    }

    for (std::size_t i = 0; i < placement.obstacles.size(); ++i) {
        const PlacedObstacle& placed = placement.obstacles[i];
        const ObstacleModel& model = library.model(placed.model_id);
        ObstacleRecord record;
        record.instance = static_cast<std::uint32_t>(i + 1);
        record.category = model.category;
        record.model_id = placed.model_id;
        record.pose = rel_poses[i];
        if (instance_points[i].size() >= options.min_label_points)
            record.obb =
                fit_obb(instance_points[i], model.canonical_obb, rel_poses[i], options.obb_pad);
        out.obstacles.push_back(std::move(record));
    }
    return out;
}

AnnotatedFrame apply_dropout(const AnnotatedFrame& frame, double drop_ratio,
                             std::uint64_t rng_seed, std::size_t min_label_points) {
    if (drop_ratio < 0.0 || drop_ratio > 1.0)
        throw ValidationError("dropout ratio must lie in [0, 1]");

    AnnotatedFrame out;
    out.obstacles = frame.obstacles;
    out.sensor_pose = frame.sensor_pose;
    out.seed = frame.seed;
    out.config_hash = frame.config_hash;
    out.stats = frame.stats;

    std::mt19937_64 rng = make_engine(rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    out.points.reserve(frame.points.size());
    std::map<std::uint32_t, std::size_t> kept_per_instance;
    for (const SimulatedPoint& p : frame.points) {
        if (unit(rng) < drop_ratio) continue;
        out.points.push_back(p);
        if (p.instance != 0) ++kept_per_instance[p.instance];
    }
    out.stats.emitted = out.points.size();

    // boxes stay valid for any subset of their points; instances that fell
    // below the support threshold lose their label
    for (ObstacleRecord& record : out.obstacles) {
        auto it = kept_per_instance.find(record.instance);
        const std::size_t kept = it == kept_per_instance.end() ? 0 : it->second;
        if (kept < min_label_points) record.obb.reset();
    }
    return out;
}

std::uint32_t point_class_id(const SimulatedPoint& point,
                             const std::vector<ObstacleRecord>& obstacles,
                             const ClassTable& classes) {
    if (point.instance == 0) return ClassTable::kUnknown;
    for (const ObstacleRecord& record : obstacles) {
        if (record.instance != point.instance) continue;
        const auto id = classes.find(record.category);
        return id ? *id : ClassTable::kUnknown;
    }
    return ClassTable::kUnknown;
}

namespace {

nlohmann::json pose_to_json(const RigidPose& pose) {
    return {{"x", pose.translation.x},
            {"y", pose.translation.y},
            {"z", pose.translation.z},
            {"yaw", pose.yaw}};
}

RigidPose pose_from_json(const nlohmann::json& j) {
    return RigidPose::from_yaw({j.at("x").get<double>(), j.at("y").get<double>(),
                                j.at("z").get<double>()},
                               j.at("yaw").get<double>());
}

void append_f32(std::string& out, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void append_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

ClassTable frame_class_table(const AnnotatedFrame& frame) {
    ClassTable table = ClassTable::standard();
    for (const ObstacleRecord& record : frame.obstacles) table.ensure(record.category);
    return table;
}

void write_label_lines(const AnnotatedFrame& frame, std::ostream& out) {
    out << "# category cx cy cz l w h yaw\n";
    char line[256];
    for (const ObstacleRecord& record : frame.obstacles) {
        if (!record.obb) continue;
        const Obb& box = *record.obb;
        std::snprintf(line, sizeof(line), "%s %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n",
                      record.category.c_str(), box.center.x, box.center.y, box.center.z,
                      2.0 * box.half_extents.x, 2.0 * box.half_extents.y,
                      2.0 * box.half_extents.z, box.yaw);
        out << line;
    }
}

}  // namespace

void write_frame(const AnnotatedFrame& frame, const std::filesystem::path& dir,
                 FrameFormat format) {
    std::filesystem::create_directories(dir);
    const ClassTable classes = frame_class_table(frame);

    {
        const auto path = dir / (format == FrameFormat::Native ? "points.bin" : "velodyne.bin");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        std::string buf;
        if (format == FrameFormat::Native) {
            buf.reserve(16 + frame.points.size() * 20);
            buf.append(kPointsMagic, 8);
            append_u32(buf, kPointsVersion);
            append_u32(buf, static_cast<std::uint32_t>(frame.points.size()));
            for (const SimulatedPoint& p : frame.points) {
                append_f32(buf, static_cast<float>(p.position.x));
                append_f32(buf, static_cast<float>(p.position.y));
                append_f32(buf, static_cast<float>(p.position.z));
                append_u32(buf, p.instance);
                append_u32(buf, point_class_id(p, frame.obstacles, classes));
            }
        } else {
            buf.reserve(frame.points.size() * 16);
            for (const SimulatedPoint& p : frame.points) {
                append_f32(buf, static_cast<float>(p.position.x));
                append_f32(buf, static_cast<float>(p.position.y));
                append_f32(buf, static_cast<float>(p.position.z));
                append_f32(buf, static_cast<float>(std::clamp(p.energy, 0.0, 1.0)));
            }
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("failed writing '" + path.string() + "'");
    }

    {
        const auto path = dir / "labels.txt";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        write_label_lines(frame, out);
        if (!out) throw IoError("failed writing '" + path.string() + "'");
    }

    nlohmann::json meta;
    meta["version"] = 1;
    meta["format"] = format == FrameFormat::Native ? "native" : "kitti-like";
    meta["seed"] = frame.seed;
    meta["config_hash"] = frame.config_hash;
    meta["sensor_pose"] = pose_to_json(frame.sensor_pose);
    meta["point_count"] = frame.points.size();
    meta["class_names"] = classes.names;
    meta["stats"] = {{"candidates", frame.stats.candidates},
                     {"sky_discards", frame.stats.sky_discards},
                     {"low_energy_discards", frame.stats.low_energy_discards},
                     {"range_discards", frame.stats.range_discards},
                     {"emitted", frame.stats.emitted}};
    nlohmann::json obstacles = nlohmann::json::array();
    for (const ObstacleRecord& record : frame.obstacles) {
        nlohmann::json o;
        o["instance"] = record.instance;
        o["category"] = record.category;
        o["model_id"] = record.model_id;
        o["pose"] = pose_to_json(record.pose);
        if (record.obb) {
            o["obb"] = {{"cx", record.obb->center.x},   {"cy", record.obb->center.y},
                        {"cz", record.obb->center.z},   {"hx", record.obb->half_extents.x},
                        {"hy", record.obb->half_extents.y}, {"hz", record.obb->half_extents.z},
                        {"yaw", record.obb->yaw}};
        } else {
            o["obb"] = nullptr;
        }
        obstacles.push_back(std::move(o));
    }
    meta["obstacles"] = std::move(obstacles);

    const auto meta_path = dir / "meta.json";
    std::ofstream out(meta_path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + meta_path.string() + "' for writing");
    out << meta.dump(2) << "\n";
    if (!out) throw IoError("failed writing '" + meta_path.string() + "'");
}

AnnotatedFrame read_frame(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path, std::ios::binary);
    if (!meta_in) throw IoError("cannot open '" + meta_path.string() + "' for reading");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed frame metadata: " + std::string(e.what()), 0);
    }
    if (meta.value("format", "native") != "native")
        throw ValidationError("only native frame bundles can be read back");

    AnnotatedFrame frame;
    frame.seed = meta.value("seed", std::uint64_t{0});
    frame.config_hash = meta.value("config_hash", std::uint64_t{0});
    frame.sensor_pose = pose_from_json(meta.at("sensor_pose"));
    if (meta.contains("stats")) {
        const auto& s = meta["stats"];
        frame.stats.candidates = s.value("candidates", std::size_t{0});
        frame.stats.sky_discards = s.value("sky_discards", std::size_t{0});
        frame.stats.low_energy_discards = s.value("low_energy_discards", std::size_t{0});
        frame.stats.range_discards = s.value("range_discards", std::size_t{0});
        frame.stats.emitted = s.value("emitted", std::size_t{0});
    }
    for (const auto& o : meta.at("obstacles")) {
        ObstacleRecord record;
        record.instance = o.at("instance").get<std::uint32_t>();
        record.category = o.at("category").get<std::string>();
        record.model_id = o.at("model_id").get<std::string>();
        record.pose = pose_from_json(o.at("pose"));
        if (!o.at("obb").is_null()) {
            Obb box;
            box.center = {o["obb"].at("cx").get<double>(), o["obb"].at("cy").get<double>(),
                          o["obb"].at("cz").get<double>()};
            box.half_extents = {o["obb"].at("hx").get<double>(), o["obb"].at("hy").get<double>(),
                                o["obb"].at("hz").get<double>()};
            box.yaw = o["obb"].at("yaw").get<double>();
            record.obb = box;
        }
        frame.obstacles.push_back(std::move(record));
    }

    const auto points_path = dir / "points.bin";
    std::ifstream in(points_path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + points_path.string() + "' for reading");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kPointsMagic, 8) != 0)
        throw ParseError("'" + points_path.string() + "' is not a frame point file", 0);
    std::uint32_t version = 0, count = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&count), 4);
    if (!in) throw ParseError("truncated frame point header", 8);
    if (version != kPointsVersion)
        throw ParseError("unsupported frame point file version " + std::to_string(version), 8);

    frame.points.reserve(count);
    std::vector<char> record(20);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(record.data(), 20);
        if (in.gcount() != 20)
            throw ParseError("truncated frame point payload: expected " + std::to_string(count) +
                                 " points, got " + std::to_string(i),
                             16 + static_cast<std::size_t>(i) * 20);
        float xyz[3];
        std::uint32_t ids[2];
        std::memcpy(xyz, record.data(), 12);
        std::memcpy(ids, record.data() + 12, 8);
        SimulatedPoint p;
        p.position = {xyz[0], xyz[1], xyz[2]};
        p.instance = ids[0];
        frame.points.push_back(p);
    }
    return frame;
}

}  // namespace lidarsim
