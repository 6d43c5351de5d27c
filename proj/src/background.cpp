#include "lidarsim/background.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "lidarsim/errors.hpp"
#include "lidarsim/normals.hpp"
#include "lidarsim/point_cloud_io.hpp"

namespace lidarsim {

namespace {

constexpr char kGridMagic[8] = {'L', 'S', 'I', 'M', 'G', 'R', 'I', 'D'};
constexpr std::uint32_t kGridVersion = 1;

int floor_div_cell(double v, double origin, double cell) {
    return static_cast<int>(std::floor((v - origin) / cell));
}

struct CellId {
    int x, y;
    bool operator<(const CellId& o) const { return x != o.x ? x < o.x : y < o.y; }
};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v, const std::filesystem::path& path) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (static_cast<std::size_t>(in.gcount()) != sizeof(T))
        throw ParseError("truncated ground raster '" + path.string() + "'",
                         static_cast<std::size_t>(in.tellg()));
}

}  // namespace

GroundModel::GroundModel(double origin_x, double origin_y, double cell_size, int nx, int ny)
    : origin_x_(origin_x), origin_y_(origin_y), cell_(cell_size), nx_(nx), ny_(ny) {
    if (cell_size <= 0.0) throw ValidationError("ground cell size must be positive");
    if (nx <= 0 || ny <= 0) throw ValidationError("ground grid dimensions must be positive");
    heights_.assign(static_cast<std::size_t>(nx) * ny, 0.0f);
    valid_.assign(static_cast<std::size_t>(nx) * ny, 0);
}

bool GroundModel::valid(int ix, int iy) const {
    return in_grid(ix, iy) && valid_[static_cast<std::size_t>(iy) * nx_ + ix] != 0;
}

double GroundModel::cell_height(int ix, int iy) const {
    if (!valid(ix, iy)) throw ValidationError("queried height of an invalid ground cell");
    return heights_[static_cast<std::size_t>(iy) * nx_ + ix];
}

void GroundModel::set_cell(int ix, int iy, double height) {
    if (!in_grid(ix, iy)) throw ValidationError("ground cell index out of range");
    heights_[static_cast<std::size_t>(iy) * nx_ + ix] = static_cast<float>(height);
    valid_[static_cast<std::size_t>(iy) * nx_ + ix] = 1;
}

std::pair<int, int> GroundModel::cell_of(double x, double y) const {
    return {floor_div_cell(x, origin_x_, cell_), floor_div_cell(y, origin_y_, cell_)};
}

std::optional<double> GroundModel::height_at(double x, double y) const {
    // Position relative to the cell-center lattice.
    const double gx = (x - origin_x_) / cell_ - 0.5;
    const double gy = (y - origin_y_) / cell_ - 0.5;
    const int ix = static_cast<int>(std::floor(gx));
    const int iy = static_cast<int>(std::floor(gy));
    const double fx = gx - ix;
    const double fy = gy - iy;

    double weight_sum = 0.0;
    double height_sum = 0.0;
    const double wx[2] = {1.0 - fx, fx};
    const double wy[2] = {1.0 - fy, fy};
    for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
            const int cx = ix + dx;
            const int cy = iy + dy;
            if (!valid(cx, cy)) continue;
            const double w = wx[dx] * wy[dy];
            if (w <= 0.0) continue;
            weight_sum += w;
            height_sum += w * heights_[static_cast<std::size_t>(cy) * nx_ + cx];
        }
    }
    if (weight_sum <= 0.0) return std::nullopt;
    return height_sum / weight_sum;
}

void GroundModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kGridMagic, 8);
    write_raw(out, kGridVersion);
    write_raw(out, std::uint32_t{0});  // reserved
    write_raw(out, origin_x_);
    write_raw(out, origin_y_);
    write_raw(out, cell_);
    write_raw(out, static_cast<std::int32_t>(nx_));
    write_raw(out, static_cast<std::int32_t>(ny_));
    out.write(reinterpret_cast<const char*>(heights_.data()),
              static_cast<std::streamsize>(heights_.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(valid_.data()),
              static_cast<std::streamsize>(valid_.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

GroundModel GroundModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kGridMagic, 8) != 0)
        throw ParseError("'" + path.string() + "' is not a ground raster", 0);
    std::uint32_t version = 0, reserved = 0;
    read_raw(in, version, path);
    read_raw(in, reserved, path);
    if (version != kGridVersion)
        throw ParseError("unsupported ground raster version " + std::to_string(version), 8);
    double ox = 0, oy = 0, cell = 0;
    std::int32_t nx = 0, ny = 0;
    read_raw(in, ox, path);
    read_raw(in, oy, path);
    read_raw(in, cell, path);
    read_raw(in, nx, path);
    read_raw(in, ny, path);
    if (cell <= 0.0 || nx <= 0 || ny <= 0)
        throw ParseError("ground raster has invalid dimensions", 16);
    GroundModel model(ox, oy, cell, nx, ny);
    const std::size_t cells = static_cast<std::size_t>(nx) * ny;
    in.read(reinterpret_cast<char*>(model.heights_.data()),
            static_cast<std::streamsize>(cells * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != cells * sizeof(float))
        throw ParseError("truncated ground raster heights", 48);
    in.read(reinterpret_cast<char*>(model.valid_.data()), static_cast<std::streamsize>(cells));
    if (static_cast<std::size_t>(in.gcount()) != cells)
        throw ParseError("truncated ground raster validity mask", 48 + cells * sizeof(float));
    return model;
}

RemoveMovableResult remove_movable(const SemanticPointCloud& cloud,
                                   const std::set<std::uint32_t>& movable_classes,
                                   const RemoveMovableOptions& options) {
    if (cloud.empty()) throw EmptyCloudError();
    cloud.validate();
    if (options.cell_size <= 0.0) throw ValidationError("removal cell size must be positive");

    double min_x = std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    for (const Vec3& p : cloud.points) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
    }
    const double cell = options.cell_size;
    const double origin_x = std::floor(min_x / cell) * cell;
    const double origin_y = std::floor(min_y / cell) * cell;

    struct CellState {
        double removed_min_z = std::numeric_limits<double>::infinity();
        double ground_min_z = std::numeric_limits<double>::infinity();
        bool removed = false;
        bool ground_survives = false;
    };
    std::map<CellId, CellState> states;

    RemoveMovableResult result;
    result.cloud.classes = cloud.classes;
    result.cloud.labels_from_file = cloud.labels_from_file;
    const bool with_materials = !cloud.materials.empty();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const std::uint32_t label = cloud.labels[i];
        const CellId id{floor_div_cell(p.x, origin_x, cell), floor_div_cell(p.y, origin_y, cell)};
        CellState& state = states[id];
        if (movable_classes.count(label) != 0) {
            ++result.removed_per_class[label];
            state.removed = true;
            state.removed_min_z = std::min(state.removed_min_z, p.z);
        } else {
            result.cloud.add(p, label);
            if (with_materials) result.cloud.materials.push_back(cloud.materials[i]);
            if (label == ClassTable::kGround) {
                state.ground_survives = true;
                state.ground_min_z = std::min(state.ground_min_z, p.z);
            }
        }
    }

    result.holes.origin_x = origin_x;
    result.holes.origin_y = origin_y;
    result.holes.cell_size = cell;
    for (const auto& [id, state] : states) {
        if (!state.removed || state.ground_survives) continue;
        // Ground shadow: removed points must sit near the surviving ground
        // level nearby, otherwise they were overhanging and the ground below
        // was visible anyway.
        double neighbor_ground = std::numeric_limits<double>::infinity();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                auto it = states.find(CellId{id.x + dx, id.y + dy});
                if (it == states.end() || !it->second.ground_survives) continue;
                neighbor_ground = std::min(neighbor_ground, it->second.ground_min_z);
            }
        }
        if (std::isfinite(neighbor_ground) &&
            state.removed_min_z > neighbor_ground + options.ground_adjacency)
            continue;
        result.holes.cells.emplace_back(id.x, id.y);
    }
    return result;
}

GroundModel build_ground_model(const SemanticPointCloud& cloud, double cell_size) {
    if (cell_size <= 0.0) throw ValidationError("ground cell size must be positive");
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = std::numeric_limits<double>::infinity();
    double max_x = -std::numeric_limits<double>::infinity();
    double max_y = -std::numeric_limits<double>::infinity();
    std::size_t ground_count = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.labels[i] != ClassTable::kGround) continue;
        ++ground_count;
        min_x = std::min(min_x, cloud.points[i].x);
        min_y = std::min(min_y, cloud.points[i].y);
        max_x = std::max(max_x, cloud.points[i].x);
        max_y = std::max(max_y, cloud.points[i].y);
    }
    if (ground_count == 0) throw NoGroundPointsError();

    const double origin_x = std::floor(min_x / cell_size) * cell_size;
    const double origin_y = std::floor(min_y / cell_size) * cell_size;
    const int nx = std::max(1, floor_div_cell(max_x, origin_x, cell_size) + 1);
    const int ny = std::max(1, floor_div_cell(max_y, origin_y, cell_size) + 1);
    GroundModel model(origin_x, origin_y, cell_size, nx, ny);

    std::map<CellId, std::vector<double>> cell_zs;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.labels[i] != ClassTable::kGround) continue;
        const Vec3& p = cloud.points[i];
        const CellId id{floor_div_cell(p.x, origin_x, cell_size),
                        floor_div_cell(p.y, origin_y, cell_size)};
        cell_zs[id].push_back(p.z);
    }
    for (auto& [id, zs] : cell_zs) {
        // 5th percentile: robust to stray non-ground returns mixed into the cell
        const std::size_t rank =
            static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(zs.size() - 1)));
        std::nth_element(zs.begin(), zs.begin() + static_cast<std::ptrdiff_t>(rank), zs.end());
        model.set_cell(id.x, id.y, zs[rank]);
    }
    return model;
}

FillHolesResult fill_holes(const SemanticPointCloud& cloud, const GroundModel& ground,
                           const HoleFootprints& holes, double target_spacing) {
    if (target_spacing <= 0.0) throw ValidationError("fill spacing must be positive");
    FillHolesResult result;
    result.cloud = cloud;
    if (holes.cells.empty()) return result;

    GroundModel working = ground;
    const double cell = holes.cell_size;
    // Hole cells in ground-model cell coordinates (grids may differ).
    std::vector<CellId> open;
    for (const auto& [hx, hy] : holes.cells) {
        const double cx = holes.origin_x + (hx + 0.5) * cell;
        const double cy = holes.origin_y + (hy + 0.5) * cell;
        const auto [gx, gy] = working.cell_of(cx, cy);
        if (!working.in_grid(gx, gy)) {
            result.unfillable.emplace_back(hx, hy);
            continue;
        }
        open.push_back(CellId{hx, hy});
    }

    const int per_side = std::max(1, static_cast<int>(std::llround(cell / target_spacing)));
    const double spacing = cell / per_side;

    auto synthesize = [&](const CellId& hole) {
        const double base_x = holes.origin_x + hole.x * cell;
        const double base_y = holes.origin_y + hole.y * cell;
        for (int iy = 0; iy < per_side; ++iy) {
            for (int ix = 0; ix < per_side; ++ix) {
                const double x = base_x + (ix + 0.5) * spacing;
                const double y = base_y + (iy + 0.5) * spacing;
                const auto z = working.height_at(x, y);
                if (!z) continue;
                result.cloud.add({x, y, *z}, ClassTable::kGround);
                if (!result.cloud.materials.empty()) result.cloud.materials.push_back(0);
                ++result.points_added;
            }
        }
    };

    // Wave fill: each pass resolves hole cells that touch known ground, then
    // commits them so the next pass can reach deeper into the hole.
    std::vector<CellId> ready;
    while (!open.empty()) {
        ready.clear();
        std::vector<CellId> still_open;
        std::vector<std::pair<CellId, double>> commits;
        for (const CellId& hole : open) {
            const double cx = holes.origin_x + (hole.x + 0.5) * cell;
            const double cy = holes.origin_y + (hole.y + 0.5) * cell;
            const auto [gx, gy] = working.cell_of(cx, cy);
            if (working.valid(gx, gy)) {
                ready.push_back(hole);
                continue;
            }
            double weight_sum = 0.0, height_sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (!working.valid(gx + dx, gy + dy)) continue;
                    const double w = 1.0 / std::sqrt(static_cast<double>(dx * dx + dy * dy));
                    weight_sum += w;
                    height_sum += w * working.cell_height(gx + dx, gy + dy);
                }
            }
            if (weight_sum > 0.0) {
                commits.emplace_back(hole, height_sum / weight_sum);
                ready.push_back(hole);
            } else {
                still_open.push_back(hole);
            }
        }
        if (ready.empty()) {
            for (const CellId& hole : still_open) result.unfillable.emplace_back(hole.x, hole.y);
            break;
        }
        for (const auto& [hole, h] : commits) {
            const double cx = holes.origin_x + (hole.x + 0.5) * cell;
            const double cy = holes.origin_y + (hole.y + 0.5) * cell;
            const auto [gx, gy] = working.cell_of(cx, cy);
            working.set_cell(gx, gy, h);
        }
        for (const CellId& hole : ready) synthesize(hole);
        open = std::move(still_open);
    }
    return result;
}

BackgroundScene build_background_scene(const SemanticPointCloud& cloud,
                                       const BackgroundBuildOptions& options,
                                       const std::set<std::uint32_t>* movable_classes) {
    const std::set<std::uint32_t> movable =
        movable_classes ? *movable_classes : cloud.classes.default_movable();

    RemoveMovableResult removed = remove_movable(cloud, movable, options.removal);
    if (removed.cloud.empty()) throw EmptyCloudError();
    GroundModel ground = build_ground_model(removed.cloud, options.ground_cell_size);

    BackgroundScene scene;
    scene.removed_per_class = std::move(removed.removed_per_class);
    if (options.fill) {
        FillHolesResult filled =
            fill_holes(removed.cloud, ground, removed.holes, options.fill_spacing);
        scene.holes_unfillable = filled.unfillable.size();
        scene.holes_filled = removed.holes.cells.size() - scene.holes_unfillable;
        scene.cloud = std::move(filled.cloud);
    } else {
        scene.cloud = std::move(removed.cloud);
    }
    scene.ground = std::move(ground);
    scene.index = SpatialGridIndex(scene.cloud.points, options.index_cell_size);

    Aabb box;
    for (const Vec3& p : scene.cloud.points) box.expand(p);
    const Vec3 above{0.5 * (box.min.x + box.max.x), 0.5 * (box.min.y + box.max.y),
                     box.max.z + 1000.0};
    scene.normals =
        estimate_point_normals(scene.cloud.points, scene.index, options.normal_radius, above);
    return scene;
}

void save_scene_bundle(const BackgroundScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_point_cloud(scene.cloud, dir / "cloud.ply", CloudFormat::Ply, CloudEncoding::Binary);
    scene.ground.save(dir / "ground.grid");

    nlohmann::json meta;
    meta["version"] = 1;
    meta["points"] = scene.cloud.size();
    meta["holes_filled"] = scene.holes_filled;
    meta["holes_unfillable"] = scene.holes_unfillable;
    nlohmann::json removed = nlohmann::json::object();
    for (const auto& [cls, count] : scene.removed_per_class)
        removed[scene.cloud.classes.name_of(cls)] = count;
    meta["removed_per_class"] = removed;
    std::ofstream out(dir / "scene.json", std::ios::binary);
    if (!out) throw IoError("cannot open '" + (dir / "scene.json").string() + "' for writing");
    out << meta.dump(2) << "\n";
}

BackgroundScene load_scene_bundle(const std::filesystem::path& dir,
                                  const BackgroundBuildOptions& options) {
    const auto cloud_path = dir / "cloud.ply";
    const auto grid_path = dir / "ground.grid";
    if (!std::filesystem::exists(cloud_path) || !std::filesystem::exists(grid_path))
        throw IoError("'" + dir.string() + "' is not a scene bundle (missing cloud.ply/ground.grid)");

    BackgroundScene scene;
    scene.cloud = read_point_cloud(cloud_path, CloudFormat::Ply);
    scene.ground = GroundModel::load(grid_path);
    scene.index = SpatialGridIndex(scene.cloud.points, options.index_cell_size);

    const auto meta_path = dir / "scene.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path, std::ios::binary);
        nlohmann::json meta = nlohmann::json::parse(in, nullptr, true, true);
        scene.holes_filled = meta.value("holes_filled", 0);
        scene.holes_unfillable = meta.value("holes_unfillable", 0);
        if (meta.contains("removed_per_class")) {
            for (const auto& [name, count] : meta["removed_per_class"].items()) {
                const auto id = scene.cloud.classes.find(name);
                if (id) scene.removed_per_class[*id] = count.get<std::size_t>();
            }
        }
    }

    Aabb box;
    for (const Vec3& p : scene.cloud.points) box.expand(p);
    const Vec3 above{0.5 * (box.min.x + box.max.x), 0.5 * (box.min.y + box.max.y),
                     box.max.z + 1000.0};
    scene.normals =
        estimate_point_normals(scene.cloud.points, scene.index, options.normal_radius, above);
    return scene;
}

}  // namespace lidarsim
