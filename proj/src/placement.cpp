#include "lidarsim/placement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"

namespace lidarsim {

const std::vector<std::string> ObstacleLibrary::kEmpty;

void ObstacleLibrary::add(ObstacleModel model) {
    if (model.id.empty()) throw ValidationError("obstacle model needs a non-empty id");
    if (model.category.empty()) throw ValidationError("obstacle model needs a category");
    if (models_.count(model.id) != 0)
        throw ValidationError("duplicate obstacle model id '" + model.id + "'");
    model.mesh.validate();
    if (model.canonical_obb.half_extents.x <= 0.0 || model.canonical_obb.half_extents.y <= 0.0 ||
        model.canonical_obb.half_extents.z <= 0.0)
        throw ValidationError("obstacle model '" + model.id + "' has a degenerate box");
    auto& bucket = (model.group == FrequencyGroup::High ? high_ : low_)[model.category];
    bucket.push_back(model.id);
    std::sort(bucket.begin(), bucket.end());
    models_.emplace(model.id, std::move(model));
}

const ObstacleModel& ObstacleLibrary::model(const std::string& id) const {
    auto it = models_.find(id);
    if (it == models_.end()) throw ValidationError("unknown obstacle model id '" + id + "'");
    return it->second;
}

bool ObstacleLibrary::has_category(const std::string& category) const {
    return high_.count(category) != 0 || low_.count(category) != 0;
}

const std::vector<std::string>& ObstacleLibrary::models_in(const std::string& category,
                                                           FrequencyGroup group) const {
    const auto& buckets = group == FrequencyGroup::High ? high_ : low_;
    auto it = buckets.find(category);
    return it == buckets.end() ? kEmpty : it->second;
}

std::vector<std::string> ObstacleLibrary::categories() const {
    std::vector<std::string> out;
    for (const auto& [cat, ids] : high_) out.push_back(cat);
    for (const auto& [cat, ids] : low_)
        if (high_.count(cat) == 0) out.push_back(cat);
    std::sort(out.begin(), out.end());
    return out;
}

std::map<std::string, std::size_t> ObstacleLibrary::category_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [id, model] : models_) ++out[model.category];
    return out;
}

Obb canonical_obb_of(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw ValidationError("cannot fit a box to an empty mesh");
    const Aabb box = mesh.bounds();
    Obb obb;
    obb.center = box.center();
    obb.half_extents = (box.max - box.min) * 0.5;
    obb.yaw = 0.0;
    const double min_extent = 1e-6;
    obb.half_extents.x = std::max(obb.half_extents.x, min_extent);
    obb.half_extents.y = std::max(obb.half_extents.y, min_extent);
    obb.half_extents.z = std::max(obb.half_extents.z, min_extent);
    return obb;
}

CategoryPrior CategoryPrior::from_annotations(const std::vector<ObstacleAnnotation>& annotations,
                                              double high_frequency_ratio) {
    if (annotations.empty()) throw NoAnnotationsError();
    CategoryPrior prior;
    prior.high_frequency_ratio = high_frequency_ratio;
    for (const auto& a : annotations) prior.frequency[a.category] += 1.0;
    const double total = static_cast<double>(annotations.size());
    for (auto& [cat, f] : prior.frequency) f /= total;
    prior.validate();
    return prior;
}

void CategoryPrior::validate() const {
    if (frequency.empty()) throw ValidationError("category prior is empty");
    if (high_frequency_ratio < 0.0 || high_frequency_ratio > 1.0)
        throw ValidationError("high-frequency ratio must lie in [0, 1]");
    double sum = 0.0;
    for (const auto& [cat, f] : frequency) {
        if (!(f >= 0.0) || !std::isfinite(f))
            throw ValidationError("category '" + cat + "' has an invalid frequency");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("category frequencies must sum to 1, got " + std::to_string(sum));
}

std::string select_model(const CategoryPrior& prior, const ObstacleLibrary& library,
                         const std::string& category, std::mt19937_64& rng) {
    if (prior.frequency.count(category) == 0 || !library.has_category(category))
        throw UnknownCategoryError(category);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool want_high = unit(rng) < prior.high_frequency_ratio;
    const auto* primary = &library.models_in(category, want_high ? FrequencyGroup::High
                                                                 : FrequencyGroup::Low);
    const auto* fallback = &library.models_in(category, want_high ? FrequencyGroup::Low
                                                                  : FrequencyGroup::High);
    const auto& pool = primary->empty() ? *fallback : *primary;
    if (pool.empty()) throw UnknownCategoryError(category);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
}

std::string select_model(const CategoryPrior& prior, const ObstacleLibrary& library,
                         const std::string& category, std::uint64_t rng_seed) {
    std::mt19937_64 rng = make_engine(rng_seed);
    return select_model(prior, library, category, rng);
}

namespace {

/// Candidate footprint must rest on valid ground: all four ground-projected
/// corners and the center need a ground height.
bool footprint_on_ground(const Obb& world_box, const GroundModel& ground) {
    if (!ground.height_at(world_box.center.x, world_box.center.y)) return false;
    for (const Vec3& c : world_box.footprint())
        if (!ground.height_at(c.x, c.y)) return false;
    return true;
}

}  // namespace

ComposeResult compose_scene(const BackgroundScene& scene,
                            const std::map<std::string, ProbabilityMap>& maps,
                            const CategoryPrior& prior, const ObstacleLibrary& library,
                            const std::map<std::string, std::size_t>& target_counts,
                            const RigidPose& scanner_pose, std::uint64_t rng_seed,
                            const ComposeOptions& options) {
    prior.validate();
    if (options.clearance_margin < 0.0)
        throw ValidationError("clearance margin must be non-negative");
    if (options.max_attempts_factor == 0)
        throw ValidationError("attempt budget must be positive");

    ComposeResult result;
    result.placement.scanner_pose = scanner_pose;
    std::vector<Obb> accepted_boxes;

    std::mt19937_64 rng = make_engine(rng_seed);

    // Categories are processed in name order so a fixed seed composes a fixed
    // scene regardless of map-container iteration details.
    for (const auto& [category, target] : target_counts) {
        result.targets[category] = target;
        result.achieved[category] = 0;
        if (target == 0) continue;
        auto map_it = maps.find(category);
        if (map_it == maps.end()) throw UnknownCategoryError(category);
        if (!library.has_category(category)) throw UnknownCategoryError(category);

        const std::size_t max_attempts = options.max_attempts_factor * target;
        std::size_t attempts = 0;
        std::size_t placed = 0;
        while (placed < target && attempts < max_attempts) {
            ++attempts;
            const std::vector<RigidPose> candidate = sample_poses(
                map_it->second, scanner_pose, 1, rng, scene.ground, options.sampling);
            const RigidPose& pose = candidate.front();
            const std::string model_id = select_model(prior, library, category, rng);
            const ObstacleModel& model = library.model(model_id);

            const Obb world_box = model.canonical_obb.transformed(pose);
            if (!footprint_on_ground(world_box, scene.ground)) continue;

            bool collides = false;
            for (const Obb& other : accepted_boxes) {
                if (obb_footprint_overlap(world_box, other, options.clearance_margin)) {
                    collides = true;
                    break;
                }
            }
            if (collides) continue;

            accepted_boxes.push_back(world_box);
            result.placement.obstacles.push_back({model_id, pose});
            ++placed;
        }
        result.achieved[category] = placed;
        if (placed < target) result.exhausted = true;
    }
    return result;
}

ObstacleLibrary load_library(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + manifest_path.string() + "' for reading");
    const auto base_dir = manifest_path.parent_path();

    ObstacleLibrary library;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string id, category, mesh_path, group;
        double reflectivity = 0.0;
        if (!(ss >> id)) continue;
        if (!(ss >> category >> mesh_path >> group >> reflectivity))
            throw ParseError("malformed library record (want `id category mesh group reflectivity`)",
                             line_start);
        if (group != "high" && group != "low")
            throw ParseError("library group must be 'high' or 'low', got '" + group + "'",
                             line_start);
        if (reflectivity < 0.0 || reflectivity > 1.0)
            throw ParseError("library reflectivity must lie in [0, 1]", line_start);

        Material base;
        base.reflectivity = reflectivity;
        ObstacleModel model;
        model.id = id;
        model.category = category;
        std::filesystem::path mesh_file(mesh_path);
        if (mesh_file.is_relative()) mesh_file = base_dir / mesh_file;
        model.mesh = load_obj(mesh_file, base);
        model.canonical_obb = canonical_obb_of(model.mesh);
        model.group = group == "high" ? FrequencyGroup::High : FrequencyGroup::Low;
        library.add(std::move(model));
    }
    if (library.size() == 0)
        throw ValidationError("library manifest '" + manifest_path.string() + "' lists no models");
    return library;
}

CategoryPrior load_prior(const std::filesystem::path& path, double high_frequency_ratio) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    CategoryPrior prior;
    prior.high_frequency_ratio = high_frequency_ratio;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string category;
        double f = 0.0;
        if (!(ss >> category)) continue;
        if (!(ss >> f))
            throw ParseError("malformed prior record (want `category frequency`)", line_start);
        if (prior.frequency.count(category) != 0)
            throw ParseError("duplicate prior category '" + category + "'", line_start);
        prior.frequency[category] = f;
    }
    prior.validate();
    return prior;
}

void save_prior(const CategoryPrior& prior, const std::filesystem::path& path) {
    prior.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "# category frequency\n";
    out.precision(17);
    for (const auto& [cat, f] : prior.frequency) out << cat << " " << f << "\n";
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lidarsim
