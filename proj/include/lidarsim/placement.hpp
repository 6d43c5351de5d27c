#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lidarsim/mesh.hpp"
#include "lidarsim/probability_map.hpp"

namespace lidarsim {

enum class FrequencyGroup { High, Low };

/// One CAD obstacle: mesh, category, and a canonical upright bounding box in
/// the model frame (guaranteed to contain the mesh).
struct ObstacleModel {
    std::string id;
    std::string category;
    TriangleMesh mesh;
    Obb canonical_obb;
    FrequencyGroup group = FrequencyGroup::High;
};

/// The CAD model collection, keyed by model ID.
class ObstacleLibrary {
public:
    void add(ObstacleModel model);

    const ObstacleModel& model(const std::string& id) const;
    bool has_category(const std::string& category) const;
    const std::vector<std::string>& models_in(const std::string& category,
                                              FrequencyGroup group) const;
    std::vector<std::string> categories() const;
    std::size_t size() const { return models_.size(); }
    std::map<std::string, std::size_t> category_counts() const;

private:
    std::map<std::string, ObstacleModel> models_;
    std::map<std::string, std::vector<std::string>> high_;
    std::map<std::string, std::vector<std::string>> low_;
    static const std::vector<std::string> kEmpty;
};

/// Canonical box of a mesh: axis-aligned bounds in the model frame.
Obb canonical_obb_of(const TriangleMesh& mesh);

/// Occurrence statistics learned from annotated data plus the high/low
/// frequency mixing ratio used during model selection.
struct CategoryPrior {
    std::map<std::string, double> frequency;  // sums to 1
    double high_frequency_ratio = 0.9;

    static CategoryPrior from_annotations(const std::vector<ObstacleAnnotation>& annotations,
                                          double high_frequency_ratio = 0.9);
    void validate() const;
};

/// Draws the high-frequency group with probability `high_frequency_ratio`,
/// then uniformly within the group; falls through to the other group when the
/// drawn one is empty. Throws UnknownCategoryError.
std::string select_model(const CategoryPrior& prior, const ObstacleLibrary& library,
                         const std::string& category, std::mt19937_64& rng);
std::string select_model(const CategoryPrior& prior, const ObstacleLibrary& library,
                         const std::string& category, std::uint64_t rng_seed);

struct PlacedObstacle {
    std::string model_id;
    RigidPose pose;
};

/// A composed frame's obstacle set. Placed boxes never overlap and every
/// footprint rests on valid ground.
struct ScenePlacement {
    std::vector<PlacedObstacle> obstacles;
    RigidPose scanner_pose;
};

struct ComposeOptions {
    double clearance_margin = 0.3;
    std::size_t max_attempts_factor = 100;  // attempts = factor x target count
    SamplePosesOptions sampling;
};

struct ComposeResult {
    ScenePlacement placement;
    bool exhausted = false;  // some category fell short of its target
    std::map<std::string, std::size_t> achieved;
    std::map<std::string, std::size_t> targets;
};

/// Rejection-samples obstacle poses per category: a candidate is rejected when
/// its inflated ground-projected box intersects an accepted one or overhangs
/// invalid ground. Falling short of a target after the attempt budget sets
/// `exhausted`; a target whose map has no weight within sensor range at all
/// throws NoPlacementMassError. Deterministic for a given seed.
ComposeResult compose_scene(const BackgroundScene& scene,
                            const std::map<std::string, ProbabilityMap>& maps,
                            const CategoryPrior& prior, const ObstacleLibrary& library,
                            const std::map<std::string, std::size_t>& target_counts,
                            const RigidPose& scanner_pose, std::uint64_t rng_seed,
                            const ComposeOptions& options = {});

/// Library manifest: one record per model, `id category mesh_path group reflectivity`.
/// Mesh paths resolve relative to the manifest file.
ObstacleLibrary load_library(const std::filesystem::path& manifest_path);

/// Prior file: `category frequency` lines.
CategoryPrior load_prior(const std::filesystem::path& path, double high_frequency_ratio = 0.9);
void save_prior(const CategoryPrior& prior, const std::filesystem::path& path);

}  // namespace lidarsim
