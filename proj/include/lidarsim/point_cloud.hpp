#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"

namespace lidarsim {

/// Registered table of semantic class names. Class IDs index into `names`.
struct ClassTable {
    std::vector<std::string> names;

    static constexpr std::uint32_t kUnknown = 0;
    static constexpr std::uint32_t kGround = 1;

    /// Default registry used when a file carries no class comments.
    static ClassTable standard();

    std::optional<std::uint32_t> find(const std::string& name) const;
    /// Returns the ID of `name`, registering it if absent.
    std::uint32_t ensure(const std::string& name);
    const std::string& name_of(std::uint32_t id) const;
    std::size_t size() const { return names.size(); }

    /// IDs of the classes conventionally treated as movable obstacles.
    std::set<std::uint32_t> default_movable() const;

    bool operator==(const ClassTable&) const = default;
};

/// Background points with per-point class labels; the scanned world.
struct SemanticPointCloud {
    std::vector<Vec3> points;
    std::vector<std::uint32_t> labels;     // same length as points
    std::vector<std::uint32_t> materials;  // empty, or same length as points
    ClassTable classes = ClassTable::standard();
    bool labels_from_file = false;  // set by the reader when a label field was present

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void add(const Vec3& p, std::uint32_t label) {
        points.push_back(p);
        labels.push_back(label);
    }

    /// Throws ValidationError if invariants do not hold.
    void validate() const;
};

}  // namespace lidarsim
