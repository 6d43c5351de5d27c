#include "lidarsim/point_cloud.hpp"

#include "lidarsim/errors.hpp"

namespace lidarsim {

ClassTable ClassTable::standard() {
    ClassTable t;
    t.names = {"unknown",  "ground",  "building",   "vegetation",   "pole",          "fence",
               "car",      "truck_bus", "cyclist",  "pedestrian",   "traffic_cone",  "other_movable"};
    return t;
}

std::optional<std::uint32_t> ClassTable::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<std::uint32_t>(i);
    return std::nullopt;
}

std::uint32_t ClassTable::ensure(const std::string& name) {
    if (auto id = find(name)) return *id;
    names.push_back(name);
    return static_cast<std::uint32_t>(names.size() - 1);
}

const std::string& ClassTable::name_of(std::uint32_t id) const {
    static const std::string unknown = "unknown";
    if (id >= names.size()) return unknown;
    return names[id];
}

std::set<std::uint32_t> ClassTable::default_movable() const {
    std::set<std::uint32_t> out;
    for (const char* name :
         {"car", "truck_bus", "cyclist", "pedestrian", "traffic_cone", "other_movable"}) {
        if (auto id = find(name)) out.insert(*id);
    }
    return out;
}

void SemanticPointCloud::validate() const {
    if (labels.size() != points.size())
        throw ValidationError("label count does not match point count");
    if (!materials.empty() && materials.size() != points.size())
        throw ValidationError("material count does not match point count");
    for (const Vec3& p : points)
        if (!p.finite()) throw ValidationError("non-finite point coordinate");
    for (std::uint32_t l : labels)
        if (l >= classes.size()) throw ValidationError("label outside registered class table");
}

}  // namespace lidarsim
