#include "lidarsim/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

#include "lidarsim/errors.hpp"

namespace lidarsim {

Aabb TriangleMesh::bounds() const {
    Aabb box;
    for (const Vec3& v : vertices) box.expand(v);
    return box;
}

std::size_t TriangleMesh::remove_degenerate(double area_eps) {
    std::size_t kept = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        if (triangle_area(t) <= area_eps) continue;
        triangles[kept] = triangles[t];
        if (!tri_materials.empty()) tri_materials[kept] = tri_materials[t];
        ++kept;
    }
    const std::size_t dropped = triangles.size() - kept;
    triangles.resize(kept);
    if (!tri_materials.empty()) tri_materials.resize(kept);
    return dropped;
}

TriangleMesh TriangleMesh::transformed(const RigidPose& pose) const {
    TriangleMesh out = *this;
    for (Vec3& v : out.vertices) v = pose.apply(v);
    return out;
}

void TriangleMesh::validate() const {
    if (!tri_materials.empty() && tri_materials.size() != triangles.size())
        throw ValidationError("tri_materials size does not match triangle count");
    for (const auto& tri : triangles)
        for (std::uint32_t idx : tri)
            if (idx >= vertices.size())
                throw ValidationError("triangle references vertex " + std::to_string(idx) +
                                      " but mesh has " + std::to_string(vertices.size()) +
                                      " vertices");
    for (std::uint32_t slot : tri_materials)
        if (slot >= materials.size())
            throw ValidationError("triangle references material slot " + std::to_string(slot) +
                                  " but mesh has " + std::to_string(materials.size()) + " slots");
    for (const Vec3& v : vertices)
        if (!v.finite()) throw ValidationError("mesh vertex is not finite");
    for (const Material& m : materials)
        if (m.reflectivity < 0.0 || m.reflectivity > 1.0)
            throw ValidationError("material reflectivity outside [0, 1]");
}

namespace {

bool name_implies_transparent(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lower.find("glass") != std::string::npos;
}

// "3", "3/1", "3//2", "3/1/2" -> vertex index; negative counts from the end
std::uint32_t parse_face_vertex(const std::string& token, std::size_t vertex_count,
                                std::size_t offset) {
    const std::size_t slash = token.find('/');
    const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
    long idx = 0;
    try {
        idx = std::stol(head);
    } catch (const std::exception&) {
        throw ParseError("malformed face index '" + token + "'", offset);
    }
    if (idx < 0) idx = static_cast<long>(vertex_count) + idx + 1;
    if (idx < 1 || idx > static_cast<long>(vertex_count))
        throw ParseError("face index " + head + " out of range", offset);
    return static_cast<std::uint32_t>(idx - 1);
}

}  // namespace

TriangleMesh load_obj(const std::filesystem::path& path, const Material& base_material,
                      ObjLoadStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

    TriangleMesh mesh;
    mesh.materials.push_back(base_material);
    mesh.material_names.push_back("default");
    std::uint32_t current_slot = 0;

    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x >> v.y >> v.z))
                throw ParseError("malformed vertex record", line_start);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ss >> tok)
                poly.push_back(parse_face_vertex(tok, mesh.vertices.size(), line_start));
            if (poly.size() < 3) throw ParseError("face with fewer than 3 vertices", line_start);
            for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
                mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
                mesh.tri_materials.push_back(current_slot);
            }
        } else if (tag == "usemtl") {
            std::string name;
            ss >> name;
            auto it = std::find(mesh.material_names.begin(), mesh.material_names.end(), name);
            if (it == mesh.material_names.end()) {
                Material m = base_material;
                m.transparent = name_implies_transparent(name);
                mesh.materials.push_back(m);
                mesh.material_names.push_back(name);
                current_slot = static_cast<std::uint32_t>(mesh.materials.size() - 1);
            } else {
                current_slot =
                    static_cast<std::uint32_t>(it - mesh.material_names.begin());
            }
        }
        // vn/vt/o/g/s/mtllib records carry no geometry we use
    }
    if (mesh.vertices.empty() || mesh.triangles.empty())
        throw ParseError("OBJ contains no triangles", offset);

    ObjLoadStats local;
    local.degenerate_dropped = mesh.remove_degenerate();
    if (mesh.triangles.empty()) throw ParseError("OBJ contains only degenerate triangles", offset);
    if (stats) *stats = local;
    mesh.validate();
    return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    mesh.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    std::ostringstream body;
    body.precision(9);
    for (const Vec3& v : mesh.vertices) body << "v " << v.x << " " << v.y << " " << v.z << "\n";
    std::uint32_t last_slot = std::numeric_limits<std::uint32_t>::max();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const std::uint32_t slot = mesh.tri_materials.empty() ? 0u : mesh.tri_materials[t];
        if (slot != last_slot && slot < mesh.material_names.size()) {
            body << "usemtl " << mesh.material_names[slot] << "\n";
            last_slot = slot;
        }
        const auto& tri = mesh.triangles[t];
        body << "f " << tri[0] + 1 << " " << tri[1] + 1 << " " << tri[2] + 1 << "\n";
    }
    out << body.str();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

TriangleMesh make_box_mesh(const Vec3& min, const Vec3& max, std::uint32_t material_slot) {
    TriangleMesh mesh;
    mesh.materials.resize(material_slot + 1);
    mesh.material_names.resize(material_slot + 1, "default");
    mesh.vertices = {
        {min.x, min.y, min.z}, {max.x, min.y, min.z}, {max.x, max.y, min.z}, {min.x, max.y, min.z},
        {min.x, min.y, max.z}, {max.x, min.y, max.z}, {max.x, max.y, max.z}, {min.x, max.y, max.z},
    };
    // outward-facing CCW winding
    const std::array<std::array<std::uint32_t, 3>, 12> tris = {{
        {0, 2, 1}, {0, 3, 2},  // -z
        {4, 5, 6}, {4, 6, 7},  // +z
        {0, 1, 5}, {0, 5, 4},  // -y
        {3, 7, 6}, {3, 6, 2},  // +y
        {0, 4, 7}, {0, 7, 3},  // -x
        {1, 2, 6}, {1, 6, 5},  // +x
    }};
    mesh.triangles.assign(tris.begin(), tris.end());
    mesh.tri_materials.assign(12, material_slot);
    return mesh;
}

}  // namespace lidarsim
