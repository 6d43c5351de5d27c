#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"
#include "lidarsim/mesh.hpp"
#include "lidarsim/point_cloud.hpp"

namespace testutil {

using lidarsim::TriangleMesh;
using lidarsim::Vec3;

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "lidarsim_test") {
        const auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto candidate = base / (tag + "_" + std::to_string(rd()));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create temp directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Moller-Trumbore, used as the independent ray casting oracle.
inline std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                          const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = s.dot(p) * inv;
    if (u < -1e-12 || u > 1.0 + 1e-12) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) return std::nullopt;
    const double t = e2.dot(q) * inv;
    if (t <= 1e-9) return std::nullopt;
    return t;
}

/// Nearest hit over every triangle of every mesh; the brute-force reference.
inline std::optional<double> brute_force_raycast(const std::vector<const TriangleMesh*>& meshes,
                                                 const Vec3& origin, const Vec3& dir) {
    std::optional<double> best;
    for (const TriangleMesh* mesh : meshes) {
        for (const auto& tri : mesh->triangles) {
            const auto t = ray_triangle(origin, dir, mesh->vertices[tri[0]],
                                        mesh->vertices[tri[1]], mesh->vertices[tri[2]]);
            if (t && (!best || *t < *best)) best = t;
        }
    }
    return best;
}

inline std::vector<std::uint32_t> brute_force_radius(const std::vector<Vec3>& points,
                                                     const Vec3& center, double radius) {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if ((points[i] - center).norm() <= radius) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

/// Random points with float32-representable coordinates so that file
/// round-trips can be compared exactly.
inline std::vector<Vec3> random_f32_points(std::size_t n, std::uint64_t seed, double lo = -50.0,
                                           double hi = 50.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back({static_cast<float>(u(rng)), static_cast<float>(u(rng)),
                       static_cast<float>(u(rng))});
    return pts;
}

/// Relative paths of every regular file under `root`, sorted.
inline std::vector<std::string> list_tree(const std::filesystem::path& root) {
    std::vector<std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.push_back(entry.path().lexically_relative(root).generic_string());
    std::sort(out.begin(), out.end());
    return out;
}

/// True when both trees hold the same files with byte-identical content.
/// On mismatch, `why` names the first offending path.
inline bool trees_equal(const std::filesystem::path& a, const std::filesystem::path& b,
                        std::string* why = nullptr) {
    const auto files_a = list_tree(a);
    const auto files_b = list_tree(b);
    if (files_a != files_b) {
        if (why) *why = "file lists differ";
        return false;
    }
    for (const auto& rel : files_a) {
        if (read_bytes(a / rel) != read_bytes(b / rel)) {
            if (why) *why = rel;
            return false;
        }
    }
    return true;
}

inline Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    while (true) {
        const Vec3 v{g(rng), g(rng), g(rng)};
        const double n = v.norm();
        if (n > 1e-6) return v / n;
    }
}

}  // namespace testutil
