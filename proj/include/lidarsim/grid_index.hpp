#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "lidarsim/geometry.hpp"

namespace lidarsim {

/// Uniform-grid spatial index over a fixed point array. Radius queries return
/// exactly the points within distance r (distances are re-checked, the grid
/// only prunes candidates). The indexed array must outlive the index.
class SpatialGridIndex {
public:
    SpatialGridIndex() = default;
    SpatialGridIndex(const std::vector<Vec3>& points, double cell_size);

    /// Indices of all points with |p - center| <= radius.
    std::vector<std::uint32_t> query(const Vec3& center, double radius) const;

    double cell_size() const { return cell_; }
    std::size_t point_count() const { return n_; }

private:
    struct CellKey {
        std::int32_t x = 0, y = 0, z = 0;
        bool operator==(const CellKey&) const = default;
    };
    struct CellHash {
        std::size_t operator()(const CellKey& k) const {
            // classic spatial hash mix
            std::uint64_t h = static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.x)) *
                              0x9E3779B185EBCA87ULL;
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.y)) *
                 0xC2B2AE3D27D4EB4FULL;
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.z)) *
                 0x165667B19E3779F9ULL;
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };

    CellKey key_of(const Vec3& p) const;

    const Vec3* pts_ = nullptr;
    std::size_t n_ = 0;
    double cell_ = 1.0;
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells_;
};

}  // namespace lidarsim
