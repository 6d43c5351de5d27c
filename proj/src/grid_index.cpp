#include "lidarsim/grid_index.hpp"

#include <stdexcept>

#include "lidarsim/errors.hpp"

namespace lidarsim {

SpatialGridIndex::SpatialGridIndex(const std::vector<Vec3>& points, double cell_size)
    : pts_(points.data()), n_(points.size()), cell_(cell_size) {
    if (!(cell_size > 0.0)) throw ValidationError("cell size must be positive");
    cells_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i)
        cells_[key_of(pts_[i])].push_back(static_cast<std::uint32_t>(i));
}

SpatialGridIndex::CellKey SpatialGridIndex::key_of(const Vec3& p) const {
    return {static_cast<std::int32_t>(std::floor(p.x / cell_)),
            static_cast<std::int32_t>(std::floor(p.y / cell_)),
            static_cast<std::int32_t>(std::floor(p.z / cell_))};
}

std::vector<std::uint32_t> SpatialGridIndex::query(const Vec3& center, double radius) const {
    std::vector<std::uint32_t> out;
    if (n_ == 0 || radius < 0.0) return out;
    const double r2 = radius * radius;
    const CellKey lo = key_of({center.x - radius, center.y - radius, center.z - radius});
    const CellKey hi = key_of({center.x + radius, center.y + radius, center.z + radius});
    for (std::int32_t cx = lo.x; cx <= hi.x; ++cx)
        for (std::int32_t cy = lo.y; cy <= hi.y; ++cy)
            for (std::int32_t cz = lo.z; cz <= hi.z; ++cz) {
                auto it = cells_.find({cx, cy, cz});
                if (it == cells_.end()) continue;
                for (std::uint32_t i : it->second)
                    if ((pts_[i] - center).squared_norm() <= r2) out.push_back(i);
            }
    return out;
}

}  // namespace lidarsim
