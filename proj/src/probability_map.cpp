#include "lidarsim/probability_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"

namespace lidarsim {

namespace {

constexpr char kMapMagic[8] = {'L', 'S', 'I', 'M', 'P', 'M', 'A', 'P'};
constexpr std::uint32_t kMapVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v, const std::filesystem::path& path) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (static_cast<std::size_t>(in.gcount()) != sizeof(T))
        throw ParseError("truncated probability map '" + path.string() + "'",
                         static_cast<std::size_t>(in.tellg()));
}

}  // namespace

GaussianTemplate GaussianTemplate::gaussian(int k, double sigma_cells) {
    if (k < 0) throw ValidationError("template half-width must be non-negative");
    if (sigma_cells <= 0.0) throw ValidationError("template sigma must be positive");
    GaussianTemplate t;
    t.k = k;
    const int side = 2 * k + 1;
    t.weights.resize(static_cast<std::size_t>(side) * side);
    const double inv = 1.0 / (2.0 * sigma_cells * sigma_cells);
    for (int m = -k; m <= k; ++m)
        for (int n = -k; n <= k; ++n)
            t.weights[static_cast<std::size_t>((m + k) * side + (n + k))] =
                std::exp(-(static_cast<double>(m * m + n * n)) * inv);
    t.validate();
    return t;
}

GaussianTemplate GaussianTemplate::from_weights(int k, std::vector<double> weights) {
    GaussianTemplate t;
    t.k = k;
    t.weights = std::move(weights);
    t.validate();
    return t;
}

void GaussianTemplate::validate() const {
    if (k < 0) throw ValidationError("template half-width must be non-negative");
    const int side = 2 * k + 1;
    if (weights.size() != static_cast<std::size_t>(side) * side)
        throw ValidationError("template weight count does not match its half-width");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ValidationError("template weights must be finite and non-negative");
    if (std::abs(at(0, 0) - 1.0) > 1e-12)
        throw ValidationError("template center weight must be 1");
    for (int m = -k; m <= k; ++m)
        for (int n = -k; n <= k; ++n)
            if (std::abs(at(m, n) - at(n, -m)) > 1e-12)
                throw ValidationError("template must be symmetric under quarter turns");
}

ProbabilityMap::ProbabilityMap(std::string category, double origin_x, double origin_y,
                               double cell_size, int nx, int ny)
    : category_(std::move(category)),
      origin_x_(origin_x),
      origin_y_(origin_y),
      cell_(cell_size),
      nx_(nx),
      ny_(ny) {
    if (cell_size <= 0.0) throw ValidationError("map cell size must be positive");
    if (nx <= 0 || ny <= 0) throw ValidationError("map dimensions must be positive");
    const std::size_t cells = static_cast<std::size_t>(nx) * ny;
    w_.assign(cells, 0.0);
    dx_.assign(cells, 0.0);
    dy_.assign(cells, 0.0);
}

std::pair<int, int> ProbabilityMap::cell_of(double x, double y) const {
    return {static_cast<int>(std::floor((x - origin_x_) / cell_)),
            static_cast<int>(std::floor((y - origin_y_) / cell_))};
}

void ProbabilityMap::add_observation(double x, double y, double yaw,
                                     const GaussianTemplate& t) {
    const auto [cx, cy] = cell_of(x, y);
    const double ux = std::cos(yaw);
    const double uy = std::sin(yaw);
    for (int m = -t.k; m <= t.k; ++m) {
        for (int n = -t.k; n <= t.k; ++n) {
            const int ix = cx + n;
            const int iy = cy + m;
            if (!in_grid(ix, iy)) continue;
            const double w = t.at(m, n);
            w_[idx(ix, iy)] += w;
            dx_[idx(ix, iy)] += w * ux;
            dy_[idx(ix, iy)] += w * uy;
        }
    }
}

std::optional<double> ProbabilityMap::resolved_direction(int ix, int iy) const {
    if (!in_grid(ix, iy)) return std::nullopt;
    const double x = dx_[idx(ix, iy)];
    const double y = dy_[idx(ix, iy)];
    if (std::hypot(x, y) < 1e-12) return std::nullopt;
    return std::atan2(y, x);
}

double ProbabilityMap::total_weight() const {
    double sum = 0.0;
    for (double w : w_) sum += w;
    return sum;
}

void ProbabilityMap::validate() const {
    if (cell_ <= 0.0) throw ValidationError("map cell size must be positive");
    if (nx_ <= 0 || ny_ <= 0) throw ValidationError("map dimensions must be positive");
    const std::size_t cells = static_cast<std::size_t>(nx_) * ny_;
    if (w_.size() != cells || dx_.size() != cells || dy_.size() != cells)
        throw ValidationError("map buffers do not match its dimensions");
    for (std::size_t i = 0; i < cells; ++i) {
        if (!(w_[i] >= 0.0) || !std::isfinite(w_[i]))
            throw ValidationError("map weights must be finite and non-negative");
        // accumulated unit vectors can never exceed the accumulated weight
        if (std::hypot(dx_[i], dy_[i]) > w_[i] + 1e-9)
            throw ValidationError("map direction accumulator exceeds its weight");
    }
}

void ProbabilityMap::save(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kMapMagic, 8);
    write_raw(out, kMapVersion);
    write_raw(out, std::uint32_t{0});  // reserved
    const auto name_len = static_cast<std::uint32_t>(category_.size());
    write_raw(out, name_len);
    out.write(category_.data(), name_len);
    write_raw(out, origin_x_);
    write_raw(out, origin_y_);
    write_raw(out, cell_);
    write_raw(out, static_cast<std::int32_t>(nx_));
    write_raw(out, static_cast<std::int32_t>(ny_));
    const auto bytes = static_cast<std::streamsize>(w_.size() * sizeof(double));
    out.write(reinterpret_cast<const char*>(w_.data()), bytes);
    out.write(reinterpret_cast<const char*>(dx_.data()), bytes);
    out.write(reinterpret_cast<const char*>(dy_.data()), bytes);
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ProbabilityMap ProbabilityMap::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMapMagic, 8) != 0)
        throw ParseError("'" + path.string() + "' is not a probability map", 0);
    std::uint32_t version = 0, reserved = 0;
    read_raw(in, version, path);
    read_raw(in, reserved, path);
    if (version != kMapVersion)
        throw ParseError("unsupported probability map version " + std::to_string(version), 8);
    std::uint32_t name_len = 0;
    read_raw(in, name_len, path);
    std::string category(name_len, '\0');
    in.read(category.data(), name_len);
    if (static_cast<std::size_t>(in.gcount()) != name_len)
        throw ParseError("truncated probability map category", 20);
    double ox = 0, oy = 0, cell = 0;
    std::int32_t nx = 0, ny = 0;
    read_raw(in, ox, path);
    read_raw(in, oy, path);
    read_raw(in, cell, path);
    read_raw(in, nx, path);
    read_raw(in, ny, path);
    if (cell <= 0.0 || nx <= 0 || ny <= 0)
        throw ParseError("probability map has invalid dimensions", 20);
    ProbabilityMap map(category, ox, oy, cell, nx, ny);
    const std::size_t cells = static_cast<std::size_t>(nx) * ny;
    const auto bytes = static_cast<std::streamsize>(cells * sizeof(double));
    in.read(reinterpret_cast<char*>(map.w_.data()), bytes);
    if (in.gcount() != bytes) throw ParseError("truncated probability map weights", 0);
    in.read(reinterpret_cast<char*>(map.dx_.data()), bytes);
    if (in.gcount() != bytes) throw ParseError("truncated probability map directions", 0);
    in.read(reinterpret_cast<char*>(map.dy_.data()), bytes);
    if (in.gcount() != bytes) throw ParseError("truncated probability map directions", 0);
    map.validate();
    return map;
}

std::map<std::string, ProbabilityMap> build_probability_maps(
    const std::vector<ObstacleAnnotation>& annotations, const Bounds2D& bounds, double cell_size,
    const GaussianTemplate& t) {
    if (cell_size <= 0.0) throw ValidationError("map cell size must be positive");
    if (!(bounds.max_x > bounds.min_x) || !(bounds.max_y > bounds.min_y))
        throw ValidationError("map bounds must span a positive area");
    t.validate();

    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto& a = annotations[i];
        if (!bounds.contains(a.position.x, a.position.y))
            throw ValidationError("annotation " + std::to_string(i) + " ('" + a.category +
                                  "') lies outside the map bounds");
        if (a.category.empty())
            throw ValidationError("annotation " + std::to_string(i) + " has an empty category");
    }

    const int nx = std::max(1, static_cast<int>(std::ceil((bounds.max_x - bounds.min_x) / cell_size)));
    const int ny = std::max(1, static_cast<int>(std::ceil((bounds.max_y - bounds.min_y) / cell_size)));

    std::map<std::string, ProbabilityMap> maps;
    for (const auto& a : annotations) {
        auto it = maps.find(a.category);
        if (it == maps.end())
            it = maps.emplace(a.category, ProbabilityMap(a.category, bounds.min_x, bounds.min_y,
                                                         cell_size, nx, ny))
                     .first;
        it->second.add_observation(a.position.x, a.position.y, a.yaw, t);
    }
    return maps;
}

std::vector<RigidPose> sample_poses(const ProbabilityMap& map, const RigidPose& scanner_pose,
                                    std::size_t count, std::mt19937_64& rng,
                                    const GroundModel& ground,
                                    const SamplePosesOptions& options) {
    map.validate();
    if (options.max_range <= 0.0) throw ValidationError("sampling range must be positive");

    // Cumulative weight over the cells the scanner could actually reach.
    std::vector<std::pair<std::pair<int, int>, double>> cumulative;
    cumulative.reserve(static_cast<std::size_t>(map.nx()) * map.ny());
    double total = 0.0;
    const double r2 = options.max_range * options.max_range;
    for (int iy = 0; iy < map.ny(); ++iy) {
        for (int ix = 0; ix < map.nx(); ++ix) {
            const double w = map.weight(ix, iy);
            if (w <= 0.0) continue;
            const double dx = map.cell_center_x(ix) - scanner_pose.translation.x;
            const double dy = map.cell_center_y(iy) - scanner_pose.translation.y;
            if (dx * dx + dy * dy > r2) continue;
            total += w;
            cumulative.push_back({{ix, iy}, total});
        }
    }
    if (cumulative.empty() || total <= 0.0) throw NoPlacementMassError(map.category());

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, options.yaw_jitter_sigma);

    std::vector<RigidPose> poses;
    poses.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        const double u = unit(rng) * total;
        auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u,
                                   [](const auto& entry, double v) { return entry.second < v; });
        if (it == cumulative.end()) --it;
        const auto [ix, iy] = it->first;

        const double x = map.origin_x() + (ix + unit(rng)) * map.cell_size();
        const double y = map.origin_y() + (iy + unit(rng)) * map.cell_size();

        double yaw;
        const auto preferred = map.resolved_direction(ix, iy);
        if (preferred)
            yaw = wrap_angle(*preferred + jitter(rng));
        else
            yaw = wrap_angle((unit(rng) * 2.0 - 1.0) * kPi);

        const auto z = ground.height_at(x, y);
        poses.push_back(RigidPose::from_yaw({x, y, z.value_or(0.0)}, yaw));
    }
    return poses;
}

std::vector<RigidPose> sample_poses(const ProbabilityMap& map, const RigidPose& scanner_pose,
                                    std::size_t count, std::uint64_t rng_seed,
                                    const GroundModel& ground,
                                    const SamplePosesOptions& options) {
    std::mt19937_64 rng = make_engine(rng_seed);
    return sample_poses(map, scanner_pose, count, rng, ground, options);
}

std::vector<ObstacleAnnotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<ObstacleAnnotation> out;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        ObstacleAnnotation a;
        if (!(ss >> a.category)) continue;
        if (!(ss >> a.position.x >> a.position.y >> a.position.z >> a.yaw))
            throw ParseError("malformed annotation record (want `category x y z yaw`)",
                             line_start);
        std::string extra;
        if (ss >> extra) throw ParseError("trailing tokens after annotation record", line_start);
        out.push_back(std::move(a));
    }
    return out;
}

void save_annotations(const std::vector<ObstacleAnnotation>& annotations,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "# category x y z yaw\n";
    out.precision(17);
    for (const auto& a : annotations)
        out << a.category << " " << a.position.x << " " << a.position.y << " " << a.position.z
            << " " << a.yaw << "\n";
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lidarsim
