#include "lidarsim/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "lidarsim/config.hpp"
#include "lidarsim/errors.hpp"
#include "lidarsim/rng.hpp"

namespace lidarsim {

double return_energy(const EnergyModel& model, double r_rel, double incident_angle,
                     double distance) {
    if (r_rel < 0.0 || r_rel > 1.0)
        throw ValidationError("relative reflection rate must lie in [0, 1]");
    if (distance < 0.0) throw ValidationError("distance must be non-negative");
    if (incident_angle < -1e-9 || incident_angle > kPi / 2.0 + 1e-9)
        throw ValidationError("incident angle must lie in [0, pi/2]");
    const double c = std::clamp(std::cos(incident_angle), 0.0, 1.0);
    const double r_ia = model.convention == IncidenceConvention::Literal ? std::sqrt(1.0 - c)
                                                                         : std::sqrt(c);
    const double r_atm = std::exp(-model.sigma_air * distance);
    return model.e_emit * r_rel * r_ia * r_atm;
}

std::size_t SensorConfig::azimuth_step_count() const {
    return static_cast<std::size_t>(std::llround(horizontal_fov_deg / azimuth_step_deg));
}

double SensorConfig::resolved_threshold() const {
    if (energy_threshold >= 0.0) return energy_threshold;
    return 0.05 * e_emit * std::exp(-sigma_air * max_range);
}

EnergyModel SensorConfig::energy_model() const {
    EnergyModel model;
    model.e_emit = e_emit;
    model.sigma_air = sigma_air;
    model.threshold = resolved_threshold();
    model.convention = incidence_convention;
    return model;
}

void SensorConfig::validate() const {
    if (channels < 1) throw ValidationError("sensor needs at least one channel");
    if (!(vertical_fov_min_deg < vertical_fov_max_deg))
        throw ValidationError("vertical FOV must span a positive range");
    if (!(horizontal_fov_deg > 0.0) || horizontal_fov_deg > 360.0)
        throw ValidationError("horizontal FOV must lie in (0, 360]");
    if (!(azimuth_step_deg > 0.0)) throw ValidationError("azimuth step must be positive");
    if (azimuth_step_count() < 1) throw ValidationError("azimuth step exceeds the horizontal FOV");
    if (!(max_range > 0.0)) throw ValidationError("max range must be positive");
    if (!(e_emit > 0.0)) throw ValidationError("emitted energy must be positive");
    if (sigma_air < 0.0) throw ValidationError("air attenuation must be non-negative");
    if (distance_noise_sigma < 0.0 || azimuth_noise_sigma_deg < 0.0 ||
        beam_noise_sigma_deg < 0.0 || beam_angle_jitter_sigma_deg < 0.0)
        throw ValidationError("noise sigmas must be non-negative");
}

void BeamTable::validate() const {
    if (vertical_angle_deg.empty()) throw ValidationError("beam table is empty");
    if (variance_deg2.size() != vertical_angle_deg.size())
        throw ValidationError("beam table angle/variance lengths differ");
    for (std::size_t i = 0; i < size(); ++i) {
        if (!std::isfinite(vertical_angle_deg[i]))
            throw ValidationError("beam angle must be finite");
        if (!(variance_deg2[i] >= 0.0) || !std::isfinite(variance_deg2[i]))
            throw ValidationError("beam variance must be finite and non-negative");
        if (i > 0 && !(vertical_angle_deg[i] > vertical_angle_deg[i - 1]))
            throw ValidationError("beam angles must be strictly increasing");
    }
}

void BeamTable::save_csv(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "beam,vertical_angle_deg,variance_deg2\n";
    out.precision(17);
    for (std::size_t i = 0; i < size(); ++i)
        out << i << "," << vertical_angle_deg[i] << "," << variance_deg2[i] << "\n";
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

BeamTable BeamTable::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line)) throw ParseError("empty beam table", 0);
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "beam,vertical_angle_deg,variance_deg2")
        throw ParseError("beam table header mismatch", 0);

    BeamTable table;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::size_t index = 0;
        double angle = 0.0, variance = 0.0;
        try {
            if (!std::getline(ss, cell, ',')) throw std::invalid_argument(line);
            index = std::stoull(cell);
            if (!std::getline(ss, cell, ',')) throw std::invalid_argument(line);
            angle = std::stod(cell);
            if (!std::getline(ss, cell, ',')) throw std::invalid_argument(line);
            variance = std::stod(cell);
        } catch (const std::exception&) {
            throw ParseError("malformed beam table row", line_start);
        }
        if (index != table.size())
            throw ParseError("beam table rows must be in beam order", line_start);
        table.vertical_angle_deg.push_back(angle);
        table.variance_deg2.push_back(variance);
    }
    table.validate();
    return table;
}

BeamTable ideal_beam_table(const SensorConfig& config) {
    config.validate();
    BeamTable table;
    table.vertical_angle_deg.resize(static_cast<std::size_t>(config.channels));
    table.variance_deg2.assign(static_cast<std::size_t>(config.channels),
                               config.beam_noise_sigma_deg * config.beam_noise_sigma_deg);
    const double lo = config.vertical_fov_min_deg;
    const double hi = config.vertical_fov_max_deg;
    if (config.channels == 1) {
        table.vertical_angle_deg[0] = 0.5 * (lo + hi);
        return table;
    }
    const double denom = static_cast<double>(config.channels - 1);
    for (int i = 0; i < config.channels; ++i) {
        const double s = static_cast<double>(i) / denom;
        // lerp form keeps the endpoints exact
        table.vertical_angle_deg[static_cast<std::size_t>(i)] = lo * (1.0 - s) + hi * s;
    }
    return table;
}

BeamFit fit_beam_cone(const std::vector<Vec3>& points) {
    if (points.size() < 10) throw TooFewPointsError(points.size(), 10);
    std::vector<double> elevations;
    elevations.reserve(points.size());
    for (const Vec3& p : points) {
        const double r = p.norm();
        if (r < 1e-9) throw ValidationError("beam fit point coincides with the sensor origin");
        elevations.push_back(rad_to_deg(std::asin(p.z / r)));
    }
    double mean = 0.0;
    for (double e : elevations) mean += e;
    mean /= static_cast<double>(elevations.size());
    double ss = 0.0;
    for (double e : elevations) ss += (e - mean) * (e - mean);
    BeamFit fit;
    fit.vertical_angle_deg = mean;
    fit.variance_deg2 = ss / static_cast<double>(elevations.size() - 1);
    return fit;
}

SensorModel make_sensor_model(const SensorConfig& config, std::uint64_t instance_seed) {
    config.validate();
    if (config.beam_table_path) {
        BeamTable table = BeamTable::load_csv(*config.beam_table_path);
        return make_sensor_model(config, table);
    }
    BeamTable table = ideal_beam_table(config);
    if (config.beam_angle_jitter_sigma_deg > 0.0) {
        std::mt19937_64 rng = make_engine(instance_seed);
        std::normal_distribution<double> jitter(0.0, config.beam_angle_jitter_sigma_deg);
        for (double& angle : table.vertical_angle_deg) angle += jitter(rng);
        // the physical beam stack stays ordered even though offsets may swap
        // neighbors; keep the table sorted and strictly increasing
        std::sort(table.vertical_angle_deg.begin(), table.vertical_angle_deg.end());
        for (std::size_t i = 1; i < table.size(); ++i)
            table.vertical_angle_deg[i] =
                std::max(table.vertical_angle_deg[i], table.vertical_angle_deg[i - 1] + 1e-9);
    }
    table.validate();
    return SensorModel{config, std::move(table)};
}

SensorModel make_sensor_model(const SensorConfig& config, const BeamTable& table) {
    config.validate();
    table.validate();
    if (table.size() != static_cast<std::size_t>(config.channels))
        throw ValidationError("beam table has " + std::to_string(table.size()) +
                              " beams but the sensor has " + std::to_string(config.channels) +
                              " channels");
    return SensorModel{config, table};
}

std::vector<BeamSample> generate_beam_directions(const BeamTable& table,
                                                 const SensorConfig& config,
                                                 std::uint64_t rng_seed) {
    config.validate();
    table.validate();
    if (table.size() != static_cast<std::size_t>(config.channels))
        throw ValidationError("beam table size does not match the channel count");

    std::mt19937_64 rng = make_engine(rng_seed);
    std::normal_distribution<double> azimuth_noise(0.0, config.azimuth_noise_sigma_deg);

    const std::size_t steps = config.azimuth_step_count();
    std::vector<BeamSample> samples;
    samples.reserve(steps * table.size());
    for (std::size_t a = 0; a < steps; ++a) {
        const double base_azimuth = static_cast<double>(a) * config.azimuth_step_deg;
        for (std::size_t b = 0; b < table.size(); ++b) {
            const double azimuth_deg =
                config.azimuth_noise_sigma_deg > 0.0 ? base_azimuth + azimuth_noise(rng)
                                                     : base_azimuth;
            double elevation_deg = table.vertical_angle_deg[b];
            const double sigma = std::sqrt(table.variance_deg2[b]);
            if (sigma > 0.0) {
                std::normal_distribution<double> beam_noise(0.0, sigma);
                elevation_deg += beam_noise(rng);
            }
            const double az = deg_to_rad(azimuth_deg);
            const double el = deg_to_rad(elevation_deg);
            BeamSample s;
            s.beam = static_cast<std::uint32_t>(b);
            s.azimuth_index = static_cast<std::uint32_t>(a);
            s.direction = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                           std::sin(el)};
            samples.push_back(s);
        }
    }
    return samples;
}

SensorConfig load_sensor_config(const std::filesystem::path& path) {
    KeyValueFile kv = KeyValueFile::parse(path, "lidarsim_sensor", 1);
    SensorConfig config;
    config.channels = static_cast<int>(kv.get_int_or("channels", config.channels));
    config.vertical_fov_min_deg =
        kv.get_double_or("vertical_fov_min_deg", config.vertical_fov_min_deg);
    config.vertical_fov_max_deg =
        kv.get_double_or("vertical_fov_max_deg", config.vertical_fov_max_deg);
    config.horizontal_fov_deg = kv.get_double_or("horizontal_fov_deg", config.horizontal_fov_deg);
    config.azimuth_step_deg = kv.get_double_or("azimuth_step_deg", config.azimuth_step_deg);
    config.max_range = kv.get_double_or("max_range", config.max_range);
    config.e_emit = kv.get_double_or("e_emit", config.e_emit);
    config.sigma_air = kv.get_double_or("sigma_air", config.sigma_air);
    config.energy_threshold = kv.get_double_or("energy_threshold", config.energy_threshold);
    config.distance_noise_sigma =
        kv.get_double_or("distance_noise_sigma", config.distance_noise_sigma);
    config.azimuth_noise_sigma_deg =
        kv.get_double_or("azimuth_noise_sigma_deg", config.azimuth_noise_sigma_deg);
    config.beam_noise_sigma_deg =
        kv.get_double_or("beam_noise_sigma_deg", config.beam_noise_sigma_deg);
    config.beam_angle_jitter_sigma_deg =
        kv.get_double_or("beam_angle_jitter_sigma_deg", config.beam_angle_jitter_sigma_deg);
    const std::string convention = kv.get_string_or("incidence_convention", "literal");
    if (convention == "literal")
        config.incidence_convention = IncidenceConvention::Literal;
    else if (convention == "complementary")
        config.incidence_convention = IncidenceConvention::Complementary;
    else
        throw ValidationError("incidence_convention must be 'literal' or 'complementary'");
    if (kv.has("beam_table")) {
        std::filesystem::path table(kv.get_string("beam_table"));
        if (table.is_relative()) table = path.parent_path() / table;
        config.beam_table_path = table;
    }
    kv.finish();
    config.validate();
    return config;
}

void save_sensor_config(const SensorConfig& config, const std::filesystem::path& path) {
    config.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.precision(17);
    out << "lidarsim_sensor 1\n";
    out << "channels " << config.channels << "\n";
    out << "vertical_fov_min_deg " << config.vertical_fov_min_deg << "\n";
    out << "vertical_fov_max_deg " << config.vertical_fov_max_deg << "\n";
    out << "horizontal_fov_deg " << config.horizontal_fov_deg << "\n";
    out << "azimuth_step_deg " << config.azimuth_step_deg << "\n";
    out << "max_range " << config.max_range << "\n";
    out << "e_emit " << config.e_emit << "\n";
    out << "sigma_air " << config.sigma_air << "\n";
    out << "energy_threshold " << config.energy_threshold << "\n";
    out << "distance_noise_sigma " << config.distance_noise_sigma << "\n";
    out << "azimuth_noise_sigma_deg " << config.azimuth_noise_sigma_deg << "\n";
    out << "beam_noise_sigma_deg " << config.beam_noise_sigma_deg << "\n";
    out << "beam_angle_jitter_sigma_deg " << config.beam_angle_jitter_sigma_deg << "\n";
    out << "incidence_convention "
        << (config.incidence_convention == IncidenceConvention::Literal ? "literal"
                                                                        : "complementary")
        << "\n";
    if (config.beam_table_path) out << "beam_table " << config.beam_table_path->string() << "\n";
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lidarsim
