#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lidarsim/geometry.hpp"

namespace lidarsim {

/// Which reflection-rate convention the energy model applies. `Literal`
/// evaluates (1 - cos(theta))^0.5 with theta the beam/normal angle, so the
/// return vanishes at normal incidence; `Complementary` uses (cos(theta))^0.5.
enum class IncidenceConvention { Literal, Complementary };

/// Return-pulse energy model: E = E_emit * R_rel * R_ia * R_atm.
struct EnergyModel {
    double e_emit = 1.0;
    double sigma_air = 0.004;  // 1/m
    double threshold = 0.0;
    IncidenceConvention convention = IncidenceConvention::Literal;
};

/// incident_angle is measured from the surface normal, in [0, pi/2].
double return_energy(const EnergyModel& model, double r_rel, double incident_angle,
                     double distance);

/// Multi-beam scanner description. Angles in degrees, lengths in meters.
struct SensorConfig {
    int channels = 64;
    double vertical_fov_min_deg = -24.33;
    double vertical_fov_max_deg = 2.0;
    double horizontal_fov_deg = 360.0;
    double azimuth_step_deg = 0.2;
    double max_range = 120.0;
    double e_emit = 1.0;
    double sigma_air = 0.004;
    /// Negative means "auto": the threshold below which a 0.05-reflectivity
    /// grazing return from max range is dropped.
    double energy_threshold = -1.0;
    double distance_noise_sigma = 0.005;   // meters
    double azimuth_noise_sigma_deg = 0.05;
    double beam_noise_sigma_deg = 0.05;    // default per-beam vertical noise
    /// Spread of the per-instance vertical-angle offsets applied when no
    /// calibration table is supplied (real tables differ from ideal by a few
    /// degrees). Zero disables.
    double beam_angle_jitter_sigma_deg = 1.0;
    IncidenceConvention incidence_convention = IncidenceConvention::Literal;
    std::optional<std::filesystem::path> beam_table_path;

    std::size_t azimuth_step_count() const;
    double resolved_threshold() const;
    EnergyModel energy_model() const;
    void validate() const;
};

/// Per-beam vertical angles (strictly increasing) and noise variances.
struct BeamTable {
    std::vector<double> vertical_angle_deg;
    std::vector<double> variance_deg2;

    std::size_t size() const { return vertical_angle_deg.size(); }
    void validate() const;

    void save_csv(const std::filesystem::path& path) const;
    static BeamTable load_csv(const std::filesystem::path& path);
};

/// Evenly spaced beams from the vertical FOV limits, endpoints inclusive.
BeamTable ideal_beam_table(const SensorConfig& config);

struct BeamFit {
    double vertical_angle_deg = 0.0;
    double variance_deg2 = 0.0;
};

/// Fits one beam's cone from real points, apex at the origin: the vertical
/// angle is the mean point elevation, the variance the sample variance of
/// elevations. Requires at least 10 points. Throws TooFewPointsError.
BeamFit fit_beam_cone(const std::vector<Vec3>& points);

/// A sensor instance: config plus its concrete beam table. When no
/// calibration table is given, per-beam offsets are drawn once from the
/// config's jitter sigma so instances resemble real, imperfect devices.
struct SensorModel {
    SensorConfig config;
    BeamTable beams;
};

SensorModel make_sensor_model(const SensorConfig& config, std::uint64_t instance_seed);
SensorModel make_sensor_model(const SensorConfig& config, const BeamTable& table);

struct BeamSample {
    std::uint32_t beam = 0;
    std::uint32_t azimuth_index = 0;
    Vec3 direction;  // unit, sensor frame
};

/// One frame's worth of beam directions: for every azimuth step and channel,
/// the nominal angles plus per-beam and azimuth Gaussian noise. Count is
/// always channels x azimuth_step_count. Deterministic per seed.
std::vector<BeamSample> generate_beam_directions(const BeamTable& table,
                                                 const SensorConfig& config,
                                                 std::uint64_t rng_seed);

/// Key-value sensor config file, versioned, unknown keys rejected.
SensorConfig load_sensor_config(const std::filesystem::path& path);
void save_sensor_config(const SensorConfig& config, const std::filesystem::path& path);

}  // namespace lidarsim
