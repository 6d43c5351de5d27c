"""Data-driven LiDAR frame simulator: scanned backgrounds plus statistically
placed CAD obstacles, rendered through a physically modeled multi-beam sensor."""

from ._core import (
    BeamTable,
    EnergyModel,
    IncidenceConvention,
    RunConfig,
    SensorConfig,
    build_maps,
    calibrate,
    clean_background,
    derive_seed,
    ideal_beam_table,
    load_run_config,
    load_sensor_config,
    read_frame,
    return_energy,
    save_sensor_config,
    simulate,
    stats,
)

__all__ = [
    "BeamTable",
    "EnergyModel",
    "IncidenceConvention",
    "RunConfig",
    "SensorConfig",
    "build_maps",
    "calibrate",
    "clean_background",
    "derive_seed",
    "ideal_beam_table",
    "load_run_config",
    "load_sensor_config",
    "read_frame",
    "return_energy",
    "save_sensor_config",
    "simulate",
    "stats",
]
