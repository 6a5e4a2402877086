"""PL6 divacancy magnetometry and relaxometry of a van der Waals ferromagnet."""

from ._core import (
    FlakeGeometry,
    FluctuationModel,
    MagnetizationModel,
    OdmrSpectrum,
    PhononModelParams,
    SensorPlacement,
    SensorSpinModel,
    SicmagError,
    __version__,
    calibrate_phonon,
    default_config_json,
    differential_field,
    differential_rate,
    estimate_tc,
    extract_field,
    field_at_sensor,
    field_from_splitting,
    fit_fluctuation_model,
    fit_phonon_model,
    fit_trace,
    fluctuation_rate,
    fluctuation_with_peak,
    log_delays,
    magnetization,
    phonon_rate,
    reproduce,
    stray_field,
    synthesize_spectrum,
    synthesize_trace,
    transition_frequencies,
    zfs_at,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
