"""Exception types shared across the simulator.

Each maps to a CLI exit code: ConfigError -> 2, SyncFailure and
PilotLostError -> 3, CalibrationError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class PilotLostError(RuntimeError):
    """Pilot tone power below the configured floor; phase recovery impossible."""


class SyncFailure(RuntimeError):
    """Clock synchronisation did not find an unambiguous correlation peak."""


class CalibrationError(ValueError):
    """Calibration data missing or yielding a non-positive shot-noise unit."""
