"""Fibre channel model: loss, delay, laser phase noise, frequency offset,
and optional excess-noise injection.

All operations are value-in/value-out on :class:`DualPolFrame`; randomness
enters only through an explicitly passed generator, so identical
configuration and seed reproduce bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .wavegen import DualPolFrame, IQTrace


@dataclass
class ChannelConfig:
    """Channel parameters.

    Transmittance may be given directly or derived from a fibre length at
    ``attenuation_db_per_km``. The two laser linewidths are combined into a
    single Wiener process since only the relative phase is observable.
    """

    transmittance: Optional[float] = None
    fibre_length_km: Optional[float] = None
    attenuation_db_per_km: float = 0.2
    freq_offset: float = 0.0
    combined_linewidth: float = 0.0
    injected_excess_noise: float = 0.0
    delay_samples: int = 0
    rng_seed: int = 0

    def resolved_transmittance(self) -> float:
        if self.transmittance is not None:
            t = self.transmittance
        elif self.fibre_length_km is not None:
            t = 10 ** (-self.attenuation_db_per_km * self.fibre_length_km / 10.0)
        else:
            t = 1.0
        if not 0 < t <= 1:
            raise ConfigError("transmittance must lie in (0, 1]")
        return t

    def validate(self, sample_rate: float, pilot_freq: float) -> None:
        self.resolved_transmittance()
        if self.combined_linewidth < 0:
            raise ConfigError("combined_linewidth must be >= 0")
        if self.injected_excess_noise < 0:
            raise ConfigError("injected_excess_noise must be >= 0")
        if self.delay_samples < 0:
            raise ConfigError("delay_samples must be >= 0")
        if abs(self.freq_offset) >= sample_rate / 2 - pilot_freq:
            raise ConfigError("freq_offset would alias the pilot tone")


def _both(frame: DualPolFrame, fn) -> DualPolFrame:
    return DualPolFrame(
        frame.quantum.copy_with(fn(frame.quantum.samples)),
        frame.pilot.copy_with(fn(frame.pilot.samples)),
        metadata=dict(frame.metadata),
    )


def apply_loss(frame: DualPolFrame, transmittance: float) -> DualPolFrame:
    """Scale both tributaries by sqrt(T)."""
    if not 0 < transmittance <= 1:
        raise ConfigError("transmittance must lie in (0, 1]")
    root = np.sqrt(transmittance)
    return _both(frame, lambda x: x * root)


def apply_delay(frame: DualPolFrame, delay_samples: int) -> DualPolFrame:
    """Cyclically delay both tributaries by an integer number of samples."""
    if delay_samples < 0:
        raise ConfigError("delay_samples must be >= 0")
    d = delay_samples % len(frame)
    return _both(frame, lambda x: np.roll(x, d))


def apply_phase_path(frame: DualPolFrame, phase: np.ndarray) -> DualPolFrame:
    """Multiply both tributaries by exp(i*phase[n]) (common source laser)."""
    phase = np.asarray(phase, dtype=np.float64)
    if phase.size != len(frame):
        raise ValueError("phase path length must match the frame")
    rot = np.exp(1j * phase)
    return _both(frame, lambda x: x * rot)


def wiener_phase(
    linewidth: float, n: int, sample_rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Random-walk phase with increment variance 2*pi*linewidth/sample_rate."""
    if linewidth < 0:
        raise ConfigError("linewidth must be >= 0")
    if linewidth == 0:
        return np.zeros(n)
    sigma = np.sqrt(2 * np.pi * linewidth / sample_rate)
    steps = rng.standard_normal(n) * sigma
    steps[0] = 0.0
    return np.cumsum(steps)


def apply_phase_noise(
    frame: DualPolFrame, linewidth: float, rng: np.random.Generator
) -> DualPolFrame:
    """Apply one shared Wiener phase realisation to both tributaries."""
    phase = wiener_phase(linewidth, len(frame), frame.sample_rate, rng)
    return apply_phase_path(frame, phase)


def apply_frequency_offset(frame: DualPolFrame, df: float) -> DualPolFrame:
    """Rotate both tributaries by exp(i*2*pi*df*t)."""
    fs = frame.sample_rate
    pilot_freq = frame.metadata.get("pilot_freq", 0.0)
    if abs(df) >= fs / 2 - pilot_freq:
        raise ConfigError("frequency offset would alias the pilot tone")
    t = np.arange(len(frame)) / fs
    return apply_phase_path(frame, 2 * np.pi * df * t)


def inject_excess_noise(
    frame: DualPolFrame, xi_ch: float, rng: np.random.Generator
) -> DualPolFrame:
    """Add receiver-referred Gaussian excess noise to the quantum tributary.

    The added field noise carries per-quadrature variance ``xi_ch`` before
    the receiver's measurement split, so a downstream dual-quadrature
    measurement sees xi_ch/2 extra variance per arm and the standard
    conditional-variance estimator reads back ``xi_ch`` in total.
    """
    if xi_ch < 0:
        raise ConfigError("xi_ch must be >= 0")
    if xi_ch == 0:
        return _both(frame, lambda x: x.copy())
    n = len(frame)
    noise = np.sqrt(xi_ch) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return DualPolFrame(
        frame.quantum.copy_with(frame.quantum.samples + noise),
        frame.pilot.copy_with(frame.pilot.samples.copy()),
        metadata=dict(frame.metadata),
    )


def apply_channel(
    frame: DualPolFrame, cfg: ChannelConfig, rng: Optional[np.random.Generator] = None
) -> DualPolFrame:
    """Full channel: loss -> delay -> phase noise -> frequency offset -> noise."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    out = apply_loss(frame, cfg.resolved_transmittance())
    if cfg.delay_samples:
        out = apply_delay(out, cfg.delay_samples)
    if cfg.combined_linewidth > 0:
        out = apply_phase_noise(out, cfg.combined_linewidth, rng)
    if cfg.freq_offset:
        out = apply_frequency_offset(out, cfg.freq_offset)
    if cfg.injected_excess_noise > 0:
        out = inject_excess_noise(out, cfg.injected_excess_noise, rng)
    return out
