"""Polarisation-diversity intradyne receiver model.

Models the 90-degree hybrid's imperfect polarisation splitting, simultaneous
dual-quadrature balanced detection with shot noise in shot-noise units,
detector electronic noise, common-mode leakage, optional detector-bandwidth
shaping, and block acquisition with serialisation.

The simulation works directly in SNU at complex baseband relative to the
local oscillator: LO power, responsivities and hybrid insertion losses are
absorbed into the shot-noise calibration instead of being modelled
photoelectrically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import lfilter, resample_poly

from .errors import ConfigError
from .wavegen import DualPolFrame, IQTrace


@dataclass
class RxConfig:
    """Receiver parameters. dB quantities are >= 0; ``inf`` disables an
    imperfection entirely."""

    pol_extinction_db: float = 20.0
    quantum_clearance_db: float = 20.0
    quantum_bandwidth: Optional[float] = None  # single-pole lowpass; None = flat
    pilot_receiver_noise: float = 5.0  # SNU per quadrature
    quantum_efficiency: float = 0.68
    pilot_efficiency: float = 0.76
    adc_rate: Optional[float] = None  # None: acquire at the input rate
    block_size_samples: int = 2**16
    cmrr_db: float = 40.0
    rng_seed: int = 0

    @property
    def quantum_receiver_noise(self) -> float:
        """Electronic noise per quadrature implied by the clearance."""
        if math.isinf(self.quantum_clearance_db):
            return 0.0
        return 10 ** (-self.quantum_clearance_db / 10.0)

    def validate(self) -> None:
        for name in ("pol_extinction_db", "quantum_clearance_db", "cmrr_db"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("quantum_efficiency", "pilot_efficiency"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.pilot_receiver_noise < 0:
            raise ConfigError("pilot_receiver_noise must be >= 0")
        if self.block_size_samples <= 0:
            raise ConfigError("block_size_samples must be > 0")
        if self.quantum_bandwidth is not None and self.quantum_bandwidth <= 0:
            raise ConfigError("quantum_bandwidth must be > 0 or None")
        if self.adc_rate is not None and self.adc_rate <= 0:
            raise ConfigError("adc_rate must be > 0 or None")


@dataclass
class MeasurementRecord:
    """One acquired block: the four balanced-detector output streams."""

    quantum_i: np.ndarray
    quantum_q: np.ndarray
    pilot_i: np.ndarray
    pilot_q: np.ndarray
    sample_rate: float
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    snu_scale: Optional[float] = None

    def __post_init__(self):
        n = len(self.quantum_i)
        for name in ("quantum_q", "pilot_i", "pilot_q"):
            if len(getattr(self, name)) != n:
                raise ValueError("all four streams must have equal length")

    @property
    def block_size(self) -> int:
        return len(self.quantum_i)

    def quantum_trace(self) -> IQTrace:
        return IQTrace(self.quantum_i + 1j * self.quantum_q, self.sample_rate)

    def pilot_trace(self) -> IQTrace:
        return IQTrace(self.pilot_i + 1j * self.pilot_q, self.sample_rate)

    def save(self, path) -> None:
        """Write ``<path>.bin`` (interleaved little-endian float64 qI,qQ,pI,pQ)
        plus a ``<path>.json`` sidecar header. Round-trips bit-exactly."""
        path = Path(path)
        inter = np.empty(4 * self.block_size, dtype="<f8")
        inter[0::4] = self.quantum_i
        inter[1::4] = self.quantum_q
        inter[2::4] = self.pilot_i
        inter[3::4] = self.pilot_q
        inter.tofile(path.with_suffix(".bin"))
        header = {
            "sample_rate": self.sample_rate,
            "block_size": self.block_size,
            "seed": self.seed,
            "config": self.config,
            "snu_scale": self.snu_scale,
            "layout": "interleaved little-endian float64 (qI,qQ,pI,pQ)",
        }
        path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        path = Path(path)
        header = json.loads(path.with_suffix(".json").read_text())
        inter = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        if inter.size != 4 * header["block_size"]:
            raise ValueError("binary payload does not match declared block size")
        return cls(
            quantum_i=inter[0::4].copy(),
            quantum_q=inter[1::4].copy(),
            pilot_i=inter[2::4].copy(),
            pilot_q=inter[3::4].copy(),
            sample_rate=header["sample_rate"],
            seed=header["seed"],
            config=header.get("config", {}),
            snu_scale=header.get("snu_scale"),
        )


def hybrid_split(frame: DualPolFrame, extinction_db: float) -> DualPolFrame:
    """First-order polarisation crosstalk of the optical hybrid.

    Each output carries an amplitude fraction 10^(-extinction/20) of the
    opposite tributary.
    """
    if extinction_db < 0:
        raise ConfigError("extinction_db must be >= 0")
    if math.isinf(extinction_db):
        eps = 0.0
    else:
        eps = 10 ** (-extinction_db / 20.0)
    q = frame.quantum.samples
    p = frame.pilot.samples
    return DualPolFrame(
        frame.quantum.copy_with(q + eps * p),
        frame.pilot.copy_with(p + eps * q),
        metadata=dict(frame.metadata),
    )


def dual_quadrature_detect(
    tributary: IQTrace,
    eta: float,
    noise_snu_per_quad: float,
    rng: np.random.Generator,
    include_shot: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Simultaneous I/Q measurement of one tributary.

    The field amplitude is scaled by sqrt(eta/2) (detector efficiency plus
    the 50/50 measurement split); each quadrature stream then carries one
    SNU of vacuum shot noise plus the configured electronic noise.
    ``include_shot=False`` models an LO-off electronic-noise measurement.
    """
    n = len(tributary)
    gain = np.sqrt(eta / 2.0)
    i_out = gain * tributary.samples.real
    q_out = gain * tributary.samples.imag
    if include_shot:
        i_out = i_out + rng.standard_normal(n)
        q_out = q_out + rng.standard_normal(n)
    if noise_snu_per_quad > 0:
        s = np.sqrt(noise_snu_per_quad)
        i_out = i_out + s * rng.standard_normal(n)
        q_out = q_out + s * rng.standard_normal(n)
    return i_out, q_out


def cmrr_leakage(
    stream: np.ndarray, tributary_power_envelope: np.ndarray, cmrr_db: float
) -> np.ndarray:
    """Add the common-mode residue of a balanced pair to one output stream."""
    stream = np.asarray(stream, dtype=np.float64)
    env = np.asarray(tributary_power_envelope, dtype=np.float64)
    if stream.size != env.size:
        raise ValueError("stream and envelope must have equal length")
    if math.isinf(cmrr_db):
        return stream.copy()
    return stream + 10 ** (-cmrr_db / 20.0) * env


def single_pole_lowpass(stream: np.ndarray, cutoff: float, fs: float) -> np.ndarray:
    """First-order IIR lowpass modelling finite detector bandwidth."""
    alpha = 1.0 - np.exp(-2 * np.pi * cutoff / fs)
    return lfilter([alpha], [1.0, -(1.0 - alpha)], stream)


def _resample(trace: IQTrace, target_rate: float) -> IQTrace:
    if target_rate == trace.sample_rate:
        return trace
    ratio = Fraction(target_rate / trace.sample_rate).limit_denominator(10_000)
    out = resample_poly(trace.samples, ratio.numerator, ratio.denominator)
    return IQTrace(out, target_rate)


def acquire_block(
    frame: DualPolFrame,
    cfg: RxConfig,
    rng: Optional[np.random.Generator] = None,
    include_shot: bool = True,
) -> MeasurementRecord:
    """Acquire one block through the full receiver pipeline.

    hybrid split -> resample to the ADC rate -> per-tributary dual-quadrature
    detection (low-noise quantum arm, high-bandwidth pilot arm) -> optional
    detector-bandwidth shaping -> common-mode leakage -> truncation to the
    block size. Detection noise is generated at the ADC rate so the
    shot-noise unit anchors to the acquired samples.
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    split = hybrid_split(frame, cfg.pol_extinction_db)
    adc_rate = cfg.adc_rate or frame.sample_rate
    quantum = _resample(split.quantum, adc_rate)
    pilot = _resample(split.pilot, adc_rate)
    if len(quantum) < cfg.block_size_samples:
        need = int(np.ceil(cfg.block_size_samples * frame.sample_rate / adc_rate))
        raise ValueError(
            f"frame too short: block needs {cfg.block_size_samples} samples at the "
            f"ADC rate ({need} input samples), got {len(quantum)}"
        )
    q_i, q_q = dual_quadrature_detect(
        quantum, cfg.quantum_efficiency, cfg.quantum_receiver_noise, rng, include_shot
    )
    p_i, p_q = dual_quadrature_detect(
        pilot, cfg.pilot_efficiency, cfg.pilot_receiver_noise, rng, include_shot
    )
    if cfg.quantum_bandwidth is not None:
        q_i = single_pole_lowpass(q_i, cfg.quantum_bandwidth, adc_rate)
        q_q = single_pole_lowpass(q_q, cfg.quantum_bandwidth, adc_rate)
    q_env = np.abs(quantum.samples) ** 2
    p_env = np.abs(pilot.samples) ** 2
    q_i = cmrr_leakage(q_i, q_env, cfg.cmrr_db)
    q_q = cmrr_leakage(q_q, q_env, cfg.cmrr_db)
    p_i = cmrr_leakage(p_i, p_env, cfg.cmrr_db)
    p_q = cmrr_leakage(p_q, p_env, cfg.cmrr_db)
    n = cfg.block_size_samples
    return MeasurementRecord(
        quantum_i=q_i[:n],
        quantum_q=q_q[:n],
        pilot_i=p_i[:n],
        pilot_q=p_q[:n],
        sample_rate=adc_rate,
        seed=cfg.rng_seed,
        config=asdict(cfg),
    )
