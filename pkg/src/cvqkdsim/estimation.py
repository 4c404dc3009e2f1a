"""Shot-noise calibration and link parameter estimation.

Everything here works in shot-noise units (SNU): the vacuum quadrature
variance is one. The shot-noise unit itself is taken from repeated
calibration measurements (LO on / signal off, and LO off), aggregated under
one of two policies:

* ``averaged``   - the mean of all calibration measurements;
* ``worst_case`` - the single (shot, electronic) pairing that maximises the
  resulting excess noise, i.e. the most disadvantageous calibration.

Key relations, with per-arm quantities measured after the 50/50 dual
quadrature split:

* conditional variance  V'_(B|A) = 1 + xi/2     (per arm)
* excess noise          xi = 2 (V'_(B|A) - 1)
* SNR                   (T/2) V_mod / (1 + xi/2) = V'_B / V'_(B|A) - 1
* mean photon number    <n_B> = T V_mod / 2

Detector electronic noise is part of xi_tot; under the trusted-detector
assumption xi_det is subtracted before attributing noise to an adversary.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CalibrationError
from .dsp import SymbolFrame
from .wavegen import symbol_kernel

POLICIES = ("averaged", "worst_case")


@dataclass
class CalibrationSet:
    """Repeated shot-noise and electronic-noise variance measurements."""

    shot_variances: np.ndarray
    elec_variances: np.ndarray
    policy: str = "averaged"

    def __post_init__(self):
        self.shot_variances = np.asarray(self.shot_variances, dtype=np.float64)
        self.elec_variances = np.asarray(self.elec_variances, dtype=np.float64)
        if self.policy not in POLICIES:
            raise CalibrationError(f"policy must be one of {POLICIES}")

    def validate(self) -> None:
        if self.shot_variances.size == 0 or self.elec_variances.size == 0:
            raise CalibrationError("calibration requires shot and electronic measurements")
        if np.any(self.shot_variances <= 0) or np.any(self.elec_variances <= 0):
            raise CalibrationError("calibration variances must be positive")
        if np.min(self.shot_variances) <= np.max(self.elec_variances):
            raise CalibrationError(
                "invalid calibration: some shot measurement does not exceed "
                "the electronic noise"
            )

    def scales(self, policy: Optional[str] = None) -> tuple[float, float]:
        """Return (N0, xi_det_prime) under the given policy.

        N0 is the shot-noise unit in raw variance units; xi_det_prime is the
        per-arm electronic noise in SNU. The worst-case policy evaluates
        every individual (shot, elec) pairing and keeps the one that
        maximises the resulting excess noise.
        """
        self.validate()
        policy = policy or self.policy
        if policy == "averaged":
            n0 = float(np.mean(self.shot_variances) - np.mean(self.elec_variances))
            xi_det_prime = float(np.mean(self.elec_variances) / n0)
        else:
            n0_pairs = self.shot_variances[:, None] - self.elec_variances[None, :]
            if np.any(n0_pairs <= 0):
                raise CalibrationError("invalid calibration: non-positive pairing")
            i, j = np.unravel_index(np.argmin(n0_pairs), n0_pairs.shape)
            n0 = float(n0_pairs[i, j])
            xi_det_prime = float(self.elec_variances[j] / n0)
        if n0 <= 0:
            raise CalibrationError("invalid calibration: N0 <= 0")
        return n0, xi_det_prime


def snu_normalize(
    raw_i: np.ndarray, raw_q: np.ndarray, cal: CalibrationSet
) -> tuple[np.ndarray, np.ndarray]:
    """Scale raw quadrature streams into shot-noise units.

    Under this scaling a vacuum measurement has variance 1 + xi'_det with
    xi'_det = aggregate(elec)/N0.
    """
    n0, _ = cal.scales()
    root = np.sqrt(n0)
    return np.asarray(raw_i) / root, np.asarray(raw_q) / root


def calibration_variances(
    quantum_i: np.ndarray, quantum_q: np.ndarray, sps: int, pulse_shape: str
) -> tuple[float, float]:
    """Per-quadrature variances of a calibration block at the symbol level.

    Calibration blocks carry no signal, so the slot projection needs no
    timing or phase recovery: stationary white noise gives the same
    statistics for any slot alignment.
    """
    kernel = symbol_kernel(pulse_shape, sps)
    n_sym = len(quantum_i) // sps
    z = (np.asarray(quantum_i[: n_sym * sps]) + 1j * np.asarray(quantum_q[: n_sym * sps]))
    symbols = z.reshape(n_sym, sps) @ kernel
    return float(np.var(symbols.real)), float(np.var(symbols.imag))


def fit_scale(frame: SymbolFrame) -> complex:
    """Least-squares complex scale of the received symbols against the
    known unit-power reference (data-aided)."""
    ref = frame.tx_symbols()
    return complex(np.vdot(ref, frame.samples) / np.vdot(ref, ref))


def conditional_variance(frame: SymbolFrame) -> float:
    """Per-arm conditional variance V'_(B|A) of a (SNU-scaled) frame.

    The per-quadrature variance of (measured - fitted scale * reference),
    pooled over the four constellation classes. Requires at least two
    symbols in every class.
    """
    counts = np.bincount(frame.tx_indices, minlength=4)
    if np.any(counts < 2):
        raise ValueError("every constellation point needs at least two symbols")
    c = fit_scale(frame)
    resid = frame.samples - c * frame.tx_symbols()
    return float((np.var(resid.real) + np.var(resid.imag)) / 2.0)


def total_variance(frame: SymbolFrame) -> float:
    """Per-arm total variance V'_B of a (SNU-scaled) frame."""
    z = frame.samples
    return float((np.var(z.real) + np.var(z.imag)) / 2.0)


def excess_noise(v_cond: float) -> float:
    """xi = 2 (V'_(B|A) - 1); may come out slightly negative from finite
    statistics and is reported as-is."""
    if v_cond < 0:
        raise ValueError("conditional variance must be >= 0")
    return 2.0 * (v_cond - 1.0)


def snr(transmittance: float, v_mod: float, xi: float) -> float:
    """Signal-to-noise ratio (T/2) V_mod / (1 + xi/2)."""
    if not 0 < transmittance <= 1:
        raise ValueError("transmittance must lie in (0, 1]")
    if v_mod <= 0:
        raise ValueError("v_mod must be > 0")
    denom = 1.0 + xi / 2.0
    if denom <= 0:
        raise ValueError("1 + xi/2 must be positive")
    return (transmittance / 2.0) * v_mod / denom


def empirical_snr(v_tot: float, v_cond: float) -> float:
    """SNR from measured variances: V'_B / V'_(B|A) - 1."""
    return v_tot / v_cond - 1.0


def mean_photon_number(transmittance: float, v_mod: float) -> float:
    """<n_B> = T V_mod / 2 (photons per symbol arriving at the receiver)."""
    return transmittance * v_mod / 2.0


@dataclass
class PolicyResult:
    """Estimates under one calibration policy."""

    policy: str
    n0: float
    xi_det: float
    xi_tot: float
    xi_minus_det: float
    v_cond: float
    v_tot: float
    snr_empirical: float
    n_b: float
    t_hat: Optional[float] = None
    v_mod_backest: Optional[float] = None
    snr_formula: Optional[float] = None
    per_block_xi_tot: list = field(default_factory=list)


@dataclass
class EstimationReport:
    """Link parameters under both calibration policies."""

    policies: dict
    v_mod_configured: Optional[float] = None
    trusted_receiver: bool = True
    quantum_efficiency: Optional[float] = None
    blocks: int = 0
    symbols_per_block: int = 0
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def result(self, policy: str) -> PolicyResult:
        return self.policies[policy]

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "v_mod_configured": self.v_mod_configured,
            "trusted_receiver": self.trusted_receiver,
            "quantum_efficiency": self.quantum_efficiency,
            "blocks": self.blocks,
            "symbols_per_block": self.symbols_per_block,
            "metadata": self.metadata,
            "policies": {},
        }
        for name, res in self.policies.items():
            out["policies"][name] = {
                "n0": res.n0,
                "xi_det": res.xi_det,
                "xi_tot": res.xi_tot,
                "xi_minus_det": res.xi_minus_det,
                "v_cond": res.v_cond,
                "v_tot": res.v_tot,
                "snr_empirical": res.snr_empirical,
                "snr_formula": res.snr_formula,
                "n_b": res.n_b,
                "t_hat": res.t_hat,
                "v_mod_backest": res.v_mod_backest,
                "per_block_xi_tot": list(res.per_block_xi_tot),
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    CSV_COLUMNS = [
        "label",
        "policy",
        "t_hat",
        "v_mod",
        "n_b",
        "snr",
        "xi_tot",
        "xi_minus_det",
        "xi_det",
        "n0",
        "blocks",
    ]

    def csv_rows(self) -> list[list]:
        rows = []
        for name in POLICIES:
            if name not in self.policies:
                continue
            res = self.policies[name]
            rows.append(
                [
                    self.label,
                    name,
                    _fmt(res.t_hat),
                    _fmt(self.v_mod_configured),
                    _fmt(res.n_b),
                    _fmt(res.snr_empirical),
                    _fmt(res.xi_tot),
                    _fmt(res.xi_minus_det),
                    _fmt(res.xi_det),
                    _fmt(res.n0),
                    self.blocks,
                ]
            )
        return rows

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            writer.writerows(self.csv_rows())

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())


def _fmt(x) -> str:
    return "" if x is None else f"{x:.17g}"


def build_report(
    frames: Sequence[SymbolFrame],
    cal: CalibrationSet,
    trusted_receiver: bool = True,
    v_mod: Optional[float] = None,
    reference_scale: Optional[complex] = None,
    quantum_efficiency: Optional[float] = None,
    label: str = "",
    metadata: Optional[dict] = None,
) -> EstimationReport:
    """Assemble the full report from raw-unit symbol frames.

    ``reference_scale`` is the least-squares scale of a clean back-to-back
    pass through the identical chain; the transmittance estimate is the
    power ratio against it, which keeps any chain gain out of T.
    Quantities are computed under both calibration policies;
    ``trusted_receiver`` only affects which xi column an adversary is
    credited with, both are always reported.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("at least one frame is required")
    cal.validate()
    raw_cond = np.array([conditional_variance(f) for f in frames])
    raw_tot = np.array([total_variance(f) for f in frames])
    c_pool = complex(np.mean([fit_scale(f) for f in frames]))
    policies = {}
    for name in POLICIES:
        n0, xi_det_prime = cal.scales(name)
        v_cond = float(np.mean(raw_cond) / n0)
        v_tot = float(np.mean(raw_tot) / n0)
        xi_tot = excess_noise(v_cond)
        xi_det = 2.0 * xi_det_prime
        t_hat = None
        v_mod_backest = None
        snr_form = None
        if reference_scale is not None and abs(reference_scale) > 0:
            # the dual-quadrature split halves the signal power; undo it so
            # t_hat estimates the effective transmittance (channel times
            # detector efficiency), comparable to a link budget
            t_hat = 2.0 * abs(c_pool) ** 2 / abs(reference_scale) ** 2
            if t_hat > 0:
                v_mod_backest = 2.0 * (v_tot - v_cond) / t_hat
            if v_mod is not None and t_hat > 0:
                snr_form = snr(min(t_hat, 1.0), v_mod, xi_tot)
        policies[name] = PolicyResult(
            policy=name,
            n0=n0,
            xi_det=xi_det,
            xi_tot=xi_tot,
            xi_minus_det=xi_tot - xi_det,
            v_cond=v_cond,
            v_tot=v_tot,
            snr_empirical=empirical_snr(v_tot, v_cond),
            n_b=v_tot - v_cond,
            t_hat=t_hat,
            v_mod_backest=v_mod_backest,
            snr_formula=snr_form,
            per_block_xi_tot=[excess_noise(v / n0) for v in raw_cond],
        )
    return EstimationReport(
        policies=policies,
        v_mod_configured=v_mod,
        trusted_receiver=trusted_receiver,
        quantum_efficiency=quantum_efficiency,
        blocks=len(frames),
        symbols_per_block=len(frames[0]),
        label=label,
        metadata=metadata or {},
    )
