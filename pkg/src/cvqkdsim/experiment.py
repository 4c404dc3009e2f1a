"""Configuration-driven experiment runner.

Composes transmitter -> channel -> receiver -> DSP -> estimation for a
whole measurement campaign: calibration blocks first (signal off for shot
noise, LO off for electronic noise), then data blocks, then the report
under both calibration policies. Also provides parameter sweeps and paired
A/B comparisons of the pilot carrier suppression.

Every random draw derives from one master seed through
``numpy.random.SeedSequence``, so a (config, seed) pair determines every
output byte.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import channel as ch
from . import dsp as dspmod
from . import estimation as est
from . import receiver as rx
from . import wavegen as wg
from .errors import ConfigError


@dataclass
class CalibrationPlan:
    """How many calibration blocks to acquire per noise type.

    Each block contributes one variance entry per quadrature, so the
    defaults yield eight shot-noise and four electronic-noise measurements.
    """

    shot_blocks: int = 4
    elec_blocks: int = 2

    def validate(self) -> None:
        if self.shot_blocks < 1 or self.elec_blocks < 1:
            raise ConfigError("calibration requires at least one block per type")


@dataclass
class ExperimentConfig:
    """Everything one run needs."""

    tx: wg.TxConfig = field(default_factory=wg.TxConfig)
    ch: ch.ChannelConfig = field(default_factory=ch.ChannelConfig)
    rx: rx.RxConfig = field(default_factory=rx.RxConfig)
    dsp: dspmod.DspConfig = field(default_factory=dspmod.DspConfig)
    cal: CalibrationPlan = field(default_factory=CalibrationPlan)
    blocks: int = 8
    seed: int = 12345
    trusted_receiver: bool = True
    label: str = ""
    save_records: bool = False
    save_symbols: bool = False

    def n_symbols(self) -> int:
        return self.rx.block_size_samples // self.tx.samples_per_symbol

    def validate(self) -> None:
        self.tx.validate()
        self.rx.validate()
        self.cal.validate()
        fs = self.tx.sample_rate
        adc = self.rx.adc_rate or fs
        self.ch.validate(fs, self.tx.pilot_freq)
        self.dsp.validate(adc)
        if self.blocks < 0:
            raise ConfigError("blocks must be >= 0")
        if self.rx.block_size_samples % self.tx.samples_per_symbol:
            raise ConfigError("block size must be a whole number of symbols")
        if adc != fs:
            raise ConfigError(
                "adc_rate must equal symbol_rate * samples_per_symbol (one "
                "sample rate derives all)"
            )
        if self.dsp.bpf_center != self.tx.pilot_freq:
            raise ConfigError("dsp.bpf_center must equal tx.pilot_freq")


@dataclass
class ExperimentResult:
    report: est.EstimationReport
    calibration: est.CalibrationSet
    dsp_results: list
    reference_scale: complex
    config: ExperimentConfig


def _zero_frame(cfg: ExperimentConfig) -> wg.DualPolFrame:
    n = cfg.rx.block_size_samples
    fs = cfg.tx.sample_rate
    zeros = np.zeros(n, dtype=np.complex128)
    return wg.DualPolFrame(wg.IQTrace(zeros, fs), wg.IQTrace(zeros.copy(), fs))


def run_calibration(
    cfg: ExperimentConfig, seed_seq: np.random.SeedSequence
) -> est.CalibrationSet:
    """Acquire shot-noise (LO on, signal off) and electronic-noise (LO off)
    blocks and collect per-quadrature variances at the symbol level."""
    shot, elec = [], []
    children = seed_seq.spawn(cfg.cal.shot_blocks + cfg.cal.elec_blocks)
    frame = _zero_frame(cfg)
    for i in range(cfg.cal.shot_blocks):
        rng = np.random.default_rng(children[i])
        rec = rx.acquire_block(frame, cfg.rx, rng, include_shot=True)
        vi, vq = est.calibration_variances(
            rec.quantum_i, rec.quantum_q, cfg.tx.samples_per_symbol, cfg.tx.pulse_shape
        )
        shot.extend([vi, vq])
    for i in range(cfg.cal.elec_blocks):
        rng = np.random.default_rng(children[cfg.cal.shot_blocks + i])
        rec = rx.acquire_block(frame, cfg.rx, rng, include_shot=False)
        vi, vq = est.calibration_variances(
            rec.quantum_i, rec.quantum_q, cfg.tx.samples_per_symbol, cfg.tx.pulse_shape
        )
        elec.extend([vi, vq])
    return est.CalibrationSet(np.array(shot), np.array(elec))


def reference_scale(cfg: ExperimentConfig) -> complex:
    """Least-squares scale of a clean back-to-back pass (no channel, ideal
    receiver, no noise) through the identical DSP path; anchors the
    transmittance estimate."""
    frame, indices = wg.make_frame(cfg.tx, cfg.n_symbols())
    kernel = wg.symbol_kernel(cfg.tx.pulse_shape, cfg.tx.samples_per_symbol)
    sps = cfg.tx.samples_per_symbol
    symbols = frame.quantum.samples.reshape(-1, sps) @ kernel
    ref = wg.QPSK_CONSTELLATION[indices]
    return complex(np.vdot(ref, symbols) / np.vdot(ref, ref))


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[Path] = None,
    report_formats: tuple = ("json", "csv"),
) -> ExperimentResult:
    """Run calibration and data blocks, process, estimate, and optionally
    write artifacts (records, symbol CSVs, phase track, reports)."""
    cfg.validate()
    seed_root = np.random.SeedSequence(cfg.seed)
    cal_seq, data_seq = seed_root.spawn(2)
    cal = run_calibration(cfg, cal_seq)

    frame_tx, indices = wg.make_frame(cfg.tx, cfg.n_symbols())
    c_ref = reference_scale(cfg)
    results = []
    frames = []
    data_children = data_seq.spawn(max(cfg.blocks, 1))
    for b in range(cfg.blocks):
        rng = np.random.default_rng(data_children[b])
        transmitted = ch.apply_channel(frame_tx, cfg.ch, rng)
        record = rx.acquire_block(transmitted, cfg.rx, rng)
        res = dspmod.process_record(
            record,
            cfg.dsp,
            indices,
            cfg.tx.samples_per_symbol,
            pulse_shape=cfg.tx.pulse_shape,
            period_symbols=127,
        )
        results.append(res)
        frames.append(res.frame)
        if out_dir is not None:
            if cfg.save_records:
                record.save(Path(out_dir) / f"block_{b:04d}")
            if cfg.save_symbols:
                res.frame.write_csv(Path(out_dir) / f"symbols_{b:04d}.csv")

    metadata = {
        "seed": cfg.seed,
        "calibration_blocks": {
            "shot": cfg.cal.shot_blocks,
            "elec": cfg.cal.elec_blocks,
        },
    }
    if results:
        try:
            drift = float(max(dspmod.max_drift_rate(r.track) / 1e6 for r in results))
        except ValueError:
            drift = None
        metadata.update(
            {
                "freq_offset_hz_mean": float(np.mean([r.freq_offset_hz for r in results])),
                "pilot_snr_db_mean": float(np.mean([r.pilot_snr_db for r in results])),
                "sync_delays": [int(r.delay_samples) for r in results],
                "max_drift_rate_rad_per_us": drift,
            }
        )
        report = est.build_report(
            frames,
            cal,
            trusted_receiver=cfg.trusted_receiver,
            v_mod=cfg.tx.v_mod,
            reference_scale=c_ref,
            quantum_efficiency=cfg.rx.quantum_efficiency,
            label=cfg.label,
            metadata=metadata,
        )
    else:
        # calibration-only run: report N0 and xi_det per policy
        policies = {}
        for name in est.POLICIES:
            n0, xi_det_prime = cal.scales(name)
            policies[name] = est.PolicyResult(
                policy=name,
                n0=n0,
                xi_det=2 * xi_det_prime,
                xi_tot=float("nan"),
                xi_minus_det=float("nan"),
                v_cond=float("nan"),
                v_tot=float("nan"),
                snr_empirical=float("nan"),
                n_b=float("nan"),
            )
        report = est.EstimationReport(
            policies=policies,
            v_mod_configured=cfg.tx.v_mod,
            trusted_receiver=cfg.trusted_receiver,
            quantum_efficiency=cfg.rx.quantum_efficiency,
            blocks=0,
            symbols_per_block=cfg.n_symbols(),
            label=cfg.label,
            metadata=metadata,
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if "json" in report_formats:
            report.write_json(out_dir / "report.json")
        if "csv" in report_formats:
            report.write_csv(out_dir / "report.csv")
        if results:
            _write_phase_track(out_dir / "phase_track.csv", results[0].track)
    return ExperimentResult(
        report=report,
        calibration=cal,
        dsp_results=results,
        reference_scale=c_ref,
        config=cfg,
    )


def _write_phase_track(path: Path, track: dspmod.PhaseTrack) -> None:
    """Accumulated-phase-vs-time trace (decimated for readability)."""
    step = max(1, track.theta.size // 4096)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_us", "phase_rad"])
        for i in range(0, track.theta.size, step):
            t_us = i / track.sample_rate * 1e6
            writer.writerow([f"{t_us:.9g}", f"{track.theta[i]:.9g}"])


SWEEP_AXES = {
    "transmittance": ("ch", "transmittance"),
    "fibre_length_km": ("ch", "fibre_length_km"),
    "freq_offset": ("ch", "freq_offset"),
    "combined_linewidth": ("ch", "combined_linewidth"),
    "injected_excess_noise": ("ch", "injected_excess_noise"),
    "delay_samples": ("ch", "delay_samples"),
    "v_mod": ("tx", "v_mod"),
    "pilot_amplitude": ("tx", "pilot_amplitude"),
    "carrier_suppression_db": ("tx", "carrier_suppression_db"),
    "sideband_suppression_db": ("tx", "sideband_suppression_db"),
    "pol_extinction_db": ("rx", "pol_extinction_db"),
    "quantum_clearance_db": ("rx", "quantum_clearance_db"),
    "cmrr_db": ("rx", "cmrr_db"),
    "pilot_receiver_noise": ("rx", "pilot_receiver_noise"),
}


def _with_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis not in SWEEP_AXES:
        raise ConfigError(
            f"unknown sweep axis {axis!r}; valid axes: {', '.join(sorted(SWEEP_AXES))}"
        )
    section, name = SWEEP_AXES[axis]
    updates = {name: value}
    if axis == "transmittance":
        updates["fibre_length_km"] = None
    elif axis == "fibre_length_km":
        updates["transmittance"] = None
    sub = dataclasses.replace(getattr(cfg, section), **updates)
    return dataclasses.replace(cfg, **{section: sub})


def run_sweep(
    cfg: ExperimentConfig, axis: str, values: Sequence[float]
) -> list[est.EstimationReport]:
    """One run per value, identical seeds across values (paired comparison)."""
    if axis not in SWEEP_AXES:
        raise ConfigError(
            f"unknown sweep axis {axis!r}; valid axes: {', '.join(sorted(SWEEP_AXES))}"
        )
    reports = []
    for v in values:
        sub = _with_axis(cfg, axis, v)
        sub.label = f"{cfg.label or 'sweep'}:{axis}={v:g}"
        reports.append(run_experiment(sub).report)
    return reports


def sweep_csv_rows(
    axis: str, values: Sequence[float], reports: Sequence[est.EstimationReport]
) -> list[list]:
    rows = [["axis_value"] + est.EstimationReport.CSV_COLUMNS]
    for v, rep in zip(values, reports):
        for row in rep.csv_rows():
            rows.append([f"{v:.17g}"] + row)
    return rows


def run_ab_suppression(
    cfg: ExperimentConfig, suppression_values_db: Sequence[float]
) -> list[tuple[float, est.EstimationReport]]:
    """Identical-seed runs per carrier-suppression value; the excess-noise
    column isolates the pilot-carrier beat-note penalty."""
    if len(suppression_values_db) < 2:
        raise ConfigError("ab comparison needs at least two suppression values")
    out = []
    for s in suppression_values_db:
        sub = _with_axis(cfg, "carrier_suppression_db", s)
        sub.label = f"{cfg.label or 'ab'}:supp={s:g}dB"
        out.append((s, run_experiment(sub).report))
    return out
