"""Transmitter-side waveform synthesis.

Builds the two polarisation tributaries of the optical field at complex
baseband: a pulse-carved QPSK quantum signal driven by a repeating PRBS7
pattern, and a single-sideband pilot tone with configurable carrier and
image-sideband suppression. Amplitudes are kept in shot-noise units
(SNU^1/2) throughout.

Conventions
-----------
* A symbol occupies ``samples_per_symbol`` samples; the pulse envelope is
  unit-L2-norm over the slot, so the per-symbol quadrature variance in the
  slot's temporal mode equals ``v_mod`` (twice the mean photon number per
  symbol). All downstream variance bookkeeping relies on this.
* The pilot amplitude is specified relative to the RMS amplitude of the
  quantum tributary; its absolute optical power is a free parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError

PULSE_SHAPES = ("rectangular", "raised-cosine-rz")

# Gray-mapped QPSK, bit pair (b0, b1) -> index 2*b0+b1 -> constellation point
QPSK_CONSTELLATION = np.array(
    [1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j], dtype=np.complex128
) / np.sqrt(2.0)


@dataclass
class TxConfig:
    """Transmitter parameters."""

    symbol_rate: float = 250e6
    pilot_freq: float = 1e9
    samples_per_symbol: int = 16
    v_mod: float = 3.7
    # relative amplitude w.r.t. quantum-tributary RMS; default targets a
    # ~23 dB pilot-to-quantum power gap at the default pilot drive index
    pilot_amplitude: float = 10 ** (23.0 / 20.0) / 0.76
    carrier_suppression_db: float = math.inf
    sideband_suppression_db: float = math.inf
    qpsk_mod_index: float = 0.94
    pilot_mod_index: float = 0.76
    prbs_seed: int = 0b1010101
    pulse_shape: str = "raised-cosine-rz"

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    def validate(self) -> None:
        if self.samples_per_symbol < 4:
            raise ConfigError("samples_per_symbol must be >= 4")
        if self.v_mod <= 0:
            raise ConfigError("v_mod must be > 0")
        if not 0 < self.prbs_seed < 128:
            raise ConfigError("prbs_seed must be a nonzero 7-bit integer")
        if self.pulse_shape not in PULSE_SHAPES:
            raise ConfigError(f"pulse_shape must be one of {PULSE_SHAPES}")
        if not self.pilot_freq < self.sample_rate / 2:
            raise ConfigError("pilot_freq must lie below Nyquist")
        if self.carrier_suppression_db < 0 or self.sideband_suppression_db < 0:
            raise ConfigError("suppression values must be >= 0 dB")
        if self.pilot_amplitude < 0:
            raise ConfigError("pilot_amplitude must be >= 0")


@dataclass
class IQTrace:
    """Uniformly sampled complex-baseband waveform."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.size == 0:
            raise ValueError("IQTrace must contain at least one sample")
        if not np.all(np.isfinite(self.samples.view(np.float64))):
            raise ValueError("IQTrace samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.size

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def copy_with(self, samples: np.ndarray) -> "IQTrace":
        return IQTrace(samples, self.sample_rate, self.t0)


@dataclass
class DualPolFrame:
    """Pair of phase-locked tributaries on orthogonal polarisations."""

    quantum: IQTrace
    pilot: IQTrace
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.quantum) != len(self.pilot):
            raise ValueError("tributaries must have equal length")
        if self.quantum.sample_rate != self.pilot.sample_rate:
            raise ValueError("tributaries must share one sample rate")

    @property
    def sample_rate(self) -> float:
        return self.quantum.sample_rate

    def __len__(self) -> int:
        return len(self.quantum)


def prbs7_sequence(seed: int, length: int) -> np.ndarray:
    """Maximal-length PRBS7 bits (period 127), LFSR x^7 + x^6 + 1.

    The sequence is repeated or truncated to ``length``. A zero seed locks
    the shift register and is rejected.
    """
    if not 0 < seed < 128:
        raise ConfigError("PRBS7 seed must be a nonzero 7-bit integer")
    if length < 0:
        raise ValueError("length must be >= 0")
    state = seed
    period = np.empty(127, dtype=np.uint8)
    for i in range(127):
        period[i] = state & 1
        fb = ((state >> 6) ^ (state >> 5)) & 1
        state = ((state << 1) | fb) & 0x7F
    if length == 0:
        return np.empty(0, dtype=np.uint8)
    return np.resize(period, length)


def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs onto unit-mean-power QPSK symbols.

    (0,0) -> (1+1j)/sqrt(2); an odd trailing bit is padded with 0.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return np.empty(0, dtype=np.complex128)
    if bits.size % 2:
        bits = np.concatenate([bits, [0]])
    idx = 2 * bits[0::2] + bits[1::2]
    return QPSK_CONSTELLATION[idx]


def qpsk_indices(bits: np.ndarray) -> np.ndarray:
    """Constellation indices (0..3) for the same mapping as :func:`qpsk_map`."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 2:
        bits = np.concatenate([bits, [0]])
    return (2 * bits[0::2] + bits[1::2]).astype(np.int64)


def pulse_envelope(pulse_shape: str, sps: int) -> np.ndarray:
    """Raw in-slot amplitude envelope (peak 1 at the slot centre)."""
    if pulse_shape == "rectangular":
        return np.ones(sps)
    if pulse_shape == "raised-cosine-rz":
        # zero at slot boundaries, unity at the centre sample sps//2
        return np.sin(np.pi * np.arange(sps) / sps) ** 2
    raise ConfigError(f"unknown pulse shape {pulse_shape!r}")


def symbol_kernel(pulse_shape: str, sps: int) -> np.ndarray:
    """Unit-L2-norm slot kernel; the temporal mode a symbol occupies."""
    p = pulse_envelope(pulse_shape, sps)
    return p / np.linalg.norm(p)


def carve_pulses(symbols: np.ndarray, cfg: TxConfig) -> IQTrace:
    """Shape symbols into a pulse train with per-symbol mode variance v_mod.

    The modulation index scales the raw drive waveform and is then absorbed
    by the final power levelling, so the delivered modulation variance is
    exactly ``cfg.v_mod`` regardless of the index.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if symbols.size == 0:
        raise ValueError("symbols must be nonempty")
    kernel = symbol_kernel(cfg.pulse_shape, cfg.samples_per_symbol)
    drive = cfg.qpsk_mod_index * kernel
    drive = drive / np.linalg.norm(drive)
    # unit-power symbols carry per-quadrature variance 1/2; scale such that
    # the slot-mode quadrature variance equals v_mod
    amp = np.sqrt(2.0 * cfg.v_mod)
    trace = (amp * symbols[:, None] * drive[None, :]).ravel()
    return IQTrace(trace, cfg.sample_rate)


def synth_pilot(cfg: TxConfig, n_samples: int) -> IQTrace:
    """Single-sideband pilot tone with residual carrier and image sideband.

    Amplitudes are relative to a quantum-tributary RMS of one; the frame
    builder rescales to the actual quantum power. Suppression values are in
    dB below the wanted sideband; ``inf`` removes the term entirely.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be > 0")
    fs = cfg.sample_rate
    if not cfg.pilot_freq < fs / 2:
        raise ConfigError("pilot_freq must lie below Nyquist")
    amp = cfg.pilot_amplitude * cfg.pilot_mod_index
    t = np.arange(n_samples) / fs
    trace = amp * np.exp(2j * np.pi * cfg.pilot_freq * t)
    if math.isfinite(cfg.carrier_suppression_db):
        trace = trace + amp * 10 ** (-cfg.carrier_suppression_db / 20.0)
    if math.isfinite(cfg.sideband_suppression_db):
        trace = trace + (
            amp
            * 10 ** (-cfg.sideband_suppression_db / 20.0)
            * np.exp(-2j * np.pi * cfg.pilot_freq * t)
        )
    return IQTrace(trace, fs)


def polmux_combine(
    quantum: IQTrace, pilot: IQTrace, pilot_to_quantum_power_db: float
) -> DualPolFrame:
    """Combine tributaries on orthogonal polarisations at a fixed power gap.

    The quantum tributary is rescaled so that
    ``mean pilot power / mean quantum power = 10^(gap/10)``; the
    sample-by-sample phase relation is untouched (common-source phase lock).
    """
    if len(quantum) != len(pilot):
        raise ValueError("tributaries must have equal length")
    if quantum.sample_rate != pilot.sample_rate:
        raise ValueError("tributaries must share one sample rate")
    p_pilot = pilot.mean_power()
    p_quantum = quantum.mean_power()
    if p_quantum == 0:
        scale = 1.0
    else:
        target = p_pilot / 10 ** (pilot_to_quantum_power_db / 10.0)
        scale = np.sqrt(target / p_quantum)
    return DualPolFrame(
        quantum.copy_with(quantum.samples * scale),
        pilot.copy_with(pilot.samples.copy()),
        metadata={"pilot_to_quantum_power_db": pilot_to_quantum_power_db},
    )


def make_frame(cfg: TxConfig, n_symbols: int) -> tuple[DualPolFrame, np.ndarray]:
    """Build the transmitted dual-polarisation frame for one block.

    Returns the frame and the transmitted constellation indices, which stay
    with the frame for data-aided processing downstream.
    """
    cfg.validate()
    if n_symbols <= 0:
        raise ValueError("n_symbols must be > 0")
    bits = prbs7_sequence(cfg.prbs_seed, 2 * n_symbols)
    indices = qpsk_indices(bits)
    symbols = QPSK_CONSTELLATION[indices]
    quantum = carve_pulses(symbols, cfg)
    pilot_rel = synth_pilot(cfg, len(quantum))
    q_rms = np.sqrt(quantum.mean_power())
    pilot = pilot_rel.copy_with(pilot_rel.samples * q_rms)
    if pilot.mean_power() > 0:
        gap_db = 10 * np.log10(pilot.mean_power() / quantum.mean_power())
        frame = polmux_combine(quantum, pilot, gap_db)
    else:
        frame = DualPolFrame(quantum, pilot, metadata={"pilot_to_quantum_power_db": None})
    frame.metadata.update(
        {
            "tx_indices": indices,
            "v_mod": cfg.v_mod,
            "pulse_shape": cfg.pulse_shape,
            "samples_per_symbol": cfg.samples_per_symbol,
            "qpsk_mapping": "gray",
            "pilot_freq": cfg.pilot_freq,
        }
    )
    return frame, indices
