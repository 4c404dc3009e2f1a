"""Receiver model tests."""

import math

import numpy as np
import pytest

from cvqkdsim import channel as ch
from cvqkdsim import receiver as rx
from cvqkdsim import wavegen as wg
from cvqkdsim.errors import ConfigError


def zero_frame(n=65536, fs=4e9):
    z = np.zeros(n, dtype=np.complex128)
    return wg.DualPolFrame(wg.IQTrace(z, fs), wg.IQTrace(z.copy(), fs))


class TestHybridSplit:
    def _frame(self):
        fs = 4e9
        t = np.arange(4096) / fs
        q = wg.IQTrace(0.3 * np.exp(2j * np.pi * 1e8 * t), fs)
        p = wg.IQTrace(4.0 * np.exp(2j * np.pi * 1e9 * t), fs)
        return wg.DualPolFrame(q, p)

    def test_infinite_extinction_identity(self):
        frame = self._frame()
        out = rx.hybrid_split(frame, math.inf)
        assert np.array_equal(out.quantum.samples, frame.quantum.samples)

    def test_20_db_leakage_power(self):
        frame = self._frame()
        out = rx.hybrid_split(frame, 20.0)
        leaked = out.quantum.samples - frame.quantum.samples
        assert np.mean(np.abs(leaked) ** 2) == pytest.approx(
            1e-2 * frame.pilot.mean_power(), rel=1e-9
        )

    def test_symmetric(self):
        frame = self._frame()
        swapped = wg.DualPolFrame(frame.pilot, frame.quantum)
        a = rx.hybrid_split(frame, 17.0)
        b = rx.hybrid_split(swapped, 17.0)
        assert np.allclose(a.quantum.samples, b.pilot.samples)
        assert np.allclose(a.pilot.samples, b.quantum.samples)


class TestDualQuadratureDetect:
    def test_vacuum_shot_noise_unit(self):
        n = 1 << 18
        trace = wg.IQTrace(np.zeros(n, dtype=np.complex128), 4e9)
        i_out, q_out = rx.dual_quadrature_detect(trace, 1.0, 0.0, np.random.default_rng(0))
        tol = 4 / np.sqrt(n)
        assert np.var(i_out) == pytest.approx(1.0, rel=tol)
        assert np.var(q_out) == pytest.approx(1.0, rel=tol)

    def test_clearance_20_db_noise(self):
        # electronic noise implied by 20 dB clearance: 10^-2 SNU per quadrature
        n = 1 << 18
        cfg = rx.RxConfig(quantum_clearance_db=20.0)
        assert cfg.quantum_receiver_noise == pytest.approx(1e-2)
        trace = wg.IQTrace(np.zeros(n, dtype=np.complex128), 4e9)
        i_out, _ = rx.dual_quadrature_detect(
            trace, 1.0, cfg.quantum_receiver_noise, np.random.default_rng(1)
        )
        assert np.var(i_out) == pytest.approx(1.01, rel=4 / np.sqrt(n))

    def test_coherent_input_variance(self):
        # per-arm variance of a modulated field: (eta/2) V + 1 + elec
        n = 1 << 18
        v = 6.0
        eta = 0.68
        elec = 0.01
        rng = np.random.default_rng(2)
        field = rng.standard_normal(n) * np.sqrt(v) + 1j * rng.standard_normal(n) * np.sqrt(v)
        trace = wg.IQTrace(field, 4e9)
        i_out, q_out = rx.dual_quadrature_detect(trace, eta, elec, rng)
        expected = eta / 2 * v + 1 + elec
        sigma = expected * np.sqrt(2 / n)
        assert abs(np.var(i_out) - expected) < 3 * sigma
        assert abs(np.var(q_out) - expected) < 3 * sigma

    def test_lo_off_removes_shot(self):
        n = 1 << 16
        trace = wg.IQTrace(np.zeros(n, dtype=np.complex128), 4e9)
        i_out, _ = rx.dual_quadrature_detect(
            trace, 1.0, 0.04, np.random.default_rng(3), include_shot=False
        )
        assert np.var(i_out) == pytest.approx(0.04, rel=4 / np.sqrt(n))


class TestCmrrLeakage:
    def test_infinite_identity(self):
        stream = np.arange(8.0)
        out = rx.cmrr_leakage(stream, np.ones(8), math.inf)
        assert np.array_equal(out, stream)

    def test_40_db_unit_envelope(self):
        stream = np.zeros(8)
        out = rx.cmrr_leakage(stream, np.ones(8), 40.0)
        assert np.allclose(out, 1e-2)

    def test_zero_envelope_identity(self):
        stream = np.arange(8.0)
        out = rx.cmrr_leakage(stream, np.zeros(8), 40.0)
        assert np.array_equal(out, stream)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rx.cmrr_leakage(np.zeros(8), np.zeros(7), 40.0)


class TestAcquireBlock:
    def test_block_symbol_counts(self):
        # full-scale acquisition: 2^20 samples at 80 samples/symbol
        assert (1 << 20) // 80 == 13107  # ~1.31e4 symbols per block
        # desk scale: 2^16 samples at 16 samples/symbol
        assert (1 << 16) // 16 == 4096

    def test_same_seed_identical(self):
        frame, _ = wg.make_frame(wg.TxConfig(), 4096)
        cfg = rx.RxConfig(rng_seed=99)
        a = rx.acquire_block(frame, cfg)
        b = rx.acquire_block(frame, cfg)
        for name in ("quantum_i", "quantum_q", "pilot_i", "pilot_q"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_insufficient_samples_rejected(self):
        frame, _ = wg.make_frame(wg.TxConfig(), 128)
        cfg = rx.RxConfig(block_size_samples=1 << 16)
        with pytest.raises(ValueError, match="65536"):
            rx.acquire_block(frame, cfg, np.random.default_rng(0))

    def test_snu_anchor(self):
        # signals off, electronic noise off: every stream has variance 1
        cfg = rx.RxConfig(
            quantum_clearance_db=math.inf,
            pilot_receiver_noise=0.0,
            cmrr_db=math.inf,
            rng_seed=5,
        )
        rec = rx.acquire_block(zero_frame(), cfg)
        n = rec.block_size
        tol = 4 / np.sqrt(n)
        for name in ("quantum_i", "quantum_q", "pilot_i", "pilot_q"):
            assert np.var(getattr(rec, name)) == pytest.approx(1.0, rel=tol), name

    def test_variance_decomposition(self):
        # symbol-level per-arm variance: (T eta / 2) V_mod + 1 + xi'_det + eta xi_ch / 2
        tx_cfg = wg.TxConfig(v_mod=3.7)
        frame, _ = wg.make_frame(tx_cfg, 4096)
        t, eta, xi_ch = 0.5147058823529411, 0.68, 0.1
        rng = np.random.default_rng(17)
        frame = ch.apply_loss(frame, t)
        frame = ch.inject_excess_noise(frame, xi_ch, rng)
        cfg = rx.RxConfig(
            pol_extinction_db=math.inf, cmrr_db=math.inf, quantum_efficiency=eta, rng_seed=31
        )
        rec = rx.acquire_block(frame, cfg, rng)
        kernel = wg.symbol_kernel(tx_cfg.pulse_shape, tx_cfg.samples_per_symbol)
        z = (rec.quantum_i + 1j * rec.quantum_q).reshape(-1, 16) @ kernel
        expected = t * eta / 2 * 3.7 + 1 + 0.01 + eta * xi_ch / 2
        measured = (np.var(z.real) + np.var(z.imag)) / 2
        sigma = expected * np.sqrt(2 / (2 * z.size))
        assert abs(measured - expected) < 4 * sigma

    def test_leakage_band_independent_of_pilot_power_when_suppressed(self):
        # with the carrier fully suppressed there is no beat note near the
        # LO offset, so the quantum band there does not see pilot power
        df = 5e6
        levels = []
        for gap_db in (17.0, 29.0):
            tx_cfg = wg.TxConfig(pilot_amplitude=10 ** (gap_db / 20) / 0.76)
            frame, _ = wg.make_frame(tx_cfg, 4096)
            frame = ch.apply_frequency_offset(frame, df)
            cfg = rx.RxConfig(rng_seed=123)
            rec = rx.acquire_block(frame, cfg, np.random.default_rng(123))
            spec = np.abs(np.fft.fft(rec.quantum_i + 1j * rec.quantum_q)) ** 2
            f = np.fft.fftfreq(rec.block_size, 1 / rec.sample_rate)
            band = np.abs(f - df) < 2e6
            levels.append(np.mean(spec[band]))
        assert levels[1] == pytest.approx(levels[0], rel=0.15)

    def test_pilot_receiver_noise_path(self):
        cfg = rx.RxConfig(pilot_receiver_noise=5.0, cmrr_db=math.inf, rng_seed=8)
        rec = rx.acquire_block(zero_frame(), cfg)
        n = rec.block_size
        assert np.var(rec.pilot_i) == pytest.approx(6.0, rel=5 / np.sqrt(n))

    def test_detector_bandwidth_shapes_noise(self):
        cfg = rx.RxConfig(
            quantum_bandwidth=360e6,
            quantum_clearance_db=math.inf,
            pilot_receiver_noise=0.0,
            cmrr_db=math.inf,
            rng_seed=4,
        )
        rec = rx.acquire_block(zero_frame(), cfg)
        # single pole suppresses white shot noise below the flat-response unit
        assert np.var(rec.quantum_i) < 0.5
        # pilot arm stays flat
        assert np.var(rec.pilot_i) == pytest.approx(1.0, rel=4 / np.sqrt(rec.block_size))


class TestRecordSerialization:
    def test_bit_exact_round_trip(self, tmp_path):
        frame, _ = wg.make_frame(wg.TxConfig(), 4096)
        cfg = rx.RxConfig(rng_seed=55)
        rec = rx.acquire_block(frame, cfg)
        rec.save(tmp_path / "block")
        back = rx.MeasurementRecord.load(tmp_path / "block")
        for name in ("quantum_i", "quantum_q", "pilot_i", "pilot_q"):
            a, b = getattr(rec, name), getattr(back, name)
            assert np.array_equal(a, b)
            assert a.dtype == b.dtype
        assert back.sample_rate == rec.sample_rate
        assert back.seed == rec.seed
        assert back.config["quantum_efficiency"] == cfg.quantum_efficiency

    def test_layout_interleaved(self, tmp_path):
        rec = rx.MeasurementRecord(
            quantum_i=np.array([1.0]),
            quantum_q=np.array([2.0]),
            pilot_i=np.array([3.0]),
            pilot_q=np.array([4.0]),
            sample_rate=4e9,
        )
        rec.save(tmp_path / "one")
        raw = np.fromfile(tmp_path / "one.bin", dtype="<f8")
        assert np.array_equal(raw, [1.0, 2.0, 3.0, 4.0])

    def test_size_mismatch_rejected(self, tmp_path):
        rec = rx.MeasurementRecord(
            quantum_i=np.zeros(4),
            quantum_q=np.zeros(4),
            pilot_i=np.zeros(4),
            pilot_q=np.zeros(4),
            sample_rate=4e9,
        )
        rec.save(tmp_path / "bad")
        (tmp_path / "bad.bin").write_bytes(b"\x00" * 8)
        with pytest.raises(ValueError):
            rx.MeasurementRecord.load(tmp_path / "bad")


class TestRxConfigValidation:
    def test_negative_db_rejected(self):
        with pytest.raises(ConfigError):
            rx.RxConfig(pol_extinction_db=-1.0).validate()

    def test_efficiency_range(self):
        with pytest.raises(ConfigError):
            rx.RxConfig(quantum_efficiency=1.5).validate()
        with pytest.raises(ConfigError):
            rx.RxConfig(quantum_efficiency=0.0).validate()
