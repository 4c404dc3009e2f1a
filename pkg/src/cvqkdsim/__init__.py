"""Desk-scale simulator of a pilot-assisted CV-QKD link with a true local
oscillator: transmitter synthesis, fibre channel, intradyne receiver,
carrier-recovery DSP, and excess-noise estimation."""

from .wavegen import (
    TxConfig,
    IQTrace,
    DualPolFrame,
    prbs7_sequence,
    qpsk_map,
    qpsk_indices,
    carve_pulses,
    synth_pilot,
    polmux_combine,
    make_frame,
)
from .channel import (
    ChannelConfig,
    apply_loss,
    apply_delay,
    apply_phase_noise,
    apply_phase_path,
    apply_frequency_offset,
    inject_excess_noise,
    apply_channel,
)
from .receiver import (
    RxConfig,
    MeasurementRecord,
    hybrid_split,
    dual_quadrature_detect,
    cmrr_leakage,
    acquire_block,
)
from .dsp import (
    DspConfig,
    PhaseTrack,
    SymbolFrame,
    DspResult,
    bandpass_pilot,
    lowpass_quantum,
    estimate_frequency_offset,
    derotate,
    fourth_power_align,
    clock_sync,
    process_record,
    max_drift_rate,
)
from .estimation import (
    CalibrationSet,
    EstimationReport,
    snu_normalize,
    conditional_variance,
    total_variance,
    excess_noise,
    snr,
    empirical_snr,
    mean_photon_number,
    build_report,
)
from .experiment import (
    CalibrationPlan,
    ExperimentConfig,
    run_experiment,
    run_sweep,
    run_ab_suppression,
)
from .configio import load_config, load_preset, list_presets
from .errors import CalibrationError, ConfigError, PilotLostError, SyncFailure

__version__ = "0.1.0"
