"""Minimum-processing near-end listening enhancement."""

from .filterbank import BandLayout, SubbandWeights, band_power, erb_layout, gammatone_weights
from .gains import (
    GainPlan,
    NleConfig,
    limit_gains,
    long_term_power,
    optimal_gains,
    plan_gains,
    project_gains_to_bins,
    snr_limit,
    weight_audibility_limits,
)
from .metrics import MetricReport, asii, mse_penalty, power_increase_db, segmental_snr
from .stft import Spectrogram, StftParams, TimeSignal, analyze, apply_gains, synthesize

__version__ = "0.1.0"
