"""Objective scores for a processed trial."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filterbank import SubbandWeights, band_power
from .stft import TimeSignal

SEG_SNR_FLOOR_DB = -10.0
SEG_SNR_CEIL_DB = 35.0


def audibility(snr):
    """Sigmoidal band audibility ``xi / (xi + 1)``; infinite SNR maps to 1."""
    snr = np.asarray(snr, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(snr), 1.0, snr / (snr + 1.0))
    return out


def band_snr(speech_band_power, noise_band_power) -> np.ndarray:
    """Band SNR; zero noise gives +inf, and a band with neither gives 0."""
    s = np.asarray(speech_band_power, dtype=float)
    n = np.asarray(noise_band_power, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = s / n
    return np.where((s == 0) & (n == 0), 0.0, xi)


def asii(speech_band_power, noise_band_power, gamma) -> float:
    """Approximated SII with the importance weights renormalized to sum 1."""
    gamma = np.asarray(gamma, dtype=float)
    gamma = gamma / gamma.sum()
    xi = band_snr(speech_band_power, noise_band_power)
    return float(np.sum(gamma * audibility(xi)))


def mse_penalty(clean_bin_power, bin_gains, weights: SubbandWeights):
    """Weighted MSE processing penalty per band and in total.

    The noise term of the error is left out since processing cannot change it.
    """
    p = np.asarray(clean_bin_power, dtype=float)
    v = np.asarray(bin_gains, dtype=float)
    if p.shape != v.shape or p.shape != (weights.n_bins,):
        raise ValueError(
            f"dimension mismatch: powers {p.shape}, gains {v.shape}, "
            f"weights for {weights.n_bins} bins"
        )
    per_band = band_power((1.0 - v) ** 2 * p, weights)
    return per_band, float(per_band.sum())


def power_increase_db(clean_bin_power, bin_gains) -> float:
    p = np.asarray(clean_bin_power, dtype=float)
    v = np.asarray(bin_gains, dtype=float)
    if p.shape != v.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {v.shape}")
    total = p.sum()
    if total <= 0:
        raise ValueError("clean speech has zero power")
    return float(10.0 * np.log10(np.sum(v**2 * p) / total))


def segmental_snr(reference: TimeSignal, degraded: TimeSignal,
                  frame_length: int = 512, hop: int = 256) -> float:
    """Mean per-frame SNR in dB, each frame clamped to [-10, 35] dB.

    A frame whose error is exactly zero scores the ceiling; a silent
    reference frame with nonzero error scores the floor.
    """
    ref = reference.samples
    deg = degraded.samples
    if ref.shape != deg.shape:
        raise ValueError(f"length mismatch: {ref.shape[0]} vs {deg.shape[0]}")
    if not np.any(ref):
        raise ValueError("reference signal is silent")
    if len(ref) < frame_length:
        frame_length = hop = len(ref)
    count = (len(ref) - frame_length) // hop + 1
    idx = np.arange(frame_length)[None, :] + hop * np.arange(count)[:, None]
    sig = np.sum(ref[idx] ** 2, axis=1)
    err = np.sum((ref[idx] - deg[idx]) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(sig / np.where(err > 0, err, 1.0))
    snr = np.where(err == 0, SEG_SNR_CEIL_DB, snr)
    return float(np.mean(np.clip(snr, SEG_SNR_FLOOR_DB, SEG_SNR_CEIL_DB)))


@dataclass
class MetricReport:
    """Scores of one trial.

    ``asii`` is computed from the per-band gains (the quantity the target
    bound applies to); ``asii_projected`` uses the bin gains actually applied
    after projection through overlapping bands.
    """

    asii: float
    asii_projected: float
    asii_unprocessed: float
    mse_penalty: float
    seg_snr_db: float
    power_increase_db: float
    per_band_snr: np.ndarray
    limiter_bands: int = 0
    infeasible_bands: int = 0

    def as_row(self) -> dict:
        return {
            "asii": self.asii,
            "asii_projected": self.asii_projected,
            "asii_unprocessed": self.asii_unprocessed,
            "mse_penalty": self.mse_penalty,
            "power_increase_db": self.power_increase_db,
            "seg_snr_db": self.seg_snr_db,
            "limiter_bands": self.limiter_bands,
            "infeasible_bands": self.infeasible_bands,
            "per_band_snr": ";".join(repr(float(x)) for x in self.per_band_snr),
        }


def score_plan(plan, gamma, reference: TimeSignal | None = None,
               degraded: TimeSignal | None = None) -> MetricReport:
    """Band-domain metrics from a gain plan, plus Seg-SNR if signals are given."""
    processed = plan.limited_gains**2 * plan.speech_band_power
    xi = band_snr(processed, plan.noise_band_power)
    _, mse = mse_penalty(plan.speech_bin_power, plan.bin_gains, plan.weights)
    seg = float("nan")
    if reference is not None and degraded is not None:
        seg = segmental_snr(reference, degraded)
    return MetricReport(
        asii=asii(processed, plan.noise_band_power, gamma),
        asii_projected=asii(plan.processed_band_power, plan.noise_band_power, gamma),
        asii_unprocessed=asii(plan.speech_band_power, plan.noise_band_power, gamma),
        mse_penalty=mse,
        seg_snr_db=seg,
        power_increase_db=power_increase_db(plan.speech_bin_power, plan.bin_gains),
        per_band_snr=xi,
        limiter_bands=int(np.sum(plan.limiter_active)),
        infeasible_bands=int(np.sum(plan.infeasible)),
    )
