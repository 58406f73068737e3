"""Minimum-processing NLE gain rule.

Stages, in order: long-term bin powers, band powers, weighted audibility
limits, SNR limits, closed-form per-band gains, sound-level limiting and
projection of band gains back onto STFT bins.  Every stage is a plain
function on numpy arrays so it can be checked in isolation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .filterbank import SubbandWeights, band_power, erb_layout, gammatone_weights
from .stft import Spectrogram, StftParams


@dataclass(frozen=True)
class NleConfig:
    """Processing configuration.

    ``band_importance`` of ``None`` means uniform importance.  Supplied
    tables are normalized to sum to one so that the ASII bound holds for the
    score computed with the same weights.
    """

    target_asii: float = 0.7
    band_importance: tuple | None = None
    max_band_power_dbspl: float = 100.0
    p0: float = 1e-10
    n_bands: int = 30
    f_lo: float = 150.0
    f_hi: float = 8000.0
    sample_rate: int = 16000
    window_length: int = 512
    hop: int = 256
    fft_size: int = 512

    def __post_init__(self):
        if not 0.0 <= self.target_asii < 1.0:
            raise ValueError(f"target_asii must be in [0, 1), got {self.target_asii}")
        if self.band_importance is not None:
            gamma = np.asarray(self.band_importance, dtype=float)
            if gamma.shape != (self.n_bands,):
                raise ValueError(
                    f"band_importance needs {self.n_bands} entries, got {gamma.size}"
                )
            if np.any(gamma < 0) or gamma.sum() <= 0:
                raise ValueError("band_importance must be non-negative, not all zero")
            object.__setattr__(self, "band_importance", tuple(gamma / gamma.sum()))
        if self.p0 <= 0:
            raise ValueError("p0 must be positive")

    @property
    def gamma(self) -> np.ndarray:
        if self.band_importance is None:
            return np.full(self.n_bands, 1.0 / self.n_bands)
        return np.asarray(self.band_importance)

    @property
    def max_band_power(self) -> float:
        return self.p0 * 10.0 ** (self.max_band_power_dbspl / 10.0)

    def stft_params(self) -> StftParams:
        return StftParams(self.window_length, self.hop, self.fft_size)

    def subband_weights(self) -> SubbandWeights:
        layout = erb_layout(self.n_bands, self.f_lo, self.f_hi, self.sample_rate)
        return gammatone_weights(
            layout, self.fft_size // 2 + 1, self.sample_rate, self.fft_size
        )

    def replace(self, **changes) -> "NleConfig":
        values = asdict(self)
        values.update(changes)
        return NleConfig(**values)

    @classmethod
    def from_json(cls, path, **overrides) -> "NleConfig":
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if data.get("band_importance") is not None:
            data["band_importance"] = tuple(data["band_importance"])
        return cls(**data)


def long_term_power(spec: Spectrogram) -> np.ndarray:
    """Per-bin power averaged over all frames (calibrated units)."""
    if spec.coeffs.size == 0:
        raise ValueError("empty spectrogram")
    return spec.bin_powers().mean(axis=1)


def weight_audibility_limits(target_asii: float, gamma) -> np.ndarray:
    """Per-band audibility limits ``A* gamma_j / sum_i gamma_i**2``.

    These satisfy ``sum_j gamma_j I_j = A*``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if not 0.0 <= target_asii < 1.0:
        raise ValueError(f"target must be in [0, 1), got {target_asii}")
    if np.any(gamma < 0) or not np.any(gamma > 0):
        raise ValueError("band importance must be non-negative and not all zero")
    limits = target_asii * gamma / np.sum(gamma**2)
    if np.any(limits >= 1.0):
        bad = np.flatnonzero(limits >= 1.0).tolist()
        raise ValueError(f"infeasible per-band target in bands {bad}: I_j >= 1")
    return limits


def snr_limit(audibility):
    """Minimum processed band SNR for an audibility limit, ``I / (1 - I)``."""
    audibility = np.asarray(audibility, dtype=float)
    if np.any(audibility < 0) or np.any(audibility >= 1):
        raise ValueError("audibility limits must lie in [0, 1)")
    out = audibility / (1.0 - audibility)
    return out if out.ndim else float(out)


def optimal_gains(speech_band_power, noise_band_power, snr_target):
    """Closed-form per-band gains.

    Unity where the speech already meets ``noise * target``; otherwise the
    gain that lifts the band SNR exactly to the target.  Bands with no speech
    power but a nonzero requirement cannot be helped; they get unity gain and
    are reported in the returned mask.

    Returns
    -------
    gains, infeasible : ndarray, ndarray of bool
    """
    s = np.asarray(speech_band_power, dtype=float)
    n = np.asarray(noise_band_power, dtype=float)
    t = np.asarray(snr_target, dtype=float)
    if np.any(s < 0) or np.any(n < 0) or np.any(t < 0):
        raise ValueError("band powers and targets must be non-negative")
    required = n * t
    infeasible = (s == 0) & (required > 0)
    active = (s < required) & ~infeasible
    gains = np.ones(np.broadcast(s, required).shape)
    gains[active] = np.sqrt(required[active] / s[active])
    return gains, infeasible


def limit_gains(band_gains, speech_band_power, max_band_power: float):
    """Cap each band gain so the processed band power stays below the maximum.

    Returns the limited gains and a mask of bands where the cap was binding.
    """
    if max_band_power <= 0:
        raise ValueError("max_band_power must be positive")
    g = np.asarray(band_gains, dtype=float)
    s = np.asarray(speech_band_power, dtype=float)
    with np.errstate(divide="ignore"):
        cap = np.where(s > 0, np.sqrt(max_band_power / np.where(s > 0, s, 1.0)), np.inf)
    limited = np.minimum(g, cap)
    return limited, g > cap


def project_gains_to_bins(band_gains, weights: SubbandWeights) -> np.ndarray:
    """Per-bin gain as the omega-weighted RMS of the band gains.

    Divides by the actual column sum (one, up to rounding) so unity band
    gains map to exactly unity bin gains.
    """
    g = np.asarray(band_gains, dtype=float)
    if g.shape != (weights.n_bands,):
        raise ValueError(
            f"dimension mismatch: {g.shape} band gains for {weights.n_bands} bands"
        )
    omega = weights.omega
    return np.sqrt((omega * g[:, None] ** 2).sum(axis=0) / omega.sum(axis=0))


@dataclass
class GainPlan:
    """All intermediate stages of one gain computation.

    One gain per band is stored; every bin of a band shares it.
    """

    speech_bin_power: np.ndarray
    noise_bin_power: np.ndarray
    speech_band_power: np.ndarray
    noise_band_power: np.ndarray
    audibility: np.ndarray
    snr_target: np.ndarray
    band_gains: np.ndarray
    limited_gains: np.ndarray
    limiter_active: np.ndarray
    infeasible: np.ndarray
    bin_gains: np.ndarray
    weights: SubbandWeights = field(repr=False)

    @property
    def band_snr(self) -> np.ndarray:
        """Processed band SNR implied by the per-band gains."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.limited_gains**2 * self.speech_band_power / self.noise_band_power

    @property
    def processed_band_power(self) -> np.ndarray:
        """Band powers of the speech after the projected bin gains."""
        return band_power(self.bin_gains**2 * self.speech_bin_power, self.weights)

    def diagnostics_rows(self):
        for j in range(len(self.band_gains)):
            yield {
                "band": j,
                "center_hz": float(self.weights.layout.center_freqs[j]),
                "speech_band_power": float(self.speech_band_power[j]),
                "noise_band_power": float(self.noise_band_power[j]),
                "audibility": float(self.audibility[j]),
                "snr_target": float(self.snr_target[j]),
                "gain": float(self.band_gains[j]),
                "limited_gain": float(self.limited_gains[j]),
                "limiter_active": int(self.limiter_active[j]),
                "infeasible": int(self.infeasible[j]),
                "band_snr": float(self.band_snr[j]),
            }


def plan_gains(speech: Spectrogram, noise: Spectrogram, config: NleConfig,
               weights: SubbandWeights | None = None) -> GainPlan:
    if speech.params != noise.params or speech.coeffs.shape[0] != noise.coeffs.shape[0]:
        raise ValueError("speech and noise must share STFT parameters")
    weights = weights or config.subband_weights()
    s_bin = long_term_power(speech)
    n_bin = long_term_power(noise)
    s_band = band_power(s_bin, weights)
    n_band = band_power(n_bin, weights)
    audibility = weight_audibility_limits(config.target_asii, config.gamma)
    target = snr_limit(audibility)
    gains, infeasible = optimal_gains(s_band, n_band, target)
    limited, limiter_active = limit_gains(gains, s_band, config.max_band_power)
    bin_gains = project_gains_to_bins(limited, weights)
    return GainPlan(
        s_bin, n_bin, s_band, n_band, audibility, np.atleast_1d(target),
        gains, limited, limiter_active, infeasible, bin_gains, weights,
    )
