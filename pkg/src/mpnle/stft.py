"""STFT analysis and weighted overlap-add synthesis.

Powers are reported in calibrated units: the per-bin powers of a frame sum
to the mean square of the windowed frame divided by the mean square of the
window, so a stationary signal with RMS 1 has a total bin power close to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("TimeSignal must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("TimeSignal samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def power(self) -> float:
        return float(np.mean(self.samples**2))


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftParams:
    window_length: int = 512
    hop: int = 256
    fft_size: int = 512
    window: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.window is None:
            object.__setattr__(self, "window", periodic_hann(self.window_length))
        window = np.asarray(self.window, dtype=float)
        object.__setattr__(self, "window", window)
        if window.shape != (self.window_length,):
            raise ValueError("window length does not match window_length")
        if self.hop <= 0 or self.window_length % self.hop:
            raise ValueError("hop must divide window_length")
        if self.fft_size < self.window_length:
            raise ValueError("fft_size must be at least window_length")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def bin_frequencies(self, sample_rate: float) -> np.ndarray:
        return np.arange(self.n_bins) * sample_rate / self.fft_size

    def bin_power_scale(self) -> np.ndarray:
        """Per-bin factor turning ``|X_k|**2`` into calibrated power.

        Includes the factor 2 for bins that stand for a conjugate pair, so
        that summing over the one-sided spectrum satisfies Parseval.
        """
        scale = np.full(self.n_bins, 2.0)
        scale[0] = 1.0
        if self.fft_size % 2 == 0:
            scale[-1] = 1.0
        return scale / (self.fft_size * np.sum(self.window**2))

    def overlap_sum(self, squared: bool = False) -> np.ndarray:
        """One period (``hop`` samples) of the shifted window sum.

        Constant for a window satisfying COLA at this hop.  The periodic Hann
        at 50% overlap is COLA for the plain sum but not for the squared sum.
        """
        w = self.window**2 if squared else self.window
        return w.reshape(-1, self.hop).sum(axis=0)


@dataclass(frozen=True)
class Spectrogram:
    """One-sided STFT coefficients, ``coeffs[k, i]`` for bin k and frame i."""

    coeffs: np.ndarray
    params: StftParams
    n_samples: int
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim != 2 or coeffs.shape[0] != self.params.n_bins:
            raise ValueError(
                f"expected {self.params.n_bins} bins, got shape {coeffs.shape}"
            )
        if coeffs.shape[1] < 1:
            raise ValueError("Spectrogram needs at least one frame")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[1]

    def bin_powers(self) -> np.ndarray:
        """Calibrated power of every time-frequency cell (K x I)."""
        return np.abs(self.coeffs) ** 2 * self.params.bin_power_scale()[:, None]


def n_frames(n_samples: int, params: StftParams) -> int:
    return (n_samples - params.window_length) // params.hop + 1


def analyze(signal: TimeSignal, params: StftParams | None = None) -> Spectrogram:
    params = params or StftParams()
    x = signal.samples
    if len(x) < params.window_length:
        raise ValueError(
            f"insufficient samples: {len(x)} < window length {params.window_length}"
        )
    count = n_frames(len(x), params)
    idx = np.arange(params.window_length)[None, :] + params.hop * np.arange(count)[:, None]
    frames = x[idx] * params.window
    coeffs = np.fft.rfft(frames, n=params.fft_size, axis=1).T
    return Spectrogram(coeffs, params, len(x), signal.sample_rate)


def synthesize(spec: Spectrogram) -> TimeSignal:
    """Weighted overlap-add with the analysis window as synthesis window.

    Each output sample is divided by the squared-window sum of the frames
    covering it (least-squares inverse), so reconstruction is exact wherever
    that sum is nonzero.  Uncovered samples, including the very first one
    where the Hann window is zero, come out as zero.
    """
    params = spec.params
    needed = (spec.n_frames - 1) * params.hop + params.window_length
    if spec.n_samples < needed:
        raise ValueError(
            f"inconsistent params: {spec.n_frames} frames need {needed} samples, "
            f"spectrogram claims {spec.n_samples}"
        )
    frames = np.fft.irfft(spec.coeffs.T, n=params.fft_size, axis=1)
    frames = frames[:, : params.window_length] * params.window
    out = np.zeros(spec.n_samples)
    norm = np.zeros(spec.n_samples)
    w2 = params.window**2
    for i, frame in enumerate(frames):
        start = i * params.hop
        out[start : start + params.window_length] += frame
        norm[start : start + params.window_length] += w2
    covered = norm > 1e-10 * w2.max()
    out[covered] /= norm[covered]
    return TimeSignal(out, spec.sample_rate)


def apply_gains(spec: Spectrogram, gains: np.ndarray) -> Spectrogram:
    """Scale coefficients element-wise.

    ``gains`` may be a full K x I matrix or a length-K vector applied to
    every frame (the time-invariant case).
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim == 1:
        gains = gains[:, None]
    if gains.ndim != 2 or gains.shape[0] != spec.coeffs.shape[0] or gains.shape[1] not in (1, spec.n_frames):
        raise ValueError(
            f"gain shape {gains.shape} does not match spectrogram {spec.coeffs.shape}"
        )
    if np.any(gains < 0) or not np.all(np.isfinite(gains)):
        raise ValueError("gains must be finite and non-negative")
    return Spectrogram(spec.coeffs * gains, spec.params, spec.n_samples, spec.sample_rate)
