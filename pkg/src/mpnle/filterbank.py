"""Gammatone subband weights on an ERB-spaced grid.

The magnitude prototype is a fourth-order symmetric approximation,

    |H_j(f)|**2 = (1 + ((f - fc_j) / (c * ERB(fc_j)))**2) ** -4,

with ``c`` chosen so that the -3 dB bandwidth equals ``ERB(fc_j)``.  The
columns are then normalized so every bin distributes exactly its own power
over the bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMATONE_ORDER = 4
# half-power point of (1 + x^2)^-4 sits at x = sqrt(2^(1/4) - 1)
BANDWIDTH_FACTOR = 1.0 / (2.0 * np.sqrt(2.0 ** (1.0 / GAMMATONE_ORDER) - 1.0))


def erb_rate(f):
    """ERB-rate (number of ERBs below ``f`` Hz)."""
    return 21.4 * np.log10(4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


def inverse_erb_rate(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) * 1000.0 / 4.37


def erb_bandwidth(f):
    return 24.7 * (4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


@dataclass(frozen=True)
class BandLayout:
    center_freqs: np.ndarray
    erb_bandwidths: np.ndarray

    @property
    def n_bands(self) -> int:
        return len(self.center_freqs)


def erb_layout(n_bands: int = 30, f_lo: float = 150.0, f_hi: float = 8000.0,
               sample_rate: float = 16000.0) -> BandLayout:
    """Center frequencies equally spaced on the ERB-rate scale.

    With a single band the center sits at ``f_lo``.
    """
    if n_bands < 1:
        raise ValueError("need at least one band")
    if not 0.0 < f_lo < f_hi <= sample_rate / 2.0:
        raise ValueError(
            f"invalid range: require 0 < f_lo < f_hi <= {sample_rate / 2.0} Hz, "
            f"got {f_lo}..{f_hi}"
        )
    rates = np.linspace(erb_rate(f_lo), erb_rate(f_hi), n_bands)
    centers = inverse_erb_rate(rates)
    centers[0] = f_lo
    if n_bands > 1:
        centers[-1] = f_hi
    return BandLayout(centers, erb_bandwidth(centers))


def gammatone_response(layout: BandLayout, freqs: np.ndarray) -> np.ndarray:
    """Raw squared magnitude responses, J x len(freqs)."""
    freqs = np.asarray(freqs, dtype=float)
    width = BANDWIDTH_FACTOR * layout.erb_bandwidths[:, None]
    x = (freqs[None, :] - layout.center_freqs[:, None]) / width
    return (1.0 + x**2) ** (-GAMMATONE_ORDER)


@dataclass(frozen=True)
class SubbandWeights:
    """Normalized weights ``omega[j, k]``; every column sums to one."""

    omega: np.ndarray
    layout: BandLayout

    @property
    def n_bands(self) -> int:
        return self.omega.shape[0]

    @property
    def n_bins(self) -> int:
        return self.omega.shape[1]

    def to_csv(self, path) -> None:
        header = "center_hz," + ",".join(f"bin{k}" for k in range(self.n_bins))
        rows = np.column_stack([self.layout.center_freqs, self.omega])
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")


def gammatone_weights(layout: BandLayout, n_bins: int, sample_rate: float = 16000.0,
                      fft_size: int | None = None) -> SubbandWeights:
    if n_bins < 1:
        raise ValueError("bin frequency grid is empty")
    fft_size = fft_size or 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * sample_rate / max(fft_size, 1)
    raw = gammatone_response(layout, freqs)
    omega = raw / raw.sum(axis=0, keepdims=True)
    omega.setflags(write=False)
    return SubbandWeights(omega, layout)


def band_power(bin_powers, weights: SubbandWeights) -> np.ndarray:
    """Band powers ``sum_k omega[j, k] * p[k]``.

    Accepts a length-K vector or a K x I matrix (one column per frame).
    """
    p = np.asarray(bin_powers, dtype=float)
    if p.shape[0] != weights.n_bins:
        raise ValueError(
            f"dimension mismatch: {p.shape[0]} bin powers for {weights.n_bins} bins"
        )
    return weights.omega @ p
