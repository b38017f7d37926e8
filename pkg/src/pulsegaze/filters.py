"""Butterworth bandpass design, zero-phase filtering and spectral peak picking.

The bandpass design goes prototype poles -> lowpass-to-bandpass transform ->
bilinear transform with frequency pre-warping, all in zero/pole/gain form,
and only expands to polynomial coefficients at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import EmptyBand, InvalidBand, NoAdequatePeak, TooShort

HR_LOW_HZ = 0.67
HR_HIGH_HZ = 3.0

# spectrum() pads until bins are at most this wide (1 BPM)
MAX_BIN_HZ = 1.0 / 60.0
MIN_SPECTRUM_LEN = 16


@dataclass(frozen=True)
class BandpassFilter:
    b: np.ndarray
    a: np.ndarray
    f_low: float
    f_high: float
    fs: float
    order: int

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def response(self, f) -> np.ndarray:
        """Complex frequency response at frequencies ``f`` (Hz)."""
        z = np.exp(1j * 2 * np.pi * np.asarray(f, dtype=float) / self.fs)
        return np.polyval(self.b[::-1], 1 / z) / np.polyval(self.a[::-1], 1 / z)


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    mags: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


def _butter_prototype(order: int) -> np.ndarray:
    k = np.arange(order)
    return np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))


def design_bandpass(fs: float, f_low: float = HR_LOW_HZ, f_high: float = HR_HIGH_HZ,
                    order: int = 3) -> BandpassFilter:
    if not (0 < f_low < f_high < fs / 2):
        raise InvalidBand(f"need 0 < f_low < f_high < fs/2, got {f_low}, {f_high}, fs={fs}")
    if order < 1:
        raise InvalidBand(f"order must be >= 1, got {order}")

    # pre-warp the band edges so they land exactly after the bilinear map
    wl = 2 * fs * math.tan(math.pi * f_low / fs)
    wh = 2 * fs * math.tan(math.pi * f_high / fs)
    bw = wh - wl
    w0 = math.sqrt(wl * wh)

    p_lp = _butter_prototype(order) * bw / 2
    root = np.sqrt(p_lp**2 - w0**2)
    p = np.concatenate([p_lp + root, p_lp - root])
    z = np.zeros(order)
    k = bw**order

    fs2 = 2 * fs
    zd = np.concatenate([(fs2 + z) / (fs2 - z), -np.ones(len(p) - len(z))])
    pd = (fs2 + p) / (fs2 - p)
    kd = k * np.real(np.prod(fs2 - z) / np.prod(fs2 - p))

    b = kd * np.real(np.poly(zd))
    a = np.real(np.poly(pd))
    if np.any(np.abs(pd) >= 1 - 1e-9):
        raise InvalidBand(f"band {f_low}-{f_high} Hz at fs={fs} yields an unstable filter")
    b.setflags(write=False)
    a.setflags(write=False)
    return BandpassFilter(b=b, a=a, f_low=float(f_low), f_high=float(f_high),
                          fs=float(fs), order=order)


def apply_filter(f: BandpassFilter, x) -> np.ndarray:
    """Zero-phase (forward-backward) filtering with zero initial conditions.

    The input mean is removed first and the output re-centred, so the result
    is exactly zero-mean. With zero initial conditions, forward-then-backward
    and backward-then-forward differ near the edges; averaging the two makes
    the operator commute exactly with time reversal. The effective magnitude
    response is |H|^2 (twice the order).
    """
    x = np.asarray(x, dtype=float)
    taps = max(len(f.a), len(f.b))
    if len(x) < 3 * taps:
        raise TooShort(f"need at least {3 * taps} samples to filter, got {len(x)}")
    x = x - x.mean()
    fb = lfilter(f.b, f.a, lfilter(f.b, f.a, x)[::-1])[::-1]
    bf = lfilter(f.b, f.a, lfilter(f.b, f.a, x[::-1])[::-1])
    y = 0.5 * (fb + bf)
    return y - y.mean()


def fft_length(n: int, fs: float) -> int:
    need = max(n, math.ceil(fs / MAX_BIN_HZ))
    return 1 << (need - 1).bit_length()


def spectrum(x, fs: float) -> Spectrum:
    """One-sided magnitude spectrum of the Hann-windowed, zero-padded signal."""
    x = np.asarray(x, dtype=float)
    if len(x) < MIN_SPECTRUM_LEN:
        raise TooShort(f"need at least {MIN_SPECTRUM_LEN} samples for a spectrum, got {len(x)}")
    nfft = fft_length(len(x), fs)
    mags = np.abs(np.fft.rfft(x * np.hanning(len(x)), n=nfft))
    freqs = np.arange(len(mags)) * (fs / nfft)
    return Spectrum(freqs=freqs, mags=mags)


def dominant_frequency(s: Spectrum, f_low: float = HR_LOW_HZ, f_high: float = HR_HIGH_HZ,
                       min_mag_ratio: float = 0.0) -> tuple[float, float]:
    """Largest-magnitude bin in the closed band [f_low, f_high].

    Ties go to the lower frequency. The peak is rejected when it is zero or
    smaller than ``min_mag_ratio`` times the summed in-band magnitude.
    """
    idx = np.flatnonzero((s.freqs >= f_low) & (s.freqs <= f_high))
    if len(idx) == 0:
        raise EmptyBand(f"no spectral bins in [{f_low}, {f_high}] Hz")
    band = s.mags[idx]
    i = int(np.argmax(band))
    peak = float(band[i])
    if peak <= 0 or peak < min_mag_ratio * float(band.sum()):
        raise NoAdequatePeak(
            f"peak {peak:.4g} at {s.freqs[idx[i]]:.3f} Hz is not adequate "
            f"(ratio threshold {min_mag_ratio} of in-band sum {band.sum():.4g})"
        )
    return float(s.freqs[idx[i]]), peak
