"""Chrominance-based pulse extraction.

Channels are normalized by their temporal mean over the whole analysis
window (R/mean(R), ...), *not* z-scored: the chrominance projection relies on
the normalized skin tone sitting at (1, 1, 1) so that a global intensity
change moves X and Y identically. The z-score standardization is only used
by the ICA path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, TooShort, ZeroMeanChannel, ZeroVariance
from .filters import apply_filter, design_bandpass
from .trace import ZERO_STD, ChannelTrace

MIN_CHROM_LEN = 64


@dataclass(frozen=True)
class BvpSignal:
    """Estimated blood-volume-pulse waveform."""

    samples: np.ndarray
    fps: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or len(s) < 16:
            raise InvalidConfig(f"BVP signal needs at least 16 samples, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class ChromPair:
    x_raw: np.ndarray
    y_raw: np.ndarray
    fps: float
    x_f: np.ndarray | None = None
    y_f: np.ndarray | None = None


def mean_normalize(t: ChannelTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    out = []
    for name, c in zip("rgb", (t.r, t.g, t.b)):
        m = c.mean()
        if m == 0:
            raise ZeroMeanChannel(f"channel {name} has zero mean")
        out.append(c / m)
    return out[0], out[1], out[2]


def chrominance_xy(t: ChannelTrace) -> ChromPair:
    rn, gn, bn = mean_normalize(t)
    x = 3 * rn - 2 * gn
    y = 1.5 * rn + gn - 1.5 * bn
    return ChromPair(x_raw=x, y_raw=y, fps=t.fps)


def chrom_alpha(x_f, y_f) -> float:
    """Ratio of population standard deviations, std(x_f) / std(y_f)."""
    sy = np.std(y_f)
    if sy < ZERO_STD:
        raise ZeroVariance("filtered Y component has zero variance")
    return float(np.std(x_f) / sy)


def chrom_bvp(t: ChannelTrace, return_pair: bool = False):
    if len(t) < MIN_CHROM_LEN:
        raise TooShort(f"chrominance method needs at least {MIN_CHROM_LEN} samples, got {len(t)}")
    pair = chrominance_xy(t)
    bp = design_bandpass(t.fps)
    x_f = apply_filter(bp, pair.x_raw)
    y_f = apply_filter(bp, pair.y_raw)
    if np.std(y_f) < ZERO_STD:
        # alpha multiplies an all-zero signal; any value gives the same S
        s = x_f
    else:
        s = x_f - chrom_alpha(x_f, y_f) * y_f
    bvp = BvpSignal(s, t.fps)
    if return_pair:
        return bvp, ChromPair(pair.x_raw, pair.y_raw, t.fps, x_f, y_f)
    return bvp


def green_bvp(t: ChannelTrace) -> BvpSignal:
    """Baseline: the bandpassed green channel alone."""
    if len(t) < MIN_CHROM_LEN:
        raise TooShort(f"need at least {MIN_CHROM_LEN} samples, got {len(t)}")
    return BvpSignal(apply_filter(design_bandpass(t.fps), t.g), t.fps)
