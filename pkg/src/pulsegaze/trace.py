"""Color traces: ROI spatial averaging and per-channel standardization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInput,
    InvalidConfig,
    MixedDimensions,
    RoiOutOfBounds,
    TooShort,
    ZeroVariance,
)

ZERO_STD = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    """An RGB frame; ``pixels`` has shape (height, width, 3), promoted to float."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidConfig(f"frame must be at least 1x1, got {self.width}x{self.height}")
        px = np.asarray(self.pixels, dtype=float)
        if px.size != self.width * self.height * 3:
            raise InvalidConfig(
                f"expected {self.width * self.height} RGB pixels, got array of size {px.size}"
            )
        object.__setattr__(self, "pixels", _frozen(px.reshape(self.height, self.width, 3)))

    @classmethod
    def from_array(cls, arr) -> "Frame":
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidConfig(f"expected (h, w, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)


@dataclass(frozen=True)
class RoiSpec:
    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise InvalidConfig(f"ROI extents must be >= 1, got w={self.w} h={self.h}")

    @classmethod
    def full(cls, frame: Frame) -> "RoiSpec":
        return cls(0, 0, frame.width, frame.height)

    @classmethod
    def parse(cls, text: str) -> "RoiSpec":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise InvalidConfig(f"roi must be 'x0,y0,w,h', got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise InvalidConfig(f"roi must be integers, got {text!r}") from exc


@dataclass(frozen=True)
class ChannelTrace:
    """Per-frame spatial means of the R, G and B channels (0-255 scale)."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    fps: float

    def __post_init__(self):
        r, g, b = (_frozen(c) for c in (self.r, self.g, self.b))
        if not (r.ndim == g.ndim == b.ndim == 1):
            raise InvalidConfig("trace channels must be 1-D")
        if not (len(r) == len(g) == len(b)) or len(r) < 1:
            raise InvalidConfig(
                f"trace channels must be equal-length and non-empty: {len(r)}, {len(g)}, {len(b)}"
            )
        if not self.fps > 0:
            raise InvalidConfig(f"fps must be positive, got {self.fps}")
        for name, c in zip("rgb", (r, g, b)):
            if not np.all(np.isfinite(c)) or c.min() < 0 or c.max() > 255:
                raise InvalidConfig(f"channel {name} has values outside [0, 255]")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self):
        return len(self.r)

    @property
    def duration(self) -> float:
        return len(self.r) / self.fps

    def as_array(self) -> np.ndarray:
        """Channels stacked as a (3, n) array."""
        return np.vstack([self.r, self.g, self.b])

    def slice(self, start: int, stop: int) -> "ChannelTrace":
        return ChannelTrace(self.r[start:stop], self.g[start:stop], self.b[start:stop], self.fps)

    def scaled(self, k: float) -> "ChannelTrace":
        return ChannelTrace(self.r * k, self.g * k, self.b * k, self.fps)


@dataclass(frozen=True)
class NormalizedTrace:
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    fps: float

    def __post_init__(self):
        for name in "rgb":
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (len(self.r) == len(self.g) == len(self.b)):
            raise InvalidConfig("normalized channels must be equal-length")

    def __len__(self):
        return len(self.r)

    def as_array(self) -> np.ndarray:
        return np.vstack([self.r, self.g, self.b])

    @classmethod
    def from_array(cls, x, fps: float) -> "NormalizedTrace":
        """Standardize each row of a (3, n) array."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != 3:
            raise InvalidConfig(f"expected 3 channels, got {x.shape[0]}")
        return cls(*(normalize_channel(c) for c in x), fps=fps)


def roi_mean(frame: Frame, roi: RoiSpec) -> tuple[float, float, float]:
    """Arithmetic mean of each channel over the ROI pixels."""
    if roi.x0 < 0 or roi.y0 < 0 or roi.x0 + roi.w > frame.width or roi.y0 + roi.h > frame.height:
        raise RoiOutOfBounds(
            f"ROI ({roi.x0},{roi.y0},{roi.w},{roi.h}) exceeds {frame.width}x{frame.height} frame"
        )
    patch = frame.pixels[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w]
    m = patch.reshape(-1, 3).mean(axis=0)
    return float(m[0]), float(m[1]), float(m[2])


def build_trace(frames: Sequence[Frame], roi: RoiSpec, fps: float) -> ChannelTrace:
    if len(frames) == 0:
        raise EmptyInput("no frames to build a trace from")
    w, h = frames[0].width, frames[0].height
    means = []
    for i, f in enumerate(frames):
        if (f.width, f.height) != (w, h):
            raise MixedDimensions(f"frame {i} is {f.width}x{f.height}, expected {w}x{h}")
        means.append(roi_mean(f, roi))
    rgb = np.asarray(means)
    return ChannelTrace(rgb[:, 0], rgb[:, 1], rgb[:, 2], fps)


def normalize_channel(x) -> np.ndarray:
    """Z-score with the population standard deviation (divide by N)."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise TooShort(f"need at least 2 samples to standardize, got {len(x)}")
    mu = x.mean()
    sd = x.std()
    if sd < ZERO_STD:
        raise ZeroVariance(f"channel standard deviation {sd:.3g} is below {ZERO_STD}")
    return (x - mu) / sd


def normalize_trace(t: ChannelTrace) -> NormalizedTrace:
    return NormalizedTrace(
        normalize_channel(t.r), normalize_channel(t.g), normalize_channel(t.b), t.fps
    )
