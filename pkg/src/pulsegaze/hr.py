"""BPM estimation from BVP signals, sliding-window aggregation, error summaries."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chrom import BvpSignal, chrom_bvp, green_bvp
from .errors import (
    AllWindowsFailed,
    EmptyInput,
    InvalidConfig,
    NoAdequatePeak,
    NoPulseComponent,
    TooShort,
    TraceTooShort,
)
from .filters import HR_HIGH_HZ, HR_LOW_HZ, dominant_frequency, spectrum
from .ica import DEFAULT_PRIOR_BPM, UnmixingMatrix, ica_bvp
from .trace import ChannelTrace

log = logging.getLogger(__name__)

METHODS = ("ica", "chrom", "green")
# per-window failures that are counted and skipped rather than raised
SKIPPABLE = (NoAdequatePeak, NoPulseComponent)


@dataclass(frozen=True)
class HrEstimate:
    bpm: float
    peak_mag: float
    window_start: int = 0
    window_len: int = 0


@dataclass
class HrSeries:
    estimates: list
    median_bpm: float
    std_bpm: float
    truth_bpm: float | None = None
    abs_error: float | None = None
    skipped: int = 0
    method: str = ""

    @property
    def bpms(self) -> np.ndarray:
        return np.array([e.bpm for e in self.estimates])

    @classmethod
    def from_estimates(cls, estimates, truth_bpm=None, skipped=0, method="") -> "HrSeries":
        if not estimates:
            raise EmptyInput("no estimates to summarize")
        bpm = np.array([e.bpm for e in estimates])
        med = float(np.median(bpm))
        err = None if truth_bpm is None else abs(med - truth_bpm)
        return cls(list(estimates), med, float(np.std(bpm)), truth_bpm, err, skipped, method)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def estimate_hr(bvp: BvpSignal, min_mag_ratio: float = 0.0, window_start: int = 0) -> HrEstimate:
    """60 x the dominant in-band frequency of the BVP spectrum."""
    need = math.ceil(2 * bvp.fps / HR_LOW_HZ)
    if len(bvp) < need:
        raise TooShort(f"need at least {need} samples (two cycles at {HR_LOW_HZ} Hz), got {len(bvp)}")
    f, mag = dominant_frequency(spectrum(bvp.samples, bvp.fps), HR_LOW_HZ, HR_HIGH_HZ, min_mag_ratio)
    return HrEstimate(bpm=60.0 * f, peak_mag=mag, window_start=window_start, window_len=len(bvp))


def window_seed(seed: int, index: int) -> int:
    """Independent, order-free seed for window ``index``."""
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


def window_starts(n: int, fps: float, window_s: float, hop_s: float) -> tuple[list[int], int]:
    if window_s <= 0 or hop_s <= 0:
        raise InvalidConfig("window_s and hop_s must be positive")
    win = int(round(window_s * fps))
    hop = max(1, int(round(hop_s * fps)))
    if win > n:
        raise TraceTooShort(f"trace of {n / fps:.2f} s is shorter than the {window_s} s window")
    return list(range(0, n - win + 1, hop)), win


def bvp_for(t: ChannelTrace, method: str, seed: int = 0, prior_bpm: float = DEFAULT_PRIOR_BPM,
            min_mag_ratio: float = 0.0, unmixing: UnmixingMatrix | None = None) -> BvpSignal:
    if method == "ica":
        return ica_bvp(t, seed, prior_bpm=prior_bpm, min_mag_ratio=min_mag_ratio, unmixing=unmixing)
    if method == "chrom":
        return chrom_bvp(t)
    if method == "green":
        return green_bvp(t)
    raise InvalidConfig(f"unknown method {method!r}; expected one of {METHODS}")


def windowed_hr(t: ChannelTrace, method: str, window_s: float = 10.0, hop_s: float = 1.0,
                seed: int = 0, prior_bpm: float = DEFAULT_PRIOR_BPM, min_mag_ratio: float = 0.0,
                unmixing: UnmixingMatrix | None = None, truth_bpm: float | None = None,
                jobs: int = 1) -> HrSeries:
    """Slide a window over the trace, estimate BPM per window, aggregate by median.

    Windows whose estimate fails for lack of a usable peak or pulse source are
    skipped and counted in ``HrSeries.skipped``.
    """
    if method not in METHODS:
        raise InvalidConfig(f"unknown method {method!r}; expected one of {METHODS}")
    starts, win = window_starts(len(t), t.fps, window_s, hop_s)

    def one(i_start):
        i, start = i_start
        seg = t.slice(start, start + win)
        try:
            bvp = bvp_for(seg, method, window_seed(seed, i), prior_bpm, min_mag_ratio, unmixing)
            return estimate_hr(bvp, min_mag_ratio, window_start=start)
        except SKIPPABLE as exc:
            log.debug("window %d skipped: %s", i, exc)
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, enumerate(starts)))
    else:
        results = [one(x) for x in enumerate(starts)]
    estimates = [r for r in results if r is not None]
    skipped = len(results) - len(estimates)
    if not estimates:
        raise AllWindowsFailed(f"all {len(results)} windows failed to produce an estimate")
    return HrSeries.from_estimates(estimates, truth_bpm, skipped, method)


@dataclass
class ErrorSummary:
    per_row: list = field(default_factory=list)
    mean_abs_error: float = 0.0

    @property
    def mean_rounded(self) -> int:
        return round_half_away(self.mean_abs_error)


def error_summary(rows) -> ErrorSummary:
    """Per-row |truth - median| and their mean.

    Each row is ``(truth_bpm, series)`` where ``series`` is an HrSeries or a
    bare median value.
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("error summary needs at least one row")
    errs = []
    for truth, s in rows:
        med = s.median_bpm if isinstance(s, HrSeries) else float(s)
        errs.append(abs(float(truth) - med))
    return ErrorSummary(errs, float(np.mean(errs)))
