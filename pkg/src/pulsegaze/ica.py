"""FastICA on standardized color channels and pulse-source selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .chrom import BvpSignal
from .errors import NoConvergence, NoPulseComponent, SingularCovariance, TooShort
from .filters import (
    HR_HIGH_HZ,
    HR_LOW_HZ,
    apply_filter,
    design_bandpass,
    dominant_frequency,
    spectrum,
)
from .trace import ChannelTrace, NormalizedTrace, normalize_trace

log = logging.getLogger(__name__)

MIN_ICA_LEN = 64
# smallest admissible eigenvalue of the channel correlation matrix
COLLINEAR_TOL = 1e-10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
DEFAULT_PRIOR_BPM = 71.0


@dataclass(frozen=True)
class UnmixingMatrix:
    """``sources = w @ whitener @ (x - channel_means)``.

    ``w`` is k x k and orthonormal, ``whitener`` is k x 3; k == 3 unless the
    fit was explicitly allowed to drop collinear directions.
    """

    w: np.ndarray
    whitener: np.ndarray
    channel_means: np.ndarray

    @property
    def unmixing(self) -> np.ndarray:
        return self.w @ self.whitener

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.unmixing @ (x - self.channel_means[:, None])


@dataclass(frozen=True)
class SourceSet:
    sources: np.ndarray  # (k, n)
    fps: float

    def __len__(self):
        return self.sources.shape[0]


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W
    s, u = np.linalg.eigh(w @ w.T)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def _max_row_angle(w_new: np.ndarray, w_old: np.ndarray) -> float:
    cos = np.abs(np.einsum("ij,ij->i", w_new, w_old))
    return float(np.max(np.arccos(np.clip(cos, 0.0, 1.0))))


def whiten(x: np.ndarray, allow_rank_deficient: bool = False):
    """Eigendecomposition whitening. Returns (whitener, means, whitened data)."""
    means = x.mean(axis=1)
    xc = x - means[:, None]
    cov = xc @ xc.T / x.shape[1]
    d, e = np.linalg.eigh(cov)
    keep = d > COLLINEAR_TOL * max(d.max(), 1.0)
    if not keep.all():
        if not allow_rank_deficient:
            raise SingularCovariance(
                f"channel covariance is singular (eigenvalues {np.array2string(d, precision=3)})"
            )
        if not keep.any():
            raise SingularCovariance("channel covariance is zero")
    d, e = d[keep][::-1], e[:, keep][:, ::-1]
    whitener = (e / np.sqrt(d)).T
    return whitener, means, whitener @ xc


def fastica_fit(t: NormalizedTrace, seed: int, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER,
                allow_rank_deficient: bool = False) -> tuple[UnmixingMatrix, SourceSet]:
    """Symmetric FastICA with the tanh (log-cosh) contrast.

    Converged when no row of W turns by more than ``tol`` radians between
    iterations. ``allow_rank_deficient`` drops collinear channel directions
    instead of raising, fitting fewer than three sources.
    """
    x = t.as_array()
    n = x.shape[1]
    if n < MIN_ICA_LEN:
        raise TooShort(f"FastICA needs at least {MIN_ICA_LEN} samples, got {n}")
    whitener, means, z = whiten(x, allow_rank_deficient)
    k = z.shape[0]

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    for it in range(max_iter):
        y = w @ z
        gy = np.tanh(y)
        g_prime = 1.0 - gy**2
        w_new = _sym_decorrelate(gy @ z.T / n - g_prime.mean(axis=1)[:, None] * w)
        angle = _max_row_angle(w_new, w)
        w = w_new
        if angle < tol:
            break
    else:
        um = UnmixingMatrix(w, whitener, means)
        raise NoConvergence(
            f"FastICA did not converge in {max_iter} iterations (last step {angle:.2e} rad)",
            partial=(um, SourceSet(w @ z, t.fps)),
        )
    log.debug("FastICA converged after %d iterations (k=%d)", it + 1, k)
    return UnmixingMatrix(w, whitener, means), SourceSet(w @ z, t.fps)


def select_pulse_component(s: SourceSet, prior_bpm: float = DEFAULT_PRIOR_BPM,
                           min_mag_ratio: float = 0.0) -> int:
    """Index of the source most likely to carry the pulse.

    A source qualifies when its dominant frequency over the whole spectrum
    falls in the heart-rate band and passes the adequacy ratio. Among
    qualifiers the one closest to ``prior_bpm`` wins; ties go to the larger
    peak, then the lower index.
    """
    candidates = []
    for i, src in enumerate(s.sources):
        sp = spectrum(src, s.fps)
        f_dom, mag = dominant_frequency(sp, 0.0, s.fps / 2)
        if not HR_LOW_HZ <= f_dom <= HR_HIGH_HZ:
            continue
        in_band = sp.mags[(sp.freqs >= HR_LOW_HZ) & (sp.freqs <= HR_HIGH_HZ)]
        if mag < min_mag_ratio * in_band.sum():
            continue
        candidates.append((abs(60.0 * f_dom - prior_bpm), -mag, i))
    if not candidates:
        raise NoPulseComponent(f"no source has a dominant frequency in [{HR_LOW_HZ}, {HR_HIGH_HZ}] Hz")
    return min(candidates)[2]


def ica_bvp(t: ChannelTrace, seed: int, prior_bpm: float = DEFAULT_PRIOR_BPM,
            min_mag_ratio: float = 0.0, unmixing: UnmixingMatrix | None = None,
            tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> BvpSignal:
    """Standardize, unmix, pick the pulse source and bandpass it.

    With ``unmixing`` given, that fixed matrix is applied instead of fitting
    one on this trace. Collinear channels (e.g. a noiseless trace where all
    three channels carry the same waveform) are handled by fitting in the
    reduced subspace. If FastICA hits its iteration cap the last iterate is
    used: with two near-Gaussian noise sources their mutual rotation never
    settles, while the non-Gaussian pulse row does.
    """
    norm = normalize_trace(t)
    if unmixing is not None:
        sources = SourceSet(unmixing.apply(norm.as_array()), t.fps)
    else:
        try:
            _, sources = fastica_fit(norm, seed, tol=tol, max_iter=max_iter,
                                     allow_rank_deficient=True)
        except NoConvergence as exc:
            log.info("%s; using the last iterate", exc)
            _, sources = exc.partial
    idx = select_pulse_component(sources, prior_bpm, min_mag_ratio)
    return BvpSignal(apply_filter(design_bandpass(t.fps), sources.sources[idx]), t.fps)
