"""Open/closed eye classification and blink-duration extraction.

Two classifiers share the same preprocessing (histogram equalization):

* eigenimages (Gram-matrix PCA) followed by a two-class Fisher discriminant,
* a 576-16-1 feedforward network trained by full-batch gradient descent.

Per-frame labels are cleaned by filling single-frame Open gaps inside a
blink, then maximal Closed runs become blink events.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateClass,
    DegenerateData,
    EmptyInput,
    InvalidConfig,
    KTooLarge,
    NonFiniteLoss,
    TooFewImages,
)

log = logging.getLogger(__name__)

EYE_SIZE = 24
EYE_PIXELS = EYE_SIZE * EYE_SIZE
HIDDEN_UNITS = 16
# eigenvalues below this fraction of the largest are treated as zero
PCA_RANK_TOL = 1e-9


class FrameLabel(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    NO_EYE = "noeye"

    @classmethod
    def parse(cls, text: str) -> "FrameLabel":
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {"open": cls.OPEN, "o": cls.OPEN, "closed": cls.CLOSED, "shut": cls.CLOSED,
                   "c": cls.CLOSED, "noeye": cls.NO_EYE, "none": cls.NO_EYE, "n": cls.NO_EYE}
        try:
            return aliases[key]
        except KeyError:
            raise InvalidConfig(f"unknown eye label {text!r}") from None


OPEN, CLOSED, NO_EYE = FrameLabel.OPEN, FrameLabel.CLOSED, FrameLabel.NO_EYE


@dataclass(frozen=True)
class EyeImage:
    """24x24 grayscale eye crop with values in [0, 255]."""

    pixels: np.ndarray
    equalized: bool = False

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.size != EYE_PIXELS:
            raise InvalidConfig(f"eye image must have {EYE_PIXELS} pixels, got {px.size}")
        if not np.all(np.isfinite(px)) or px.min() < -1e-6 or px.max() > 255 + 1e-6:
            raise InvalidConfig("eye image values must lie in [0, 255]")
        px = np.clip(px, 0, 255).reshape(EYE_SIZE, EYE_SIZE)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def vector(self) -> np.ndarray:
        return self.pixels.ravel()


def preprocess_eye(img: EyeImage) -> EyeImage:
    """256-bin histogram equalization."""
    v = np.clip(np.rint(img.pixels), 0, 255).astype(np.int64)
    cdf = np.cumsum(np.bincount(v.ravel(), minlength=256))
    n = v.size
    cdf_min = cdf[v.min()]
    if cdf_min == n:
        return EyeImage(v, equalized=True)
    lut = np.rint((cdf - cdf_min) / (n - cdf_min) * 255.0)
    return EyeImage(np.clip(lut, 0, 255)[v], equalized=True)


def _equalized(img: EyeImage) -> EyeImage:
    return img if img.equalized else preprocess_eye(img)


def _image_matrix(images) -> np.ndarray:
    """Rows are image vectors; EyeImages are equalized first, raw arrays are used as-is."""
    if isinstance(images, np.ndarray):
        return np.atleast_2d(np.asarray(images, dtype=float))
    return np.array([_equalized(im).vector for im in images], dtype=float)


@dataclass(frozen=True)
class EigenBasis:
    mean_image: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.mean_image) @ self.components.T

    def reconstruct(self, coeffs) -> np.ndarray:
        return self.mean_image + np.asarray(coeffs) @ self.components


def fit_pca(images, k: int = 100) -> EigenBasis:
    """Eigenimages via the Gram-matrix (inner-product) trick.

    ``images`` is a sequence of EyeImage or an (n, d) array. If the centred
    data has rank below ``k`` only the non-degenerate components are kept.
    """
    a = _image_matrix(images)
    n, d = a.shape
    if n < 2:
        raise TooFewImages(f"PCA needs at least 2 images, got {n}")
    if k < 1 or k > min(n - 1, d):
        raise KTooLarge(f"k={k} exceeds min(n-1, d) = {min(n - 1, d)}")
    mean = a.mean(axis=0)
    ac = a - mean
    lam, v = np.linalg.eigh(ac @ ac.T)
    lam, v = lam[::-1], v[:, ::-1]
    if lam[0] <= 0 or np.allclose(ac, 0):
        raise DegenerateData("all images are identical; covariance is zero")
    rank = int(np.sum(lam > PCA_RANK_TOL * lam[0]))
    if rank < k:
        log.info("data rank %d < requested k=%d; keeping %d components", rank, k, rank)
        k = rank
    comps = (ac.T @ v[:, :k]) / np.sqrt(lam[:k])
    comps = comps.T
    comps /= np.linalg.norm(comps, axis=1, keepdims=True)
    # covariance eigenvalues (divide by n)
    return EigenBasis(mean_image=mean, components=comps, eigenvalues=lam[:k] / n)


@dataclass(frozen=True)
class LdaModel:
    """Fisher discriminant in eigenimage space; score > threshold means Closed."""

    basis: EigenBasis
    w: np.ndarray
    threshold: float
    positive_label: FrameLabel = CLOSED

    def score(self, x) -> np.ndarray | float:
        return self.basis.project(x) @ self.w

    @property
    def discriminant_image(self) -> np.ndarray:
        """The discriminant direction mapped back to pixel space."""
        return self.w @ self.basis.components


def fit_lda(basis: EigenBasis, open_imgs, closed_imgs) -> LdaModel:
    po = basis.project(_image_matrix(open_imgs))
    pc = basis.project(_image_matrix(closed_imgs))
    if len(po) < 2 or len(pc) < 2:
        raise TooFewImages(f"need >= 2 images per class, got {len(po)} open, {len(pc)} closed")
    mu_o, mu_c = po.mean(axis=0), pc.mean(axis=0)
    diff = mu_c - mu_o
    sw = (po - mu_o).T @ (po - mu_o) + (pc - mu_c).T @ (pc - mu_c)
    tr = np.trace(sw)
    if np.allclose(diff, 0, atol=1e-12 * max(1.0, np.abs(mu_o).max())):
        raise DegenerateClass("class means coincide in eigenimage space")
    if tr <= 1e-12 * max(1.0, float(diff @ diff)):
        # no within-class spread: the regularized solution tends to the mean difference
        w = diff
    else:
        k = basis.k
        w = np.linalg.solve(sw + (1e-6 * tr / k) * np.eye(k), diff)
    threshold = 0.5 * float(mu_c @ w + mu_o @ w)
    return LdaModel(basis=basis, w=w, threshold=threshold)


def train_lda(open_imgs: Sequence[EyeImage], closed_imgs: Sequence[EyeImage],
              k: int = 100) -> LdaModel:
    """Equalize, fit eigenimages on both classes, then the discriminant."""
    opened = [_equalized(im) for im in open_imgs]
    closed = [_equalized(im) for im in closed_imgs]
    if len(opened) < 2 or len(closed) < 2:
        raise TooFewImages(f"need >= 2 images per class, got {len(opened)} open, {len(closed)} closed")
    k = min(k, len(opened) + len(closed) - 1)
    basis = fit_pca(opened + closed, k)
    return fit_lda(basis, opened, closed)


def classify_lda(m: LdaModel, img: EyeImage) -> tuple[FrameLabel, float]:
    score = float(m.score(_equalized(img).vector))
    return (CLOSED if score > m.threshold else OPEN), score


# -- feedforward network ----------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MlpModel:
    """576-16-1 network, tanh hidden layer, logistic output (P(Closed))."""

    w1: np.ndarray  # (16, 576)
    b1: np.ndarray  # (16,)
    w2: np.ndarray  # (1, 16)
    b2: np.ndarray  # (1,)
    final_loss: float = float("nan")
    losses: list = field(default_factory=list, repr=False)

    @property
    def layer_dims(self) -> list[int]:
        return [self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "MlpModel":
        return MlpModel(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
                        self.final_loss, list(self.losses))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Closed-class probability for rows of ``x`` (already scaled to [0, 1])."""
        h = np.tanh(x @ self.w1.T + self.b1)
        return _sigmoid(h @ self.w2.T + self.b2)[:, 0]


def init_mlp(seed: int, n_in: int = EYE_PIXELS, n_hidden: int = HIDDEN_UNITS) -> MlpModel:
    rng = np.random.default_rng(seed)
    return MlpModel(
        w1=rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_hidden, n_in)),
        b1=np.zeros(n_hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(n_hidden), (1, n_hidden)),
        b2=np.zeros(1),
    )


def mlp_loss_and_grad(m: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. every parameter."""
    n = len(x)
    h = np.tanh(x @ m.w1.T + m.b1)
    z = (h @ m.w2.T + m.b2)[:, 0]
    # log(1 + e^z) - y z, written to avoid overflow
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (_sigmoid(z) - y) / n
    dw2 = dz[None, :] @ h
    db2 = np.array([dz.sum()])
    da = (dz[:, None] @ m.w2) * (1.0 - h**2)
    grads = {"w1": da.T @ x, "b1": da.sum(axis=0), "w2": dw2, "b2": db2}
    return loss, grads


def _mlp_inputs(images) -> np.ndarray:
    return _image_matrix(images) / 255.0


def fit_mlp(open_imgs, closed_imgs, epochs: int = 500, lr: float = 0.1,
            seed: int = 0) -> MlpModel:
    xo, xc = _mlp_inputs(open_imgs), _mlp_inputs(closed_imgs)
    if len(xo) < 2 or len(xc) < 2:
        raise TooFewImages(f"need >= 2 images per class, got {len(xo)} open, {len(xc)} closed")
    x = np.vstack([xo, xc])
    y = np.concatenate([np.zeros(len(xo)), np.ones(len(xc))])
    m = init_mlp(seed, n_in=x.shape[1])
    loss = float("nan")
    # overflow is detected explicitly below, no need for numpy's warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            loss, g = mlp_loss_and_grad(m, x, y)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}; lower the learning rate")
            m.losses.append(loss)
            m.w1 -= lr * g["w1"]
            m.b1 -= lr * g["b1"]
            m.w2 -= lr * g["w2"]
            m.b2 -= lr * g["b2"]
        if epochs > 0:
            loss, _ = mlp_loss_and_grad(m, x, y)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in m.params().values()):
                raise NonFiniteLoss("training diverged; lower the learning rate")
    m.final_loss = loss
    return m


def classify_mlp(m: MlpModel, img: EyeImage) -> tuple[FrameLabel, float]:
    prob = float(m.forward(_mlp_inputs([img]))[0])
    return (CLOSED if prob > 0.5 else OPEN), prob


# -- labels and blink events ------------------------------------------------

def _labels(seq) -> list[FrameLabel]:
    return [FrameLabel(x) for x in seq]


def postprocess_labels(labels: Sequence[FrameLabel]) -> list[FrameLabel]:
    """Turn every lone Open frame flanked by Closed frames into Closed.

    Decisions look only at the input sequence, so the result is independent
    of scan order and applying it twice changes nothing.
    """
    labels = _labels(labels)
    out = list(labels)
    for i in range(1, len(labels) - 1):
        if labels[i] is OPEN and labels[i - 1] is CLOSED and labels[i + 1] is CLOSED:
            out[i] = CLOSED
    return out


@dataclass(frozen=True)
class BlinkEvent:
    start_frame: int
    end_frame: int  # inclusive
    duration_frames: int
    duration_s: float


@dataclass(frozen=True)
class BlinkTimeline:
    labels: list
    fps: float
    events: list


def closed_runs(labels: Sequence[FrameLabel]) -> list[tuple[int, int]]:
    """(start, length) of every maximal run of Closed labels."""
    runs = []
    start = None
    for i, lab in enumerate(_labels(labels)):
        if lab is CLOSED:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i - start))
            start = None
    if start is not None:
        runs.append((start, len(labels) - start))
    return runs


def blink_events(labels: Sequence[FrameLabel], fps: float) -> BlinkTimeline:
    if not fps > 0:
        raise InvalidConfig(f"fps must be positive, got {fps}")
    pp = postprocess_labels(labels)
    events = [BlinkEvent(s, s + n - 1, n, n / fps) for s, n in closed_runs(pp)]
    return BlinkTimeline(labels=pp, fps=float(fps), events=events)


def accuracy(confusion: tuple[int, int, int, int], total: int | None = None) -> float:
    """(open_correct + closed_correct) / total.

    ``total`` defaults to the sum of the four counts; pass it explicitly when
    the reported frame count differs from the tabulated cells.
    """
    oc, ow, cc, cw = confusion
    n = oc + ow + cc + cw if total is None else total
    if n <= 0:
        raise EmptyInput("confusion matrix is empty")
    return (oc + cc) / n


def confusion(truth: Sequence[FrameLabel], predicted: Sequence[FrameLabel]) -> tuple[int, int, int, int]:
    """(open_correct, open_wrong, closed_correct, closed_wrong); NoEye frames are skipped."""
    oc = ow = cc = cw = 0
    for t, p in zip(_labels(truth), _labels(predicted)):
        if t is NO_EYE or p is NO_EYE:
            continue
        if t is OPEN:
            oc, ow = (oc + 1, ow) if p is OPEN else (oc, ow + 1)
        else:
            cc, cw = (cc + 1, cw) if p is CLOSED else (cc, cw + 1)
    return oc, ow, cc, cw
