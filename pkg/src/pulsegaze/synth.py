"""Synthetic ground truth: color traces with a known pulse, labeled eye images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blink import CLOSED, EYE_SIZE, OPEN, EyeImage, FrameLabel
from .errors import InvalidConfig
from .filters import HR_HIGH_HZ, HR_LOW_HZ
from .trace import ChannelTrace

# relative pulsatility of R, G, B in mean-normalized skin color
DEFAULT_PULSE_WEIGHTS = (0.33, 0.77, 0.53)
DEFAULT_BASE_RGB = (170.0, 120.0, 100.0)


@dataclass
class SynthTraceConfig:
    fps: float = 30.0
    duration_s: float = 30.0
    pulse_hz: float = 1.2
    pulse_amp: float = 0.02
    base_rgb: tuple = DEFAULT_BASE_RGB
    pulse_rgb_weights: tuple = DEFAULT_PULSE_WEIGHTS
    flicker_hz: float = 0.3
    flicker_amp: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def validate(self):
        if not self.fps > 0:
            raise InvalidConfig(f"fps must be positive, got {self.fps}")
        if not HR_LOW_HZ <= self.pulse_hz <= HR_HIGH_HZ:
            raise InvalidConfig(f"pulse_hz {self.pulse_hz} outside [{HR_LOW_HZ}, {HR_HIGH_HZ}]")
        if not self.fps > 2 * self.pulse_hz:
            raise InvalidConfig(f"fps {self.fps} does not resolve a {self.pulse_hz} Hz pulse")
        if min(self.pulse_amp, self.flicker_amp, self.noise_std) < 0:
            raise InvalidConfig("amplitudes and noise_std must be >= 0")
        if self.flicker_hz < 0:
            raise InvalidConfig("flicker_hz must be >= 0")
        if self.duration_s * self.fps < 64:
            raise InvalidConfig(f"trace would have {self.duration_s * self.fps:.0f} < 64 samples")
        if len(self.base_rgb) != 3 or len(self.pulse_rgb_weights) != 3:
            raise InvalidConfig("base_rgb and pulse_rgb_weights need 3 values")
        if min(self.base_rgb) <= 0:
            raise InvalidConfig("base_rgb must be positive")

    @property
    def truth_bpm(self) -> float:
        return 60.0 * self.pulse_hz


def synth_trace(cfg: SynthTraceConfig) -> tuple[ChannelTrace, float]:
    """Skin color under a multiplicative illumination flicker and a pulse.

    c(t) = base_c * (1 + flicker) * (1 + pulse_amp * weight_c * sin(2 pi f t))
    plus Gaussian noise with std ``noise_std * base_c``; clipped to [0, 255].
    """
    cfg.validate()
    n = int(round(cfg.duration_s * cfg.fps))
    t = np.arange(n) / cfg.fps
    rng = np.random.default_rng(cfg.seed)
    flicker = 1.0 + cfg.flicker_amp * np.sin(2 * np.pi * cfg.flicker_hz * t)
    pulse = np.sin(2 * np.pi * cfg.pulse_hz * t)
    chans = []
    for base, wt in zip(cfg.base_rgb, cfg.pulse_rgb_weights):
        c = base * flicker * (1.0 + cfg.pulse_amp * wt * pulse)
        c = c + rng.normal(0.0, cfg.noise_std * base, n)
        chans.append(np.clip(c, 0.0, 255.0))
    return ChannelTrace(chans[0], chans[1], chans[2], cfg.fps), cfg.truth_bpm


# -- eye images -----------------------------------------------------------------

@dataclass
class SynthBlinkConfig:
    num_frames: int = 200
    blink_spans: list = field(default_factory=list)
    image_noise_std: float = 0.0
    seed: int = 0

    def validate(self):
        if self.num_frames < 1:
            raise InvalidConfig("num_frames must be >= 1")
        if self.image_noise_std < 0:
            raise InvalidConfig("image_noise_std must be >= 0")
        end = -1
        for start, length in sorted(self.blink_spans):
            if length < 1 or start < 0 or start + length > self.num_frames:
                raise InvalidConfig(f"blink span ({start}, {length}) out of range")
            if start <= end:
                raise InvalidConfig(f"blink span ({start}, {length}) overlaps the previous one")
            end = start + length - 1


def open_eye_template() -> np.ndarray:
    """Dim background with a bright horizontal band (visible sclera/iris)."""
    img = np.full((EYE_SIZE, EYE_SIZE), 90.0)
    img[8:16, 2:22] = 220.0
    img[9:15, 9:15] = 40.0  # iris
    return img


def closed_eye_template() -> np.ndarray:
    """Uniform eyelid with a thin dark lash line."""
    img = np.full((EYE_SIZE, EYE_SIZE), 150.0)
    img[12:14, 2:22] = 30.0
    return img


def render_eye(label: FrameLabel, noise_std: float, rng: np.random.Generator) -> EyeImage:
    base = closed_eye_template() if label is CLOSED else open_eye_template()
    if noise_std > 0:
        base = base + rng.normal(0.0, noise_std, base.shape)
    return EyeImage(np.clip(base, 0.0, 255.0))


def labels_from_spans(num_frames: int, spans) -> list[FrameLabel]:
    labels = [OPEN] * num_frames
    for start, length in spans:
        labels[start : start + length] = [CLOSED] * length
    return labels


def synth_eye_dataset(cfg: SynthBlinkConfig) -> tuple[list[EyeImage], list[FrameLabel]]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    labels = labels_from_spans(cfg.num_frames, cfg.blink_spans)
    return [render_eye(lab, cfg.image_noise_std, rng) for lab in labels], labels


def synth_training_set(n_per_class: int, noise_std: float, seed: int):
    """Balanced (open_images, closed_images) for classifier training."""
    if n_per_class < 1:
        raise InvalidConfig("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    opened = [render_eye(OPEN, noise_std, rng) for _ in range(n_per_class)]
    closed = [render_eye(CLOSED, noise_std, rng) for _ in range(n_per_class)]
    return opened, closed


def plant_blink_spans(num_frames: int, count: int, min_len: int = 2, max_len: int = 8,
                      min_gap: int = 2, seed: int = 0) -> list[tuple[int, int]]:
    """Random non-overlapping (start, length) spans separated by >= min_gap Open frames.

    The gap keeps distinct blinks from being merged by label post-processing.
    """
    if not 1 <= min_len <= max_len:
        raise InvalidConfig(f"need 1 <= min_len <= max_len, got {min_len}, {max_len}")
    rng = np.random.default_rng(seed)
    lengths = rng.integers(min_len, max_len + 1, size=count)
    slack = num_frames - int(lengths.sum()) - min_gap * (count + 1)
    if slack < 0:
        raise InvalidConfig(f"{count} blinks of up to {max_len} frames do not fit in {num_frames}")
    # distribute the spare frames over the count+1 gaps
    cuts = np.sort(rng.integers(0, slack + 1, size=count))
    extra = np.diff(np.concatenate([[0], cuts]))
    spans = []
    pos = 0
    for length, e in zip(lengths, extra):
        pos += min_gap + int(e)
        spans.append((pos, int(length)))
        pos += int(length)
    return spans
