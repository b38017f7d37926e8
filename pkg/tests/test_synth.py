import numpy as np
import pytest

from pulsegaze.blink import CLOSED, OPEN, blink_events, classify_lda, train_lda
from pulsegaze.chrom import chrom_bvp, green_bvp
from pulsegaze.errors import InvalidConfig, NoAdequatePeak
from pulsegaze.filters import dominant_frequency, spectrum
from pulsegaze.hr import estimate_hr
from pulsegaze.ica import ica_bvp
from pulsegaze.synth import (
    SynthBlinkConfig,
    SynthTraceConfig,
    closed_eye_template,
    labels_from_spans,
    open_eye_template,
    plant_blink_spans,
    synth_eye_dataset,
    synth_trace,
    synth_training_set,
)


def test_trace_formula():
    cfg = SynthTraceConfig(duration_s=5, flicker_amp=0.1, seed=0)
    t, truth = synth_trace(cfg)
    assert truth == 72
    tt = np.arange(150) / 30
    flick = 1 + 0.1 * np.sin(2 * np.pi * 0.3 * tt)
    pulse = 1 + 0.02 * np.sin(2 * np.pi * 1.2 * tt)
    for ch, base, wt in zip((t.r, t.g, t.b), cfg.base_rgb, cfg.pulse_rgb_weights):
        assert np.allclose(ch, base * flick * (1 + (pulse - 1) * wt), atol=1e-12)


def test_trace_determinism():
    cfg = SynthTraceConfig(noise_std=0.05, seed=7)
    a, _ = synth_trace(cfg)
    b, _ = synth_trace(cfg)
    assert np.array_equal(a.as_array(), b.as_array())
    c, _ = synth_trace(SynthTraceConfig(noise_std=0.05, seed=8))
    assert not np.array_equal(a.as_array(), c.as_array())


@pytest.mark.parametrize("hz", [0.7, 1.0, 1.37, 2.5])
def test_spectral_ground_truth(hz):
    cfg = SynthTraceConfig(pulse_hz=hz, duration_s=20)
    t, _ = synth_trace(cfg)
    s = spectrum(t.g - t.g.mean(), cfg.fps)
    f, _ = dominant_frequency(s)
    assert abs(f - hz) <= s.df


@pytest.mark.parametrize("kw", [
    dict(pulse_hz=5.0), dict(pulse_hz=0.5), dict(fps=2.0, pulse_hz=1.2),
    dict(pulse_amp=-1), dict(duration_s=2.0), dict(base_rgb=(0, 1, 1)),
])
def test_invalid_trace_config(kw):
    with pytest.raises(InvalidConfig):
        synth_trace(SynthTraceConfig(**kw))


def test_no_pulse_no_peak():
    t, _ = synth_trace(SynthTraceConfig(pulse_amp=0, noise_std=0.01, duration_s=10))
    with pytest.raises(NoAdequatePeak):
        estimate_hr(chrom_bvp(t), min_mag_ratio=0.5)


def test_clean_75bpm_both_estimators():
    t, truth = synth_trace(SynthTraceConfig(pulse_hz=1.25, duration_s=20))
    assert abs(estimate_hr(chrom_bvp(t)).bpm - truth) <= 1
    assert abs(estimate_hr(ica_bvp(t, seed=0)).bpm - truth) <= 1
    assert abs(estimate_hr(green_bvp(t)).bpm - truth) <= 1


def test_clipping_keeps_range():
    t, _ = synth_trace(SynthTraceConfig(base_rgb=(250, 250, 250), noise_std=0.1))
    assert t.as_array().max() <= 255 and t.as_array().min() >= 0


def test_eye_templates_differ():
    o, c = open_eye_template(), closed_eye_template()
    assert o.shape == c.shape == (24, 24)
    assert np.abs(o - c).mean() > 30


def test_eye_dataset_labels_and_determinism():
    spans = [(3, 2), (10, 5)]
    cfg = SynthBlinkConfig(num_frames=20, blink_spans=spans, image_noise_std=5.0, seed=1)
    imgs, labels = synth_eye_dataset(cfg)
    assert labels == labels_from_spans(20, spans)
    assert [(e.start_frame, e.duration_frames) for e in blink_events(labels, 30).events] == spans
    imgs2, _ = synth_eye_dataset(cfg)
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(imgs, imgs2))


def test_eye_dataset_template_oracle():
    """A nearest-template matcher recovers every label at zero noise."""
    spans = plant_blink_spans(200, 12, seed=5)
    imgs, labels = synth_eye_dataset(SynthBlinkConfig(200, spans))
    o, c = open_eye_template(), closed_eye_template()
    guess = [CLOSED if np.sum((im.pixels - c) ** 2) < np.sum((im.pixels - o) ** 2) else OPEN
             for im in imgs]
    assert guess == labels


def test_zero_noise_lda_half_split():
    spans = plant_blink_spans(200, 12, seed=2)
    imgs, labels = synth_eye_dataset(SynthBlinkConfig(200, spans, image_noise_std=0.0))
    train_o = [im for im, lab in zip(imgs[::2], labels[::2]) if lab is OPEN]
    train_c = [im for im, lab in zip(imgs[::2], labels[::2]) if lab is CLOSED]
    m = train_lda(train_o, train_c)
    assert all(classify_lda(m, im)[0] is lab for im, lab in zip(imgs[1::2], labels[1::2]))


@pytest.mark.parametrize("spans", [[(0, 0)], [(195, 10)], [(2, 5), (4, 3)], [(-1, 2)]])
def test_invalid_blink_config(spans):
    with pytest.raises(InvalidConfig):
        synth_eye_dataset(SynthBlinkConfig(200, spans))


@pytest.mark.parametrize("seed", range(10))
def test_planted_spans(seed):
    spans = plant_blink_spans(200, 12, seed=seed)
    assert len(spans) == 12
    assert all(2 <= n <= 8 for _, n in spans)
    ends = [s + n for s, n in spans]
    assert spans[0][0] >= 2 and ends[-1] <= 198
    assert all(spans[i + 1][0] - ends[i] >= 2 for i in range(11))


def test_planted_spans_do_not_fit():
    with pytest.raises(InvalidConfig):
        plant_blink_spans(30, 12)


def test_training_set():
    o, c = synth_training_set(4, 3.0, seed=0)
    assert len(o) == len(c) == 4
    with pytest.raises(InvalidConfig):
        synth_training_set(0, 0.0, seed=0)
