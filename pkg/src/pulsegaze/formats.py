"""On-disk formats: PPM/PGM images, trace CSV, manifests, model files, HR CSV."""

from __future__ import annotations

import csv
import glob
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blink import EYE_SIZE, EigenBasis, EyeImage, FrameLabel, LdaModel, MlpModel
from .errors import FormatError, InvalidConfig
from .hr import HrEstimate, HrSeries
from .ica import UnmixingMatrix
from .trace import ChannelTrace, Frame, RoiSpec

MODEL_MAGIC = "pulsegaze-model"
MODEL_VERSION = "v1"
FORMAT_VERSION = 1


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _row(values) -> str:
    return " ".join(_num(v) for v in np.ravel(values))


# -- netpbm ---------------------------------------------------------------------

def _read_netpbm(path, magic: bytes):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} image, got {tokens[0][:2]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    ch = 3 if magic == b"P6" else 1
    raw = data[pos : pos + w * h * ch]
    if len(raw) != w * h * ch:
        raise FormatError(f"{path}: expected {w * h * ch} bytes of pixel data, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, ch) if ch == 3 else \
        np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


def _write_netpbm(path, arr: np.ndarray, magic: bytes):
    arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def read_ppm(path) -> Frame:
    return Frame.from_array(_read_netpbm(path, b"P6"))


def write_ppm(path, frame: Frame):
    _write_netpbm(path, frame.pixels, b"P6")


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5").astype(float)


def write_pgm(path, pixels):
    _write_netpbm(path, np.asarray(pixels), b"P5")


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Pixel-centre aligned bilinear resampling of a 2-D array."""
    h, w = img.shape
    oh, ow = shape
    if (h, w) == (oh, ow):
        return img.astype(float)
    ys = np.clip((np.arange(oh) + 0.5) * h / oh - 0.5, 0, h - 1)
    xs = np.clip((np.arange(ow) + 0.5) * w / ow - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    img = img.astype(float)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def read_eye_image(path) -> EyeImage:
    return EyeImage(resize_bilinear(read_pgm(path), (EYE_SIZE, EYE_SIZE)))


# -- eye datasets -------------------------------------------------------------

LABELS_FILE = "labels.csv"


@dataclass
class EyeDataset:
    images: list  # EyeImage, or None for NoEye frames
    labels: list  # FrameLabel, or None when unlabeled
    files: list


def write_eye_dataset(directory, images, labels, prefix: str = "frame"):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (img, lab) in enumerate(zip(images, labels)):
        if img is None:
            rows.append(("", FrameLabel.NO_EYE.value))
            continue
        name = f"{prefix}_{i:04d}.pgm"
        write_pgm(d / name, img.pixels)
        rows.append((name, FrameLabel(lab).value))
    with open(d / LABELS_FILE, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["file", "label"])
        wr.writerows(rows)


def read_eye_dataset(directory) -> EyeDataset:
    """Images listed in ``labels.csv`` (in file order), else every ``*.pgm`` sorted.

    A row with an empty file name, or labeled ``noeye``, is a frame without a
    detected eye.
    """
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d} is not a directory")
    manifest = d / LABELS_FILE
    images, labels, files = [], [], []
    if manifest.exists():
        with open(manifest, newline="") as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames is None or not {"file", "label"} <= set(rd.fieldnames):
                raise FormatError(f"{manifest}: header must be 'file,label'")
            for row in rd:
                name = (row["file"] or "").strip()
                lab = FrameLabel.parse(row["label"] or "noeye")
                img = None
                if name and lab is not FrameLabel.NO_EYE:
                    img = read_eye_image(d / name)
                images.append(img)
                labels.append(lab)
                files.append(name)
    else:
        for p in sorted(d.glob("*.pgm")):
            images.append(read_eye_image(p))
            labels.append(None)
            files.append(p.name)
    return EyeDataset(images, labels, files)


# -- traces and manifests -----------------------------------------------------

def write_trace_csv(path, trace: ChannelTrace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame", "r", "g", "b"])
        for i, (r, g, b) in enumerate(zip(trace.r, trace.g, trace.b)):
            wr.writerow([i, _num(r), _num(g), _num(b)])


def read_trace_csv(path, fps: float) -> ChannelTrace:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header] != ["frame", "r", "g", "b"]:
            raise FormatError(f"{path}: header must be 'frame,r,g,b'")
        rows = []
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    a = np.asarray(rows)
    return ChannelTrace(a[:, 0], a[:, 1], a[:, 2], fps)


def parse_kv(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    """``key = value`` lines; blank lines and ``#`` comments ignored. Keys may repeat."""
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        items.append((k.strip(), v.strip()))
    return items


def read_kv(path) -> dict[str, str]:
    return dict(parse_kv(Path(path).read_text(), str(path)))


@dataclass
class Manifest:
    fps: float
    trace_path: Path | None = None
    frames: str | None = None
    roi: RoiSpec | None = None
    format_version: int = FORMAT_VERSION


def read_manifest(path) -> Manifest:
    path = Path(path)
    kv = read_kv(path)
    base = path.parent
    if "fps" not in kv:
        raise InvalidConfig(f"{path}: missing 'fps'")
    try:
        fps = float(kv["fps"])
        version = int(kv.get("format_version", FORMAT_VERSION))
    except ValueError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None
    if not fps > 0:
        raise InvalidConfig(f"{path}: fps must be positive")
    if version != FORMAT_VERSION:
        raise InvalidConfig(f"{path}: unsupported format_version {version}")
    has_trace, has_frames = "trace" in kv, "frames" in kv
    if has_trace == has_frames:
        raise InvalidConfig(f"{path}: exactly one of 'trace' or 'frames' is required")
    roi = RoiSpec.parse(kv["roi"]) if "roi" in kv else None
    if has_trace:
        return Manifest(fps, trace_path=base / kv["trace"], roi=roi, format_version=version)
    return Manifest(fps, frames=str(base / kv["frames"]), roi=roi, format_version=version)


def write_manifest(path, fps: float, trace: str | None = None, frames: str | None = None,
                   roi: RoiSpec | None = None):
    lines = [f"format_version = {FORMAT_VERSION}", f"fps = {_num(fps)}"]
    if trace is not None:
        lines.append(f"trace = {trace}")
    if frames is not None:
        lines.append(f"frames = {frames}")
    if roi is not None:
        lines.append(f"roi = {roi.x0},{roi.y0},{roi.w},{roi.h}")
    Path(path).write_text("\n".join(lines) + "\n")


def frame_paths(pattern: str) -> list[str]:
    if os.path.isdir(pattern):
        pattern = os.path.join(pattern, "*.ppm")
    return sorted(glob.glob(pattern))


def load_manifest_trace(path) -> ChannelTrace:
    """Trace described by a manifest: either a trace CSV or PPM frames + ROI."""
    from .trace import build_trace

    m = read_manifest(path)
    if m.trace_path is not None:
        return read_trace_csv(m.trace_path, m.fps)
    frames = [read_ppm(p) for p in frame_paths(m.frames)]
    if not frames:
        raise FormatError(f"no frames match {m.frames}")
    roi = m.roi or RoiSpec.full(frames[0])
    return build_trace(frames, roi, m.fps)


# -- models -------------------------------------------------------------------

def _write_model(path, kind: str, fields: list[tuple[str, str]]):
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION} {kind}", f"version = {FORMAT_VERSION}"]
    lines += [f"{k} = {v}" for k, v in fields]
    Path(path).write_text("\n".join(lines) + "\n")


def read_model_kind(path) -> str:
    try:
        first = Path(path).read_text().split("\n", 1)[0].split()
    except OSError as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from None
    if len(first) != 3 or first[0] != MODEL_MAGIC or first[1] != MODEL_VERSION:
        raise FormatError(f"{path}: not a {MODEL_MAGIC} {MODEL_VERSION} file")
    return first[2]


def _read_model(path, kind: str) -> dict[str, list[np.ndarray | str]]:
    found = read_model_kind(path)
    if found != kind:
        raise FormatError(f"{path}: expected a {kind} model, found {found}")
    text = Path(path).read_text().split("\n", 1)[1]
    fields: dict[str, list] = {}
    for k, v in parse_kv(text, str(path)):
        fields.setdefault(k, []).append(v)
    return fields


def _floats(s: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in s.split()])
    except ValueError:
        raise FormatError(f"non-numeric model field: {s[:40]!r}") from None


def _one(fields, key, path):
    if key not in fields:
        raise FormatError(f"{path}: missing field {key!r}")
    return fields[key][0]


def save_unmixing(path, um: UnmixingMatrix):
    f = [("means", _row(um.channel_means))]
    f += [("whitener", _row(r)) for r in um.whitener]
    f += [("w", _row(r)) for r in um.w]
    _write_model(path, "unmixing", f)


def load_unmixing(path) -> UnmixingMatrix:
    fl = _read_model(path, "unmixing")
    means = _floats(_one(fl, "means", path))
    wh = np.array([_floats(r) for r in fl.get("whitener", [])])
    w = np.array([_floats(r) for r in fl.get("w", [])])
    if means.shape != (3,) or wh.ndim != 2 or wh.shape[1] != 3 or w.shape != (len(wh), len(wh)):
        raise FormatError(f"{path}: inconsistent unmixing matrix shapes")
    return UnmixingMatrix(w=w, whitener=wh, channel_means=means)


def save_lda(path, m: LdaModel):
    b = m.basis
    f = [("k", str(b.k)), ("dim", str(len(b.mean_image))),
         ("threshold", _num(m.threshold)), ("positive_label", m.positive_label.value),
         ("mean", _row(b.mean_image)), ("eigenvalues", _row(b.eigenvalues)),
         ("w", _row(m.w))]
    f += [("component", _row(c)) for c in b.components]
    _write_model(path, "lda", f)


def load_lda(path) -> LdaModel:
    fl = _read_model(path, "lda")
    try:
        k = int(_one(fl, "k", path))
        dim = int(_one(fl, "dim", path))
    except ValueError:
        raise FormatError(f"{path}: k and dim must be integers") from None
    mean = _floats(_one(fl, "mean", path))
    comps = np.array([_floats(r) for r in fl.get("component", [])])
    w = _floats(_one(fl, "w", path))
    eig = _floats(_one(fl, "eigenvalues", path))
    if mean.shape != (dim,) or comps.shape != (k, dim) or w.shape != (k,) or eig.shape != (k,):
        raise FormatError(f"{path}: inconsistent LDA model shapes")
    basis = EigenBasis(mean_image=mean, components=comps, eigenvalues=eig)
    label = FrameLabel.parse(_one(fl, "positive_label", path))
    return LdaModel(basis=basis, w=w, threshold=float(_one(fl, "threshold", path)),
                    positive_label=label)


def save_mlp(path, m: MlpModel):
    f = [("layer_dims", " ".join(str(d) for d in m.layer_dims)),
         ("activations", "tanh logistic"), ("final_loss", _num(m.final_loss))]
    f += [("w1", _row(r)) for r in m.w1]
    f += [("b1", _row(m.b1))]
    f += [("w2", _row(r)) for r in m.w2]
    f += [("b2", _row(m.b2))]
    _write_model(path, "mlp", f)


def load_mlp(path) -> MlpModel:
    fl = _read_model(path, "mlp")
    dims = [int(x) for x in _one(fl, "layer_dims", path).split()]
    w1 = np.array([_floats(r) for r in fl.get("w1", [])])
    w2 = np.array([_floats(r) for r in fl.get("w2", [])])
    b1 = _floats(_one(fl, "b1", path))
    b2 = _floats(_one(fl, "b2", path))
    if len(dims) != 3 or w1.shape != (dims[1], dims[0]) or b1.shape != (dims[1],) \
            or w2.shape != (dims[2], dims[1]) or b2.shape != (dims[2],):
        raise FormatError(f"{path}: inconsistent MLP model shapes")
    return MlpModel(w1, b1, w2, b2, final_loss=float(_one(fl, "final_loss", path)))


def load_classifier(path):
    kind = read_model_kind(path)
    if kind == "lda":
        return load_lda(path)
    if kind == "mlp":
        return load_mlp(path)
    raise FormatError(f"{path}: {kind} is not an eye classifier")


# -- HR series ----------------------------------------------------------------

def write_hr_csv(path, s: HrSeries):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["window_start", "bpm", "peak_mag"])
        for e in s.estimates:
            wr.writerow([e.window_start, _num(e.bpm), _num(e.peak_mag)])
        fh.write(f"# median_bpm={_num(s.median_bpm)} std_bpm={_num(s.std_bpm)} "
                 f"windows={len(s.estimates)} skipped={s.skipped}\n")


def read_hr_csv(path) -> HrSeries:
    estimates = []
    skipped = 0
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "window_start,bpm,peak_mag":
        raise FormatError(f"{path}: header must be 'window_start,bpm,peak_mag'")
    for line in lines[1:]:
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("skipped="):
                    skipped = int(tok.split("=", 1)[1])
            continue
        if line.strip():
            ws, bpm, mag = line.split(",")
            estimates.append(HrEstimate(float(bpm), float(mag), int(ws)))
    return HrSeries.from_estimates(estimates, skipped=skipped)
