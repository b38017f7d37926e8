"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data/computation
error. Every command is deterministic for a given ``--seed``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import blink as bk
from . import formats as fm
from .errors import ConfigError, FormatError, InvalidConfig, PulseGazeError
from .hr import HrSeries, error_summary, round_half_away, windowed_hr
from .ica import fastica_fit
from .synth import (
    SynthBlinkConfig,
    SynthTraceConfig,
    plant_blink_spans,
    synth_eye_dataset,
    synth_trace,
    synth_training_set,
)
from .trace import normalize_trace

log = logging.getLogger("pulsegaze")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


def _out(line: str = ""):
    print(line, flush=True)


def _fmt(x, nd=2) -> str:
    return "-" if x is None else f"{x:.{nd}f}"


def _print_series(s: HrSeries):
    _out(f"method = {s.method}")
    _out(f"windows = {len(s.estimates)}")
    _out(f"skipped = {s.skipped}")
    _out(f"median_bpm = {s.median_bpm:.2f}")
    _out(f"std_bpm = {s.std_bpm:.2f}")
    if s.truth_bpm is not None:
        _out(f"truth_bpm = {s.truth_bpm:.2f}")
        _out(f"abs_error = {s.abs_error:.2f}")


# -- hr -----------------------------------------------------------------------

def cmd_hr(args) -> int:
    trace = fm.load_manifest_trace(args.manifest)
    unmixing = fm.load_unmixing(args.unmixing) if args.unmixing else None
    s = windowed_hr(trace, args.method, window_s=args.window_s, hop_s=args.hop_s, seed=args.seed,
                    prior_bpm=args.prior_bpm, min_mag_ratio=args.min_mag_ratio,
                    unmixing=unmixing, truth_bpm=args.truth, jobs=args.jobs)
    _print_series(s)
    if args.out:
        fm.write_hr_csv(args.out, s)
    return EXIT_OK


def cmd_ica_train(args) -> int:
    trace = fm.load_manifest_trace(args.manifest)
    um, _ = fastica_fit(normalize_trace(trace), args.seed)
    fm.save_unmixing(args.out, um)
    _out(f"unmixing matrix written to {args.out}")
    return EXIT_OK


# -- blink --------------------------------------------------------------------

def _split_classes(ds: fm.EyeDataset):
    opened = [im for im, lab in zip(ds.images, ds.labels) if lab is bk.OPEN and im is not None]
    closed = [im for im, lab in zip(ds.images, ds.labels) if lab is bk.CLOSED and im is not None]
    return opened, closed


def _train_accuracy(classify, model, opened, closed) -> float:
    truth = [bk.OPEN] * len(opened) + [bk.CLOSED] * len(closed)
    pred = [classify(model, im)[0] for im in opened + closed]
    return bk.accuracy(bk.confusion(truth, pred))


def cmd_blink_train(args) -> int:
    ds = fm.read_eye_dataset(args.data)
    opened, closed = _split_classes(ds)
    lda = bk.train_lda(opened, closed, k=args.k)
    fm.save_lda(args.out, lda)
    _out(f"lda k = {lda.basis.k}")
    _out(f"lda training_accuracy = {_train_accuracy(bk.classify_lda, lda, opened, closed):.4f}")
    if args.mlp:
        mlp = bk.fit_mlp(opened, closed, epochs=args.epochs, lr=args.lr, seed=args.seed)
        mlp_out = args.mlp_out or str(args.out) + ".mlp"
        fm.save_mlp(mlp_out, mlp)
        _out(f"mlp final_loss = {mlp.final_loss:.6f}")
        _out(f"mlp training_accuracy = {_train_accuracy(bk.classify_mlp, mlp, opened, closed):.4f}")
        _out(f"mlp model written to {mlp_out}")
    _out(f"lda model written to {args.out}")
    return EXIT_OK


def _classifier(model):
    return bk.classify_lda if isinstance(model, bk.LdaModel) else bk.classify_mlp


def _check_model(model, path):
    dim = len(model.basis.mean_image) if isinstance(model, bk.LdaModel) else model.w1.shape[1]
    if dim != bk.EYE_PIXELS:
        raise FormatError(f"{path}: model expects {dim}-pixel images, data has {bk.EYE_PIXELS}")


def classify_sequence(model, ds: fm.EyeDataset, emit=None):
    classify = _classifier(model)
    labels = []
    for i, img in enumerate(ds.images):
        if img is None:
            lab, score = bk.NO_EYE, float("nan")
        else:
            lab, score = classify(model, img)
        labels.append(lab)
        if emit is not None:
            emit(f"{i},{lab.value},{score:.6f}")
    return labels


def _print_events(tl: bk.BlinkTimeline):
    _out(f"# blinks = {len(tl.events)}")
    _out("event,start_frame,end_frame,duration_frames,duration_s")
    for j, e in enumerate(tl.events, start=1):
        _out(f"{j},{e.start_frame},{e.end_frame},{e.duration_frames},{e.duration_s:.4f}")


def cmd_blink_run(args) -> int:
    model = fm.load_classifier(args.model)
    _check_model(model, args.model)
    ds = fm.read_eye_dataset(args.data)
    _out("index,label,score")
    labels = classify_sequence(model, ds, emit=_out)
    _print_events(bk.blink_events(labels, args.fps))
    return EXIT_OK


# -- synth --------------------------------------------------------------------

def _floats3(text: str, key: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InvalidConfig(f"{key} must be three comma-separated numbers") from None
    if len(vals) != 3:
        raise InvalidConfig(f"{key} must have three values")
    return vals


def _trace_config(kv: dict) -> SynthTraceConfig:
    cfg = SynthTraceConfig()
    conv = {"fps": float, "duration_s": float, "pulse_hz": float, "pulse_amp": float,
            "flicker_hz": float, "flicker_amp": float, "noise_std": float, "seed": int}
    for key, val in kv.items():
        if key in conv:
            try:
                setattr(cfg, key, conv[key](val))
            except ValueError:
                raise InvalidConfig(f"bad value for {key}: {val!r}") from None
        elif key in ("base_rgb", "pulse_rgb_weights"):
            setattr(cfg, key, _floats3(val, key))
        elif key != "kind":
            raise InvalidConfig(f"unknown trace config key {key!r}")
    return cfg


def _parse_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            s, n = part.split(":")
            spans.append((int(s), int(n)))
        except ValueError:
            raise InvalidConfig(f"span must be 'start:length', got {part!r}") from None
    return spans


def _blink_config(kv: dict):
    ints = {"num_frames": 200, "blinks": 12, "min_len": 2, "max_len": 8, "min_gap": 2,
            "seed": 0, "train_per_class": 100}
    floats = {"image_noise_std": 0.0, "train_noise_std": 10.0}
    opts: dict = {}
    for key, val in kv.items():
        try:
            if key in ints:
                opts[key] = int(val)
            elif key in floats:
                opts[key] = float(val)
            elif key == "spans":
                opts[key] = _parse_spans(val)
            elif key != "kind":
                raise InvalidConfig(f"unknown blink config key {key!r}")
        except ValueError:
            raise InvalidConfig(f"bad value for {key}: {val!r}") from None
    return {**ints, **floats, **opts}


def cmd_synth(args) -> int:
    kv = fm.read_kv(args.config)
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    kind = kv.get("kind", "trace")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "trace":
        cfg = _trace_config(kv)
        trace, truth = synth_trace(cfg)
        fm.write_trace_csv(out / "trace.csv", trace)
        fm.write_manifest(out / "manifest.txt", cfg.fps, trace="trace.csv")
        _out(f"truth_bpm = {truth:.4f}")
        _out(f"manifest = {out / 'manifest.txt'}")
    elif kind == "blink":
        o = _blink_config(kv)
        spans = o.get("spans") or plant_blink_spans(o["num_frames"], o["blinks"], o["min_len"],
                                                     o["max_len"], o["min_gap"], o["seed"])
        images, labels = synth_eye_dataset(
            SynthBlinkConfig(o["num_frames"], spans, o["image_noise_std"], o["seed"]))
        fm.write_eye_dataset(out / "sequence", images, labels)
        opened, closed = synth_training_set(o["train_per_class"], o["train_noise_std"],
                                            o["seed"] + 1)
        fm.write_eye_dataset(out / "train", opened + closed,
                             [bk.OPEN] * len(opened) + [bk.CLOSED] * len(closed))
        _out(f"blinks = {len(spans)}")
        _out("start_frame,duration_frames")
        for s, n in spans:
            _out(f"{s},{n}")
    else:
        raise InvalidConfig(f"unknown synth kind {kind!r}; expected trace or blink")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------

def _eval_hr(kv: dict, rows: list[str], args) -> int:
    method = kv.get("method", "chrom")
    if method not in ("ica", "chrom"):
        raise InvalidConfig(f"suite method must be ica or chrom, got {method!r}")
    try:
        window_s = float(kv.get("window_s", 10))
        hop_s = float(kv.get("hop_s", 1))
        seed = int(kv.get("seed", args.seed))
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    base = Path(args.suite).parent
    table = []
    failures = 0
    for row in rows:
        try:
            truth_s, spec = (p.strip() for p in row.split(",", 1))
            truth = float(truth_s)
        except ValueError:
            raise InvalidConfig(f"suite row must be '<truth>, <input>', got {row!r}") from None
        if spec.startswith("median:"):
            try:
                table.append((truth, float(spec[7:]), None))
            except ValueError:
                raise InvalidConfig(f"bad median in row {row!r}") from None
            continue
        path = spec[9:] if spec.startswith("manifest:") else spec
        try:
            s = windowed_hr(fm.load_manifest_trace(base / path), method, window_s, hop_s, seed,
                            truth_bpm=truth, jobs=args.jobs)
            table.append((truth, s.median_bpm, s.std_bpm))
        except PulseGazeError as exc:
            if args.strict:
                raise
            log.warning("row %r failed: %s", row, exc)
            failures += 1
            table.append((truth, None, None))
    _out(f"method = {method}")
    _out(f"{'Truth':>8} {'Med.':>8} {'Std.Dev.':>9} {'Error':>8}")
    ok = [(t, m) for t, m, _ in table if m is not None]
    for t, m, sd in table:
        err = None if m is None else abs(t - m)
        _out(f"{t:8.2f} {_fmt(m):>8} {_fmt(sd):>9} {_fmt(err):>8}")
    if ok:
        summ = error_summary(ok)
        _out(f"{'Avg.':>8} {'':>8} {'':>9} {summ.mean_abs_error:8.2f}")
        _out(f"avg_error = {summ.mean_abs_error:.2f}")
        _out(f"avg_error_rounded = {summ.mean_rounded}")
    _out(f"rows = {len(table)}")
    _out(f"failed_rows = {failures}")
    return EXIT_OK


def _eval_blink(kv: dict, rows: list[str], args) -> int:
    if "model" not in kv:
        raise InvalidConfig("blink suite needs 'model = <path>'")
    base = Path(args.suite).parent
    model = fm.load_classifier(base / kv["model"])
    _check_model(model, kv["model"])
    total = [0, 0, 0, 0]
    for row in rows:
        ds = fm.read_eye_dataset(base / row)
        if any(lab is None for lab in ds.labels):
            raise FormatError(f"{row}: blink suite rows need a labeled dataset")
        pred = classify_sequence(model, ds)
        conf = bk.confusion(ds.labels, pred)
        total = [a + b for a, b in zip(total, conf)]
        _out(f"row {row}: accuracy = {bk.accuracy(conf):.4f}")
    oc, ow, cc, cw = total
    _out(f"{'Truth':<6} {'Correctly classified':>21} {'Incorrectly classified':>23}")
    _out(f"{'Open':<6} {oc:>21} {ow:>23}")
    _out(f"{'Shut':<6} {cc:>21} {cw:>23}")
    acc = bk.accuracy((oc, ow, cc, cw))
    _out(f"accuracy = {acc:.4f}")
    _out(f"accuracy_pct_rounded = {round_half_away(100 * acc)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    items = fm.parse_kv(Path(args.suite).read_text(), args.suite)
    kv = {k: v for k, v in items if k != "row"}
    rows = [v for k, v in items if k == "row"]
    if not rows:
        raise InvalidConfig(f"{args.suite}: suite has no 'row' entries")
    kind = kv.get("kind", "hr")
    if kind == "hr":
        return _eval_hr(kv, rows, args)
    if kind == "blink":
        return _eval_blink(kv, rows, args)
    raise InvalidConfig(f"unknown suite kind {kind!r}")


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pulsegaze",
                                description="Heart rate and blink duration from image features.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    h = sub.add_parser("hr", help="estimate heart rate from a trace or frame manifest")
    h.add_argument("--manifest", required=True)
    h.add_argument("--method", required=True, choices=["ica", "chrom"])
    h.add_argument("--window-s", type=float, default=10.0)
    h.add_argument("--hop-s", type=float, default=1.0)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--prior-bpm", type=float, default=71.0)
    h.add_argument("--min-mag-ratio", type=float, default=0.0)
    h.add_argument("--unmixing", help="fixed unmixing matrix file (ica only)")
    h.add_argument("--truth", type=float, help="ground-truth BPM for the error line")
    h.add_argument("--jobs", type=int, default=1)
    h.add_argument("--out", help="write per-window CSV here")
    h.set_defaults(func=cmd_hr)

    it = sub.add_parser("ica-train", help="fit and save one unmixing matrix on a whole trace")
    it.add_argument("--manifest", required=True)
    it.add_argument("--out", required=True)
    it.add_argument("--seed", type=int, default=0)
    it.set_defaults(func=cmd_ica_train)

    bt = sub.add_parser("blink-train", help="train the eye classifier(s)")
    bt.add_argument("--data", required=True, help="directory of PGM images + labels.csv")
    bt.add_argument("--out", required=True)
    bt.add_argument("--k", type=int, default=100, help="number of eigenimages")
    bt.add_argument("--mlp", action="store_true", help="also train the neural network")
    bt.add_argument("--mlp-out")
    bt.add_argument("--epochs", type=int, default=500)
    bt.add_argument("--lr", type=float, default=0.1)
    bt.add_argument("--seed", type=int, default=0)
    bt.set_defaults(func=cmd_blink_train)

    br = sub.add_parser("blink-run", help="classify an eye image sequence and report blinks")
    br.add_argument("--model", required=True)
    br.add_argument("--data", required=True)
    br.add_argument("--fps", type=float, default=30.0)
    br.set_defaults(func=cmd_blink_run)

    sy = sub.add_parser("synth", help="write synthetic traces or eye datasets")
    sy.add_argument("--config", required=True)
    sy.add_argument("--out", required=True)
    sy.add_argument("--seed", type=int)
    sy.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="run an evaluation suite and print a results table")
    ev.add_argument("--suite", required=True)
    ev.add_argument("--strict", action="store_true")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--jobs", type=int, default=1)
    ev.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PulseGazeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
