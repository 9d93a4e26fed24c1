"""Command-line entry point.

Exit codes:
  0  success
  1  any other package error
  2  bad configuration or usage
  3  unparseable input file
  4  model mismatch (digests, layout, unsupported archive version)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bundle import DetectorVariant
from .classifier import TrainConfig
from .errors import (
    ConfigError,
    LayoutMismatch,
    ModelMismatch,
    ParseError,
    SkelgestError,
    VersionUnsupported,
)
from .features import GestureletConfig
from .skeleton import get_layout

log = logging.getLogger("skelgest")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PARSE, EXIT_MODEL = 0, 1, 2, 3, 4

# every key a config file may set, with its default
DEFAULTS = {
    "seed": 0,
    "layout": "openpose18",
    "alpha": 0.8,
    "beta": 0.4,
    "gamma": 1.0,
    "lag": 2,
    "K": 64,
    "m": 2,
    "lam": 1e-4,
    "epochs": 60,
    "weight_factor": 3.0,
    "variant": "vanilla",
    "s": 5,
    "augmentation": True,
    "neutral_class": "neutral",
    "similarity": "iou",
    "gate": None,
    "max_misses": 5,
    "min_hits": 3,
    "repetitions": 20,
    "interleave": None,
    "workers": 1,
    "folds": 3,
    "grid": None,
    "max_points": 64,
    "classes": None,
    "per_class": 60,
    "noise": 0.03,
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    cfg = dict(DEFAULTS)
    cfg.update(_load_config(args.config))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _require(*paths):
    for p in paths:
        if p is not None and p != "-" and not Path(p).exists():
            raise ConfigError(f"path {p} does not exist")


def _gesturelet(cfg) -> GestureletConfig:
    try:
        return GestureletConfig(cfg["alpha"], cfg["beta"], cfg["gamma"], int(cfg["lag"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _variant(cfg) -> DetectorVariant:
    try:
        return DetectorVariant(cfg["variant"], int(cfg["s"]), bool(cfg["augmentation"]), cfg["neutral_class"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _train_cfg(cfg) -> TrainConfig:
    try:
        return TrainConfig(float(cfg["lam"]), int(cfg["epochs"]), int(cfg["seed"]), float(cfg["weight_factor"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _tracker_cfg(cfg):
    from .tracker import TrackerConfig

    try:
        return TrackerConfig(cfg["similarity"], cfg["gate"], int(cfg["max_misses"]), int(cfg["min_hits"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- commands ------------------------------------------------------------------

def cmd_synth(args, cfg) -> int:
    from .data.dataset import write_dataset
    from .data.synth import ALL_CLASSES, SynthConfig, split, synth_gestures
    from .data.stream import frames_to_stream, write_stream, write_ground_truth
    from .metrics import build_stream

    classes = tuple(cfg["classes"] or ALL_CLASSES)
    try:
        sc = SynthConfig(classes=classes, sequences_per_class=int(cfg["per_class"]),
                         noise_sigma=float(cfg["noise"]), seed=int(cfg["seed"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seqs, _ = synth_gestures(sc)
    out = Path(args.out)
    if args.test_fraction > 0:
        train, test = split(seqs, args.test_fraction, int(cfg["seed"]))
        write_dataset(out / "train", train, sc.fps)
        write_dataset(out / "test", test, sc.fps)
        print(f"wrote {len(train)} training and {len(test)} test sequences to {out} (seed {cfg['seed']})")
    else:
        write_dataset(out, seqs, sc.fps)
        print(f"wrote {len(seqs)} sequences to {out} (seed {cfg['seed']})")
    if args.stream:
        rng = np.random.default_rng([int(cfg["seed"]), 1])
        frames, gt = build_stream(seqs if args.test_fraction <= 0 else test, rng, cfg["interleave"], sc.fps)
        with open(args.stream, "w", encoding="utf-8") as fh:
            write_stream(frames_to_stream(frames, 0), fh)
        gt_path = Path(args.stream).with_suffix(".gt.json")
        gt_path.write_text(write_ground_truth(gt) + "\n", encoding="utf-8")
        print(f"wrote {len(frames)}-frame stream to {args.stream}, ground truth to {gt_path}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    from .data.archive import save_model
    from .data.dataset import read_dataset
    from .pipeline import train_bundle

    _require(args.data)
    layout_name, seqs = read_dataset(args.data)
    if args.layout and layout_name != args.layout:
        raise LayoutMismatch(f"dataset layout {layout_name} != requested {args.layout}")
    t0 = time.perf_counter()
    bundle, summary = train_bundle(
        seqs, get_layout(layout_name), _gesturelet(cfg), int(cfg["K"]), int(cfg["m"]),
        _train_cfg(cfg), _variant(cfg), int(cfg["seed"]),
    )
    save_model(bundle, args.out)
    print(f"trained {len(summary.classes)} classes on {summary.n_sequences} sequences "
          f"({summary.n_frames} frames) in {time.perf_counter() - t0:.1f}s, seed {cfg['seed']}")
    for c, th in summary.thresholds.items():
        print(f"  threshold {c:<12} {th:10.4f}")
    print(f"training recognition accuracy {summary.train_accuracy:.4f}")
    print(f"model written to {args.out}")
    return EXIT_OK


def _open_stream(path):
    return sys.stdin if path == "-" else open(path, encoding="utf-8")


def cmd_detect(args, cfg) -> int:
    from .data.archive import load_model
    from .data.stream import format_event, iter_stream
    from .detector import OnlineDetector
    from .tracker import Tracker

    _require(args.model, args.stream)
    bundle = load_model(args.model)
    explicit = args.variant is not None or "variant" in _load_config(args.config)
    variant = _variant(cfg) if explicit else bundle.variant
    replace(bundle, variant=variant).check()
    tracker = Tracker(bundle.layout, _tracker_cfg(cfg))
    detectors: dict[int, OnlineDetector] = {}
    latencies = []
    out = sys.stdout
    n_events = 0

    def emit(events):
        nonlocal n_events
        for e in events:
            out.write(format_event(e.to_record()) + "\n")
            n_events += 1
        if events:
            out.flush()

    fh = _open_stream(args.stream)
    try:
        for t, fr in enumerate(iter_stream(fh, bundle.layout)):
            start = time.perf_counter()
            skels = [p.to_frame(t, fr.t) for p in fr.persons]
            if args.trust_ids and all(p.id is not None for p in fr.persons):
                mapping = {j: int(p.id) for j, p in enumerate(fr.persons)}
            else:
                mapping = tracker.step(skels)
            events = []
            for j, tid in mapping.items():
                det = detectors.get(tid)
                if det is None:
                    det = detectors[tid] = OnlineDetector(bundle, variant, person_id=tid)
                events.extend(det.step(skels[j]))
            if not args.trust_ids:
                alive = {tr.id for tr in tracker.tracks}
                for tid in [k for k in detectors if k not in alive]:
                    events.extend(detectors.pop(tid).flush())
            latencies.append(time.perf_counter() - start)
            emit(events)
    finally:
        if fh is not sys.stdin:
            fh.close()
    for tid in sorted(detectors):
        emit(detectors[tid].flush())
    log.info("detect: %d frames, %d events, seed %s", len(latencies), n_events, cfg["seed"])
    if args.stats:
        ms = np.array(latencies) * 1e3 if latencies else np.zeros(1)
        stats = {
            "frames": len(latencies),
            "p50_ms": float(np.percentile(ms, 50)),
            "p90_ms": float(np.percentile(ms, 90)),
            "p99_ms": float(np.percentile(ms, 99)),
            "max_ms": float(ms.max()),
        }
        print("latency " + json.dumps(stats), file=sys.stderr)
    return EXIT_OK


def cmd_track(args, cfg) -> int:
    from .data.stream import iter_stream
    from .tracker import Tracker

    _require(args.stream)
    layout = get_layout(cfg["layout"])
    tracker = Tracker(layout, _tracker_cfg(cfg))
    fh = _open_stream(args.stream)
    try:
        for t, fr in enumerate(iter_stream(fh, layout)):
            mapping = tracker.step([p.to_frame(t, fr.t) for p in fr.persons])
            confirmed = sorted(tr.id for tr in tracker.tracks if tr.confirmed)
            print(json.dumps({"frame": t, "assignments": {str(k): v for k, v in mapping.items()},
                              "confirmed": confirmed}))
    finally:
        if fh is not sys.stdin:
            fh.close()
    print(json.dumps({"births": tracker.births, "deaths": tracker.deaths,
                      "live": len(tracker.tracks)}), file=sys.stderr)
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .data.archive import load_model
    from .data.dataset import read_dataset
    from .metrics import concat_eval, delta_table, detector_runner, oracle_runner

    _require(args.data, args.model, args.compare_model)
    _, seqs = read_dataset(args.data)
    if args.oracle:
        runners = [("oracle", oracle_runner)]
        classes = sorted({s.label for s in seqs if s.label is not None and s.label != cfg["interleave"]})
    else:
        if args.model is None:
            raise ConfigError("eval needs --model unless --oracle is given")
        bundle = load_model(args.model)
        runners = [(Path(args.model).stem, detector_runner(bundle))]
        classes = bundle.model.detection_classes
        if args.compare_model:
            other = load_model(args.compare_model)
            runners.append((Path(args.compare_model).stem, detector_runner(other)))
    interleave = cfg["interleave"]
    test = seqs if interleave else [s for s in seqs if s.label in classes]
    reports = []
    for name, runner in runners:
        rep = concat_eval(test, runner, classes, int(cfg["seed"]), int(cfg["repetitions"]),
                          interleave, int(cfg["workers"]))
        rep.metadata["runner"] = name
        reports.append(rep)
        print(f"== {name} (seed {cfg['seed']}, {cfg['repetitions']} repetitions)")
        print(rep.table())
        if args.out_dir:
            d = Path(args.out_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / f"report_{len(reports)}_{name}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    if len(reports) == 2:
        print(f"== delta ({runners[1][0]} - {runners[0][0]})")
        table = delta_table(reports[0], reports[1])
        print(table)
        if args.out_dir:
            (Path(args.out_dir) / "delta.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_tune(args, cfg) -> int:
    from .data.dataset import read_dataset
    from .tuning import TuneGrid, tune

    _require(args.data)
    layout_name, seqs = read_dataset(args.data)
    try:
        grid = TuneGrid.from_dict(cfg["grid"]) if cfg["grid"] else TuneGrid()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad grid: {exc}") from None
    res = tune(seqs, get_layout(layout_name), grid, int(cfg["folds"]), int(cfg["seed"]),
               _train_cfg(cfg), int(cfg["lag"]), int(cfg["max_points"]))
    for r in res.ranking:
        print(f"{r['score']:.4f}  " + " ".join(f"{k}={v}" for k, v in r["params"].items()))
    print(f"best {json.dumps(res.best)} score {res.best_score:.4f}")
    if args.out:
        rec = res.to_record()
        rec["seed"] = int(cfg["seed"])
        rec["folds"] = int(cfg["folds"])
        Path(args.out).write_text(json.dumps(rec, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_inspect(args, cfg) -> int:
    from .data.archive import load_model, model_digest

    _require(args.model)
    b = load_model(args.model)
    info = {
        "layout": b.layout.name,
        "descriptor_dim": b.layout.descriptor_dim,
        "gesturelet": b.gesturelet.to_dict(),
        "K": b.codebook.K,
        "m": b.m,
        "variant": b.variant.to_dict(),
        "seed": b.seed,
        "classes": list(b.model.classes),
        "thresholds": dict(zip(b.model.classes, b.model.theta.tolist())),
        "mean_train_length": b.model.mean_train_length,
        "codebook_digest": b.codebook.digest(),
        "model_digest": model_digest(b.model),
    }
    print(json.dumps(info, indent=1))
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="skelgest",
        description="Online skeleton gesture detection: synthesis, training, detection, tracking, evaluation.",
        epilog="exit codes: 0 ok, 1 other error, 2 configuration/usage, 3 parse error, 4 model mismatch",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--layout", choices=["openpose18", "ntu25"])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def model_flags(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--lag", type=int)
        sp.add_argument("--K", type=int, dest="K")
        sp.add_argument("--m", type=int)
        sp.add_argument("--lam", type=float)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--weight-factor", type=float, dest="weight_factor")

    def variant_flags(sp):
        sp.add_argument("--variant", choices=["vanilla", "generated", "neutral"])
        sp.add_argument("--s", type=int, help="trailing non-positive scores required by the generated variant")
        sp.add_argument("--no-augmentation", dest="augmentation", action="store_const", const=False)
        sp.add_argument("--neutral-class", dest="neutral_class")

    def tracker_flags(sp):
        sp.add_argument("--similarity", choices=["iou", "oks"])
        sp.add_argument("--gate", type=float)
        sp.add_argument("--max-misses", type=int, dest="max_misses")
        sp.add_argument("--min-hits", type=int, dest="min_hits")

    sp = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--classes", nargs="+")
    sp.add_argument("--per-class", type=int, dest="per_class")
    sp.add_argument("--noise", type=float)
    sp.add_argument("--test-fraction", type=float, default=0.0, dest="test_fraction")
    sp.add_argument("--stream", help="also write a concatenated stream (test split if any) here")
    sp.add_argument("--interleave", help="label inserted between every pair of sequences in --stream")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a detector archive from a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    model_flags(sp)
    variant_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("detect", help="run online detection over a skeleton stream")
    sp.add_argument("--model", required=True)
    sp.add_argument("--stream", required=True, help="stream file, or - for standard input")
    sp.add_argument("--stats", action="store_true", help="print per-frame latency percentiles at exit")
    sp.add_argument("--trust-ids", action="store_true", help="use the stream's person ids instead of tracking")
    variant_flags(sp)
    tracker_flags(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("track", help="replay the tracker over a skeleton stream")
    sp.add_argument("--stream", required=True)
    tracker_flags(sp)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("eval", help="segment metrics over shuffled concatenated test streams")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model")
    sp.add_argument("--compare-model", dest="compare_model")
    sp.add_argument("--oracle", action="store_true", help="score the ground truth itself")
    sp.add_argument("--repetitions", type=int)
    sp.add_argument("--interleave")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out-dir", dest="out_dir")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("tune", help="k-fold grid search on recognition accuracy")
    sp.add_argument("--data", required=True)
    sp.add_argument("--folds", type=int)
    sp.add_argument("--max-points", type=int, dest="max_points")
    sp.add_argument("--out")
    model_flags(sp)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("inspect", help="summarize a model archive")
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ModelMismatch, VersionUnsupported, LayoutMismatch) as exc:
        print(f"model mismatch: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except SkelgestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error of ours
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
