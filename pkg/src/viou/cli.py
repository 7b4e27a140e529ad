"""Command line entry point: ``viou track | eval | sweep | gen | bench``.

Every tracker setting can come from a ``--config`` file and be overridden by a
flag of the same name; defaults are the tuned values sigma_iou=0.6, alpha=0.7,
beta=0.3, ttl=15, t_min=3.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import RUN_KEYS, load_config
from .errors import ViouError
from .metrics import MetricsBundle, SWEEP_THRESHOLDS, clear_mot, fmt, pr_sweep
from .mot_io import (load_sidecar, parse_detections, parse_ground_truth, records_to_detections,
                     rescale_scores, write_tracks)
from .tracker import Tracker, TrackerConfig, frame_span

log = logging.getLogger("viou")

TRACKER_FLAGS = {
    # flag dest -> (type, help)
    "alpha": (float, "weight of the IOU term"),
    "beta": (float, "weight of the appearance term (alpha defaults to 1 - beta)"),
    "sigma_iou": (float, "minimum IOU for a plain spatial match"),
    "sigma_reid": (float, "minimum cosine for an appearance rescue"),
    "sigma_iou_relaxed": (float, "minimum IOU for an appearance rescue"),
    "ttl": (int, "frames a track may coast on predictions"),
    "t_min": (int, "minimum detected boxes for a track to be kept"),
    "ema_momentum": (float, "momentum of the track appearance average"),
    "predictor": (str, "constant_velocity or constant_position"),
    "velocity_window": (int, "history entries used for the velocity estimate"),
}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, config: dict, inputs, outputs, timings: dict) -> None:
    manifest = {
        "tool": "viou",
        "version": __version__,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _bool(s) -> bool:
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def resolve_settings(args) -> tuple[TrackerConfig, dict]:
    """Layer defaults < config file < command-line flags."""
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    tracker_values = {k: v for k, v in file_values.items() if k not in RUN_KEYS}
    run = {k: file_values[k] for k in RUN_KEYS if k in file_values}
    for key in TRACKER_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            tracker_values[key] = v
            # a lone --beta or --alpha on the command line re-derives the other
            other = {"alpha": "beta", "beta": "alpha"}.get(key)
            if other and getattr(args, other, None) is None:
                tracker_values.pop(other, None)
    if getattr(args, "no_backward", False):
        tracker_values["backward_enabled"] = False
    if getattr(args, "backward_appearance_only", False):
        tracker_values["backward_appearance_only"] = True
    config = TrackerConfig.from_flat(tracker_values)
    for key in ("match_iou", "thresholds", "rescale_top50", "workers"):
        v = getattr(args, key, None)
        if v not in (None, False):
            run[key] = v
    run["match_iou"] = float(run.get("match_iou", 0.5))
    run["rescale_top50"] = _bool(run.get("rescale_top50", False))
    if "thresholds" in run and isinstance(run["thresholds"], str):
        run["thresholds"] = [float(t) for t in run["thresholds"].split(",") if t.strip()]
    if "workers" in run:
        run["workers"] = int(run["workers"])
    return config, run


def _seq_name(det_path: Path) -> str:
    name = det_path.name
    for suffix in (".det.csv", ".csv"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return det_path.stem


def _load_inputs(args, config: TrackerConfig, run: dict):
    det_path = Path(args.detections)
    records = parse_detections(det_path)
    if run["rescale_top50"]:
        records = rescale_scores(records)
    emb_path = Path(args.emb) if args.emb else det_path.with_name(_seq_name(det_path) + ".emb")
    sidecar = None
    if emb_path.exists():
        sidecar = load_sidecar(emb_path)
    elif args.emb:
        raise ViouError(f"embedding sidecar not found: {emb_path}")
    elif config.assoc.beta > 0:
        log.warning("no embedding sidecar for %s; appearance term disabled (IOU-only association)", det_path)
    inputs = [det_path] + ([emb_path] if sidecar is not None else [])
    return records, sidecar, inputs


def cmd_track(args) -> int:
    config, run = resolve_settings(args)
    t0 = time.perf_counter()
    records, sidecar, inputs = _load_inputs(args, config, run)
    frames = records_to_detections(records, sidecar)
    t_load = time.perf_counter() - t0

    tracker = Tracker(config)
    span = frame_span(frames)
    t0 = time.perf_counter()
    n = 0
    if span is not None:
        for f in range(span[0], span[1] + 1):
            tracker.step(f, frames.get(f, ()))
            n += 1
    tracks = tracker.finalize()
    t_track = time.perf_counter() - t0

    det_path = Path(args.detections)
    if args.out:
        out = Path(args.out)
    else:
        out_dir = Path(args.out_dir) if args.out_dir else det_path.parent
        out = out_dir / f"{_seq_name(det_path)}.trk.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    write_tracks(tracks, out)
    t_write = time.perf_counter() - t0
    snapshot = {**config.flat(), "rescale_top50": run["rescale_top50"]}
    write_manifest(out.with_name(out.name + ".manifest.json"), snapshot, inputs, [out],
                   {"load": t_load, "track": t_track, "write": t_write})
    fps = n / t_track if t_track > 0 else float("inf")
    print(f"tracks={len(tracks)} births={tracker.n_births} merges={tracker.n_merges} "
          f"frames={n} fps={fps:.1f} out={out}")
    return 0


def _bundle_table(rows: list[tuple[str, MetricsBundle]]) -> str:
    cols = ("mota", "motp", "mt", "ml", "ids", "fm", "fp", "fn")
    head = f"{'':>10} " + " ".join(f"{c.upper():>9}" for c in cols)
    lines = [head]
    for label, b in rows:
        vals = []
        for c in cols:
            v = getattr(b, c)
            vals.append(f"{'-' if v is None else (f'{v:.4f}' if isinstance(v, float) else v):>9}")
        lines.append(f"{label:>10} " + " ".join(vals))
    return "\n".join(lines)


def _write_bundle_csv(path, bundle: MetricsBundle) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(MetricsBundle.COLUMNS) + "\n")
        fh.write(",".join(fmt(v) for v in bundle.row().values()) + "\n")


def cmd_eval(args) -> int:
    gt = parse_ground_truth(args.gt)
    hyp = parse_ground_truth(args.tracks)
    bundle = clear_mot(gt, hyp, args.match_iou if args.match_iou is not None else 0.5)
    print(_bundle_table([("result", bundle)]))
    if args.out:
        _write_bundle_csv(args.out, bundle)
    return 0


POINT_COLUMNS = ("threshold", "precision", "recall", "detections") + MetricsBundle.COLUMNS


def cmd_sweep(args) -> int:
    config, run = resolve_settings(args)
    t0 = time.perf_counter()
    gt = parse_ground_truth(args.gt)
    records, sidecar, inputs = _load_inputs(args, config, run)
    t_load = time.perf_counter() - t0
    thresholds = run.get("thresholds", list(SWEEP_THRESHOLDS))
    t0 = time.perf_counter()
    result = pr_sweep(gt, records, sidecar, config, run["match_iou"], thresholds, run.get("workers"))
    t_sweep = time.perf_counter() - t0

    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    points_path = out_dir / "sweep_points.csv"
    summary_path = out_dir / "sweep_summary.csv"
    with open(points_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(POINT_COLUMNS) + "\n")
        for p in result.points:
            vals = [fmt(p.threshold), fmt(p.precision), fmt(p.recall), str(p.detections)]
            vals += [fmt(v) for v in p.metrics.row().values()]
            fh.write(",".join(vals) + "\n")
    with open(summary_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("metric,value\n")
        for k, v in result.aggregate.items():
            fh.write(f"{k},{fmt(v)}\n")
    snapshot = {**config.flat(), **{k: v for k, v in run.items() if k != "workers"}}
    snapshot["thresholds"] = list(thresholds)
    write_manifest(out_dir / "sweep.manifest.json", snapshot, [Path(args.gt)] + inputs,
                   [points_path, summary_path], {"load": t_load, "sweep": t_sweep})

    print(_bundle_table([(f"t={p.threshold:.1f}", p.metrics) for p in result.points]))
    print()
    for k, v in result.aggregate.items():
        print(f"{k:>12}: {'-' if v is None else f'{v:.4f}'}")
    return 0


def cmd_gen(args) -> int:
    from .synth import generate, preset
    spec = preset(args.preset, args.seed if args.seed is not None else 0)
    t0 = time.perf_counter()
    scenario = generate(spec)
    paths = scenario.write(args.out_dir or ".", args.name)
    elapsed = time.perf_counter() - t0
    out_dir = Path(args.out_dir or ".")
    write_manifest(out_dir / f"{args.name or spec.name}.gen.manifest.json",
                   {"preset": args.preset, "seed": spec.seed}, [], list(paths.values()), {"generate": elapsed})
    for k, p in paths.items():
        print(f"{k}: {p}")
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench
    config, _ = resolve_settings(args)
    report = run_bench(args.detections, args.dim, args.frames, args.repeats,
                       args.seed if args.seed is not None else 0, config)
    print("\n".join(report.lines()))
    return 0


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    for key, (typ, help_) in TRACKER_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_)
    p.add_argument("--no-backward", action="store_true", help="disable backward merging")
    p.add_argument("--backward-appearance-only", action="store_true",
                   help="gate backward merges on appearance alone")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viou", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"viou {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track one detection file")
    p.add_argument("detections", help="<seq>.det.csv")
    p.add_argument("--emb", help="embedding sidecar (default: <seq>.emb next to the detections)")
    p.add_argument("--out", help="output track file (default: <out-dir>/<seq>.trk.csv)")
    p.add_argument("--out-dir")
    p.add_argument("--rescale-top50", action="store_true", help="boost the top-50 scores per frame by 1.25")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR-MOT metrics of a track file")
    p.add_argument("gt")
    p.add_argument("tracks")
    p.add_argument("--match-iou", type=float, default=None)
    p.add_argument("--out", help="write the metrics row as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="PR-swept metrics over confidence thresholds")
    p.add_argument("gt")
    p.add_argument("detections")
    p.add_argument("--emb")
    p.add_argument("--out-dir")
    p.add_argument("--match-iou", type=float, default=None)
    p.add_argument("--thresholds", help="comma-separated list (default 0.0,0.1,...,1.0)")
    p.add_argument("--rescale-top50", action="store_true")
    p.add_argument("--workers", type=int, default=None, help="parallel sweep points (capped by VIOU_THREADS)")
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="write a synthetic scenario")
    p.add_argument("--preset", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir")
    p.add_argument("--name", help="sequence name (default: the preset name)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="association throughput benchmark")
    p.add_argument("--detections", type=int, default=25)
    p.add_argument("--dim", type=int, default=2048)
    p.add_argument("--frames", type=int, default=5000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    _add_tracker_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s")
    if args.command == "bench" and (args.detections < 1 or args.dim < 1 or args.frames < 1):
        parser.error("bench sizes must be >= 1")
    try:
        return args.func(args)
    except (ViouError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
