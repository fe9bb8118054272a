"""Command-line front door: scoring, training, evaluation, and study tooling.

Exit codes: 0 success, 1 partial failure (some videos failed), 2 usage or
configuration error. All subcommands that take --seed are reproducible:
identical inputs give byte-identical output files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import (
    ManifestEntry,
    aggregate_mos,
    clean_annotations,
    compute_attributes,
    load_gold_csv,
    load_manifest,
    load_ratings_csv,
    load_repeats_csv,
    load_splits,
    write_mos_csv,
)
from .media import load_video
from .motion import FlowParams
from .nn.models import CheckpointError, ModelConfig, QualityModel
from .pipeline.calibrate import rescale_predictions
from .pipeline.evaluate import evaluate, write_report
from .pipeline.score import cache_path, motions_for_video, score_video
from .pipeline.train import (
    STAGE_FULL,
    STAGE_STREAM_B,
    TrainConfig,
    VideoItem,
    train,
    write_training_log,
)
from .sampling import SamplerParams


class UsageError(ValueError):
    pass


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise UsageError(f"expected a boolean, got {value!r}")
    if target_type is tuple:
        # channel/pool tuples arrive as comma lists, e.g. 10,4,1 or (10,4,1)
        try:
            return tuple(int(p) for p in value.strip("()").split(",") if p.strip())
        except (TypeError, ValueError) as e:
            raise UsageError(f"bad value {value!r}: {e}") from e
    try:
        return target_type(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad value {value!r}: {e}") from e


def _with_overrides(base, pairs: list[str] | None):
    """Apply key=value overrides to a frozen dataclass; unknown keys rejected."""
    if not pairs:
        return base
    fields = {f.name: f for f in dataclasses.fields(base)}
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"override {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        if key not in fields:
            raise UsageError(f"unknown {type(base).__name__} key {key!r} "
                             f"(have {sorted(fields)})")
        ftype = fields[key].type
        base_value = getattr(base, key)
        target = type(base_value) if base_value is not None else (
            float if "float" in str(ftype) else int if "int" in str(ftype) else str)
        updates[key] = _coerce(raw, target)
    try:
        return dataclasses.replace(base, **updates)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _flow_from_args(args) -> FlowParams | None:
    if getattr(args, "no_motion", False):
        return None
    return _with_overrides(FlowParams(), getattr(args, "flow", None))


def _sampler_from_args(args) -> SamplerParams:
    return _with_overrides(SamplerParams(), getattr(args, "sampler", None))


def _cache_dir_from_args(args) -> Path | None:
    explicit = getattr(args, "cache_dir", None) or os.environ.get("REVQ_CACHE_DIR")
    if explicit is None:
        return None
    path = Path(explicit)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _items_from_manifest(entries: list[ManifestEntry]) -> list[VideoItem]:
    return [VideoItem(e.video_id, e.scene_id,
                      (lambda p=e.video_path: load_video(p)),
                      oa_mos=e.oa_mos, ts_mos=e.ts_mos) for e in entries]


def _parallel_map(fn, inputs, jobs: int):
    """Run fn over inputs, preserving input order in the results."""
    if jobs <= 1:
        return [fn(x) for x in inputs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, inputs))


def _split_scenes(args) -> tuple[list[str] | None, list[str] | None]:
    if not getattr(args, "split", None):
        return None, None
    splits = load_splits(args.split)
    for spec in splits:
        if spec.repetition == args.rep:
            return spec.train_scenes, spec.test_scenes
    raise UsageError(f"split file has no repetition {args.rep}")


# ----------------------------------------------------------------------
# subcommands


def cmd_score(args) -> int:
    model = QualityModel.load(args.model)
    flow = _flow_from_args(args)
    sampler = _sampler_from_args(args)
    cache_dir = _cache_dir_from_args(args)

    if args.manifest:
        entries = load_manifest(args.manifest)
        videos = [(e.video_id, e.video_path) for e in entries]
    else:
        if not args.videos:
            raise UsageError("score needs video paths or --manifest")
        videos = [(Path(p).stem, p) for p in args.videos]

    def one(pair):
        video_id, path = pair
        try:
            video = load_video(path)
            r = score_video(model, video, video_id, args.seed, flow, sampler, cache_dir)
            return (video_id, r.q_a, r.q_b, r.q_pred, "")
        except Exception as e:  # noqa: BLE001 - per-video isolation is the contract
            return (video_id, None, None, None, f"{type(e).__name__}: {e}")

    rows = _parallel_map(one, videos, args.jobs)

    rescaled = None
    if args.rescale_to:
        mos_by_id = {}
        with open(args.rescale_to, newline="") as f:
            for rec in csv.DictReader(f):
                mos_by_id[rec["video_id"]] = float(rec["oa_mos"])
        ok = [r for r in rows if not r[4] and r[0] in mos_by_id]
        if len(ok) < 2:
            raise UsageError("--rescale-to needs at least 2 scored videos with MOS")
        mapped = rescale_predictions(np.array([r[3] for r in ok]),
                                     np.array([mos_by_id[r[0]] for r in ok]))
        rescaled = {r[0]: m for r, m in zip(ok, mapped)}

    out = open(args.output, "w", newline="") if args.output != "-" else sys.stdout
    try:
        w = csv.writer(out)
        header = ["video_id", "q_a", "q_b", "q_pred"]
        if rescaled is not None:
            header.append("q_rescaled")
        header.append("errors")
        w.writerow(header)
        for row in rows:
            video_id, q_a, q_b, q_pred, err = row
            cells = [video_id] + ["" if v is None else repr(v) for v in (q_a, q_b, q_pred)]
            if rescaled is not None:
                cells.append(repr(float(rescaled[video_id])) if video_id in rescaled else "")
            cells.append(err)
            w.writerow(cells)
    finally:
        if out is not sys.stdout:
            out.close()
    failures = sum(1 for r in rows if r[4])
    if failures:
        print(f"{failures}/{len(rows)} videos failed", file=sys.stderr)
    return 1 if failures else 0


def cmd_train(args) -> int:
    entries = load_manifest(args.manifest)
    train_scenes, _ = _split_scenes(args)
    if train_scenes is not None:
        entries = [e for e in entries if e.scene_id in train_scenes]
    items = _items_from_manifest(entries)

    config = _with_overrides(
        TrainConfig(seed=args.seed, stage=args.stage,
                    freeze_pretrained=args.freeze_pretrained),
        args.train)
    if args.init:
        model = QualityModel.load(args.init)
    else:
        model = QualityModel(_model_config_from_args(args), seed=args.seed)

    logs = train(model, items, config, flow=_flow_from_args(args),
                 sampler=_sampler_from_args(args), cache_dir=_cache_dir_from_args(args))
    model.save(args.output)
    if args.log:
        write_training_log(logs, args.log)
    return 0


def _model_config_from_args(args) -> ModelConfig:
    return _with_overrides(ModelConfig(), getattr(args, "model_config", None))


def cmd_eval(args) -> int:
    model = QualityModel.load(args.model)
    entries = load_manifest(args.manifest)
    _, test_scenes = _split_scenes(args)
    items = _items_from_manifest(entries)
    report = evaluate(model, items, test_scenes=test_scenes, channel=args.channel,
                      output=args.output_score, flow=_flow_from_args(args),
                      sampler=_sampler_from_args(args), seed=args.seed,
                      cache_dir=_cache_dir_from_args(args))
    write_report(report, args.report)
    print(f"weighted SRCC {report.weighted_srcc:.4f}  PLCC {report.weighted_plcc:.4f}")
    return 0


def cmd_clean(args) -> int:
    ratings = load_ratings_csv(args.ratings)
    golds = load_gold_csv(args.gold) if args.gold else {}
    repeats = load_repeats_csv(args.repeats) if args.repeats else []
    report = clean_annotations(ratings, golds, repeats)
    rows = aggregate_mos(report.retained)
    write_mos_csv(rows, args.mos_out)
    payload = report.as_dict()
    kept = {r.video_id for r in rows}
    payload["omitted_videos"] = sorted({r.video_id for r in ratings} - kept)
    Path(args.report_out).write_text(json.dumps(payload, indent=2) + "\n")
    rejected = len(payload["rejected_annotators"])
    print(f"rejected {rejected} annotator-rule pairs; "
          f"retained {payload['retained_rating_count']} ratings")
    return 0


def cmd_attributes(args) -> int:
    entries = load_manifest(args.manifest)

    def one(entry):
        try:
            a = compute_attributes(load_video(entry.video_path))
            return (entry.video_id, a.brightness, a.contrast, a.colorfulness,
                    a.temporal_information, "")
        except Exception as e:  # noqa: BLE001
            return (entry.video_id, None, None, None, None, f"{type(e).__name__}: {e}")

    rows = _parallel_map(one, entries, args.jobs)
    with open(args.output, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["video_id", "brightness", "contrast", "colorfulness",
                    "temporal_information", "errors"])
        for row in rows:
            w.writerow([row[0]] + ["" if v is None else repr(v) for v in row[1:5]]
                       + [row[5]])
    failures = sum(1 for r in rows if r[5])
    return 1 if failures else 0


def cmd_precompute_motion(args) -> int:
    entries = load_manifest(args.manifest)
    cache_dir = _cache_dir_from_args(args)
    if cache_dir is None:
        raise UsageError("precompute-motion needs --cache-dir or REVQ_CACHE_DIR")
    flow = _with_overrides(FlowParams(), args.flow)

    def one(entry):
        target = cache_path(cache_dir, entry.video_id)
        if target.exists():
            if not args.force:
                return (entry.video_id, f"cache exists at {target}, use --force to overwrite")
            target.unlink()
        video = load_video(entry.video_path)
        motions_for_video(video, entry.video_id, args.seed, flow, cache_dir)
        return (entry.video_id, "")

    results = _parallel_map(one, entries, args.jobs)
    failures = [r for r in results if r[1]]
    for video_id, err in failures:
        print(f"{video_id}: {err}", file=sys.stderr)
    print(f"cached {len(results) - len(failures)}/{len(results)} videos")
    return 1 if failures else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(manifest_path=args.manifest, store_path=args.store,
                     seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_profile(args) -> int:
    from PIL import Image

    video = load_video(args.video)
    column = args.column if args.column is not None else video.width // 2
    if not 0 <= column < video.width:
        raise UsageError(f"column {column} outside [0, {video.width})")
    # (H, Z, 3) strip: each output column is one frame's pixel column
    strip = np.transpose(video.frames[:, :, column, :], (1, 0, 2))
    image = np.clip(strip * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(image).save(args.output)
    print(f"wrote {image.shape[1]}x{image.shape[0]} strip to {args.output}")
    return 0


# ----------------------------------------------------------------------
# parser


def _add_common(p, *, seed=True, jobs=False, motion=False, cache=False):
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if jobs:
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers; output order is independent of N")
    if motion:
        p.add_argument("--flow", action="append", metavar="KEY=VALUE",
                       help="motion-estimation override, repeatable")
        p.add_argument("--no-motion", action="store_true",
                       help="skip motion estimation (identity alignment)")
        p.add_argument("--sampler", action="append", metavar="KEY=VALUE")
    if cache:
        p.add_argument("--cache-dir", default=None,
                       help="motion/feature cache directory (or REVQ_CACHE_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revq", description="No-reference quality metric for rendered video")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("score", help="score videos with a trained model")
    p.add_argument("videos", nargs="*", help="video paths (.y4m or frame directories)")
    p.add_argument("--manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--output", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--rescale-to", metavar="MOS_CSV",
                   help="map q_pred onto the MOS scale of this file")
    _add_common(p, jobs=True, motion=True, cache=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch training log CSV")
    p.add_argument("--stage", choices=[STAGE_FULL, STAGE_STREAM_B], default=STAGE_FULL)
    p.add_argument("--init", help="checkpoint to start from (e.g. a pretrained stage)")
    p.add_argument("--freeze-pretrained", action="store_true")
    p.add_argument("--train", action="append", metavar="KEY=VALUE",
                   help="training override, repeatable (epochs=, batch_size=, ...)")
    p.add_argument("--model-config", action="append", metavar="KEY=VALUE",
                   dest="model_config", help="architecture override for fresh models")
    p.add_argument("--split", help="splits JSON from make_splits")
    p.add_argument("--rep", type=int, default=0, help="repetition index in --split")
    _add_common(p, motion=True, cache=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model per scene")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True, help="output JSON path")
    p.add_argument("--channel", choices=["oa", "ts"], default="oa")
    p.add_argument("--output-score", choices=["q_pred", "q_a", "q_b"], default="q_pred")
    p.add_argument("--split")
    p.add_argument("--rep", type=int, default=0)
    _add_common(p, motion=True, cache=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("clean", help="run annotation cleaning and MOS aggregation")
    p.add_argument("--ratings", required=True)
    p.add_argument("--gold")
    p.add_argument("--repeats")
    p.add_argument("--mos-out", required=True)
    p.add_argument("--report-out", required=True)
    _add_common(p, seed=False)
    p.set_defaults(fn=cmd_clean)

    p = sub.add_parser("attributes", help="compute per-video attribute table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    _add_common(p, seed=False, jobs=True)
    p.set_defaults(fn=cmd_attributes)

    p = sub.add_parser("precompute-motion", help="fill the motion cache for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--force", action="store_true", help="overwrite existing cache files")
    p.add_argument("--flow", action="append", metavar="KEY=VALUE")
    _add_common(p, jobs=True, cache=True)
    p.set_defaults(fn=cmd_precompute_motion)

    p = sub.add_parser("serve", help="start the annotation-collection service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True, help="append-only NDJSON event file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_common(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("profile", help="debug: PNG strip of one pixel column over time")
    p.add_argument("--video", required=True)
    p.add_argument("--column", type=int, default=None)
    p.add_argument("--output", required=True)
    _add_common(p, seed=False)
    p.set_defaults(fn=cmd_profile)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (UsageError, CheckpointError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
