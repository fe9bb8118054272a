"""Study data tooling: video attributes, annotation cleaning, MOS aggregation.

Cleaning implements the three screening rules used on the collected ratings:
gold-video deviation, repeat-pair inconsistency, and leave-one-out correlation
against the other annotators' consensus. Rules are evaluated independently in
a single pass (no iterative re-screening), and each is checked on both score
channels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .media import Video, luma
from .pipeline.stats import DegenerateInput, pearson, spearman

SCORE_MIN = 1.0
SCORE_MAX = 5.0
GOLD_TOLERANCE = 1.0
REPEAT_TOLERANCE = 1.0
CORRELATION_FLOOR = 0.8
MIN_OVERLAP = 3  # videos needed before rule 3 is meaningful


def on_score_grid(value: float) -> bool:
    """Scores live on the half-step grid between 1 and 5."""
    if not (SCORE_MIN <= value <= SCORE_MAX):
        return False
    doubled = value * 2.0
    return doubled == round(doubled)


SESSIONS = ("s720p", "s1080p", "s2k")


@dataclass(frozen=True)
class Rating:
    annotator_id: str
    video_id: str
    oa: float
    ts: float
    session: str = "s1080p"
    timestamp: float = 0.0

    def channel(self, name: str) -> float:
        return self.oa if name == "oa" else self.ts


@dataclass
class CleaningReport:
    rejected: dict[str, list[str]]       # annotator -> sorted rule tags
    flags: dict[str, list[str]]          # non-fatal findings per annotator
    retained: list[Rating]
    annotators: list[str]

    def rejected_by_rule(self, rule: str) -> list[str]:
        return sorted(a for a, rules in self.rejected.items() if rule in rules)

    def as_dict(self) -> dict:
        pairs = sorted((a, rule) for a, rules in self.rejected.items() for rule in rules)
        return {
            "rejected_annotators": [list(p) for p in pairs],
            "flags": {a: sorted(f) for a, f in sorted(self.flags.items())},
            "retained_rating_count": len(self.retained),
            "annotators": self.annotators,
        }


@dataclass
class MosRecord:
    video_id: str
    oa_mos: float
    ts_mos: float
    n_ratings: int


# ----------------------------------------------------------------------
# attributes


@dataclass(frozen=True)
class Attributes:
    brightness: float
    contrast: float
    colorfulness: float
    temporal_information: float


def _frame_colorfulness(frame: np.ndarray) -> float:
    r, g, b = frame[..., 0], frame[..., 1], frame[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    sigma = np.sqrt(rg.var() + yb.var())
    mu = np.sqrt(rg.mean() ** 2 + yb.mean() ** 2)
    return float(sigma + 0.3 * mu)


def compute_attributes(video: Video) -> Attributes:
    """Low-level attribute set; values are in normalized [0,1] pixel units."""
    lum = luma(video.frames)
    brightness = float(lum.mean())
    contrast = float(np.mean([lum[t].std() for t in range(video.frame_count)]))
    colorfulness = float(np.mean([_frame_colorfulness(f) for f in video.frames]))
    ti = 0.0
    for t in range(1, video.frame_count):
        ti = max(ti, float((lum[t] - lum[t - 1]).std()))
    return Attributes(brightness, contrast, colorfulness, ti)


# ----------------------------------------------------------------------
# cleaning


def _ratings_by_annotator(ratings: list[Rating]) -> dict[str, dict[str, Rating]]:
    table: dict[str, dict[str, Rating]] = {}
    for r in ratings:
        per = table.setdefault(r.annotator_id, {})
        if r.video_id in per:
            raise ValueError(f"duplicate rating of {r.video_id} by {r.annotator_id}")
        per[r.video_id] = r
    return table


def _gold_violations(per: dict[str, Rating], golds: dict[str, tuple[float, float]]) -> bool:
    for vid, (oa, ts) in golds.items():
        if vid not in per:
            raise ValueError(f"gold video {vid} was not rated by every annotator")
        if abs(per[vid].oa - oa) > GOLD_TOLERANCE or abs(per[vid].ts - ts) > GOLD_TOLERANCE:
            return True
    return False


def _repeat_violations(per: dict[str, Rating], repeats: list[tuple[str, str]]) -> bool:
    for a, b in repeats:
        if a in per and b in per:
            if (abs(per[a].oa - per[b].oa) > REPEAT_TOLERANCE
                    or abs(per[a].ts - per[b].ts) > REPEAT_TOLERANCE):
                return True
    return False


def _loo_consensus(table: dict[str, dict[str, Rating]], annotator: str,
                   channel: str) -> tuple[list[float], list[float]]:
    """This annotator's scores vs the mean of all other raters, per video."""
    mine, others = [], []
    for vid, r in table[annotator].items():
        rest = [t[vid].channel(channel) for a, t in table.items()
                if a != annotator and vid in t]
        if len(rest) >= 2:
            mine.append(r.channel(channel))
            others.append(float(np.mean(rest)))
    return mine, others


def clean_annotations(ratings: list[Rating],
                      golds: dict[str, tuple[float, float]],
                      repeats: list[tuple[str, str]]) -> CleaningReport:
    for r in ratings:
        if not on_score_grid(r.oa) or not on_score_grid(r.ts):
            raise ValueError(f"off-grid score in rating {r}")
    table = _ratings_by_annotator(ratings)
    rejected: dict[str, list[str]] = {}
    flags: dict[str, list[str]] = {}

    for annotator, per in table.items():
        rules = []
        if golds and _gold_violations(per, golds):
            rules.append("gold")
        if repeats and _repeat_violations(per, repeats):
            rules.append("repeat")
        checked = 0
        failed = False
        for channel in ("oa", "ts"):
            mine, others = _loo_consensus(table, annotator, channel)
            if len(mine) < MIN_OVERLAP:
                continue
            checked += 1
            try:
                if (pearson(mine, others) < CORRELATION_FLOOR
                        or spearman(mine, others) < CORRELATION_FLOOR):
                    failed = True
            except DegenerateInput:
                # a constant channel carries no consensus information
                flags.setdefault(annotator, []).append(f"degenerate_{channel}")
                failed = True
        if checked == 0:
            flags.setdefault(annotator, []).append("insufficient_overlap")
        elif failed:
            rules.append("correlation")
        if rules:
            rejected[annotator] = rules

    retained = [r for r in ratings if r.annotator_id not in rejected]
    return CleaningReport(rejected, flags, retained, sorted(table))


def aggregate_mos(ratings: list[Rating]) -> list[MosRecord]:
    """Per-video mean of both channels over the given (cleaned) ratings."""
    groups: dict[str, list[Rating]] = {}
    for r in ratings:
        groups.setdefault(r.video_id, []).append(r)
    rows = []
    for vid in sorted(groups):
        rs = groups[vid]
        rows.append(MosRecord(vid,
                              float(np.mean([r.oa for r in rs])),
                              float(np.mean([r.ts for r in rs])),
                              len(rs)))
    return rows


# ----------------------------------------------------------------------
# manifests, splits, CSV schemas


@dataclass
class ManifestEntry:
    video_id: str
    video_path: str
    scene_id: str
    oa_mos: float | None = None
    ts_mos: float | None = None
    display_class: str = "s1080p"
    gold_oa: float | None = None  # reference scores mark screening videos
    gold_ts: float | None = None

    @property
    def is_gold(self) -> bool:
        return self.gold_oa is not None and self.gold_ts is not None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    data = json.loads(Path(path).read_text())
    entries = []
    for i, row in enumerate(data):
        if "video_path" not in row or "scene_id" not in row:
            raise ValueError(f"manifest entry {i} missing video_path/scene_id")
        entries.append(ManifestEntry(
            video_id=row.get("video_id", Path(row["video_path"]).stem),
            video_path=row["video_path"],
            scene_id=row["scene_id"],
            oa_mos=row.get("oa_mos"),
            ts_mos=row.get("ts_mos"),
            display_class=row.get("display_class", "s1080p"),
            gold_oa=row.get("gold_oa"),
            gold_ts=row.get("gold_ts"),
        ))
    ids = [e.video_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate video_id in manifest")
    return entries


@dataclass
class SplitSpec:
    repetition: int
    train_scenes: list[str]
    test_scenes: list[str]

    def __post_init__(self):
        overlap = set(self.train_scenes) & set(self.test_scenes)
        if overlap:
            raise ValueError(f"scenes in both halves of the split: {sorted(overlap)}")


def make_splits(scenes: list[str], n_splits: int = 5, test_fraction: float = 0.2,
                seed: int = 0) -> list[SplitSpec]:
    """Scene-disjoint train/test assignments, one per repetition."""
    scenes = sorted(set(scenes))
    n_test = max(1, round(len(scenes) * test_fraction))
    if n_test >= len(scenes):
        raise ValueError("not enough scenes to split")
    splits = []
    for rep in range(n_splits):
        rng = np.random.default_rng([seed, rep])
        order = list(rng.permutation(scenes))
        splits.append(SplitSpec(rep, sorted(order[n_test:]), sorted(order[:n_test])))
    return splits


def save_splits(splits: list[SplitSpec], path: str | Path):
    payload = [{"repetition": s.repetition, "train_scenes": s.train_scenes,
                "test_scenes": s.test_scenes} for s in splits]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_splits(path: str | Path) -> list[SplitSpec]:
    data = json.loads(Path(path).read_text())
    return [SplitSpec(d["repetition"], d["train_scenes"], d["test_scenes"]) for d in data]


RATINGS_COLUMNS = ["annotator_id", "video_id", "oa", "ts", "session", "timestamp"]


def load_ratings_csv(path: str | Path) -> list[Rating]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(RATINGS_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"ratings CSV missing columns: {sorted(missing)}")
        out = []
        for i, row in enumerate(reader, start=2):
            try:
                if row["session"] not in SESSIONS:
                    raise ValueError(f"unknown session {row['session']!r}")
                out.append(Rating(row["annotator_id"], row["video_id"],
                                  float(row["oa"]), float(row["ts"]),
                                  row["session"], float(row["timestamp"])))
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path} line {i}: {e}") from e
    return out


def load_gold_csv(path: str | Path) -> dict[str, tuple[float, float]]:
    golds = {}
    with open(path, newline="") as f:
        for i, row in enumerate(csv.DictReader(f), start=2):
            try:
                golds[row["video_id"]] = (float(row["oa"]), float(row["ts"]))
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path} line {i}: {e}") from e
    return golds


def load_repeats_csv(path: str | Path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, newline="") as f:
        for i, row in enumerate(csv.DictReader(f), start=2):
            try:
                pairs.append((row["original_id"], row["repeat_id"]))
            except KeyError as e:
                raise ValueError(f"{path} line {i}: missing column {e}") from e
    return pairs


def write_mos_csv(rows: list[MosRecord], path: str | Path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["video_id", "oa_mos", "ts_mos", "n"])
        for r in rows:
            w.writerow([r.video_id, repr(r.oa_mos), repr(r.ts_mos), r.n_ratings])
