"""Scene-wise evaluation with logistic calibration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..motion import FlowParams
from ..nn.models import QualityModel
from ..sampling import SamplerParams
from .calibrate import logistic_map
from .score import score_video
from .stats import DegenerateInput, pearson, spearman
from .train import VideoItem


class NoEvaluableScenes(ValueError):
    pass


@dataclass
class SceneRow:
    scene_id: str
    count: int
    srcc: float
    plcc: float
    degenerate: bool = False


@dataclass
class EvalReport:
    channel: str
    output: str
    scenes: list[SceneRow]
    weighted_srcc: float
    weighted_plcc: float
    skipped_scenes: list[str] = field(default_factory=list)
    predictions: dict[str, float] = field(default_factory=dict)


def _scene_correlations(preds: np.ndarray, mos: np.ndarray) -> tuple[float, float, bool]:
    """SRCC on raw predictions, PLCC after the logistic mapping."""
    try:
        srcc = spearman(preds, mos)
        plcc = pearson(logistic_map(preds, mos), mos)
        return srcc, plcc, False
    except DegenerateInput:
        return 0.0, 0.0, True


def evaluate(model: QualityModel, items: list[VideoItem], test_scenes: list[str] | None = None,
             channel: str = "oa", output: str = "q_pred",
             flow: FlowParams | None = FlowParams(),
             sampler: SamplerParams = SamplerParams(), seed: int = 0,
             cache_dir: str | Path | None = None) -> EvalReport:
    """Per-scene SRCC/PLCC of (predictions, MOS), weighted by test video counts.

    test_scenes=None evaluates every scene in items. Scenes with fewer than
    two videos cannot be correlated and are reported as skipped.
    """
    if channel not in ("oa", "ts"):
        raise ValueError("channel must be 'oa' or 'ts'")
    if output not in ("q_pred", "q_a", "q_b"):
        raise ValueError("output must be one of q_pred/q_a/q_b")

    selected = [it for it in items
                if test_scenes is None or it.scene_id in test_scenes]
    by_scene: dict[str, list[VideoItem]] = {}
    for it in selected:
        by_scene.setdefault(it.scene_id, []).append(it)

    rows: list[SceneRow] = []
    skipped: list[str] = []
    predictions: dict[str, float] = {}
    for scene_id in sorted(by_scene):
        scene_items = by_scene[scene_id]
        if len(scene_items) < 2:
            skipped.append(scene_id)
            continue
        preds = []
        mos = []
        for it in scene_items:
            result = score_video(model, it.loader(), it.video_id, seed=seed,
                                 flow=flow, sampler=sampler, cache_dir=cache_dir)
            value = getattr(result, output)
            predictions[it.video_id] = value
            preds.append(value)
            label = it.oa_mos if channel == "oa" else it.ts_mos
            if label is None:
                raise ValueError(f"{it.video_id} lacks {channel} MOS")
            mos.append(float(label))
        srcc, plcc, degenerate = _scene_correlations(np.array(preds), np.array(mos))
        rows.append(SceneRow(scene_id, len(scene_items), srcc, plcc, degenerate))

    if not rows:
        raise NoEvaluableScenes("every selected scene has fewer than two videos")
    total = sum(r.count for r in rows)
    weighted_srcc = sum(r.srcc * r.count for r in rows) / total
    weighted_plcc = sum(r.plcc * r.count for r in rows) / total
    return EvalReport(channel, output, rows, weighted_srcc, weighted_plcc,
                      skipped, predictions)


def write_report(report: EvalReport, path: str | Path):
    payload = {
        "channel": report.channel,
        "output": report.output,
        "scenes": [{"scene_id": r.scene_id, "count": r.count, "srcc": r.srcc,
                    "plcc": r.plcc, "degenerate": r.degenerate} for r in report.scenes],
        "weighted": {"srcc": report.weighted_srcc, "plcc": report.weighted_plcc},
        "skipped_scenes": report.skipped_scenes,
        "predictions": report.predictions,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
