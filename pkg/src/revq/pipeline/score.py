"""End-to-end scoring of a video with a quality model."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..media import Video
from ..motion import (
    CacheError,
    FlowParams,
    SubsetMotion,
    align_with_motion,
    compute_subset_motion,
    identity_motion,
    load_motion_cache,
    save_motion_cache,
)
from ..nn.models import QualityModel, diff_maps
from ..nn.tensor import Tensor, no_grad
from ..sampling import SamplerParams, extract_subsets, sample_fragments


@dataclass
class ScoreResult:
    video_id: str
    q_a: float
    q_b: float
    q_pred: float


def fragment_tensor(video: Video, params: SamplerParams, seed: int) -> np.ndarray:
    """Fragment frames as a (s*m, 3, n*k, n*k) float32 batch."""
    frag = sample_fragments(video, params, seed)
    return np.ascontiguousarray(frag.frames.transpose(0, 3, 1, 2))


def cache_path(cache_dir: str | Path, video_id: str) -> Path:
    return Path(cache_dir) / f"{video_id}.rvqmv"


def motions_for_video(video: Video, video_id: str, seed: int, flow: FlowParams | None,
                      cache_dir: str | Path | None = None) -> list[SubsetMotion]:
    """Per-subset motion, from the cache when possible.

    flow=None disables motion estimation (identity alignment), which also
    bypasses the cache. A cache file whose key or geometry disagrees with the
    request is an error rather than silently recomputed.
    """
    subsets = extract_subsets(video, seed)
    if flow is None:
        return [identity_motion(s) for s in subsets]
    if cache_dir is not None:
        path = cache_path(cache_dir, video_id)
        if path.exists():
            header, motions = load_motion_cache(path)
            if header["video_id"] != video_id or header["seed"] != seed:
                raise CacheError(f"{path} is keyed ({header['video_id']}, {header['seed']}), "
                                 f"wanted ({video_id}, {seed})")
            if (header["starts"] != [s.start_frame for s in subsets]
                    or header["origins"] != [list(s.crop_origin) for s in subsets]):
                raise CacheError(f"{path} subsets do not match this video/seed")
            return motions
    motions = [compute_subset_motion(s, flow) for s in subsets]
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_motion_cache(cache_path(cache_dir, video_id), video_id, seed,
                          subsets, motions, flow)
    return motions


def subset_diff_maps(video: Video, seed: int, motions: list[SubsetMotion],
                     mode: str) -> list[np.ndarray]:
    subsets = extract_subsets(video, seed)
    return [diff_maps(align_with_motion(s, m).frames, mode)
            for s, m in zip(subsets, motions)]


def score_video(model: QualityModel, video: Video, video_id: str = "video",
                seed: int = 0, flow: FlowParams | None = FlowParams(),
                sampler: SamplerParams = SamplerParams(),
                cache_dir: str | Path | None = None) -> ScoreResult:
    """Deterministic (model, video, seed) -> (q_a, q_b, q_pred)."""
    frames = fragment_tensor(video, sampler, seed)
    motions = motions_for_video(video, video_id, seed, flow, cache_dir)
    maps = subset_diff_maps(video, seed, motions, model.config.diff_pairs)
    with no_grad():
        q_a = model.scorer(Tensor(frames))
        q_b = model.stability_score(maps)
        q_pred = model.fuse(q_a, q_b)
    return ScoreResult(video_id, q_a.item(), q_b.item(), q_pred.item())
