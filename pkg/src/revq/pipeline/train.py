"""Training loops for stream (b) pretraining and full-model training.

Memory note: a full tape over ten 480x800 subsets per video at batch size 16
would not fit in RAM, so each batch runs in three phases. Phase A computes
pooled features per subset (and per-video mean scorer features) with no tape.
Phase B builds the small graph from those features to the loss and backprops
it, leaving gradients on the feature leaves and the MLP/fusion parameters.
Phase C re-runs the conv stacks with a tape and injects the leaf gradients,
accumulating conv parameter gradients. Costs one extra forward pass; the
arithmetic is identical to a single full tape.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..media import Video
from ..motion import FlowParams
from ..nn.models import QualityModel
from ..nn.optim import Adam
from ..nn.tensor import Tensor, no_grad, stack
from ..sampling import SamplerParams
from .losses import plcc_loss, ranking_loss
from .score import fragment_tensor, motions_for_video, subset_diff_maps
from .stats import DegenerateInput, spearman

log = logging.getLogger(__name__)

STAGE_STREAM_B = "stream_b_pretrain_on_ts"
STAGE_FULL = "full_on_oa"


class EmptyTrainSet(ValueError):
    pass


class MissingLabels(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    alpha: float = 0.3
    epochs: int = 10
    seed: int = 0
    stage: str = STAGE_FULL
    freeze_pretrained: bool = False
    early_stop_train_srcc: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (correlation losses)")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.stage not in (STAGE_STREAM_B, STAGE_FULL):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class VideoItem:
    """One training video; loader re-materializes it on demand."""

    video_id: str
    scene_id: str
    loader: Callable[[], Video]
    oa_mos: float | None = None
    ts_mos: float | None = None


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    mean_plcc_loss: float
    mean_ranking_loss: float
    batches: int
    skipped_batches: int
    train_srcc: float


def _label(item: VideoItem, stage: str) -> float:
    value = item.ts_mos if stage == STAGE_STREAM_B else item.oa_mos
    if value is None:
        channel = "ts_mos" if stage == STAGE_STREAM_B else "oa_mos"
        raise MissingLabels(f"{item.video_id} lacks {channel} required by stage {stage}")
    return float(value)


def _flow_tag(flow: FlowParams | None) -> str:
    if flow is None:
        return "ident"
    ref = "p" if flow.refinement == "subpixel_parabolic" else "n"
    return f"b{flow.block_size}r{flow.search_radius}{ref}t{flow.fb_threshold:g}"


def _cached_f16(path: Path, compute: Callable[[], np.ndarray]) -> np.ndarray:
    """Round-trip through float16 on disk.

    The compute result is also rounded on a cache miss so a warm cache and a
    cold one feed training byte-identical values.
    """
    if path.exists():
        half = np.load(path)
    else:
        half = compute().astype(np.float16)
        np.save(path, half)
    return half.astype(np.float32)


def train(model: QualityModel, items: list[VideoItem], config: TrainConfig,
          flow: FlowParams | None = FlowParams(),
          sampler: SamplerParams = SamplerParams(),
          cache_dir: str | Path | None = None) -> list[EpochLog]:
    """Optimize the model in place; returns the per-epoch log."""
    if not items:
        raise EmptyTrainSet("no training videos")
    for item in items:
        _label(item, config.stage)

    full = config.stage == STAGE_FULL
    train_stream_b = not (full and config.freeze_pretrained)
    params = []
    if full:
        params += model.scorer.parameters() + model.fusion.parameters()
    if train_stream_b:
        params += model.stability_parameters()
    opt = Adam(params, lr=config.learning_rate, beta1=config.beta1,
               beta2=config.beta2, eps=config.eps)

    # with a cache_dir the per-epoch re-reads hit float16 feature files
    # instead of decoding and aligning the video again
    def compute_maps(item: VideoItem) -> np.ndarray:
        video = item.loader()
        motions = motions_for_video(video, item.video_id, config.seed, flow, cache_dir)
        return np.stack(subset_diff_maps(video, config.seed, motions, model.config.diff_pairs))

    def maps_for(item: VideoItem) -> np.ndarray:
        if cache_dir is None:
            return compute_maps(item)
        name = (f"{item.video_id}.s{config.seed}.{_flow_tag(flow)}."
                f"{model.config.diff_pairs}.maps.npy")
        return _cached_f16(Path(cache_dir) / name, lambda: compute_maps(item))

    def fragments_for(item: VideoItem) -> np.ndarray:
        if cache_dir is None:
            return fragment_tensor(item.loader(), sampler, config.seed)
        name = (f"{item.video_id}.s{config.seed}.c{sampler.clips}m{sampler.frames_per_clip}"
                f"g{sampler.grid}k{sampler.patch}.frags.npy")
        return _cached_f16(Path(cache_dir) / name,
                           lambda: fragment_tensor(item.loader(), sampler, config.seed))

    logs: list[EpochLog] = []
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, 7919, epoch])
        order = rng.permutation(len(items))
        sums = np.zeros(3)  # loss, plcc part, ranking part
        batches = skipped = 0
        epoch_preds: list[float] = []
        epoch_labels: list[float] = []

        for lo in range(0, len(order), config.batch_size):
            batch = [items[i] for i in order[lo:lo + config.batch_size]]
            labels = np.array([_label(it, config.stage) for it in batch])
            if len(batch) < 2 or np.ptp(labels) == 0.0:
                skipped += 1
                log.info("epoch %d: skipped degenerate batch of %d", epoch, len(batch))
                continue

            # phase A: featurize without a tape
            stab_feats: list[list[Tensor]] = []
            frag_batches: list[np.ndarray] = []
            scorer_feats: list[Tensor] = []
            for item in batch:
                maps = maps_for(item)
                with no_grad():
                    feats = [model.subset_features(Tensor(m)).data for m in maps]
                stab_feats.append([Tensor(f, requires_grad=True) for f in feats])
                if full:
                    frames = fragments_for(item)
                    frag_batches.append(frames)
                    with no_grad():
                        pf = model.scorer.features(Tensor(frames)).data
                    scorer_feats.append(Tensor(pf.mean(axis=0), requires_grad=True))

            # phase B: feature graph -> loss
            preds = []
            for bi, item in enumerate(batch):
                q_b = model.stability_from_features(stab_feats[bi])
                if full:
                    q_a = model.scorer.head_score(scorer_feats[bi])
                    preds.append(model.fuse(q_a, q_b))
                else:
                    preds.append(q_b)
            pred_vec = stack(preds)
            l_plcc = plcc_loss(pred_vec, labels)
            l_rank = ranking_loss(pred_vec, labels)
            loss = l_plcc + config.alpha * l_rank
            model.zero_grad()
            loss.backward()

            # phase C: re-run conv stacks with a tape, inject leaf gradients
            for bi, item in enumerate(batch):
                if train_stream_b:
                    maps = maps_for(item)
                    for si, leaf in enumerate(stab_feats[bi]):
                        if leaf.grad is None:
                            continue
                        node = model.subset_features(Tensor(maps[si]))
                        node.backward(leaf.grad)
                if full and scorer_feats[bi].grad is not None:
                    node = model.scorer.features(Tensor(frag_batches[bi]))
                    node.mean(axis=0).backward(scorer_feats[bi].grad)

            opt.step()
            batches += 1
            sums += (loss.item(), l_plcc.item(), l_rank.item())
            epoch_preds += [float(p.data) for p in preds]
            epoch_labels += list(labels)

        try:
            srcc = spearman(epoch_preds, epoch_labels) if len(epoch_preds) >= 2 else 0.0
        except DegenerateInput:
            srcc = 0.0
        denom = max(batches, 1)
        logs.append(EpochLog(epoch, float(sums[0] / denom), float(sums[1] / denom),
                             float(sums[2] / denom), batches, skipped, float(srcc)))
        log.info("epoch %d: loss %.4f, train srcc %.4f (%d batches, %d skipped)",
                 epoch, sums[0] / denom, srcc, batches, skipped)
        if config.early_stop_train_srcc is not None and srcc >= config.early_stop_train_srcc:
            break
    return logs


def write_training_log(logs: list[EpochLog], path: str | Path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss", "mean_plcc_loss", "mean_ranking_loss",
                    "batches", "skipped_batches", "train_srcc"])
        for row in logs:
            w.writerow([row.epoch, repr(row.mean_loss), repr(row.mean_plcc_loss),
                        repr(row.mean_ranking_loss), row.batches, row.skipped_batches,
                        repr(row.train_srcc)])
