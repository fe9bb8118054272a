"""Networks of the two-stream metric plus checkpoint serialization.

Parameter order everywhere (initialization draws, checkpoint blob layout) is
the attribute definition order inside each model, scorer -> detector ->
stability MLP -> fusion MLP at the top level. The checkpoint header lists the
resolved order explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layers import (
    Conv3x3,
    DepthwiseConv3x3,
    Linear,
    Module,
    PointwiseConv,
    adaptive_avgpool,
    avgpool,
    global_avgpool,
)
from .tensor import Tensor, stack

CHECKPOINT_FORMAT = "revq-model"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class CheckpointNotFound(CheckpointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; channel counts are configuration, not constants."""

    detector_channels: tuple[int, ...] = (10, 32, 32, 16, 1)
    stability_hidden: tuple[int, ...] = (16, 64, 32, 1)
    fusion_hidden: tuple[int, ...] = (2, 16, 8, 1)
    scorer_channels: tuple[int, ...] = (3, 16, 32, 64)
    scorer_pools: tuple[int, ...] = (4, 4, 2)
    patch_size: int = 32
    pooled_grid: int = 4
    diff_pairs: str = "all"  # "all" = every frame pair; "reference" = pairs with the last frame

    def diff_channels(self, subset_len: int = 5) -> int:
        if self.diff_pairs == "all":
            return subset_len * (subset_len - 1) // 2
        return subset_len - 1


def diff_pair_order(subset_len: int, mode: str) -> list[tuple[int, int]]:
    """Frame index pairs grouped by temporal distance, nearest first."""
    if mode == "all":
        return [(i, i + d) for d in range(1, subset_len) for i in range(subset_len - d)]
    if mode == "reference":
        last = subset_len - 1
        return [(last - d, last) for d in range(1, subset_len)]
    raise ValueError(f"unknown diff_pairs mode {mode!r}")


def diff_maps(frames: np.ndarray, mode: str = "all") -> np.ndarray:
    """Absolute-difference channels from aligned luma frames (T, H, W).

    Masked pixels are zero in every input frame, so they difference to zero
    without special handling here.
    """
    pairs = diff_pair_order(frames.shape[0], mode)
    out = np.empty((len(pairs),) + frames.shape[1:], dtype=frames.dtype)
    for ch, (i, j) in enumerate(pairs):
        np.subtract(frames[j], frames[i], out=out[ch])
        np.abs(out[ch], out=out[ch])
    return out


class DifferenceDetector(Module):
    """Depthwise-separable conv stack over difference maps, single-channel output."""

    def __init__(self, channels: tuple[int, ...], rng: np.random.Generator, dtype=np.float32):
        if channels[-1] != 1:
            raise ValueError("detector must end in one output channel")
        self.blocks = []
        for cin, cout in zip(channels, channels[1:]):
            self.blocks.append(DepthwiseConv3x3(cin, rng, dtype))
            self.blocks.append(PointwiseConv(cin, cout, rng, dtype))
        self.channels = channels

    def __call__(self, maps: Tensor) -> Tensor:
        if maps.data.ndim != 3 or maps.data.shape[0] != self.channels[0]:
            raise ShapeMismatch(
                f"expected ({self.channels[0]}, H, W) difference maps, got {maps.data.shape}")
        h = maps
        n_blocks = len(self.blocks) // 2
        for i in range(n_blocks):
            h = self.blocks[2 * i + 1](self.blocks[2 * i](h))
            if i < n_blocks - 1:
                h = h.relu()
        return h.reshape(h.data.shape[1], h.data.shape[2])


class Mlp(Module):
    def __init__(self, widths: tuple[int, ...], rng: np.random.Generator, dtype=np.float32):
        if widths[-1] != 1:
            raise ValueError("MLP head must end in one output")
        self.layers = [Linear(a, b, rng, dtype) for a, b in zip(widths, widths[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, lin in enumerate(self.layers):
            x = lin(x)
            if i < len(self.layers) - 1:
                x = x.relu()
        return x.reshape(())


class BaselineScorer(Module):
    """Small conv net over fragment frames; pooling never straddles patch seams.

    Every stage pools with stride = window, and the cumulative downsampling
    factor must divide the patch size, so pooling boundaries always land on
    multiples of a divisor of the patch edge.
    """

    def __init__(self, channels: tuple[int, ...], pools: tuple[int, ...], patch_size: int,
                 rng: np.random.Generator, dtype=np.float32):
        if len(pools) != len(channels) - 1:
            raise ValueError("one pooling window per conv stage required")
        factor = 1
        for w in pools:
            factor *= w
            if patch_size % factor:
                raise ValueError(
                    f"cumulative pool factor {factor} must divide patch size {patch_size}")
        self.convs = [Conv3x3(a, b, rng, dtype) for a, b in zip(channels, channels[1:])]
        self.head = Linear(channels[-1], 1, rng, dtype)
        self.pools = pools

    def features(self, frames: Tensor) -> Tensor:
        """(N, 3, H, W) -> per-frame pooled features (N, C_last)."""
        h = frames
        for conv, w in zip(self.convs, self.pools):
            h = avgpool(conv(h).relu(), w)
        return global_avgpool(h)

    def head_score(self, mean_features: Tensor) -> Tensor:
        return self.head(mean_features).reshape(())

    def __call__(self, frames: Tensor) -> Tensor:
        return self.head_score(self.features(frames).mean(axis=0))


class QualityModel(Module):
    """Both streams plus the fusion head, with deterministic seeded init."""

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.scorer = BaselineScorer(config.scorer_channels, config.scorer_pools,
                                     config.patch_size, rng, dtype)
        self.detector = DifferenceDetector(config.detector_channels, rng, dtype)
        self.stability_mlp = Mlp(config.stability_hidden, rng, dtype)
        self.fusion = Mlp(config.fusion_hidden, rng, dtype)
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)

    # ------------------------------------------------------------------
    def subset_features(self, maps: Tensor) -> Tensor:
        """Difference maps (C, H, W) -> pooled detector features (grid², )."""
        smap = self.detector(maps)
        g = self.config.pooled_grid
        pooled = adaptive_avgpool(smap.reshape(1, 1, *smap.data.shape), g, g)
        return pooled.reshape(g * g)

    def stability_from_features(self, features: list[Tensor]) -> Tensor:
        """Per-subset pooled features -> q_b (features averaged across subsets)."""
        return self.stability_mlp(stack(features).mean(axis=0))

    def stability_score(self, maps_per_subset: list[np.ndarray]) -> Tensor:
        feats = [self.subset_features(Tensor(m)) for m in maps_per_subset]
        return self.stability_from_features(feats)

    def fuse(self, q_a: Tensor, q_b: Tensor) -> Tensor:
        if not (np.isfinite(q_a.data) and np.isfinite(q_b.data)):
            raise NonFiniteInput("fusion inputs must be finite")
        return self.fusion(stack([q_a, q_b]))

    def stability_parameters(self) -> list[Tensor]:
        """Stream (b) trainables: detector + stability MLP."""
        return self.detector.parameters() + self.stability_mlp.parameters()

    # ------------------------------------------------------------------
    def save(self, path: str | Path):
        named = self.named_parameters()
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "detector_channels": list(self.config.detector_channels),
            "stability_hidden": list(self.config.stability_hidden),
            "fusion_hidden": list(self.config.fusion_hidden),
            "scorer_channels": list(self.config.scorer_channels),
            "scorer_pools": list(self.config.scorer_pools),
            "patch_size": self.config.patch_size,
            "pooled_grid": self.config.pooled_grid,
            "diff_pairs": self.config.diff_pairs,
            "params": [{"name": n, "shape": list(p.data.shape)} for n, p in named],
        }
        blob = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for _, p in named)
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=False).encode("utf-8"))
            f.write(b"\n")
            f.write(blob)

    @classmethod
    def load(cls, path: str | Path, dtype=np.float32) -> "QualityModel":
        if not Path(path).is_file():
            raise CheckpointNotFound(f"no checkpoint at {path}")
        with open(path, "rb") as f:
            raw = f.read()
        nl = raw.find(b"\n")
        if nl < 0:
            raise CheckpointError("missing checkpoint header")
        try:
            header = json.loads(raw[:nl].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"bad checkpoint header: {e}") from e
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"not a {CHECKPOINT_FORMAT} file")
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        config = ModelConfig(
            detector_channels=tuple(header["detector_channels"]),
            stability_hidden=tuple(header["stability_hidden"]),
            fusion_hidden=tuple(header["fusion_hidden"]),
            scorer_channels=tuple(header["scorer_channels"]),
            scorer_pools=tuple(header["scorer_pools"]),
            patch_size=header["patch_size"],
            pooled_grid=header["pooled_grid"],
            diff_pairs=header["diff_pairs"],
        )
        model = cls(config, seed=header["seed"], dtype=dtype)
        named = model.named_parameters()
        if [n for n, _ in named] != [p["name"] for p in header["params"]]:
            raise CheckpointError("checkpoint parameter list does not match architecture")
        blob = raw[nl + 1:]
        expected = sum(int(np.prod(p["shape"])) for p in header["params"]) * 4
        if len(blob) != expected:
            raise CheckpointError(f"parameter blob is {len(blob)} bytes, expected {expected}")
        offset = 0
        for (_, tensor), meta in zip(named, header["params"]):
            shape = tuple(meta["shape"])
            count = int(np.prod(shape))
            vals = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            tensor.data = vals.reshape(shape).astype(dtype)
            offset += count * 4
        return model
