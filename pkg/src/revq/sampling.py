"""Input normalization for the two streams.

Stream (a) consumes fragment videos: patches cropped on a spatial grid from
sampled frames and tiled back into fixed-size frames. Stream (b) consumes ten
temporal subsets of five consecutive frames, each cropped to 480x800.

All randomness flows through a seeded generator; the draw order (per clip:
start frame, then per-cell offsets row-major; per subset: crop y then x) is
part of the format and must not change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .media import Video

SUBSET_COUNT = 10
SUBSET_LEN = 5
CROP_H = 480
CROP_W = 800


class FrameTooSmall(ValueError):
    pass


class VideoTooShort(ValueError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    clips: int = 8          # s
    frames_per_clip: int = 4  # m
    grid: int = 7           # n
    patch: int = 32         # k

    def __post_init__(self):
        if min(self.clips, self.frames_per_clip, self.grid, self.patch) < 1:
            raise ValueError("sampler parameters must be positive")


@dataclass
class FragmentVideo:
    """Tiled patch frames plus provenance of every patch.

    frames: (s*m, n*k, n*k, 3) float32.
    sources: (s*m,) source frame index per fragment frame.
    origins: (s*m, n, n, 2) top-left (y, x) of each patch in its source frame.
    """

    frames: np.ndarray
    sources: np.ndarray
    origins: np.ndarray
    params: SamplerParams


def sample_fragments(video: Video, params: SamplerParams = SamplerParams(),
                     seed: int = 0) -> FragmentVideo:
    s, m, n, k = params.clips, params.frames_per_clip, params.grid, params.patch
    z, H, W = video.frame_count, video.height, video.width
    if z < s * m:
        raise VideoTooShort(f"need at least {s * m} frames, video has {z}")
    ch, cw = H // n, W // n
    if ch < k or cw < k:
        raise FrameTooSmall(
            f"grid cells {ch}x{cw} cannot hold {k}x{k} patches (video {W}x{H})")

    rng = np.random.default_rng(seed)
    t = z // s
    size = n * k
    frames = np.empty((s * m, size, size, 3), dtype=np.float32)
    sources = np.empty(s * m, dtype=np.int64)
    origins = np.empty((s * m, n, n, 2), dtype=np.int64)

    for i in range(s):
        # remainder frames belong to the last clip
        hi = (z if i == s - 1 else (i + 1) * t) - m
        start = int(rng.integers(i * t, hi + 1))
        offs = np.stack([
            rng.integers(0, ch - k + 1, size=(n, n)),
            rng.integers(0, cw - k + 1, size=(n, n)),
        ], axis=-1)
        for j in range(m):
            fi = i * m + j
            src = video.frames[start + j]
            sources[fi] = start + j
            for u in range(n):
                for v in range(n):
                    y = u * ch + int(offs[u, v, 0])
                    x = v * cw + int(offs[u, v, 1])
                    origins[fi, u, v] = (y, x)
                    frames[fi, u * k:(u + 1) * k, v * k:(v + 1) * k] = src[y:y + k, x:x + k]
    return FragmentVideo(frames, sources, origins, params)


@dataclass
class TemporalSubset:
    """Five consecutive frames cropped at a shared origin, 480x800 each."""

    frames: np.ndarray       # (5, 480, 800, 3) float32
    start_frame: int
    crop_origin: tuple[int, int]  # (y, x)


def subset_starts(frame_count: int) -> list[int]:
    """Evenly spaced start indices, ties rounded half-up."""
    if frame_count < SUBSET_LEN:
        raise VideoTooShort(f"need at least {SUBSET_LEN} frames, video has {frame_count}")
    span = frame_count - SUBSET_LEN
    return [int(np.floor(i * span / (SUBSET_COUNT - 1) + 0.5)) for i in range(SUBSET_COUNT)]


def extract_subsets(video: Video, seed: int = 0) -> list[TemporalSubset]:
    H, W = video.height, video.width
    if H < CROP_H or W < CROP_W:
        raise FrameTooSmall(f"video {W}x{H} is smaller than the {CROP_W}x{CROP_H} crop")
    rng = np.random.default_rng(seed)
    subsets = []
    for start in subset_starts(video.frame_count):
        oy = int(rng.integers(0, H - CROP_H + 1))
        ox = int(rng.integers(0, W - CROP_W + 1))
        crop = video.frames[start:start + SUBSET_LEN, oy:oy + CROP_H, ox:ox + CROP_W]
        subsets.append(TemporalSubset(np.ascontiguousarray(crop), start, (oy, ox)))
    return subsets
