"""Block-matching motion estimation, occlusion masking, and subset alignment.

Flow fields follow the backward-warp convention: the field lives on the
reference frame's pixel grid and points toward the matching content in the
other frame, so warp(other, flow) resamples that frame onto the reference.

The SAD search is exhaustive over the window but visits candidates in
ascending (|dy|+|dx|, dy, dx) order with strict-less acceptance, which makes
the documented tie-break fall out of visit order and lets rows abort as soon
as a partial sum exceeds the incumbent.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .media import DimensionMismatch, luma
from .sampling import SUBSET_LEN, TemporalSubset


@dataclass(frozen=True)
class FlowParams:
    block_size: int = 16
    search_radius: int = 24
    refinement: str = "subpixel_parabolic"  # or "none"
    fb_threshold: float = 1.5

    def __post_init__(self):
        if self.block_size < 4:
            raise ValueError("block_size must be at least 4")
        if self.search_radius < 1:
            raise ValueError("search_radius must be at least 1")
        if self.refinement not in ("none", "subpixel_parabolic"):
            raise ValueError(f"unknown refinement {self.refinement!r}")


@dataclass
class MotionField:
    """Per-pixel displacement (dy, dx) in pixels, float32 planes."""

    dy: np.ndarray
    dx: np.ndarray

    @property
    def shape(self):
        return self.dy.shape


def _candidate_order(radius: int) -> tuple[np.ndarray, np.ndarray]:
    cands = [(dy, dx) for dy in range(-radius, radius + 1)
             for dx in range(-radius, radius + 1)]
    cands.sort(key=lambda c: (abs(c[0]) + abs(c[1]), c[0], c[1]))
    arr = np.array(cands, dtype=np.int64)
    return np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])


@njit(cache=True, fastmath=True)
def _sad_at(src, dst, y0, y1, x0, x1, dy, dx, cutoff):
    acc = 0.0
    for yy in range(y0, y1):
        for xx in range(x0, x1):
            acc += abs(src[yy, xx] - dst[yy + dy, xx + dx])
        if acc >= cutoff:
            return acc
    return acc


@njit(cache=True, fastmath=True)
def _block_search(src, dst, bs, dys, dxs, refine, out_dy, out_dx):
    H, W = src.shape
    nby, nbx = out_dy.shape
    big = np.float64(1e30)
    for bi in range(nby):
        y0 = bi * bs
        y1 = min(y0 + bs, H)
        for bj in range(nbx):
            x0 = bj * bs
            x1 = min(x0 + bs, W)
            best = big
            bdy = 0
            bdx = 0
            for ci in range(dys.shape[0]):
                dy = dys[ci]
                dx = dxs[ci]
                if y0 + dy < 0 or y1 + dy > H or x0 + dx < 0 or x1 + dx > W:
                    continue
                acc = _sad_at(src, dst, y0, y1, x0, x1, dy, dx, best)
                if acc < best:
                    best = acc
                    bdy = dy
                    bdx = dx
                    if best == 0.0:
                        break
            fy = np.float64(bdy)
            fx = np.float64(bdx)
            # parabolic refinement on the SAD surface; an exact match is
            # already sub-pixel perfect and must stay integer
            if refine and best > 0.0:
                if y0 + bdy - 1 >= 0 and y1 + bdy + 1 <= H:
                    sm = _sad_at(src, dst, y0, y1, x0, x1, bdy - 1, bdx, big)
                    sp = _sad_at(src, dst, y0, y1, x0, x1, bdy + 1, bdx, big)
                    denom = sm - 2.0 * best + sp
                    if denom > 1e-12:
                        off = 0.5 * (sm - sp) / denom
                        fy += min(0.5, max(-0.5, off))
                if x0 + bdx - 1 >= 0 and x1 + bdx + 1 <= W:
                    sm = _sad_at(src, dst, y0, y1, x0, x1, bdy, bdx - 1, big)
                    sp = _sad_at(src, dst, y0, y1, x0, x1, bdy, bdx + 1, big)
                    denom = sm - 2.0 * best + sp
                    if denom > 1e-12:
                        off = 0.5 * (sm - sp) / denom
                        fx += min(0.5, max(-0.5, off))
            out_dy[bi, bj] = fy
            out_dx[bi, bj] = fx


def estimate_flow(src: np.ndarray, dst: np.ndarray,
                  params: FlowParams = FlowParams()) -> MotionField:
    """Per-block SAD search from src's grid toward dst, broadcast to pixels."""
    src = np.ascontiguousarray(src, dtype=np.float32)
    dst = np.ascontiguousarray(dst, dtype=np.float32)
    if src.shape != dst.shape:
        raise DimensionMismatch(f"flow inputs {src.shape} vs {dst.shape}")
    H, W = src.shape
    bs = params.block_size
    if H < bs or W < bs:
        raise DimensionMismatch(f"{W}x{H} smaller than block size {bs}")
    dys, dxs = _candidate_order(params.search_radius)
    nby, nbx = -(-H // bs), -(-W // bs)
    bdy = np.empty((nby, nbx), dtype=np.float64)
    bdx = np.empty((nby, nbx), dtype=np.float64)
    _block_search(src, dst, bs, dys, dxs, params.refinement == "subpixel_parabolic",
                  bdy, bdx)
    dy = np.repeat(np.repeat(bdy, bs, 0), bs, 1)[:H, :W].astype(np.float32)
    dx = np.repeat(np.repeat(bdx, bs, 0), bs, 1)[:H, :W].astype(np.float32)
    return MotionField(dy, dx)


# ----------------------------------------------------------------------


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at real-valued (ys, xs); out-of-bounds clamps to the edge."""
    H, W = img.shape[:2]
    ys = np.clip(ys, 0.0, H - 1.0)
    xs = np.clip(xs, 0.0, W - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (ys - y0).astype(img.dtype)
    wx = (xs - x0).astype(img.dtype)
    if img.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    top = img[y0, x0] * (1 - wx) + img[y0, x1] * wx
    bot = img[y1, x0] * (1 - wx) + img[y1, x1] * wx
    return top * (1 - wy) + bot * wy


# fastmath deliberately off here: exact-zero weights must stay exact so
# integer flows copy pixels bit-for-bit
@njit(cache=True)
def _warp_plane(frame, dy, dx, out):
    H, W = frame.shape
    for i in range(H):
        for j in range(W):
            ys = i + dy[i, j]
            xs = j + dx[i, j]
            if ys < 0.0:
                ys = 0.0
            elif ys > H - 1.0:
                ys = H - 1.0
            if xs < 0.0:
                xs = 0.0
            elif xs > W - 1.0:
                xs = W - 1.0
            y0 = int(np.floor(ys))
            x0 = int(np.floor(xs))
            y1 = min(y0 + 1, H - 1)
            x1 = min(x0 + 1, W - 1)
            wy = ys - y0
            wx = xs - x0
            top = frame[y0, x0] * (1.0 - wx) + frame[y0, x1] * wx
            bot = frame[y1, x0] * (1.0 - wx) + frame[y1, x1] * wx
            out[i, j] = top * (1.0 - wy) + bot * wy


def warp(frame: np.ndarray, flow: MotionField) -> np.ndarray:
    """Backward warp: output(p) = frame sampled at p + flow(p)."""
    if frame.shape[:2] != flow.shape:
        raise DimensionMismatch(f"frame {frame.shape[:2]} vs flow {flow.shape}")
    H, W = flow.shape
    if frame.ndim == 2:
        out = np.empty_like(frame)
        _warp_plane(frame, flow.dy, flow.dx, out)
        return out
    ys = np.arange(H, dtype=np.float32)[:, None] + flow.dy
    xs = np.arange(W, dtype=np.float32)[None, :] + flow.dx
    return bilinear_sample(frame, ys, xs)


def disocclusion_mask(fwd: MotionField, bwd: MotionField,
                      fb_threshold: float = 1.5) -> np.ndarray:
    """Forward-backward consistency: valid iff ||fwd(p) + bwd(p + fwd(p))|| <= t.

    Pixels whose forward target leaves the frame are invalid outright.
    """
    if fwd.shape != bwd.shape:
        raise DimensionMismatch(f"field shapes {fwd.shape} vs {bwd.shape}")
    H, W = fwd.shape
    ty = np.arange(H, dtype=np.float32)[:, None] + fwd.dy
    tx = np.arange(W, dtype=np.float32)[None, :] + fwd.dx
    in_frame = (ty >= 0) & (ty <= H - 1) & (tx >= 0) & (tx <= W - 1)
    bdy = bilinear_sample(bwd.dy, ty, tx)
    bdx = bilinear_sample(bwd.dx, ty, tx)
    residual_sq = (fwd.dy + bdy) ** 2 + (fwd.dx + bdx) ** 2
    return in_frame & (residual_sq <= fb_threshold * fb_threshold)


# ----------------------------------------------------------------------


@dataclass
class SubsetMotion:
    """Flows from the reference (last) frame to each earlier frame, plus masks."""

    flows: list[MotionField]  # 4 fields
    masks: np.ndarray         # (4, H, W) bool


@dataclass
class AlignedSubset:
    """Luma planes: four frames warped onto the reference, then the reference.

    Pixels where the combined mask is 0 are zero in all five planes, so
    downstream differences vanish there by construction.
    """

    frames: np.ndarray  # (5, H, W) float32
    mask: np.ndarray    # (H, W) bool
    start_frame: int
    crop_origin: tuple[int, int]


def compute_subset_motion(subset: TemporalSubset,
                          params: FlowParams) -> SubsetMotion:
    lumas = luma(subset.frames)
    ref = lumas[-1]
    flows = []
    masks = np.empty((SUBSET_LEN - 1,) + ref.shape, dtype=bool)
    for i in range(SUBSET_LEN - 1):
        fwd = estimate_flow(ref, lumas[i], params)
        bwd = estimate_flow(lumas[i], ref, params)
        flows.append(fwd)
        masks[i] = disocclusion_mask(fwd, bwd, params.fb_threshold)
    return SubsetMotion(flows, masks)


def identity_motion(subset: TemporalSubset) -> SubsetMotion:
    """Zero flow, all pixels valid — the motion-disabled pipeline variant."""
    H, W = subset.frames.shape[1:3]
    zero = lambda: MotionField(np.zeros((H, W), np.float32), np.zeros((H, W), np.float32))
    return SubsetMotion([zero() for _ in range(SUBSET_LEN - 1)],
                        np.ones((SUBSET_LEN - 1, H, W), dtype=bool))


def align_with_motion(subset: TemporalSubset, motion: SubsetMotion) -> AlignedSubset:
    lumas = luma(subset.frames)
    combined = motion.masks.all(axis=0)
    m = combined.astype(np.float32)
    frames = np.empty_like(lumas)
    for i in range(SUBSET_LEN - 1):
        frames[i] = warp(lumas[i], motion.flows[i]) * m
    frames[-1] = lumas[-1] * m
    return AlignedSubset(frames, combined, subset.start_frame, subset.crop_origin)


def align_subset(subset: TemporalSubset,
                 params: FlowParams | None = FlowParams()) -> AlignedSubset:
    """Full alignment; params=None skips motion estimation (identity align)."""
    if len(subset.frames) != SUBSET_LEN:
        raise ValueError(f"subset must hold {SUBSET_LEN} frames")
    motion = identity_motion(subset) if params is None else compute_subset_motion(subset, params)
    return align_with_motion(subset, motion)


# ----------------------------------------------------------------------
# precomputed-motion cache

CACHE_MAGIC = b"RVQMV1"


class CacheError(ValueError):
    pass


def save_motion_cache(path: str | Path, video_id: str, seed: int,
                      subsets: list[TemporalSubset],
                      motions: list[SubsetMotion], params: FlowParams):
    if len(subsets) != len(motions):
        raise ValueError("one motion record per subset required")
    H, W = subsets[0].frames.shape[1:3]
    header = {
        "video_id": video_id,
        "seed": seed,
        "width": W,
        "height": H,
        "subset_len": SUBSET_LEN,
        "starts": [s.start_frame for s in subsets],
        "origins": [list(s.crop_origin) for s in subsets],
        "block_size": params.block_size,
        "search_radius": params.search_radius,
        "refinement": params.refinement,
        "fb_threshold": params.fb_threshold,
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        for motion in motions:
            for field in motion.flows:
                f.write(np.ascontiguousarray(field.dy, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(field.dx, dtype="<f4").tobytes())
            f.write(np.packbits(motion.masks).tobytes())


def load_motion_cache(path: str | Path) -> tuple[dict, list[SubsetMotion]]:
    raw = Path(path).read_bytes()
    if raw[:len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise CacheError(f"{path} is not a motion cache")
    off = len(CACHE_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    H, W = header["height"], header["width"]
    n_flows = header["subset_len"] - 1
    plane = H * W * 4
    mask_bytes = -(-n_flows * H * W // 8)
    motions = []
    for _ in header["starts"]:
        flows = []
        for _ in range(n_flows):
            dy = np.frombuffer(raw, "<f4", H * W, off).reshape(H, W).copy()
            off += plane
            dx = np.frombuffer(raw, "<f4", H * W, off).reshape(H, W).copy()
            off += plane
            flows.append(MotionField(dy, dx))
        bits = np.frombuffer(raw, np.uint8, mask_bytes, off)
        off += mask_bytes
        masks = np.unpackbits(bits, count=n_flows * H * W).reshape(n_flows, H, W).astype(bool)
        motions.append(SubsetMotion(flows, masks))
    if off != len(raw):
        raise CacheError(f"{path}: {len(raw) - off} trailing bytes")
    return header, motions
