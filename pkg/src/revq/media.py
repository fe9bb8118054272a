"""Video loading, writing, and color primitives.

Supported containers are YUV4MPEG2 streams and lossless image sequences
(PNG/PPM directory plus an optional meta.json sidecar). Compressed codecs are
deliberately unsupported so scoring stays bit-reproducible and dependency-free.

Frames are float32 RGB in [0,1], shaped (H, W, 3); videos stack them as
(z, H, W, 3). Y4M chroma is converted with the limited-range BT.709 matrix.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

DEFAULT_FPS = 60.0

# BT.709 luma weights, also used for RGB<->YCbCr below
_KR, _KG, _KB = 0.2126, 0.7152, 0.0722


class MalformedHeader(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass
class Video:
    frames: np.ndarray  # (z, H, W, 3) float32 in [0,1]
    fps: float = DEFAULT_FPS
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[3] != 3:
            raise DimensionMismatch(f"expected (z, H, W, 3) frames, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise EmptyInput("video has no frames")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


def luma(frame_or_frames: np.ndarray) -> np.ndarray:
    """BT.709 weighted sum over the RGB axis; keeps leading axes.

    Float inputs keep their precision (linearity holds to their epsilon);
    everything else is computed in float32.
    """
    rgb = np.asarray(frame_or_frames)
    if rgb.dtype not in (np.float32, np.float64):
        rgb = rgb.astype(np.float32)
    return _KR * rgb[..., 0] + _KG * rgb[..., 1] + _KB * rgb[..., 2]


# ----------------------------------------------------------------------
# YUV4MPEG2

_Y4M_MAGIC = b"YUV4MPEG2"
_SUPPORTED_C = {
    "420": 2, "420jpeg": 2, "420mpeg2": 2, "420paldv": 2,  # 2x2 subsampling
    "422": 1,                                               # 2x1
    "444": 0,                                               # none
}


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """Limited-range BT.709 8-bit Y'CbCr -> float RGB in [0,1]."""
    yf = (y.astype(np.float32) - 16.0) / 219.0
    pb = (cb.astype(np.float32) - 128.0) / 224.0
    pr = (cr.astype(np.float32) - 128.0) / 224.0
    r = yf + 2.0 * (1.0 - _KR) * pr
    b = yf + 2.0 * (1.0 - _KB) * pb
    g = (yf - _KR * r - _KB * b) / _KG
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def _rgb_to_ycbcr(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Float RGB in [0,1] -> limited-range BT.709 8-bit planes."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    yf = _KR * r + _KG * g + _KB * b
    pb = (b - yf) / (2.0 * (1.0 - _KB))
    pr = (r - yf) / (2.0 * (1.0 - _KR))
    y8 = np.clip(np.round(yf * 219.0 + 16.0), 0, 255).astype(np.uint8)
    cb8 = np.clip(np.round(pb * 224.0 + 128.0), 0, 255).astype(np.uint8)
    cr8 = np.clip(np.round(pr * 224.0 + 128.0), 0, 255).astype(np.uint8)
    return y8, cb8, cr8


def _parse_y4m_header(line: bytes) -> tuple[int, int, float, str]:
    parts = line.split(b" ")
    if parts[0] != _Y4M_MAGIC:
        raise MalformedHeader("missing YUV4MPEG2 magic")
    width = height = 0
    fps = DEFAULT_FPS
    chroma = "420jpeg"
    for token in parts[1:]:
        if not token:
            continue
        tag, value = token[:1], token[1:].decode("ascii", "replace")
        if tag == b"W":
            width = int(value)
        elif tag == b"H":
            height = int(value)
        elif tag == b"F":
            m = re.fullmatch(r"(\d+):(\d+)", value)
            if not m or int(m.group(2)) == 0:
                raise MalformedHeader(f"bad frame rate token F{value}")
            fps = int(m.group(1)) / int(m.group(2))
        elif tag == b"C":
            chroma = value
        # I, A, X tokens carry no information we use
    if width < 1 or height < 1:
        raise MalformedHeader("missing or invalid W/H in header")
    if chroma not in _SUPPORTED_C:
        raise MalformedHeader(f"unsupported chroma mode C{chroma}")
    return width, height, fps, chroma


def load_y4m(path: str | Path) -> Video:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedHeader("no header line")
    width, height, fps, chroma = _parse_y4m_header(raw[:nl])
    sub = _SUPPORTED_C[chroma]
    cw = width if sub == 0 else (width + 1) // 2
    ch = (height + 1) // 2 if sub == 2 else height
    ysize = width * height
    csize = cw * ch
    frame_bytes = ysize + 2 * csize

    frames = []
    pos = nl + 1
    while pos < len(raw):
        fnl = raw.find(b"\n", pos)
        if fnl < 0:
            raise MalformedHeader("truncated FRAME marker")
        if not raw[pos:fnl].startswith(b"FRAME"):
            raise MalformedHeader(f"expected FRAME marker at byte {pos}")
        pos = fnl + 1
        if pos + frame_bytes > len(raw):
            raise MalformedHeader("truncated frame payload")
        y = np.frombuffer(raw, np.uint8, ysize, pos).reshape(height, width)
        cb = np.frombuffer(raw, np.uint8, csize, pos + ysize).reshape(ch, cw)
        cr = np.frombuffer(raw, np.uint8, csize, pos + ysize + csize).reshape(ch, cw)
        if sub:
            cb = cb.repeat(2, axis=1)[:, :width]
            cr = cr.repeat(2, axis=1)[:, :width]
            if sub == 2:
                cb = cb.repeat(2, axis=0)[:height]
                cr = cr.repeat(2, axis=0)[:height]
        frames.append(_ycbcr_to_rgb(y, cb, cr))
        pos += frame_bytes
    if not frames:
        raise EmptyInput("y4m stream contains no frames")
    return Video(np.stack(frames), fps=fps)


def write_y4m(video: Video, path: str | Path, chroma: str = "444"):
    """Encode as YUV4MPEG2. Lossy only through 8-bit quantization (C444)."""
    if chroma not in ("444", "420jpeg"):
        raise ValueError("writer supports C444 and C420jpeg")
    num, den = _fps_ratio(video.fps)
    header = f"YUV4MPEG2 W{video.width} H{video.height} F{num}:{den} Ip A1:1 C{chroma}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for frame in video.frames:
            y, cb, cr = _rgb_to_ycbcr(frame)
            if chroma == "420jpeg":
                cb = _box2x2(cb)
                cr = _box2x2(cr)
            f.write(b"FRAME\n")
            f.write(y.tobytes())
            f.write(cb.tobytes())
            f.write(cr.tobytes())


def _box2x2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    if h % 2 or w % 2:
        raise DimensionMismatch("420 output needs even dimensions")
    quads = plane.reshape(h // 2, 2, w // 2, 2).astype(np.uint16)
    return ((quads.sum(axis=(1, 3)) + 2) // 4).astype(np.uint8)


def _fps_ratio(fps: float) -> tuple[int, int]:
    if abs(fps - round(fps)) < 1e-9:
        return int(round(fps)), 1
    return int(round(fps * 1001)), 1001


# ----------------------------------------------------------------------
# image sequences

_FRAME_EXTS = (".png", ".ppm")


def load_image_sequence(directory: str | Path) -> Video:
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in _FRAME_EXTS)
    if not paths:
        raise EmptyInput(f"no {'/'.join(_FRAME_EXTS)} frames in {directory}")
    frames = []
    for p in paths:
        with Image.open(p) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        if frames and arr.shape != frames[0].shape:
            raise DimensionMismatch(
                f"{p.name} is {arr.shape[1]}x{arr.shape[0]}, expected "
                f"{frames[0].shape[1]}x{frames[0].shape[0]}")
        frames.append(arr)
    fps = DEFAULT_FPS
    meta = {}
    meta_path = directory / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        fps = float(meta.get("fps", DEFAULT_FPS))
    return Video(np.stack(frames), fps=fps, meta=meta)


def write_image_sequence(video: Video, directory: str | Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(video.frames * 255.0), 0, 255).astype(np.uint8)
    for i, frame in enumerate(data):
        Image.fromarray(frame, "RGB").save(directory / f"frame_{i:05d}.png")
    meta = dict(video.meta)
    meta["fps"] = video.fps
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_video(path: str | Path) -> Video:
    """Dispatch on container: .y4m file or a directory of frames."""
    path = Path(path)
    if path.is_dir():
        return load_image_sequence(path)
    if path.suffix.lower() == ".y4m":
        return load_y4m(path)
    raise ValueError(f"unsupported video container: {path}")
