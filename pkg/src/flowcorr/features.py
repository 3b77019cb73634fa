"""Images, dense feature maps, and the synthetic scenes used to probe them.

Two binary formats live here:

* PGM (P5) / PPM (P6) with maxval 255 for 8-bit images. The header parser
  accepts arbitrary whitespace and '#' comments, as produced by common tools.
* CRFM for feature maps: the ASCII magic "CRFM", three little-endian uint32
  fields (height, width, channels), then height*width*channels little-endian
  float32 values in row-major order with the channel index fastest.

Scenes are pairs of noise images where frame 2 is frame 1 rigidly translated,
so the true correspondence is known exactly at every pixel that stays inside
the canvas. `patchify_features` turns an image into a grid of descriptors:
non-overlapping blocks are centered, pushed through a seeded Gaussian random
projection, and unit-normalized. The normalization makes a cell's best
correlation match against an identical block strict (cosine 1 versus < 1),
which the matching stages rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .flowfield import FlowField

CRFM_MAGIC = b"CRFM"


@dataclass(frozen=True)
class Image:
    """8-bit image, grayscale (H, W) or RGB (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype != np.uint8:
            raise DimensionError(f"image pixels must be uint8, got {px.dtype}")
        if px.ndim == 2:
            pass
        elif px.ndim == 3 and px.shape[2] == 3:
            pass
        else:
            raise DimensionError(f"image shape must be (H, W) or (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DimensionError("image must contain at least one pixel")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3


def write_image(path, image: Image) -> None:
    """Write a binary PGM (grayscale) or PPM (RGB) file with maxval 255."""
    kind = b"P5" if image.channels == 1 else b"P6"
    header = kind + f"\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(image.pixels.tobytes())


def _read_header_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comment lines, then collect one token.
    n = len(blob)
    while pos < n:
        c = blob[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    if pos >= n:
        raise FormatError("image header ended early", offset=pos)
    start = pos
    while pos < n and not blob[pos : pos + 1].isspace():
        pos += 1
    return blob[start:pos], pos


def read_image(path) -> Image:
    """Parse a binary PGM (P5) or PPM (P6) file."""
    blob = Path(path).read_bytes()
    magic, pos = _read_header_token(blob, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported image magic {magic!r}", offset=0)
    fields = []
    for _ in range(3):
        token, pos = _read_header_token(blob, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise FormatError(f"non-numeric header field {token!r}", offset=pos) from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"invalid image dimensions {width}x{height}", offset=pos)
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    pos += 1  # single whitespace byte separating header from payload
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = blob[pos : pos + need]
    if len(payload) < need:
        raise FormatError(
            f"image payload truncated: need {need} bytes, found {len(payload)}",
            offset=len(blob),
        )
    px = np.frombuffer(payload, dtype=np.uint8, count=need)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(px.reshape(shape).copy())


@dataclass(frozen=True)
class FeatureMap:
    """Dense per-pixel descriptors: float64 values of shape (H, W, D)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise DimensionError(f"feature map must have shape (H, W, D), got {vals.shape}")
        if min(vals.shape) < 1:
            raise DimensionError(f"feature map dimensions must be >= 1, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("feature values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def save_feature_map(path, fmap: FeatureMap) -> None:
    """Write a FeatureMap as a CRFM file (float32 payload)."""
    payload = fmap.values.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise ParameterError("feature values overflow float32; cannot serialize")
    with open(path, "wb") as fh:
        fh.write(CRFM_MAGIC)
        fh.write(np.array([fmap.height, fmap.width, fmap.channels], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(payload).tobytes())


def load_feature_map(path) -> FeatureMap:
    """Read a CRFM file, reporting the byte offset of any malformation."""
    blob = Path(path).read_bytes()
    if blob[:4] != CRFM_MAGIC:
        raise FormatError(f"bad feature-map magic {blob[:4]!r}", offset=0)
    if len(blob) < 16:
        raise FormatError("feature-map header truncated", offset=len(blob))
    height, width, channels = (int(n) for n in np.frombuffer(blob, dtype="<u4", count=3, offset=4))
    if min(height, width, channels) < 1:
        raise FormatError(f"invalid dimensions {height}x{width}x{channels}", offset=4)
    need = 16 + 4 * height * width * channels
    if len(blob) < need:
        raise FormatError(
            f"feature payload truncated: need {need} bytes, file has {len(blob)}",
            offset=len(blob),
        )
    raw = np.frombuffer(blob, dtype="<f4", count=height * width * channels, offset=16)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise FormatError("non-finite feature value", offset=16 + 4 * int(bad[0]))
    return FeatureMap(raw.astype(np.float64).reshape(height, width, channels))


@dataclass(frozen=True)
class SyntheticScene:
    """A frame pair with exact ground-truth flow.

    frame2 shows frame1's content translated by `displacement` = (dx, dy);
    pixels whose correspondent leaves the canvas are masked out of `gt`.
    """

    frame1: Image
    frame2: Image
    gt: FlowField
    displacement: tuple[int, int]


def generate_translated_scene(
    seed: int, width: int, height: int, displacement: tuple[int, int]
) -> SyntheticScene:
    """Build a noise image and its rigid translation.

    Frame 1 is uniform byte noise from `seed`. Frame 2 carries frame 1's
    content shifted by (dx, dy); the region the content vacated is filled
    with fresh noise from the same stream so no part of frame 2 is blank.
    The ground truth assigns (dx, dy) to every pixel and marks a pixel valid
    exactly when its correspondent lands inside the canvas.
    """
    dx, dy = displacement
    if abs(dx) >= width or abs(dy) >= height:
        raise ParameterError(
            f"displacement {displacement} leaves no overlap on a {width}x{height} canvas"
        )
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    frame2 = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    src_y0, src_y1 = max(0, -dy), min(height, height - dy)
    src_x0, src_x1 = max(0, -dx), min(width, width - dx)
    frame2[src_y0 + dy : src_y1 + dy, src_x0 + dx : src_x1 + dx] = base[
        src_y0:src_y1, src_x0:src_x1
    ]
    flow = np.empty((height, width, 2), dtype=np.float64)
    flow[..., 0] = dx
    flow[..., 1] = dy
    ys, xs = np.mgrid[0:height, 0:width]
    valid = (xs + dx >= 0) & (xs + dx < width) & (ys + dy >= 0) & (ys + dy < height)
    return SyntheticScene(
        frame1=Image(base),
        frame2=Image(frame2),
        gt=FlowField(flow, valid),
        displacement=(dx, dy),
    )


def patchify_features(image: Image, patch: int, channels: int, seed: int = 0) -> FeatureMap:
    """Summarize non-overlapping patch x patch blocks as unit descriptors.

    Each block is flattened, mapped from byte range onto [-0.5, 0.5], then
    multiplied by a Gaussian random projection drawn once from `seed` (the
    same matrix for every block and every call with that seed). Descriptors
    are scaled to unit length; a block whose projection happens to be the
    zero vector is left as zeros rather than divided by zero.

    Both image dimensions must be divisible by `patch`.
    """
    if patch < 1:
        raise ParameterError(f"patch size must be >= 1, got {patch}")
    if channels < 1:
        raise ParameterError(f"descriptor length must be >= 1, got {channels}")
    if image.height % patch or image.width % patch:
        raise ParameterError(
            f"image size {image.width}x{image.height} is not divisible by patch {patch}"
        )
    gh, gw = image.height // patch, image.width // patch
    block_len = patch * patch * image.channels
    px = image.pixels.reshape(gh, patch, gw, patch, image.channels)
    blocks = px.transpose(0, 2, 1, 3, 4).reshape(gh * gw, block_len)
    centered = blocks.astype(np.float64) / 255.0 - 0.5
    rng = np.random.default_rng(seed)
    projection = rng.normal(size=(block_len, channels)) / np.sqrt(block_len)
    feats = centered @ projection
    norms = np.sqrt(np.sum(feats**2, axis=1, keepdims=True))
    np.divide(feats, norms, out=feats, where=norms > 0.0)
    return FeatureMap(feats.reshape(gh, gw, channels))
