"""Dense optical-flow fields with validity masks, plus .flo serialization.

A FlowField stores one displacement vector per pixel as (u, v) = (horizontal,
vertical), in pixels, with +u pointing right and +v pointing down. The valid
mask marks pixels whose vector carries meaning; consumers must ignore the
rest. The on-disk format is the widely used .flo layout: a float32 sentinel
202021.25, two little-endian int32 dimensions (width then height), then
row-major interleaved (u, v) float32 pairs. Invalid pixels are encoded with
components of magnitude above 1e9 and decoded back into the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

FLO_MAGIC = 202021.25
_INVALID_SENTINEL = 1e10
_INVALID_THRESHOLD = 1e9


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement field.

    flow: float64 array of shape (H, W, 2) holding (u, v) per pixel.
    valid: bool array of shape (H, W); False marks pixels to ignore.
    """

    flow: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        flow = np.ascontiguousarray(self.flow, dtype=np.float64)
        if flow.ndim != 3 or flow.shape[2] != 2:
            raise DimensionError(f"flow must have shape (H, W, 2), got {flow.shape}")
        if flow.shape[0] < 1 or flow.shape[1] < 1:
            raise DimensionError("flow field must contain at least one pixel")
        valid = np.ascontiguousarray(self.valid, dtype=bool)
        if valid.shape != flow.shape[:2]:
            raise DimensionError(
                f"mask shape {valid.shape} does not match flow shape {flow.shape[:2]}"
            )
        if not np.all(np.isfinite(flow[valid])):
            raise DimensionError("valid flow vectors must be finite")
        object.__setattr__(self, "flow", flow)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.flow.shape[0]

    @property
    def width(self) -> int:
        return self.flow.shape[1]

    def magnitude(self) -> np.ndarray:
        """Euclidean length of each vector, shape (H, W)."""
        return np.sqrt(np.sum(self.flow**2, axis=2))


def constant_flow(height: int, width: int, u: float = 0.0, v: float = 0.0) -> FlowField:
    """Field with the same (u, v) everywhere and an all-true mask."""
    flow = np.empty((height, width, 2), dtype=np.float64)
    flow[..., 0] = u
    flow[..., 1] = v
    return FlowField(flow, np.ones((height, width), dtype=bool))


def translate_field(field: FlowField, du: int, dv: int) -> FlowField:
    """Move the field's content by (du, dv) pixels without changing values.

    The vector stored at (y, x) moves to (y + dv, x + du); destinations with
    no source (the strip the content vacated, or content pushed past the
    border) become invalid and hold zeros. Signs may be negative.
    """
    h, w = field.height, field.width
    out_flow = np.zeros((h, w, 2), dtype=np.float64)
    out_valid = np.zeros((h, w), dtype=bool)
    src_y0, src_y1 = max(0, -dv), min(h, h - dv)
    src_x0, src_x1 = max(0, -du), min(w, w - du)
    if src_y0 < src_y1 and src_x0 < src_x1:
        dst = (slice(src_y0 + dv, src_y1 + dv), slice(src_x0 + du, src_x1 + du))
        src = (slice(src_y0, src_y1), slice(src_x0, src_x1))
        out_flow[dst] = field.flow[src]
        out_valid[dst] = field.valid[src]
    return FlowField(out_flow, out_valid)


def upsample_flow(field: FlowField, factor: int) -> FlowField:
    """Nearest-neighbour upsampling of both vectors and mask by `factor`."""
    if factor < 1:
        raise DimensionError(f"upsampling factor must be >= 1, got {factor}")
    flow = np.repeat(np.repeat(field.flow, factor, axis=0), factor, axis=1)
    valid = np.repeat(np.repeat(field.valid, factor, axis=0), factor, axis=1)
    return FlowField(flow, valid)


def write_flo(path, field: FlowField) -> None:
    """Serialize a FlowField to a .flo file, encoding invalid pixels."""
    flow32 = field.flow.astype(np.float32)
    flow32[~field.valid] = _INVALID_SENTINEL
    with open(path, "wb") as fh:
        fh.write(np.float32(FLO_MAGIC).tobytes())
        fh.write(np.array([field.width, field.height], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(flow32, dtype="<f4").tobytes())


def read_flo(path) -> FlowField:
    """Parse a .flo file back into a FlowField.

    Raises FormatError (with the failing byte offset) on a bad sentinel,
    nonsensical dimensions, or a truncated payload.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise FormatError(f"flow file too short for its header: {len(blob)} bytes", offset=0)
    magic = float(np.frombuffer(blob, dtype="<f4", count=1, offset=0)[0])
    if magic != FLO_MAGIC:
        raise FormatError(f"bad flow sentinel {magic!r}, expected {FLO_MAGIC}", offset=0)
    width, height = (int(n) for n in np.frombuffer(blob, dtype="<i4", count=2, offset=4))
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}", offset=4)
    need = 12 + 8 * width * height
    if len(blob) < need:
        raise FormatError(
            f"flow payload truncated: need {need} bytes, file has {len(blob)}",
            offset=len(blob),
        )
    raw = np.frombuffer(blob, dtype="<f4", count=2 * width * height, offset=12)
    flow = raw.astype(np.float64).reshape(height, width, 2)
    valid = np.all(np.abs(flow) <= _INVALID_THRESHOLD, axis=2)
    flow = flow.copy()
    flow[~valid] = 0.0
    return FlowField(flow, valid)
