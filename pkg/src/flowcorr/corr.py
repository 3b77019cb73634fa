"""Four-dimensional correlation volumes between two feature maps.

A volume C has shape (H, W, H, W): C[i, j, m, n] scores how well query pixel
(i, j) of frame 1 matches target pixel (m, n) of frame 2. Two constructions
are provided:

* `dot_correlation`: the plain scaled dot product of the raw descriptors.
* `cfa_correlation`: K projected volumes C_k built from shared frame-1 /
  frame-2 projections W_k (the same matrix on both sides), fused per cell by
  softmax(C_1..C_K) weights into a single volume. There is no value path:
  the weights recombine the scores themselves.

Both kernels accumulate each cell as an explicit product-then-sum over the
channel axis with a fixed reduction order, so building the volume with the
frames swapped yields the exact transpose bit for bit.

`normalize_volume` standardizes a whole volume (one mean and variance over
all H*W*H*W entries) and applies a positive gain and a bias; since the map
is affine with positive slope it never reorders scores, so argmax matching
is unchanged. `extract_query_heatmap` cuts the field-of-view window around
one query for visualization.

The CRCV file format: ASCII magic "CRCV", one kind byte (0 dot, 1 cfa,
2 normalized-dot, 3 normalized-cfa), little-endian uint32 height and width,
then H*W*H*W little-endian float32 values in row-major order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, UsageError
from .features import FeatureMap, Image
from .tensor_ops import as_tensor, layer_normalize, softmax

CRCV_MAGIC = b"CRCV"
VOLUME_KINDS = ("dot", "cfa", "normalized-dot", "normalized-cfa")
_KIND_CODES = {name: code for code, name in enumerate(VOLUME_KINDS)}


@dataclass(frozen=True)
class CorrelationVolume:
    """Scores for every query/target pixel pair, with their provenance kind."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        vals = as_tensor(self.values)
        if vals.ndim != 4 or vals.shape[:2] != vals.shape[2:]:
            raise DimensionError(
                f"volume must have shape (H, W, H, W), got {vals.shape}"
            )
        if self.kind not in VOLUME_KINDS:
            raise ParameterError(f"unknown volume kind {self.kind!r}")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CfaParams:
    """K tied projection matrices plus the normalization affine constants.

    projections has shape (K, D, D); matrix k is applied to both frames'
    descriptors before their dot product, so the construction treats the
    frames symmetrically. norm_gain must stay positive: the normalization it
    feeds is then strictly increasing and cannot reorder match scores.
    """

    projections: np.ndarray
    norm_gain: float = 1.0
    norm_bias: float = 0.0
    norm_eps: float = 1e-6

    def __post_init__(self):
        proj = as_tensor(self.projections)
        if proj.ndim != 3 or proj.shape[1] != proj.shape[2]:
            raise DimensionError(
                f"projections must have shape (K, D, D), got {proj.shape}"
            )
        if proj.shape[0] < 1:
            raise ParameterError("at least one projection mode is required")
        if not self.norm_gain > 0:
            raise ParameterError(f"norm gain must be positive, got {self.norm_gain}")
        if not self.norm_eps > 0:
            raise ParameterError(f"norm eps must be positive, got {self.norm_eps}")
        object.__setattr__(self, "projections", proj)

    @property
    def mode_count(self) -> int:
        return self.projections.shape[0]

    @property
    def dims(self) -> int:
        return self.projections.shape[1]


@dataclass(frozen=True)
class CfaGradients:
    """Gradients of a scalar loss in both frames and the shared projections."""

    frame1: np.ndarray
    frame2: np.ndarray
    projections: np.ndarray
    norm_gain: float
    norm_bias: float


def _check_pair(f1: FeatureMap, f2: FeatureMap) -> None:
    if f1.values.shape != f2.values.shape:
        raise DimensionError(
            f"frames disagree: {f1.values.shape} vs {f2.values.shape}"
        )


def _pairwise_rows(a: np.ndarray, b: np.ndarray, out: np.ndarray, scale: float) -> None:
    # Row-by-row product-then-sum keeps one reduction order per cell, which
    # is what makes swapped-frame volumes exact transposes of each other.
    for i in range(a.shape[0]):
        out[i] = (a[i] * b).sum(axis=1)
    out *= scale


def dot_correlation(f1: FeatureMap, f2: FeatureMap) -> CorrelationVolume:
    """Scaled dot-product volume: C[i,j,m,n] = f1(i,j) . f2(m,n) / sqrt(D)."""
    _check_pair(f1, f2)
    p = f1.height * f1.width
    a = f1.values.reshape(p, f1.channels)
    b = f2.values.reshape(p, f2.channels)
    out = np.empty((p, p))
    _pairwise_rows(a, b, out, 1.0 / math.sqrt(f1.channels))
    return CorrelationVolume(
        out.reshape(f1.height, f1.width, f1.height, f1.width), kind="dot"
    )


def cfa_correlation(f1: FeatureMap, f2: FeatureMap, params: CfaParams) -> CorrelationVolume:
    """Softmax-fused projected volumes.

    Per mode k the frames are projected by the shared matrix W_k and
    correlated as in `dot_correlation`; each 4D cell then fuses its K scores
    as sum_k softmax(scores)_k * score_k (unit temperature). With K = 1 the
    softmax weight is exactly 1, so a single identity projection reproduces
    `dot_correlation` bit for bit.
    """
    _check_pair(f1, f2)
    if params.dims != f1.channels:
        raise DimensionError(
            f"projections expect {params.dims} channels, features have {f1.channels}"
        )
    p = f1.height * f1.width
    d = f1.channels
    a = f1.values.reshape(p, d)
    b = f2.values.reshape(p, d)
    scale = 1.0 / math.sqrt(d)
    ga = [a @ w.T for w in params.projections]
    gb = [b @ w.T for w in params.projections]
    k = params.mode_count
    out = np.empty((p, p))
    row = np.empty((k, p))
    for i in range(p):
        for m in range(k):
            row[m] = (ga[m][i] * gb[m]).sum(axis=1)
        row *= scale
        weights = softmax(row, axis=0)
        acc = weights[0] * row[0]
        for m in range(1, k):
            acc += weights[m] * row[m]
        out[i] = acc
    return CorrelationVolume(
        out.reshape(f1.height, f1.width, f1.height, f1.width), kind="cfa"
    )


def normalize_volume(
    volume: CorrelationVolume, eps: float = 1e-6, gain: float = 1.0, bias: float = 0.0
) -> CorrelationVolume:
    """Standardize all entries jointly, then apply gain and bias.

    Refuses to normalize twice: the second pass would silently recenter
    around the affine constants instead of the raw score statistics.
    """
    if volume.kind.startswith("normalized"):
        raise UsageError(f"volume of kind {volume.kind!r} is already normalized")
    values = layer_normalize(volume.values, eps=eps, gain=gain, bias=bias)
    return CorrelationVolume(values, kind=f"normalized-{volume.kind}")


def cfa_backward(
    f1: FeatureMap,
    f2: FeatureMap,
    params: CfaParams,
    upstream,
    normalized: bool = False,
) -> CfaGradients:
    """Analytic gradients of sum(upstream * volume) for the fused volume.

    With `normalized` set, `upstream` is taken with respect to the
    normalized volume and the gradient flows back through the whole-volume
    standardization (including its mean and variance) before reaching the
    fusion. Intended for small grids: the K per-mode volumes are held in
    memory at once.
    """
    _check_pair(f1, f2)
    p = f1.height * f1.width
    d = f1.channels
    shape4 = (f1.height, f1.width, f1.height, f1.width)
    upstream = as_tensor(upstream, shape=shape4).reshape(p, p)
    a = f1.values.reshape(p, d)
    b = f2.values.reshape(p, d)
    scale = 1.0 / math.sqrt(d)
    k = params.mode_count

    ga = np.stack([a @ w.T for w in params.projections])
    gb = np.stack([b @ w.T for w in params.projections])
    modes = np.stack([ga[m] @ gb[m].T for m in range(k)]) * scale
    weights = softmax(modes, axis=0)
    fused = np.einsum("kpq,kpq->pq", weights, modes)

    d_gain = 0.0
    d_bias = 0.0
    if normalized:
        mean = float(np.mean(fused))
        sigma = math.sqrt(float(np.var(fused)) + params.norm_eps)
        centered = (fused - mean) / sigma
        d_gain = float(np.sum(upstream * centered))
        d_bias = float(np.sum(upstream))
        d_fused = (
            params.norm_gain
            / sigma
            * (
                upstream
                - np.mean(upstream)
                - centered * np.mean(upstream * centered)
            )
        )
    else:
        d_fused = upstream

    # Per-cell softmax fusion: d(mode m) = d_fused * w_m * (1 + c_m - fused).
    d_modes = d_fused[None] * weights * (1.0 + modes - fused[None])
    d_a = np.zeros_like(a)
    d_b = np.zeros_like(b)
    d_proj = np.zeros_like(params.projections)
    for m in range(k):
        d_ga = d_modes[m] @ gb[m] * scale
        d_gb = d_modes[m].T @ ga[m] * scale
        d_a += d_ga @ params.projections[m]
        d_b += d_gb @ params.projections[m]
        d_proj[m] = d_ga.T @ a + d_gb.T @ b
    return CfaGradients(
        frame1=d_a.reshape(f1.values.shape),
        frame2=d_b.reshape(f2.values.shape),
        projections=d_proj,
        norm_gain=d_gain,
        norm_bias=d_bias,
    )


def random_cfa_params(seed: int, dims: int, modes: int = 4) -> CfaParams:
    """Seeded N(0, 1/dims) projections for reproducible pipelines."""
    if dims < 1 or modes < 1:
        raise ParameterError("dims and modes must be >= 1")
    rng = np.random.default_rng(seed)
    proj = rng.normal(size=(modes, dims, dims)) / math.sqrt(dims)
    return CfaParams(projections=proj)


def identity_cfa_params(dims: int, modes: int = 1) -> CfaParams:
    """Identity projections; with modes=1 the fused volume equals the dot volume."""
    proj = np.broadcast_to(np.eye(dims), (modes, dims, dims)).copy()
    return CfaParams(projections=proj)


def extract_query_heatmap(
    volume: CorrelationVolume, query: tuple[int, int], fov: int = 256, scale: int = 8
) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Window of one query's match scores, rescaled to [0, 1].

    `fov` is a field of view in input pixels and `scale` the input pixels
    per volume cell, so the window spans fov/scale cells centered on the
    query and is truncated at the volume boundary. Scores are min-max
    normalized over the window; a constant window maps to all zeros.

    Returns the window array and its bounds (row0, row1, col0, col1).
    """
    if fov < 1 or scale < 1:
        raise ParameterError(f"fov and scale must be >= 1, got {fov}, {scale}")
    half = fov // (2 * scale)
    if half < 1:
        raise ParameterError(f"field of view {fov} spans less than one cell at scale {scale}")
    qi, qj = query
    if not (0 <= qi < volume.height and 0 <= qj < volume.width):
        raise ParameterError(
            f"query {query} outside volume grid {volume.height}x{volume.width}"
        )
    row0, row1 = max(0, qi - half), min(volume.height, qi + half)
    col0, col1 = max(0, qj - half), min(volume.width, qj + half)
    window = volume.values[qi, qj, row0:row1, col0:col1].copy()
    lo, hi = float(window.min()), float(window.max())
    if hi > lo:
        window = (window - lo) / (hi - lo)
    else:
        window = np.zeros_like(window)
    return window, (row0, row1, col0, col1)


def heatmap_to_image(heatmap: np.ndarray) -> Image:
    """Quantize a [0, 1] heatmap to 8-bit gray via round(v * 255)."""
    hm = as_tensor(heatmap)
    if hm.ndim != 2:
        raise DimensionError(f"heatmap must be 2-D, got shape {hm.shape}")
    if hm.size and (hm.min() < 0.0 or hm.max() > 1.0):
        raise ParameterError("heatmap values must lie in [0, 1]")
    return Image(np.rint(hm * 255.0).astype(np.uint8))


def save_volume(path, volume: CorrelationVolume) -> None:
    """Write a CorrelationVolume as a CRCV file (float32 payload)."""
    payload = volume.values.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise ParameterError("volume overflows float32; cannot serialize")
    with open(path, "wb") as fh:
        fh.write(CRCV_MAGIC)
        fh.write(bytes([_KIND_CODES[volume.kind]]))
        fh.write(struct.pack("<II", volume.height, volume.width))
        fh.write(np.ascontiguousarray(payload).tobytes())


def load_volume(path) -> CorrelationVolume:
    """Read a CRCV file, reporting the byte offset of any malformation."""
    blob = Path(path).read_bytes()
    if blob[:4] != CRCV_MAGIC:
        raise FormatError(f"bad volume magic {blob[:4]!r}", offset=0)
    if len(blob) < 13:
        raise FormatError("volume header truncated", offset=len(blob))
    code = blob[4]
    if code >= len(VOLUME_KINDS):
        raise FormatError(f"unknown volume kind code {code}", offset=4)
    height, width = struct.unpack_from("<II", blob, 5)
    if height < 1 or width < 1:
        raise FormatError(f"invalid volume grid {height}x{width}", offset=5)
    count = height * width * height * width
    need = 13 + 4 * count
    if len(blob) < need:
        raise FormatError(
            f"volume payload truncated: need {need} bytes, file has {len(blob)}",
            offset=len(blob),
        )
    raw = np.frombuffer(blob[13 : 13 + 4 * count], dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise FormatError("non-finite volume value", offset=13 + 4 * int(bad[0]))
    values = raw.astype(np.float64).reshape(height, width, height, width)
    return CorrelationVolume(values, kind=VOLUME_KINDS[code])
