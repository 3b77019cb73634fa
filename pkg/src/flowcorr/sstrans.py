"""Feature smoothing by a mixture of windowed self-attention passes.

The transform runs N independent single-head self-attention passes ("modes")
over the flattened pixel grid. Each mode m has its own query/key/value/output
projections (all D x D), computes logits Q K^T / sqrt(D), and adds a learned
relative-position bias to every target within a Chebyshev radius `r` of the
query pixel before the row softmax. The bias table is shared by all modes.

A per-pixel scalar score is then read off each mode's output through a linear
head, a softmax across modes converts the N scores into mixing weights, and
the final feature is the per-pixel convex combination of the mode outputs.
The top-level transform blends that result with its input through a single
scalar skip weight w: out = w * x + (1 - w) * mixed. No feed-forward block or
per-mode value bias exists anywhere in this pipeline.

All functions are pure; gradients are computed by `sstrans_backward`, which
re-runs the forward pass to rebuild intermediates rather than caching them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError
from .features import FeatureMap
from .tensor_ops import as_tensor, softmax

__all__ = [
    "ModeParams",
    "ExpandedAttentionParams",
    "SstransGradients",
    "attention_logits",
    "mode_self_attention",
    "expanded_attention",
    "sstrans_forward",
    "sstrans_backward",
    "random_sstrans_params",
]


@dataclass(frozen=True)
class ModeParams:
    """Projections of one attention mode; every array is D x D."""

    query: np.ndarray
    key: np.ndarray
    value: np.ndarray
    output: np.ndarray

    def __post_init__(self):
        query = as_tensor(self.query)
        if query.ndim != 2 or query.shape[0] != query.shape[1]:
            raise DimensionError(f"query projection must be square, got {query.shape}")
        d = query.shape[0]
        object.__setattr__(self, "query", query)
        for name in ("key", "value", "output"):
            object.__setattr__(self, name, as_tensor(getattr(self, name), shape=(d, d)))

    @property
    def dims(self) -> int:
        return self.query.shape[0]


@dataclass(frozen=True)
class ExpandedAttentionParams:
    """Full parameter set: N modes, score heads, bias table, skip weight.

    scorer_weights (N, D) and scorer_bias (N,) define the per-mode linear
    heads that reduce a mode output to one scalar per pixel. position_bias
    is the (2r+1) x (2r+1) table indexed by (row offset + r, col offset + r)
    and shared across modes. skip_weight is the unconstrained blend scalar.
    """

    modes: tuple[ModeParams, ...]
    scorer_weights: np.ndarray
    scorer_bias: np.ndarray
    position_bias: np.ndarray
    radius: int
    skip_weight: float = 0.5

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ParameterError("at least one attention mode is required")
        d = modes[0].dims
        if any(m.dims != d for m in modes):
            raise DimensionError("all modes must share the same feature width")
        object.__setattr__(self, "modes", modes)
        n = len(modes)
        object.__setattr__(self, "scorer_weights", as_tensor(self.scorer_weights, shape=(n, d)))
        object.__setattr__(self, "scorer_bias", as_tensor(self.scorer_bias, shape=(n,)))
        if self.radius < 0:
            raise ParameterError(f"window radius must be >= 0, got {self.radius}")
        side = 2 * self.radius + 1
        object.__setattr__(self, "position_bias", as_tensor(self.position_bias, shape=(side, side)))
        w = float(self.skip_weight)
        if not math.isfinite(w):
            raise ParameterError(f"skip weight must be finite, got {w}")
        object.__setattr__(self, "skip_weight", w)

    @property
    def dims(self) -> int:
        return self.modes[0].dims

    @property
    def mode_count(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class SstransGradients:
    """Gradients mirroring ExpandedAttentionParams plus the input gradient."""

    x: np.ndarray
    modes: tuple[ModeParams, ...]
    scorer_weights: np.ndarray
    scorer_bias: np.ndarray
    position_bias: np.ndarray
    skip_weight: float


def _bias_index_map(height: int, width: int, radius: int):
    """Offsets between all pixel pairs and the in-window predicate.

    Returns (inside, row_idx, col_idx): `inside[p, q]` says target q lies
    within the Chebyshev window of query p, and the index arrays point into
    the bias table (clipped outside the window, where they are unused).
    """
    rows, cols = np.divmod(np.arange(height * width), width)
    dr = rows[None, :] - rows[:, None]
    dc = cols[None, :] - cols[:, None]
    inside = (np.abs(dr) <= radius) & (np.abs(dc) <= radius)
    side = 2 * radius + 1
    row_idx = np.clip(dr + radius, 0, side - 1)
    col_idx = np.clip(dc + radius, 0, side - 1)
    return inside, row_idx, col_idx


def _expand_bias(bias: np.ndarray, height: int, width: int, radius: int) -> np.ndarray:
    inside, row_idx, col_idx = _bias_index_map(height, width, radius)
    return np.where(inside, bias[row_idx, col_idx], 0.0)


def attention_logits(
    x: FeatureMap, mode: ModeParams, position_bias, radius: int
) -> np.ndarray:
    """Pre-softmax attention matrix of one mode, shape (H*W, H*W).

    Row p holds query pixel p's logits over all target pixels: the scaled
    dot product plus the position bias for targets inside the window. Logits
    outside the window carry no bias term at all.
    """
    flat = x.values.reshape(-1, x.channels)
    _check_mode(mode, x.channels)
    q = flat @ mode.query
    k = flat @ mode.key
    logits = (q @ k.T) / math.sqrt(x.channels)
    side = 2 * radius + 1
    bias = as_tensor(position_bias, shape=(side, side))
    return logits + _expand_bias(bias, x.height, x.width, radius)


def _check_mode(mode: ModeParams, dims: int) -> None:
    if mode.dims != dims:
        raise DimensionError(
            f"mode operates on {mode.dims}-channel features, input has {dims}"
        )


def mode_self_attention(
    x: FeatureMap, mode: ModeParams, position_bias, radius: int
) -> FeatureMap:
    """One windowed-bias self-attention pass over the pixel grid."""
    logits = attention_logits(x, mode, position_bias, radius)
    prob = softmax(logits, axis=1)
    flat = x.values.reshape(-1, x.channels)
    out = (prob @ (flat @ mode.value)) @ mode.output
    return FeatureMap(out.reshape(x.values.shape))


def _mode_outputs(x: FeatureMap, params: ExpandedAttentionParams):
    """Forward pass of every mode plus the mixing weights.

    Returns (outputs, mix) where outputs[k] is mode k's (P, D) result and
    mix is the (P, N) softmax over the per-pixel mode scores.
    """
    if params.dims != x.channels:
        raise DimensionError(
            f"parameters expect {params.dims}-channel features, input has {x.channels}"
        )
    flat = x.values.reshape(-1, x.channels)
    outputs = []
    scores = np.empty((flat.shape[0], params.mode_count))
    for k, mode in enumerate(params.modes):
        y = mode_self_attention(x, mode, params.position_bias, params.radius)
        y_flat = y.values.reshape(flat.shape)
        outputs.append(y_flat)
        scores[:, k] = y_flat @ params.scorer_weights[k] + params.scorer_bias[k]
    return outputs, softmax(scores, axis=1)


def expanded_attention(x: FeatureMap, params: ExpandedAttentionParams) -> FeatureMap:
    """Mix the mode outputs with per-pixel softmax weights.

    Each output pixel is a convex combination of that pixel's N mode
    outputs, so it stays inside their per-channel min/max envelope.
    """
    outputs, mix = _mode_outputs(x, params)
    mixed = np.zeros_like(outputs[0])
    for k, y in enumerate(outputs):
        mixed += mix[:, k : k + 1] * y
    return FeatureMap(mixed.reshape(x.values.shape))


def sstrans_forward(x: FeatureMap, params: ExpandedAttentionParams) -> FeatureMap:
    """Blend the input with the mixed attention output: w*x + (1-w)*mixed."""
    w = params.skip_weight
    mixed = expanded_attention(x, params)
    return FeatureMap(w * x.values + (1.0 - w) * mixed.values)


def sstrans_backward(
    x: FeatureMap, params: ExpandedAttentionParams, upstream
) -> SstransGradients:
    """Analytic gradients of sum(upstream * sstrans_forward(x)) in all inputs.

    `upstream` is the (H, W, D) gradient flowing into the transform output.
    The return value packs the gradient with respect to the input features
    and to every parameter, arranged exactly like ExpandedAttentionParams
    (mode gradients ride in ModeParams containers).
    """
    upstream = as_tensor(upstream, shape=x.values.shape)
    p_count, d = x.height * x.width, x.channels
    flat = x.values.reshape(p_count, d)
    u = upstream.reshape(p_count, d)
    scale = 1.0 / math.sqrt(d)
    inside, row_idx, col_idx = _bias_index_map(x.height, x.width, params.radius)
    bias_full = np.where(inside, params.position_bias[row_idx, col_idx], 0.0)

    # Forward pass again, keeping per-mode intermediates this time.
    n = params.mode_count
    queries, keys, values, probs, heads, outputs = [], [], [], [], [], []
    scores = np.empty((p_count, n))
    for k, mode in enumerate(params.modes):
        q = flat @ mode.query
        key = flat @ mode.key
        v = flat @ mode.value
        prob = softmax(q @ key.T * scale + bias_full, axis=1)
        head = prob @ v
        y = head @ mode.output
        queries.append(q)
        keys.append(key)
        values.append(v)
        probs.append(prob)
        heads.append(head)
        outputs.append(y)
        scores[:, k] = y @ params.scorer_weights[k] + params.scorer_bias[k]
    mix = softmax(scores, axis=1)
    mixed = np.zeros_like(flat)
    for k in range(n):
        mixed += mix[:, k : k + 1] * outputs[k]

    w = params.skip_weight
    d_skip = float(np.sum(u * (flat - mixed)))
    d_x = w * u
    d_mixed = (1.0 - w) * u

    # Softmax over modes: d_score = mix * (d_mix - sum_l mix_l d_mix_l).
    d_mix = np.empty_like(mix)
    for k in range(n):
        d_mix[:, k] = np.sum(d_mixed * outputs[k], axis=1)
    d_scores = mix * (d_mix - np.sum(mix * d_mix, axis=1, keepdims=True))

    d_modes = []
    d_scorer_w = np.zeros_like(params.scorer_weights)
    d_scorer_b = np.zeros_like(params.scorer_bias)
    d_bias_full = np.zeros((p_count, p_count))
    for k, mode in enumerate(params.modes):
        d_y = mix[:, k : k + 1] * d_mixed + np.outer(d_scores[:, k], params.scorer_weights[k])
        d_scorer_w[k] = outputs[k].T @ d_scores[:, k]
        d_scorer_b[k] = np.sum(d_scores[:, k])
        d_head = d_y @ mode.output.T
        d_output = heads[k].T @ d_y
        d_prob = d_head @ values[k].T
        d_v = probs[k].T @ d_head
        # Row-softmax backward on the attention matrix.
        d_logits = probs[k] * (d_prob - np.sum(d_prob * probs[k], axis=1, keepdims=True))
        d_bias_full += d_logits
        d_q = d_logits @ keys[k] * scale
        d_k = d_logits.T @ queries[k] * scale
        d_x += d_q @ mode.query.T + d_k @ mode.key.T + d_v @ mode.value.T
        d_modes.append(
            ModeParams(
                query=flat.T @ d_q,
                key=flat.T @ d_k,
                value=flat.T @ d_v,
                output=d_output,
            )
        )

    # Fold the dense bias gradient back into the shared (2r+1)^2 table.
    side = 2 * params.radius + 1
    table_idx = (row_idx * side + col_idx)[inside]
    d_bias = np.bincount(
        table_idx, weights=d_bias_full[inside], minlength=side * side
    ).reshape(side, side)

    return SstransGradients(
        x=d_x.reshape(x.values.shape),
        modes=tuple(d_modes),
        scorer_weights=d_scorer_w,
        scorer_bias=d_scorer_b,
        position_bias=d_bias,
        skip_weight=d_skip,
    )


def random_sstrans_params(
    seed: int, dims: int, modes: int = 4, radius: int = 7, skip_weight: float = 0.5
) -> ExpandedAttentionParams:
    """Seeded Gaussian projections with the documented zero-init extras.

    Projection entries are N(0, 1/dims) so logits stay O(1); score heads get
    the same scale; the score biases and the position-bias table start at
    zero and the skip weight defaults to 0.5.
    """
    if dims < 1 or modes < 1:
        raise ParameterError("dims and modes must be >= 1")
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(dims)

    def proj():
        return rng.normal(size=(dims, dims)) * scale

    mode_params = tuple(
        ModeParams(query=proj(), key=proj(), value=proj(), output=proj())
        for _ in range(modes)
    )
    return ExpandedAttentionParams(
        modes=mode_params,
        scorer_weights=rng.normal(size=(modes, dims)) * scale,
        scorer_bias=np.zeros(modes),
        position_bias=np.zeros((2 * radius + 1, 2 * radius + 1)),
        radius=radius,
        skip_weight=skip_weight,
    )
