"""Shift-consistency probe for correlation-based matchers.

The probe translates frame 1 by an integer offset (du, dv) while leaving
frame 2 alone, estimates flow again, translates that estimate back onto the
original pixel grid, and subtracts the offset. For a matcher that commutes
with translation, the result equals the unattacked estimate wherever both
are defined, so the residual between

    F2 = unshift(matcher(shift(I1), I2)) and shift(F0) - (du, dv)

is exactly zero on the jointly valid region; any nonzero mass measures how
much the matcher's decisions depend on where content sits in the frame.
Truncation policy: shifted content that crosses the border is discarded and
the vacated band is filled with a constant byte (black by default). Cells
whose descriptor window touches the vacated band are masked out of F1.

Offsets can be enumerated on a schedule (the vertical component following
round-half-up of du/2) or sampled: "laplacian" draws du and dv from
zero-mean Laplace distributions with scales 16 and 10 rounded to integers,
"uniform" draws integers from [-320, 320] x [-160, 160].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corr import (
    CorrelationVolume,
    cfa_correlation,
    dot_correlation,
    identity_cfa_params,
    normalize_volume,
    random_cfa_params,
)
from .errors import ParameterError
from .features import Image, SyntheticScene, generate_translated_scene, patchify_features
from .flowfield import FlowField, translate_field, upsample_flow
from .metrics import aepe

LAPLACE_SCALE_DU = 16.0
LAPLACE_SCALE_DV = 10.0
UNIFORM_RANGE_DU = 320
UNIFORM_RANGE_DV = 160
SAMPLER_MODES = ("laplacian", "uniform")


@dataclass(frozen=True)
class ShiftSpec:
    """One probe offset and its truncation policy.

    du moves content right, dv moves it down (negative values allowed).
    `fill` is the byte written into the vacated band.
    """

    du: int
    dv: int
    fill: int = 0

    def __post_init__(self):
        if not (0 <= self.fill <= 255):
            raise ParameterError(f"fill byte must be in [0, 255], got {self.fill}")


def half_shift(du: int) -> int:
    """Vertical schedule component: du/2 rounded half away from zero."""
    if du >= 0:
        return (du + 1) // 2
    return -((-du + 1) // 2)


def shift_image(image: Image, spec: ShiftSpec) -> Image:
    """Translate image content by (du, dv), truncating at the border.

    The offset must leave at least one source column and row on the canvas.
    """
    h, w = image.height, image.width
    if abs(spec.du) >= w or abs(spec.dv) >= h:
        raise ParameterError(
            f"offset ({spec.du}, {spec.dv}) pushes all content off a {w}x{h} canvas"
        )
    out = np.full_like(image.pixels, spec.fill)
    src_y0, src_y1 = max(0, -spec.dv), min(h, h - spec.dv)
    src_x0, src_x1 = max(0, -spec.du), min(w, w - spec.du)
    out[src_y0 + spec.dv : src_y1 + spec.dv, src_x0 + spec.du : src_x1 + spec.du] = (
        image.pixels[src_y0:src_y1, src_x0:src_x1]
    )
    return Image(out)


def argmax_match(volume: CorrelationVolume, scale: int = 1) -> FlowField:
    """Hard matching: each query takes its best-scoring target.

    The flow at query cell (i, j) is (n - j, m - i) * scale for the argmax
    target (m, n), so `scale` converts cell displacements to pixels when the
    volume was built on a patch grid. Score ties resolve to the smallest
    displacement magnitude, then to the first target in row-major order;
    a constant row therefore yields zero flow. Every cell is marked valid.
    """
    if scale < 1:
        raise ParameterError(f"scale must be >= 1, got {scale}")
    h, w = volume.height, volume.width
    p = h * w
    flat = volume.values.reshape(p, p)
    flow = np.empty((h, w, 2), dtype=np.float64)
    for idx in range(p):
        i, j = divmod(idx, w)
        row = flat[idx]
        best = np.flatnonzero(row == row.max())
        if best.size > 1:
            ti, tj = np.divmod(best, w)
            dist2 = (ti - i) ** 2 + (tj - j) ** 2
            best = best[np.lexsort((best, dist2))]
        m, n = divmod(int(best[0]), w)
        flow[i, j, 0] = (n - j) * scale
        flow[i, j, 1] = (m - i) * scale
    return FlowField(flow, np.ones((h, w), dtype=bool))


def unshift_flow(field: FlowField, spec: ShiftSpec) -> FlowField:
    """Map a flow estimated on the shifted frame back to original pixels.

    Pure inverse translation of the sampling grid; vector values are not
    altered. Pixels whose source lies in the vacated band (or off-canvas)
    come back invalid, e.g. for positive (du, dv) the right du-wide and
    bottom dv-high strips.
    """
    return translate_field(field, -spec.du, -spec.dv)


def shift_flow(field: FlowField, spec: ShiftSpec) -> FlowField:
    """Translate a flow field's content the same way shift_image moves pixels."""
    return translate_field(field, spec.du, spec.dv)


def mask_contaminated(field: FlowField, spec: ShiftSpec, patch: int) -> FlowField:
    """Invalidate grid cells whose patch overlaps the fill band.

    `field` lives on the patch grid of the shifted image. A positive du
    leaves ceil(du / patch) contaminated columns on the left; negative
    offsets mirror to the opposite edge, and dv acts on rows the same way.
    """
    if patch < 1:
        raise ParameterError(f"patch must be >= 1, got {patch}")
    valid = field.valid.copy()
    cols = math.ceil(abs(spec.du) / patch)
    rows = math.ceil(abs(spec.dv) / patch)
    if cols:
        if spec.du > 0:
            valid[:, :cols] = False
        else:
            valid[:, field.width - cols :] = False
    if rows:
        if spec.dv > 0:
            valid[:rows, :] = False
        else:
            valid[field.height - rows :, :] = False
    return FlowField(field.flow, valid)


def attack_residual(
    f2: FlowField, f0: FlowField, spec: ShiftSpec
) -> tuple[FlowField, float]:
    """Consistency residual between the unshifted attack flow and baseline.

    Compares f2 against shift(f0) - (du, dv) wherever both carry valid
    vectors, returning the per-pixel residual field (invalid outside the
    joint region) and its average Euclidean norm. Raises
    UndefinedMetricError when the joint region is empty, which happens as
    soon as the offset exceeds half the canvas in either direction.
    """
    shifted = translate_field(f0, spec.du, spec.dv)
    target = shifted.flow - np.array([spec.du, spec.dv], dtype=np.float64)
    joint = f2.valid & shifted.valid
    value = aepe(f2, FlowField(target, shifted.valid))
    residual = np.where(joint[..., None], f2.flow - target, 0.0)
    return FlowField(residual, joint), value


def sample_shifts(seed: int, mode: str, count: int) -> list[ShiftSpec]:
    """Reproducible offset sequence from one seeded stream."""
    if mode not in SAMPLER_MODES:
        raise ParameterError(f"unknown sampler mode {mode!r}; choose from {SAMPLER_MODES}")
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    out = []
    if mode == "laplacian":
        for _ in range(count):
            du = int(np.rint(rng.laplace(0.0, LAPLACE_SCALE_DU)))
            dv = int(np.rint(rng.laplace(0.0, LAPLACE_SCALE_DV)))
            out.append(ShiftSpec(du, dv))
    else:
        for _ in range(count):
            du = int(rng.integers(-UNIFORM_RANGE_DU, UNIFORM_RANGE_DU + 1))
            dv = int(rng.integers(-UNIFORM_RANGE_DV, UNIFORM_RANGE_DV + 1))
            out.append(ShiftSpec(du, dv))
    return out


def sample_shift(seed: int, mode: str) -> ShiftSpec:
    """First offset of the sequence `seed` generates in the given mode."""
    return sample_shifts(seed, mode, 1)[0]


@dataclass(frozen=True)
class AttackSweepConfig:
    """Sweep schedule plus everything needed to rebuild its pipeline.

    du_values must be non-negative and strictly increasing; the vertical
    component of each probe is half_shift(du). Scenes are noise frames of
    the given canvas with patch-aligned displacements up to
    max_scene_shift pixels, drawn from `seed` unless `displacements` pins
    them explicitly. The default pipeline correlates through identity
    projections so the matcher acts as an exact oracle;
    `random_projections` swaps in seeded Gaussian projections instead.
    """

    du_values: tuple[int, ...]
    width: int
    height: int
    scene_count: int = 2
    patch: int = 8
    channels: int = 8
    cfa_modes: int = 4
    normalize: bool = False
    random_projections: bool = False
    max_scene_shift: int = 16
    seed: int = 0
    displacements: tuple[tuple[int, int], ...] | None = field(default=None)

    def __post_init__(self):
        du = tuple(int(v) for v in self.du_values)
        # An empty schedule is legal and produces an empty report.
        if du and (du[0] < 0 or any(b <= a for a, b in zip(du, du[1:]))):
            raise ParameterError(
                f"du values must be non-negative and strictly increasing, got {du}"
            )
        object.__setattr__(self, "du_values", du)
        for name in ("width", "height", "scene_count", "patch", "channels", "cfa_modes"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.width % self.patch or self.height % self.patch:
            raise ParameterError(
                f"canvas {self.width}x{self.height} must be divisible by patch {self.patch}"
            )
        if self.max_scene_shift < 0:
            raise ParameterError("max_scene_shift must be >= 0")


def build_scenes(config: AttackSweepConfig) -> list[SyntheticScene]:
    """Materialize the sweep's scene list with patch-aligned displacements."""
    if config.displacements is not None:
        picked = list(config.displacements)
        if len(picked) != config.scene_count:
            raise ParameterError(
                f"{len(picked)} displacements for {config.scene_count} scenes"
            )
    else:
        rng = np.random.default_rng(config.seed)
        cells = config.max_scene_shift // config.patch
        picked = [
            (
                int(rng.integers(-cells, cells + 1)) * config.patch,
                int(rng.integers(-cells, cells + 1)) * config.patch,
            )
            for _ in range(config.scene_count)
        ]
    return [
        generate_translated_scene(config.seed + i, config.width, config.height, disp)
        for i, disp in enumerate(picked)
    ]


def build_argmax_matcher(
    patch: int,
    channels: int,
    cfa=None,
    normalize: bool = False,
    feature_seed: int = 0,
):
    """Closure running patchify -> correlation volume -> hard argmax.

    `cfa` is an optional CfaParams; without it the volume is the plain dot
    construction. The returned callable maps two images to a grid-resolution
    FlowField whose vectors are already in pixels.
    """

    def match(img1: Image, img2: Image) -> FlowField:
        fm1 = patchify_features(img1, patch, channels, seed=feature_seed)
        fm2 = patchify_features(img2, patch, channels, seed=feature_seed)
        if cfa is not None:
            volume = cfa_correlation(fm1, fm2, cfa)
        else:
            volume = dot_correlation(fm1, fm2)
        if normalize:
            volume = normalize_volume(volume)
        return argmax_match(volume, scale=patch)

    return match


def _grid_all(mask: np.ndarray, patch: int) -> np.ndarray:
    """Downsample a pixel mask to the patch grid; a cell needs all pixels."""
    gh, gw = mask.shape[0] // patch, mask.shape[1] // patch
    return mask.reshape(gh, patch, gw, patch).all(axis=(1, 3))


def _translate_mask(mask: np.ndarray, du: int, dv: int) -> np.ndarray:
    """Move mask content by (du, dv); exposed pixels become False."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    src_y0, src_y1 = max(0, -dv), min(h, h - dv)
    src_x0, src_x1 = max(0, -du), min(w, w - du)
    if src_y0 < src_y1 and src_x0 < src_x1:
        out[src_y0 + dv : src_y1 + dv, src_x0 + du : src_x1 + du] = mask[
            src_y0:src_y1, src_x0:src_x1
        ]
    return out


def run_attack_sweep(
    config: AttackSweepConfig, scenes=None, matcher=None
) -> list[dict]:
    """Run the probe over the whole schedule and aggregate per offset.

    The residual at a pixel algebraically reduces to the difference between
    the baseline's decisions at two grid positions, so the comparison is
    meaningful only where the scene defines a correct answer on both sides.
    Each scene therefore masks the baseline field by its ground-truth
    validity and the attacked field by that validity translated along with
    the probe offset (which also covers the fill band) before the residual.

    Returns one row per du, in schedule order:
    {"du", "dv", "aepe", "valid_pixels"} where aepe is the pixel-weighted
    mean residual norm across scenes and valid_pixels the number of pixels
    it averages over.
    """
    if not config.du_values:
        return []
    if scenes is None:
        scenes = build_scenes(config)
    if matcher is None:
        # Identity projections keep the argmax matcher an exact oracle on
        # unambiguous textures (a unit descriptor's self-match is a strict
        # maximum of the cosine score); random projections reshape the
        # score geometry and are opted into for non-oracle sweeps.
        if config.random_projections:
            cfa = random_cfa_params(config.seed, config.channels, config.cfa_modes)
        else:
            cfa = identity_cfa_params(config.channels, config.cfa_modes)
        matcher = build_argmax_matcher(
            config.patch,
            config.channels,
            cfa=cfa,
            normalize=config.normalize,
            feature_seed=config.seed,
        )
    patch = config.patch
    baselines = []
    for scene in scenes:
        f0 = matcher(scene.frame1, scene.frame2)
        f0 = FlowField(f0.flow, f0.valid & _grid_all(scene.gt.valid, patch))
        baselines.append(upsample_flow(f0, patch))
    rows = []
    for du in config.du_values:
        spec = ShiftSpec(du, half_shift(du))
        total = 0.0
        count = 0
        for scene, f0 in zip(scenes, baselines):
            attacked = matcher(shift_image(scene.frame1, spec), scene.frame2)
            answerable = _translate_mask(scene.gt.valid, spec.du, spec.dv)
            attacked = FlowField(
                attacked.flow, attacked.valid & _grid_all(answerable, patch)
            )
            f2 = unshift_flow(upsample_flow(attacked, patch), spec)
            residual, _ = attack_residual(f2, f0, spec)
            norms = residual.magnitude()[residual.valid]
            total += float(norms.sum())
            count += int(norms.size)
        rows.append(
            {"du": du, "dv": spec.dv, "aepe": total / count, "valid_pixels": count}
        )
    return rows
