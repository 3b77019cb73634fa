"""Numeric verification of the analytic backward passes.

Every check builds a seeded configuration, defines the scalar loss
sum(upstream * forward(...)), and compares the analytic gradient of each
tensor against central finite differences of the loss. A coordinate passes
when |analytic - numeric| <= abs_tol + rel_tol * max(|analytic|, |numeric|).

The `perturb` knob deliberately corrupts one analytic gradient before the
comparison. It exists so the check harness can prove it is able to fail;
a gradient checker that cannot be made to fail verifies nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corr import CfaParams, cfa_backward, cfa_correlation, normalize_volume, random_cfa_params
from .features import FeatureMap
from .sstrans import random_sstrans_params, sstrans_backward, sstrans_forward
from .tensor_ops import finite_difference_gradient

DEFAULT_STEP = 1e-5
DEFAULT_REL_TOL = 1e-4
DEFAULT_ABS_TOL = 1e-7


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of one tensor's comparison."""

    label: str
    tensor: str
    worst_abs: float
    worst_allowed: float
    coords: int
    passed: bool

    def line(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"{verdict}  {self.label} / {self.tensor}: "
            f"worst |analytic-numeric| {self.worst_abs:.3e} "
            f"(allowed {self.worst_allowed:.3e}, {self.coords} coords)"
        )


def _compare(
    label: str,
    tensor: str,
    analytic,
    numeric,
    rel_tol: float,
    abs_tol: float,
) -> GradCheckResult:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    allow = abs_tol + rel_tol * np.maximum(np.abs(analytic), np.abs(numeric))
    if diff.size == 0:
        return GradCheckResult(label, tensor, 0.0, abs_tol, 0, True)
    worst = int(np.argmax(diff - allow))
    return GradCheckResult(
        label=label,
        tensor=tensor,
        worst_abs=float(diff.flat[worst]),
        worst_allowed=float(allow.flat[worst]),
        coords=int(diff.size),
        passed=bool(np.all(diff <= allow)),
    )


def check_sstrans_gradients(
    seed: int,
    height: int,
    width: int,
    dims: int,
    modes: int,
    radius: int = 1,
    step: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    perturb: float = 0.0,
) -> list[GradCheckResult]:
    """Check every gradient of the smoothing transform on one configuration."""
    rng = np.random.default_rng(seed)
    x = FeatureMap(rng.normal(size=(height, width, dims)))
    params = random_sstrans_params(seed + 1, dims, modes=modes, radius=radius, skip_weight=0.3)
    params = replace(
        params,
        scorer_bias=rng.normal(size=modes) * 0.1,
        position_bias=rng.normal(size=params.position_bias.shape) * 0.5,
    )
    upstream = rng.normal(size=(height, width, dims))
    grads = sstrans_backward(x, params, upstream)
    label = f"sstrans {height}x{width}x{dims} modes={modes} radius={radius}"

    def loss_for_x(values):
        return float(np.sum(upstream * sstrans_forward(FeatureMap(values), params).values))

    results = [
        _compare(
            label,
            "input",
            grads.x + perturb,
            finite_difference_gradient(loss_for_x, x.values, h=step),
            rel_tol,
            abs_tol,
        )
    ]

    def check_param(tensor_name, current, rebuild, analytic):
        def loss(values):
            return float(
                np.sum(upstream * sstrans_forward(x, rebuild(values)).values)
            )

        numeric = finite_difference_gradient(loss, current, h=step)
        results.append(_compare(label, tensor_name, analytic, numeric, rel_tol, abs_tol))

    for k, mode in enumerate(params.modes):
        for field in ("query", "key", "value", "output"):

            def rebuild(values, k=k, field=field):
                new_mode = replace(params.modes[k], **{field: values})
                new_modes = params.modes[:k] + (new_mode,) + params.modes[k + 1 :]
                return replace(params, modes=new_modes)

            check_param(
                f"mode{k}/{field}",
                getattr(mode, field),
                rebuild,
                getattr(grads.modes[k], field),
            )
    check_param(
        "scorer_weights",
        params.scorer_weights,
        lambda v: replace(params, scorer_weights=v),
        grads.scorer_weights,
    )
    check_param(
        "scorer_bias",
        params.scorer_bias,
        lambda v: replace(params, scorer_bias=v),
        grads.scorer_bias,
    )
    check_param(
        "position_bias",
        params.position_bias,
        lambda v: replace(params, position_bias=v),
        grads.position_bias,
    )
    check_param(
        "skip_weight",
        np.float64(params.skip_weight),
        lambda v: replace(params, skip_weight=float(np.asarray(v).reshape(()))),
        np.float64(grads.skip_weight),
    )
    return results


def check_cfa_gradients(
    seed: int,
    height: int,
    width: int,
    dims: int,
    modes: int,
    normalized: bool = False,
    step: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    perturb: float = 0.0,
) -> list[GradCheckResult]:
    """Check the fused-volume gradients, optionally through normalization."""
    rng = np.random.default_rng(seed)
    f1 = FeatureMap(rng.normal(size=(height, width, dims)))
    f2 = FeatureMap(rng.normal(size=(height, width, dims)))
    params = random_cfa_params(seed + 1, dims, modes=modes)
    params = CfaParams(
        projections=params.projections, norm_gain=1.3, norm_bias=0.2, norm_eps=1e-6
    )
    upstream = rng.normal(size=(height, width, height, width))
    grads = cfa_backward(f1, f2, params, upstream, normalized=normalized)
    suffix = "normalized" if normalized else "raw"
    label = f"cfa {height}x{width}x{dims} modes={modes} {suffix}"

    def volume_from(frame1, frame2, proj):
        p = CfaParams(
            projections=proj,
            norm_gain=params.norm_gain,
            norm_bias=params.norm_bias,
            norm_eps=params.norm_eps,
        )
        vol = cfa_correlation(frame1, frame2, p)
        if normalized:
            vol = normalize_volume(
                vol, eps=params.norm_eps, gain=params.norm_gain, bias=params.norm_bias
            )
        return vol

    def loss(frame1_vals, frame2_vals, proj):
        vol = volume_from(FeatureMap(frame1_vals), FeatureMap(frame2_vals), proj)
        return float(np.sum(upstream * vol.values))

    results = [
        _compare(
            label,
            "frame1",
            grads.frame1 + perturb,
            finite_difference_gradient(
                lambda v: loss(v, f2.values, params.projections), f1.values, h=step
            ),
            rel_tol,
            abs_tol,
        ),
        _compare(
            label,
            "frame2",
            grads.frame2,
            finite_difference_gradient(
                lambda v: loss(f1.values, v, params.projections), f2.values, h=step
            ),
            rel_tol,
            abs_tol,
        ),
        _compare(
            label,
            "projections",
            grads.projections,
            finite_difference_gradient(
                lambda v: loss(f1.values, f2.values, v), params.projections, h=step
            ),
            rel_tol,
            abs_tol,
        ),
    ]
    if normalized:
        def gain_loss(v):
            p = CfaParams(
                projections=params.projections,
                norm_gain=float(np.asarray(v).reshape(())),
                norm_bias=params.norm_bias,
                norm_eps=params.norm_eps,
            )
            vol = normalize_volume(
                cfa_correlation(f1, f2, p),
                eps=p.norm_eps,
                gain=p.norm_gain,
                bias=p.norm_bias,
            )
            return float(np.sum(upstream * vol.values))

        def bias_loss(v):
            vol = normalize_volume(
                cfa_correlation(f1, f2, params),
                eps=params.norm_eps,
                gain=params.norm_gain,
                bias=float(np.asarray(v).reshape(())),
            )
            return float(np.sum(upstream * vol.values))

        results.append(
            _compare(
                label,
                "norm_gain",
                np.float64(grads.norm_gain),
                finite_difference_gradient(gain_loss, np.float64(params.norm_gain), h=step),
                rel_tol,
                abs_tol,
            )
        )
        results.append(
            _compare(
                label,
                "norm_bias",
                np.float64(grads.norm_bias),
                finite_difference_gradient(bias_loss, np.float64(params.norm_bias), h=step),
                rel_tol,
                abs_tol,
            )
        )
    return results


def run_gradient_checks(
    seed: int,
    sizes: list[tuple[int, int, int, int]],
    step: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
    perturb: float = 0.0,
) -> list[GradCheckResult]:
    """Run both backward-pass suites over (height, width, dims, modes) sizes.

    The window radius cycles 0, 1, 2 across configurations and the fused
    volume is checked both raw and normalized. An empty size list returns an
    empty (vacuously passing) result set; callers should surface that.
    """
    results: list[GradCheckResult] = []
    for i, (height, width, dims, modes) in enumerate(sizes):
        radius = i % 3
        results.extend(
            check_sstrans_gradients(
                seed + i,
                height,
                width,
                dims,
                modes,
                radius=radius,
                step=step,
                rel_tol=rel_tol,
                abs_tol=abs_tol,
                perturb=perturb,
            )
        )
        for normalized in (False, True):
            results.extend(
                check_cfa_gradients(
                    seed + i,
                    height,
                    width,
                    dims,
                    modes,
                    normalized=normalized,
                    step=step,
                    rel_tol=rel_tol,
                    abs_tol=abs_tol,
                    perturb=perturb,
                )
            )
    return results
