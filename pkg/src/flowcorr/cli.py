"""Command-line front end.

Subcommands cover the full pipeline: synthesize scenes, turn images into
descriptor grids, build correlation volumes, cut heatmaps, run the
shift-consistency sweep, score flow files, and verify the backward passes.
Report-producing commands write machine-readable artifacts (JSON, JSONL,
CSV, PGM, .flo) plus a PNG figure next to them.

Exit codes: 0 success, 1 usage error, 2 malformed or unreadable data,
3 a self-check ran and failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import attack as attack_mod
from . import plots
from .corr import (
    cfa_correlation,
    dot_correlation,
    extract_query_heatmap,
    heatmap_to_image,
    load_volume,
    normalize_volume,
    random_cfa_params,
    save_volume,
)
from .errors import (
    CheckFailure,
    DimensionError,
    FlowcorrError,
    FormatError,
    ParameterError,
    UndefinedMetricError,
    UsageError,
)
from .features import (
    generate_translated_scene,
    load_feature_map,
    patchify_features,
    read_image,
    save_feature_map,
    write_image,
)
from .flowfield import read_flo, write_flo
from .gradcheck import run_gradient_checks
from .metrics import metric_report
from .sstrans import random_sstrans_params, sstrans_forward
from .weights import (
    cfa_from_records,
    cfa_records,
    read_weights,
    sstrans_from_records,
    sstrans_records,
    write_weights,
)


@dataclass(frozen=True)
class RunConfig:
    """Numeric defaults shared by the pipeline commands.

    A JSON config file may set any field; flags given explicitly on the
    command line win over the file, which wins over these defaults.
    """

    seed: int = 0
    width: int = 64
    height: int = 64
    dims: int = 8
    modes: int = 4
    radius: int = 7
    cfa_modes: int = 4
    patch: int = 8
    fov: int = 256
    scale: int = 8
    eps: float = 1e-6
    gain: float = 1.0
    bias: float = 0.0

    @classmethod
    def load(cls, config_path, overrides: dict) -> "RunConfig":
        cfg = cls()
        if config_path is not None:
            try:
                data = json.loads(Path(config_path).read_text())
            except OSError as exc:
                raise FormatError(f"cannot read config file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise FormatError(f"config file is not valid JSON: {exc}") from exc
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise UsageError(f"unknown config keys: {sorted(unknown)}")
            cfg = replace(cfg, **data)
        given = {k: v for k, v in overrides.items() if v is not None}
        return replace(cfg, **given)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size must look like WIDTHxHEIGHT, got {text!r}") from None
    if w < 1 or h < 1:
        raise UsageError(f"size must be positive, got {text!r}")
    return w, h


def _parse_pair(text: str, what: str) -> tuple[int, int]:
    try:
        a, b = (int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"{what} must look like A,B with integers, got {text!r}") from None
    return a, b


def _parse_sweep(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (int(p) for p in text.split(":"))
        except ValueError:
            raise UsageError(f"sweep range must be START:STOP:STEP, got {text!r}") from None
        if step < 1:
            raise UsageError(f"sweep step must be >= 1, got {step}")
        return tuple(range(start, stop + 1, step))
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"sweep must be a range or comma list, got {text!r}") from None


def _parse_sizes(text: str) -> list[tuple[int, int, int, int]]:
    text = text.strip()
    if not text:
        return []
    sizes = []
    for chunk in text.split(","):
        parts = chunk.lower().split("x")
        if len(parts) != 4:
            raise UsageError(
                f"each size must be HEIGHTxWIDTHxDIMSxMODES, got {chunk!r}"
            )
        try:
            sizes.append(tuple(int(p) for p in parts))
        except ValueError:
            raise UsageError(f"non-integer size component in {chunk!r}") from None
    return sizes


def _ensure_parent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


def _json_dump(path: Path, payload) -> None:
    _ensure_parent(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def cmd_gen(args) -> int:
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    width, height = _parse_size(args.size) if args.size else (cfg.width, cfg.height)
    dx, dy = _parse_pair(args.displacement, "displacement")
    scene = generate_translated_scene(cfg.seed, width, height, (dx, dy))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "frame1.pgm", scene.frame1)
    write_image(out / "frame2.pgm", scene.frame2)
    write_flo(out / "gt.flo", scene.gt)
    _json_dump(
        out / "scene.json",
        {
            "seed": cfg.seed,
            "width": width,
            "height": height,
            "displacement": [dx, dy],
        },
    )
    print(f"wrote scene ({width}x{height}, displacement ({dx}, {dy})) to {out}")
    return 0


def cmd_featurize(args) -> int:
    cfg = RunConfig.load(
        args.config, {"seed": args.seed, "patch": args.patch, "dims": args.dims}
    )
    image = read_image(args.image)
    fmap = patchify_features(image, cfg.patch, cfg.dims, seed=cfg.seed)
    out = Path(args.out)
    _ensure_parent(out)
    save_feature_map(out, fmap)
    print(
        f"wrote {fmap.width}x{fmap.height}x{fmap.channels} descriptor grid to {out}"
    )
    return 0


def cmd_gen_weights(args) -> int:
    cfg = RunConfig.load(
        args.config,
        {
            "seed": args.seed,
            "dims": args.dims,
            "modes": args.modes,
            "radius": args.radius,
            "cfa_modes": args.cfa_modes,
        },
    )
    records = {}
    records.update(
        sstrans_records(
            random_sstrans_params(cfg.seed, cfg.dims, modes=cfg.modes, radius=cfg.radius)
        )
    )
    records.update(cfa_records(random_cfa_params(cfg.seed + 1, cfg.dims, cfg.cfa_modes)))
    out = Path(args.out)
    _ensure_parent(out)
    write_weights(out, records)
    print(f"wrote {len(records)} weight records to {out}")
    return 0


def cmd_corr(args) -> int:
    f1 = load_feature_map(args.frame1)
    f2 = load_feature_map(args.frame2)
    needs_weights = args.mode == "cfa" or args.sstrans != "none"
    if needs_weights and args.weights is None:
        raise UsageError(f"--weights is required for mode={args.mode} sstrans={args.sstrans}")
    records = read_weights(args.weights) if args.weights is not None else {}
    if args.sstrans != "none":
        smoother = sstrans_from_records(records)
        # Smoothing the target frame is the supported configuration; the
        # "both" variant exists for side-by-side volume comparisons only.
        f2 = sstrans_forward(f2, smoother)
        if args.sstrans == "both":
            f1 = sstrans_forward(f1, smoother)
    if args.mode == "cfa":
        volume = cfa_correlation(f1, f2, cfa_from_records(records))
    else:
        volume = dot_correlation(f1, f2)
    if args.normalize:
        cfg = RunConfig.load(args.config, {"eps": None, "gain": None, "bias": None})
        volume = normalize_volume(volume, eps=cfg.eps, gain=cfg.gain, bias=cfg.bias)
    out = Path(args.out)
    _ensure_parent(out)
    save_volume(out, volume)
    print(f"wrote {volume.kind} volume ({volume.height}x{volume.width} grid) to {out}")
    return 0


def cmd_heatmap(args) -> int:
    cfg = RunConfig.load(args.config, {"fov": args.fov, "scale": args.scale})
    volume = load_volume(args.volume)
    qi, qj = _parse_pair(args.query, "query")
    heatmap, window = extract_query_heatmap(volume, (qi, qj), fov=cfg.fov, scale=cfg.scale)
    prefix = Path(args.out)
    _ensure_parent(prefix)
    write_image(prefix.with_suffix(".pgm"), heatmap_to_image(heatmap))
    _json_dump(
        prefix.with_suffix(".json"),
        {
            "query": [qi, qj],
            "window": list(window),
            "fov": cfg.fov,
            "scale": cfg.scale,
            "kind": volume.kind,
        },
    )
    plots.render_heatmap_figure(heatmap, window, (qi, qj), prefix.with_suffix(".png"))
    print(
        f"wrote heatmap for query ({qi}, {qj}) window {window} to {prefix}.pgm/.json/.png"
    )
    return 0


def cmd_attack(args) -> int:
    cfg = RunConfig.load(
        args.config,
        {
            "seed": args.seed,
            "patch": args.patch,
            "dims": args.dims,
            "cfa_modes": args.cfa_modes,
        },
    )
    width, height = _parse_size(args.size)
    sweep = attack_mod.AttackSweepConfig(
        du_values=_parse_sweep(args.sweep),
        width=width,
        height=height,
        scene_count=args.scenes,
        patch=cfg.patch,
        channels=cfg.dims,
        cfa_modes=cfg.cfa_modes,
        normalize=args.normalize,
        random_projections=args.random_projections,
        seed=cfg.seed,
    )
    rows = attack_mod.run_attack_sweep(sweep)
    prefix = Path(args.out)
    _ensure_parent(prefix)
    jsonl = prefix.with_suffix(".jsonl")
    with open(jsonl, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    if args.csv:
        with open(prefix.with_suffix(".csv"), "w") as fh:
            fh.write("du,dv,aepe,valid_pixels\n")
            for row in rows:
                fh.write(f"{row['du']},{row['dv']},{row['aepe']!r},{row['valid_pixels']}\n")
    plots.render_sweep_figure(rows, prefix.with_suffix(".png"))
    worst = max(rows, key=lambda r: r["aepe"])
    print(
        f"swept {len(rows)} offsets on {args.scenes} scene(s); "
        f"worst mean residual {worst['aepe']:.3f} px at du={worst['du']}; "
        f"report at {jsonl}"
    )
    return 0


def cmd_metrics(args) -> int:
    pred = read_flo(args.pred)
    gt = read_flo(args.gt)
    foreground = None
    if args.fg_mask is not None:
        mask_img = read_image(args.fg_mask)
        if mask_img.channels != 1:
            raise UsageError("foreground mask must be grayscale")
        if (mask_img.height, mask_img.width) != (pred.height, pred.width):
            raise DimensionError(
                f"mask is {mask_img.width}x{mask_img.height}, "
                f"flow is {pred.width}x{pred.height}"
            )
        foreground = mask_img.pixels > 0
    report = metric_report(pred, gt, foreground=foreground)
    prefix = Path(args.out)
    _json_dump(prefix.with_suffix(".json"), report.to_json_dict())
    plots.render_metric_figure(report, prefix.with_suffix(".png"))
    print(
        f"aepe {report.aepe:.4f} px, outlier rate {report.fl_all:.4f}; "
        f"report at {prefix}.json"
    )
    return 0


def cmd_gradcheck(args) -> int:
    cfg = RunConfig.load(args.config, {"seed": args.seed})
    sizes = _parse_sizes(args.sizes)
    if not sizes:
        print("warning: no sizes given; nothing was checked", file=sys.stderr)
        return 0
    perturb = 1e-2 if args.self_test_perturb else 0.0
    results = run_gradient_checks(
        cfg.seed,
        sizes,
        step=args.step,
        rel_tol=args.rel_tol,
        abs_tol=args.abs_tol,
        perturb=perturb,
    )
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    if failed:
        raise CheckFailure(f"{len(failed)} of {len(results)} gradient comparisons failed")
    print(f"all {len(results)} gradient comparisons passed")
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through UsageError
    # instead so usage problems map to exit code 1.
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowcorr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="JSON file with RunConfig fields")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen", help="synthesize a translated noise scene")
    add_common(p)
    p.add_argument("--size", default=None, help="canvas WIDTHxHEIGHT")
    p.add_argument("--displacement", default="0,0", help="content motion DX,DY")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("featurize", help="turn an image into a descriptor grid")
    add_common(p)
    p.add_argument("image", help="input PGM/PPM")
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--out", required=True, help="output CRFM path")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("gen-weights", help="write seeded projection weights")
    add_common(p)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--modes", type=int, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--cfa-modes", type=int, default=None, dest="cfa_modes")
    p.add_argument("--out", required=True, help="output CRWT path")
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser("corr", help="build a correlation volume from two CRFM files")
    add_common(p)
    p.add_argument("frame1")
    p.add_argument("frame2")
    p.add_argument("--mode", choices=("dot", "cfa"), default="dot")
    p.add_argument("--weights", default=None, help="CRWT file (required for cfa/sstrans)")
    p.add_argument("--normalize", action="store_true")
    p.add_argument(
        "--sstrans",
        choices=("none", "f2", "both"),
        default="none",
        help="smooth frame 2 before correlating ('both' is for comparisons)",
    )
    p.add_argument("--out", required=True, help="output CRCV path")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("heatmap", help="cut one query's matching-score window")
    add_common(p)
    p.add_argument("volume", help="input CRCV")
    p.add_argument("--query", required=True, help="query cell I,J (row,col)")
    p.add_argument("--fov", type=int, default=None, help="window size in input pixels")
    p.add_argument("--scale", type=int, default=None, help="input pixels per volume cell")
    p.add_argument("--out", required=True, help="output prefix (.pgm/.json/.png)")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("attack", help="shift-consistency sweep on synthetic scenes")
    add_common(p)
    p.add_argument("--sweep", default="100:300:20", help="du schedule START:STOP:STEP or list")
    p.add_argument("--size", default="640x320", help="canvas WIDTHxHEIGHT")
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--dims", type=int, default=None)
    p.add_argument("--cfa-modes", type=int, default=None, dest="cfa_modes")
    p.add_argument("--normalize", action="store_true")
    p.add_argument(
        "--random-projections",
        action="store_true",
        dest="random_projections",
        help="correlate through seeded Gaussian projections instead of the oracle identity",
    )
    p.add_argument("--csv", action="store_true", help="also write a CSV table")
    p.add_argument("--out", required=True, help="output prefix (.jsonl/.csv/.png)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("metrics", help="score a predicted .flo against a reference")
    add_common(p)
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--fg-mask", default=None, dest="fg_mask", help="PGM, nonzero = foreground")
    p.add_argument("--out", required=True, help="output prefix (.json/.png)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", help="verify backward passes numerically")
    add_common(p)
    p.add_argument(
        "--sizes",
        default="3x3x4x2,2x4x3x3",
        help="comma list of HEIGHTxWIDTHxDIMSxMODES configurations",
    )
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--rel-tol", type=float, default=1e-4, dest="rel_tol")
    p.add_argument("--abs-tol", type=float, default=1e-7, dest="abs_tol")
    p.add_argument(
        "--self-test-perturb",
        action="store_true",
        dest="self_test_perturb",
        help="corrupt one analytic gradient to prove the check can fail",
    )
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 3
    except (FormatError, ParameterError, DimensionError, UndefinedMetricError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FlowcorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
