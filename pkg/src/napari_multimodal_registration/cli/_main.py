"""
Author: Abhishek Patil <abhishek@zeroth.me>
Description: ``mmreg`` command line front end.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .. import __version__
from ..io._metaimage import load_field, load_mha, save_field, save_mha, save_mind
from ..libs._evaluation import dice, propagate_labels, volume_stats
from ..libs._grid_search import (
    DEFAULT_LAMBDAS,
    DEFAULT_LEVELS,
    DEFAULT_SPACINGS,
    dice_scorer,
    dissimilarity_scorer,
    grid_search,
)
from ..libs._mind import MindParams, compute_mind
from ..libs._phantom import PhantomSpec, generate
from ..libs._registration import (
    RegistrationConfig,
    register_deformable,
    resolve_measure,
)
from ..libs._rigid import DEFAULT_SEED, register_rigid, rigid_field
from ..libs._stitch import parse_mapper, plan_tiles, stitch_map
from ..libs._transform import (
    ControlGrid,
    DenseField,
    compose,
    consistency_residual,
    warp,
)
from ._report import RunManifest, format_report, registration_items

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_auto(text: str) -> int:
    """Integer in any base Python understands, e.g. ``0x5EED``."""
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None


def _triplet(text: str) -> Tuple[int, int, int]:
    """``AxBxC`` as three positive integers."""
    try:
        values = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxBxC, got {text!r}") from None
    if len(values) != 3 or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers AxBxC, got {text!r}")
    return values


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _scale(text: str) -> Tuple[str, float]:
    """``fixed:<v>``, ``grad`` or ``delta``."""
    kind, _, value = text.partition(":")
    if kind == "fixed":
        try:
            s = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected fixed:<value>, got {text!r}") from None
        if not s > 0:
            raise argparse.ArgumentTypeError(f"fixed scale must be > 0, got {text!r}")
        return "fixed", s
    if kind in ("grad", "delta") and not value:
        return kind, 1.0
    raise argparse.ArgumentTypeError(f"expected fixed:<v>, grad or delta, got {text!r}")


def _option(kind: str, text: str) -> Tuple[str, List[float]]:
    name, _, values = text.partition(":")
    try:
        numbers = [float(v) for v in values.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid {kind} {text!r}") from None
    return name, numbers


def _deformation(text: str):
    name, numbers = _option("deformation", text)
    if name == "none" and not numbers:
        return {"deformation": "none"}
    if name == "sinusoidal" and len(numbers) == 2:
        return {"deformation": name, "amplitude": numbers[0], "period": numbers[1]}
    if name == "random_smooth" and len(numbers) == 2:
        return {"deformation": name, "amplitude": numbers[0], "smoothing": numbers[1]}
    raise argparse.ArgumentTypeError(
        f"expected none, sinusoidal:A,P or random_smooth:A,S, got {text!r}"
    )


def _remap(text: str):
    name, numbers = _option("remap", text)
    if name == "identity" and not numbers:
        return {"remap": "identity"}
    if name == "gamma" and len(numbers) == 1:
        return {"remap": name, "gamma": numbers[0]}
    if name == "inverted_bands" and len(numbers) == 1 and numbers[0] == int(numbers[0]):
        return {"remap": name, "bands": int(numbers[0])}
    raise argparse.ArgumentTypeError(
        f"expected identity, gamma:g or inverted_bands:n, got {text!r}"
    )


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("common")
    group.add_argument("-v", "--verbose", action="count", default=0, help="repeat for more detail")
    group.add_argument("--log-file", default=None, help="write log messages to this file")
    group.add_argument("--seed", type=_int_auto, default=DEFAULT_SEED, help="seed of every random choice")
    group.add_argument("--threads", type=int, default=1, help="worker threads")
    group.add_argument("--manifest", default=None, help="run manifest path, next to the first output when omitted")
    return common


def _add_registration_options(parser: argparse.ArgumentParser, searched: bool = False):
    group = parser.add_argument_group("deformable registration")
    group.add_argument("--measure", choices=["nmi", "mind", "nmi+mind", "lncc"], default="nmi", help="dissimilarity measure")
    group.add_argument("--beta", type=float, default=0.8, help="weight of NMI in nmi+mind")
    group.add_argument("--scale", type=_scale, default="grad", metavar="fixed:<v>|grad|delta", help="MIND scale for nmi+mind")
    group.add_argument("--regularizer", choices=["tv", "l2"], default="tv", help="smoothness penalty on the control grid")
    if searched:
        group.add_argument("--lambdas", type=_float_list, default=list(DEFAULT_LAMBDAS), help="regularization weights to try")
        group.add_argument("--spacings", type=_int_list, default=list(DEFAULT_SPACINGS), help="control-point spacings to try")
        group.add_argument("--levels", type=_int_list, default=list(DEFAULT_LEVELS), help="pyramid levels to try")
    else:
        group.add_argument("--lambda", dest="lam", type=float, default=0.05, help="regularization weight")
        group.add_argument("--spacing", type=int, default=8, help="control-point spacing in voxels")
        group.add_argument("--levels", type=int, default=3, help="pyramid levels")
    group.add_argument("--max-iters", type=int, default=100, help="iterations per level")
    group.add_argument("--step-tol", type=float, default=1e-5, help="relative cost change that ends a level")
    group.add_argument("--window-radius", type=int, default=3, help="LNCC window radius")
    group.add_argument("--mind-sigma", type=float, default=0.5, help="MIND patch sigma")


def build_parser() -> ArgumentParser:
    common = _common_parser()
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = ArgumentParser(
        prog="mmreg",
        description="Multi-modal deformable registration of 3D MetaImage volumes.",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, parents=[common], formatter_class=formatter)

    p = add("register", "deformable registration of a moving volume onto a fixed volume")
    p.add_argument("--fixed", required=True, help="fixed (reference) volume, .mha")
    p.add_argument("--moving", required=True, help="moving volume, .mha")
    _add_registration_options(p)
    p.add_argument("--symmetric", action="store_true", help="optimize forward and backward fields with inverse-consistency averaging")
    p.add_argument("--every-n", type=int, default=0, help="inverse-consistency step every n iterations (0: end of level only)")
    p.add_argument("--rigid-init", action="store_true", help="run rigid alignment first")
    p.add_argument("--rigid-iters", type=int, default=400, help="mutations of the rigid stage")
    p.add_argument("--moving-labels", default=None, help="labels of the moving volume to propagate")
    p.add_argument("--out-labels", default=None, help="propagated labels, .mha")
    p.add_argument("--out-field", default=None, help="displacement field, 3-channel .mha")
    p.add_argument("--out-warped", default=None, help="warped moving volume, .mha")
    p.add_argument("--report", default=None, help="report file, stdout when omitted")
    p.set_defaults(handler=run_register)

    p = add("rigid", "rigid alignment with a (1+1) evolution strategy on NMI")
    p.add_argument("--fixed", required=True, help="fixed (reference) volume, .mha")
    p.add_argument("--moving", required=True, help="moving volume, .mha")
    p.add_argument("--iters", type=int, default=400, help="number of mutations")
    p.add_argument("--out-warped", default=None, help="resampled moving volume, .mha")
    p.add_argument("--out-field", default=None, help="rigid displacement field, 3-channel .mha")
    p.add_argument("--report", default=None, help="report file, stdout when omitted")
    p.set_defaults(handler=run_rigid)

    p = add("warp", "apply a displacement field to a volume")
    p.add_argument("--moving", required=True, help="volume to deform, .mha")
    p.add_argument("--field", required=True, help="displacement field, 3-channel .mha")
    p.add_argument("--nearest", action="store_true", help="nearest-neighbour sampling")
    p.add_argument("--labels", action="store_true", help="read the moving file as labels")
    p.add_argument("--out", required=True, help="warped volume, .mha")
    p.set_defaults(handler=run_warp)

    p = add("dice", "per-label Dice overlap of two label volumes")
    p.add_argument("--a", required=True, help="first label volume, .mha")
    p.add_argument("--b", required=True, help="second label volume, .mha")
    p.add_argument("--csv", default=None, help="per-label table (label,name,dice)")
    p.set_defaults(handler=run_dice)

    p = add("mind", "dump the MIND descriptor field of a volume")
    p.add_argument("--input", required=True, help="volume, .mha")
    p.add_argument("--sigma", type=float, default=0.5, help="patch sigma in voxels")
    p.add_argument("--out", required=True, help="descriptor field, multi-channel .mha")
    p.set_defaults(handler=run_mind)

    p = add("similarity", "evaluate one dissimilarity measure")
    p.add_argument("--fixed", required=True, help="fixed (reference) volume, .mha")
    p.add_argument("--moving", required=True, help="moving volume, .mha")
    p.add_argument("--field", default=None, help="displacement applied to the moving volume")
    _add_registration_options(p)
    p.set_defaults(handler=run_similarity)

    p = add("stitch", "map a volume tile by tile and average the overlaps")
    p.add_argument("--input", required=True, help="volume, .mha")
    p.add_argument("--tile", type=_triplet, required=True, metavar="WxWxC", help="tile size in voxels")
    p.add_argument("--stride", type=_triplet, required=True, metavar="SxSxSc", help="tile stride in voxels")
    p.add_argument("--mapper", default="identity", help="identity, affine:a,b or lut:<file>")
    p.add_argument("--out", required=True, help="stitched volume, .mha")
    p.set_defaults(handler=run_stitch)

    p = add("phantom", "render a synthetic pair with known deformation and labels")
    p.add_argument("--dims", type=_triplet, default=(64, 64, 64), metavar="XxYxZ", help="volume dims")
    p.add_argument("--blobs", type=int, default=12, help="number of labelled blobs")
    p.add_argument("--deformation", type=_deformation, default="sinusoidal:3,32", metavar="none|sinusoidal:A,P|random_smooth:A,S", help="ground-truth deformation")
    p.add_argument("--remap", type=_remap, default="identity", metavar="identity|gamma:g|inverted_bands:n", help="intensity remap of the second modality")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--prefix", default="phantom", help="file name prefix")
    p.set_defaults(handler=run_phantom)

    p = add("gridsearch", "register over a lambda / spacing / levels grid and rank the runs")
    p.add_argument("--fixed", required=True, help="fixed (reference) volume, .mha")
    p.add_argument("--moving", required=True, help="moving volume, .mha")
    _add_registration_options(p, searched=True)
    p.add_argument("--score", default="dissim", help="dissim or dice:<fixed_labels>,<moving_labels>")
    p.add_argument("--csv", required=True, help="ranked table, one row per cell")
    p.set_defaults(handler=run_gridsearch)

    p = add("volstats", "mean structure volume per label and the ratio between two groups")
    p.add_argument("--group-a", nargs="+", required=True, help="label volumes of the first group")
    p.add_argument("--group-b", nargs="*", default=[], help="label volumes of the second group")
    p.add_argument("--csv", default=None, help="table (label,name,mean_a_cm3,mean_b_cm3,ratio_percent)")
    p.set_defaults(handler=run_volstats)

    return parser


def _config_from(args, **overrides) -> RegistrationConfig:
    strategy, fixed_s = args.scale
    values = dict(
        measure=args.measure,
        beta=args.beta,
        scale_strategy=strategy,
        fixed_s=fixed_s,
        regularizer=args.regularizer,
        max_iters_per_level=args.max_iters,
        step_tol=args.step_tol,
        symmetric=getattr(args, "symmetric", False),
        every_n_iterations=getattr(args, "every_n", 0),
        window_radius=args.window_radius,
        mind_sigma=args.mind_sigma,
    )
    if not overrides:
        values.update(lam=args.lam, spacing_vox=args.spacing, levels=args.levels)
    values.update(overrides)
    return RegistrationConfig(**values)


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text)
        logger.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def _progress(**kwargs) -> Callable:
    def wrap(iterable, total=None):
        return tqdm(iterable, total=total, leave=False, disable=None, **kwargs)

    return wrap


def run_register(args, manifest: RunManifest):
    fixed = load_mha(args.fixed)
    moving = load_mha(args.moving)
    config = _config_from(args)
    manifest.config.update(config.to_dict())
    manifest.inputs.update(fixed=args.fixed, moving=args.moving)
    items = []

    registration_moving = moving
    rigid_dense = None
    if args.rigid_init:
        rigid = register_rigid(fixed, moving, iters=args.rigid_iters, seed=args.seed)
        rigid_dense = rigid_field(rigid.params, fixed)
        registration_moving = rigid.warped
        manifest.config.update(rigid_iters=args.rigid_iters, rigid_objective="nmi")
        items += [
            ("rigid.objective", "nmi"),
            ("rigid.rotation_deg", rigid.rotation_deg),
            ("rigid.translation_mm", rigid.translation_mm),
            ("rigid.cost", rigid.cost),
        ]

    result = register_deformable(fixed, registration_moving, config)
    total = result.field()
    if rigid_dense is not None:
        # deformable first, then rigid
        total = compose(rigid_dense, total)
    items += registration_items(result)
    if config.symmetric:
        items.append(
            ("consistency_residual", consistency_residual(result.field(), result.backward_field()))
        )

    if args.out_field:
        save_field(total, args.out_field, fixed.spacing, fixed.origin)
        manifest.outputs["field"] = args.out_field
    if args.out_warped:
        save_mha(warp(moving, total), args.out_warped)
        manifest.outputs["warped"] = args.out_warped
    if args.moving_labels:
        if not args.out_labels:
            raise ValueError("--moving-labels needs --out-labels")
        labels = load_mha(args.moving_labels, as_labels=True)
        save_mha(propagate_labels(labels, total), args.out_labels)
        manifest.inputs["moving_labels"] = args.moving_labels
        manifest.outputs["labels"] = args.out_labels
    if args.report:
        manifest.outputs["report"] = args.report
    _emit(format_report(items), args.report)


def run_rigid(args, manifest: RunManifest):
    fixed = load_mha(args.fixed)
    moving = load_mha(args.moving)
    manifest.inputs.update(fixed=args.fixed, moving=args.moving)
    manifest.config.update(iters=args.iters, objective="nmi")
    result = register_rigid(fixed, moving, iters=args.iters, seed=args.seed)
    if args.out_warped:
        save_mha(result.warped, args.out_warped)
        manifest.outputs["warped"] = args.out_warped
    if args.out_field:
        save_field(rigid_field(result.params, fixed), args.out_field, fixed.spacing, fixed.origin)
        manifest.outputs["field"] = args.out_field
    if args.report:
        manifest.outputs["report"] = args.report
    items = [
        ("objective", "nmi"),
        ("rotation_deg", result.rotation_deg),
        ("translation_mm", result.translation_mm),
        ("matrix", result.matrix.ravel()),
        ("cost", result.cost),
        ("iterations", result.iterations),
    ]
    _emit(format_report(items), args.report)


def run_warp(args, manifest: RunManifest):
    moving = load_mha(args.moving, as_labels=args.labels)
    dense = load_field(args.field)
    interp = "nearest" if args.nearest or args.labels else "trilinear"
    manifest.inputs.update(moving=args.moving, field=args.field)
    manifest.config.update(interp=interp)
    save_mha(warp(moving, dense, interp=interp), args.out)
    manifest.outputs["warped"] = args.out


def run_dice(args, manifest: RunManifest):
    report = dice(load_mha(args.a, as_labels=True), load_mha(args.b, as_labels=True))
    manifest.inputs.update(a=args.a, b=args.b)
    sys.stdout.write(f"{report}\n")
    if args.csv:
        report.to_csv(args.csv)
        manifest.outputs["csv"] = args.csv


def run_mind(args, manifest: RunManifest):
    volume = load_mha(args.input)
    params = MindParams(sigma=args.sigma)
    manifest.inputs["input"] = args.input
    manifest.config.update(params.to_dict())
    descriptor = compute_mind(volume, params)
    save_mind(descriptor, args.out)
    manifest.outputs["descriptor"] = args.out
    sys.stdout.write(
        format_report(
            [
                ("channels", descriptor.channels),
                ("patch_half_size", params.patch_half_size),
                ("min", float(descriptor.data.min())),
                ("mean", float(descriptor.data.mean())),
            ]
        )
    )


def run_similarity(args, manifest: RunManifest):
    fixed = load_mha(args.fixed)
    moving = load_mha(args.moving)
    config = _config_from(args)
    manifest.inputs.update(fixed=args.fixed, moving=args.moving)
    manifest.config.update(config.to_dict())
    dense = load_field(args.field) if args.field else DenseField.zeros(fixed.dims)
    if args.field:
        manifest.inputs["field"] = args.field

    items = [("measure", config.measure)]
    grid = ControlGrid.zeros(fixed.dims, config.spacing_vox)
    measure, scale = resolve_measure(fixed, moving, grid, config)
    if scale is not None:
        items.append(("s", scale))
    items.append(("value", measure.value(dense)))
    sys.stdout.write(format_report(items))


def run_stitch(args, manifest: RunManifest):
    volume = load_mha(args.input)
    mapper = parse_mapper(args.mapper)
    plan = plan_tiles(volume.dims, args.tile, args.stride)
    manifest.inputs["input"] = args.input
    manifest.config.update(tile=args.tile, stride=args.stride, mapper=args.mapper, tiles=len(plan))
    result = stitch_map(volume, plan, mapper, threads=args.threads, progress=_progress(desc="tiles"))
    save_mha(result, args.out)
    manifest.outputs["stitched"] = args.out


def run_phantom(args, manifest: RunManifest):
    options: Dict = {"dims": args.dims, "seed": args.seed, "n_blobs": args.blobs}
    options.update(args.deformation)
    options.update(args.remap)
    spec = PhantomSpec(**options)
    manifest.config.update(spec.to_dict())

    phantom = generate(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = args.prefix
    outputs = {
        "volume_a": out_dir / f"{prefix}_a.mha",
        "volume_b": out_dir / f"{prefix}_b.mha",
        "labels_a": out_dir / f"{prefix}_a_labels.mha",
        "labels_b": out_dir / f"{prefix}_b_labels.mha",
        "truth": out_dir / f"{prefix}_truth_field.mha",
        "spec": out_dir / f"{prefix}_spec.txt",
    }
    save_mha(phantom.volume_a, outputs["volume_a"])
    save_mha(phantom.volume_b, outputs["volume_b"])
    save_mha(phantom.labels_a, outputs["labels_a"])
    save_mha(phantom.labels_b, outputs["labels_b"])
    save_field(phantom.truth, outputs["truth"])
    outputs["spec"].write_text(format_report(spec.to_dict().items()))
    manifest.outputs.update({key: str(path) for key, path in outputs.items()})


def _scorer_from(text: str):
    if text == "dissim":
        return dissimilarity_scorer, {}
    kind, _, paths = text.partition(":")
    parts = paths.split(",")
    if kind == "dice" and len(parts) == 2 and all(parts):
        fixed_labels = load_mha(parts[0], as_labels=True)
        moving_labels = load_mha(parts[1], as_labels=True)
        return dice_scorer(fixed_labels, moving_labels), {
            "fixed_labels": parts[0],
            "moving_labels": parts[1],
        }
    raise ValueError(f"--score expects dissim or dice:<fixed_labels>,<moving_labels>, got {text!r}")


def run_gridsearch(args, manifest: RunManifest):
    fixed = load_mha(args.fixed)
    moving = load_mha(args.moving)
    if not (args.lambdas and args.spacings and args.levels):
        raise ValueError("--lambdas, --spacings and --levels need at least one value each")
    # base config; the searched fields are replaced per cell
    config = _config_from(
        args, lam=args.lambdas[0], spacing_vox=args.spacings[0], levels=args.levels[0]
    )
    scorer, label_inputs = _scorer_from(args.score)
    manifest.inputs.update(fixed=args.fixed, moving=args.moving, **label_inputs)
    manifest.config.update(config.to_dict())
    manifest.config.update(
        lambdas=args.lambdas, spacings=args.spacings, levels_list=args.levels, score=args.score
    )
    table = grid_search(
        fixed,
        moving,
        config,
        lambdas=args.lambdas,
        spacings=args.spacings,
        levels_list=args.levels,
        scorer=scorer,
        threads=args.threads,
        progress=_progress(desc="grid"),
    )
    table.to_csv(args.csv, index=False)
    manifest.outputs["csv"] = args.csv
    best = table.iloc[0]
    sys.stdout.write(
        format_report(
            [
                ("cells", len(table)),
                ("failed", int((table["status"] != "ok").sum())),
                ("best.lambda", float(best["lambda"])),
                ("best.spacing", int(best["spacing"])),
                ("best.levels", int(best["levels"])),
                ("best.score", float(best["score"])),
            ]
        )
    )


def run_volstats(args, manifest: RunManifest):
    group_a = [load_mha(path, as_labels=True) for path in args.group_a]
    group_b = [load_mha(path, as_labels=True) for path in args.group_b]
    manifest.inputs.update(group_a=",".join(args.group_a), group_b=",".join(args.group_b))
    table = volume_stats(group_a, group_b)
    sys.stdout.write(table.to_string(index=False, float_format=lambda v: f"{v:.3f}") + "\n")
    if args.csv:
        table.to_csv(args.csv, index=False)
        manifest.outputs["csv"] = args.csv


def _configure_logging(verbose: int, log_file: Optional[str]):
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)]
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        filename=log_file,
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one ``mmreg`` subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    _configure_logging(args.verbose, args.log_file)
    manifest = RunManifest(
        subcommand=args.subcommand, argv=argv, version=__version__, seed=args.seed
    )
    manifest.config["threads"] = args.threads
    start = time.perf_counter()
    try:
        args.handler(args, manifest)
    except (ValueError, OSError) as err:
        sys.stderr.write(f"mmreg {args.subcommand}: error: {err}\n")
        return EXIT_RUNTIME
    manifest.wall_time = time.perf_counter() - start
    try:
        manifest.write(args.manifest)
    except OSError as err:
        sys.stderr.write(f"mmreg {args.subcommand}: error: {err}\n")
        return EXIT_RUNTIME
    return EXIT_OK
