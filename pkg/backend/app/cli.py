# backend/app/cli.py
"""
qdrt command line.

    qdrt default-scene > scene.yaml
    qdrt rcs-dataset --object pedestrian --count 10000 --config scene.yaml
    qdrt run --object pedestrian --mode quasi --n 1-10
    qdrt compare --object car --n 5
    qdrt run --manifest results/manifest.json

Exit codes: 0 success, 1 an equivalence test rejected, 2 bad input.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app import config
from app.exceptions import QdrtError
from app.models import OBJECT_ALIASES, REFERENCE_RCS, LogisticLaw, McExperiment, Scene
from app.services import export, montecarlo, stats
from app.services.rcs import dataset_for_scene, write_dataset_csv
from app.services.scene import default_scene_document, load_scene

logger = logging.getLogger(__name__)

# arguments that locate inputs/outputs and are not replayed from a manifest
_NOT_RECORDED = {"manifest", "config", "func", "log_level"}


class UsageError(Exception):
    pass


def parse_n_values(text: str) -> list[int]:
    """'5', '1-10' or '1,3,5'."""
    values: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(p) for p in part.split("-", 1))
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
    except ValueError as exc:
        raise UsageError(f"bad object count list {text!r}") from exc
    if not values or any(not 1 <= v <= 10 for v in values):
        raise UsageError("object counts must lie in 1..10")
    return sorted(set(values))


def _read_scene(path: Optional[str]) -> Scene:
    if not path:
        return load_scene(None)
    if path == "-":
        return load_scene(sys.stdin.read())
    return load_scene(Path(path).read_text(encoding="utf-8"))


def _recorded(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _NOT_RECORDED}


# --- commands -------------------------------------------------------------


def cmd_default_scene(args, scene: Scene) -> int:
    sys.stdout.write(default_scene_document())
    return 0


def cmd_rcs_dataset(args, scene: Scene) -> int:
    if args.count <= 0:
        raise UsageError("--count must be positive")
    out_dir = Path(args.out_dir)
    kind = "lamppost" if args.object == "lamppost" else OBJECT_ALIASES[args.object]
    samples = dataset_for_scene(scene, kind, args.count, args.seed, source=args.angle_source, threads=args.threads)
    csv_path = write_dataset_csv(samples, out_dir / f"{kind}_rcs_dataset.csv")

    fit = stats.fit_logistic([s.rcs_dbsm for s in samples])
    report = {"object": kind, "angle_source": args.angle_source, "fit": fit}
    reference = REFERENCE_RCS.get(kind)
    if reference:
        report["reference"] = {"mu": reference[0], "s": reference[1]}
    json_path = export.write_json(report, out_dir / f"{kind}_rcs_fit.json")
    export.write_manifest(out_dir, "rcs-dataset", _recorded(args), scene, args.seed, [csv_path, json_path])

    line = f"{kind}: mu = {fit.params['mu']:.2f} dBsm, s = {fit.params['s']:.2f} dBsm ({fit.sample_count} samples)"
    if reference:
        line += f"  [reference {reference[0]} / {reference[1]}]"
    print(line)
    return 0


def cmd_run(args, scene: Scene) -> int:
    n_values = parse_n_values(args.n)
    out_dir = Path(args.out_dir)
    kind = OBJECT_ALIASES[args.object]
    law = None
    artifacts: list[Path] = []
    if args.mode == "quasi":
        source, rcs_fit = montecarlo.build_quasi_source(
            scene, kind, args.dataset_count, args.seed, angle_source=args.angle_source, threads=args.threads
        )
        law = source.law
        artifacts.append(export.write_json({"law": law, "fit": rcs_fit}, out_dir / f"{kind}_quasi_law.json"))
    exp = McExperiment(
        scene=scene,
        object_kind=kind,
        replications=args.replications,
        mode=args.mode,
        master_seed=args.seed,
        quasi_law=law,
        include_los_reflections=args.include_los_reflections,
    )
    results = montecarlo.run_sweep(exp, n_values, threads=args.threads)

    for n, result in results.items():
        artifacts.extend(export.write_mc_result(result, out_dir))
        row = montecarlo.summarize(result)
        artifacts.append(export.write_json(row, out_dir / f"{export.result_stem(result)}_fits.json"))
    summary = montecarlo.summary_frame(results)
    artifacts.append(export.write_csv(summary, out_dir / f"{kind}_{args.mode}_summary.csv"))
    export.write_manifest(out_dir, "run", _recorded(args), scene, args.seed, artifacts)

    if summary[["weibull_A", "lognormal_mu"]].isna().any().any():
        print(f"fits need at least {stats.MIN_SAMPLES} samples; some were refused (see log)", file=sys.stderr)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    return 0


def cmd_compare(args, scene: Scene) -> int:
    kind = OBJECT_ALIASES[args.object]
    out_dir = Path(args.out_dir)
    law = None
    if args.quasi_mu is not None:
        if args.quasi_s is None:
            raise UsageError("--quasi-mu needs --quasi-s")
        law = LogisticLaw(location_dbsm=args.quasi_mu, scale_dbsm=args.quasi_s)
    result = montecarlo.compare_modes(
        scene,
        kind,
        args.n,
        args.replications,
        args.seed,
        alpha=args.alpha,
        n_permutations=args.permutations,
        threads=args.threads,
        law=law,
        shift_db=args.shift_db,
        quasi_seed=args.quasi_seed,
        dataset_count=args.dataset_count,
        include_los_reflections=args.include_los_reflections,
    )
    path = export.write_json(result, out_dir / f"{kind}_n{args.n}_compare.json")
    export.write_manifest(out_dir, "compare", _recorded(args), scene, args.seed, [path])

    for gof in (result.path_loss, result.excess_delay):
        print(f"{gof.label}: T = {gof.T:.5g}, p = {gof.p_value:.4f} -> {gof.decision} at alpha = {gof.alpha}")
    for cost in result.costs:
        line = f"{cost.mode}: {cost.wall_time_s:.2f} s, {cost.rcs_evaluations} RCS evaluations"
        if cost.mode == "quasi":
            line += f", {cost.rcs_draws} logistic draws, {cost.setup_time_s:.2f} s building the law"
        print(line)
    return 0 if result.passed else 1


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scene YAML ('-' for stdin); default scene when omitted")
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="master seed")
    common.add_argument("--threads", type=int, default=config.THREADS, help="worker threads (results do not depend on it)")
    common.add_argument("--out-dir", default=config.OUT_DIR)
    common.add_argument("--alpha", type=float, default=config.ALPHA, help="significance level")
    common.add_argument("--replications", type=int, default=config.DEFAULT_REPLICATIONS)
    common.add_argument("--manifest", help="replay the run recorded in this manifest (file or output directory)")
    common.add_argument("--log-level", help="override the level of the app loggers")

    parser = argparse.ArgumentParser(prog="qdrt", description="Street-canyon D-RT / QD-RT simulator")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("default-scene", parents=[common], help="print the default scene document")
    p.set_defaults(func=cmd_default_scene)

    p = subparsers.add_parser("rcs-dataset", parents=[common], help="bistatic RCS dataset and its logistic fit")
    p.add_argument("--object", choices=["pedestrian", "car", "lamppost"], default="pedestrian")
    p.add_argument("--count", type=int, default=config.DATASET_COUNT)
    p.add_argument("--angle-source", choices=["placement", "coverage"], default="placement")
    p.set_defaults(func=cmd_rcs_dataset)

    for name, func, help_text in (
        ("run", cmd_run, "Monte-Carlo path loss and excess delay for a range of n"),
        ("compare", cmd_compare, "CvM test between deterministic and quasi-deterministic runs"),
    ):
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--object", choices=["pedestrian", "car"], default="pedestrian")
        p.add_argument("--dataset-count", type=int, default=config.DATASET_COUNT, help="RCS samples behind the quasi law")
        p.add_argument("--angle-source", choices=["placement", "coverage"], default="placement")
        p.add_argument("--include-los-reflections", action="store_true", help="add LOS and reflections to the path loss")
        p.set_defaults(func=func)
        if name == "run":
            p.add_argument("--mode", choices=["deterministic", "quasi"], default="deterministic")
            p.add_argument("--n", default="1-10", help="object counts, e.g. 5, 1-10 or 1,3,5")
        else:
            p.add_argument("--n", type=int, default=5)
            p.add_argument("--permutations", type=int, default=config.N_PERMUTATIONS)
            p.add_argument("--quasi-mu", type=float, help="logistic location (dBsm) instead of the fitted one")
            p.add_argument("--quasi-s", type=float, help="logistic scale (dBsm) with --quasi-mu")
            p.add_argument("--shift-db", type=float, default=0.0, help="shift the quasi law location")
            p.add_argument("--quasi-seed", type=int, help="separate placement seed for the quasi run")
    return parser


def _replay(args: argparse.Namespace) -> tuple[argparse.Namespace, Scene]:
    manifest = export.read_manifest(args.manifest)
    if manifest.command != args.command:
        raise UsageError(f"manifest records '{manifest.command}', not '{args.command}'")
    replayed = argparse.Namespace(**{**manifest.arguments, "command": args.command, "func": args.func})
    replayed.manifest = args.manifest
    replayed.log_level = args.log_level
    logger.info("replaying %s from %s (seed %d)", manifest.command, args.manifest, manifest.master_seed)
    return replayed, Scene.model_validate(manifest.config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config.configure_logging(args.log_level)

    try:
        if args.manifest:
            args, scene = _replay(args)
        else:
            scene = _read_scene(args.config)
        return args.func(args, scene)
    except (UsageError, QdrtError, ValidationError, OSError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"qdrt {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
