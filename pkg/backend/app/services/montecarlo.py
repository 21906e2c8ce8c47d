# backend/app/services/montecarlo.py
"""
Monte-Carlo experiment: n objects placed at random per replication, their
scatter paths traced in deterministic or quasi-deterministic mode, aggregated
into one path-loss value per replication plus one excess delay per object.

Replication r draws placements from the (seed, r, placement) substream and RCS
values from the (seed, r, rcs) substream. Both modes therefore see the same
placements, and results do not depend on the worker count.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from app import config
from app import rng as rngs
from app.exceptions import QdrtError
from app.models import ComparisonResult, FitResult, LogisticLaw, McExperiment, ModeCost, ObjectKind, Scene
from app.services import stats
from app.services.raytrace import RcsSource, assemble_channel, trace_los, trace_reflections, trace_scatter
from app.services.rcs import dataset_for_scene, object_target
from app.services.scene import draw_placements, object_box

logger = logging.getLogger(__name__)

# replications per worker task
BATCH_SIZE = 50


@dataclass(frozen=True, eq=False)
class McResult:
    mode: str
    object_kind: ObjectKind
    n_objects: int
    master_seed: int
    path_loss_db: np.ndarray
    # (replications, n_objects)
    excess_delay_ns: np.ndarray
    sigma_dbsm: np.ndarray

    @property
    def replications(self) -> int:
        return int(self.path_loss_db.size)

    @property
    def pooled_excess_delay_ns(self) -> np.ndarray:
        return self.excess_delay_ns.ravel()


def build_quasi_source(
    scene: Scene,
    kind: ObjectKind,
    count: int,
    seed: int,
    angle_source: str = "placement",
    threads: int = 1,
) -> tuple[RcsSource, FitResult]:
    """RCS dataset for the object type, its logistic fit, and the quasi source using that fit."""
    samples = dataset_for_scene(scene, kind, count, seed, source=angle_source, threads=threads)
    fit = stats.fit_logistic([s.rcs_dbsm for s in samples])
    law = LogisticLaw(location_dbsm=fit.params["mu"], scale_dbsm=fit.params["s"])
    logger.info("quasi law for %s: mu=%.3f dBsm s=%.3f dBsm (%d samples)", kind, law.location_dbsm, law.scale_dbsm, count)
    return RcsSource.quasi(law), fit


def run_experiment(exp: McExperiment, source: Optional[RcsSource] = None, threads: Optional[int] = None) -> McResult:
    """
    `source` overrides the RCS source implied by `exp.mode`; in quasi mode with
    neither `source` nor `exp.quasi_law`, the law is fitted from a fresh dataset.
    """
    scene = exp.scene
    kind = exp.object_kind
    threads = config.THREADS if threads is None else max(1, threads)

    if source is None:
        if exp.mode == "deterministic":
            # σ only depends on directions, so one model at the origin serves every placement
            source = RcsSource.deterministic(object_target(scene, kind))
        elif exp.quasi_law is not None:
            source = RcsSource.quasi(exp.quasi_law)
        else:
            source, _ = build_quasi_source(scene, kind, config.DATASET_COUNT, exp.master_seed, threads=threads)

    fixed_paths = [trace_los(scene), *trace_reflections(scene)] if exp.include_los_reflections else []
    n = exp.n_objects

    def replicate(index: int) -> tuple[float, np.ndarray, np.ndarray]:
        centers = draw_placements(scene, kind, rngs.substream(exp.master_seed, index, rngs.PLACEMENT), n)
        rcs_rng = rngs.substream(exp.master_seed, index, rngs.RCS)
        scatter = [
            trace_scatter(scene, object_box(scene, kind, c), source, rcs_rng, f"{kind}-{k}")
            for k, c in enumerate(centers)
        ]
        summary = assemble_channel(fixed_paths + scatter)
        delays = np.array([p.excess_delay_s * 1e9 for p in scatter])
        sigmas = np.array([p.sigma_dbsm for p in scatter])
        return summary.path_loss_db, delays, sigmas

    def run_batch(start: int) -> list:
        stop = min(start + BATCH_SIZE, exp.replications)
        out = [replicate(i) for i in range(start, stop)]
        logger.debug("%s %s n=%d: replications %d-%d done", exp.mode, kind, n, start, stop - 1)
        return out

    starts = range(0, exp.replications, BATCH_SIZE)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(run_batch, starts))
    else:
        batches = [run_batch(s) for s in starts]
    rows = [row for batch in batches for row in batch]

    result = McResult(
        mode=source.mode,
        object_kind=kind,
        n_objects=n,
        master_seed=exp.master_seed,
        path_loss_db=np.array([r[0] for r in rows]),
        excess_delay_ns=np.vstack([r[1] for r in rows]),
        sigma_dbsm=np.vstack([r[2] for r in rows]),
    )
    logger.info(
        "%s %s n=%d: %d replications, median path loss %.2f dB",
        result.mode,
        kind,
        n,
        result.replications,
        float(np.median(result.path_loss_db)),
    )
    return result


def run_sweep(
    exp: McExperiment,
    n_values: Iterable[int],
    source: Optional[RcsSource] = None,
    threads: Optional[int] = None,
) -> dict[int, McResult]:
    """Same experiment for each n. A quasi law is fitted once and shared across n."""
    if source is None and exp.mode == "quasi" and exp.quasi_law is None:
        source, _ = build_quasi_source(
            exp.scene, exp.object_kind, config.DATASET_COUNT, exp.master_seed, threads=threads or config.THREADS
        )
    return {n: run_experiment(exp.model_copy(update={"n_objects": n}), source, threads) for n in n_values}


def summarize(result: McResult) -> dict:
    """Weibull fit of path loss and lognormal fit of pooled excess delays (log-ns)."""
    row: dict = {"n": result.n_objects, "mode": result.mode, "replications": result.replications}
    for family, fit_fn, values, keys in (
        ("weibull", stats.fit_weibull, result.path_loss_db, ("A", "B")),
        ("lognormal", stats.fit_lognormal, result.pooled_excess_delay_ns, ("mu", "sigma")),
    ):
        try:
            fit = fit_fn(values)
            for key in keys:
                row[f"{family}_{key}"] = fit.params[key]
        except QdrtError as exc:
            logger.warning("n=%d: %s fit refused: %s", result.n_objects, family, exc)
            for key in keys:
                row[f"{family}_{key}"] = math.nan
    return row


def summary_frame(results: dict[int, McResult]) -> pd.DataFrame:
    return pd.DataFrame([summarize(results[n]) for n in sorted(results)])


def compare_modes(
    scene: Scene,
    object_kind: ObjectKind,
    n: int,
    replications: int,
    seed: int,
    alpha: float = 0.01,
    n_permutations: int = 9999,
    threads: Optional[int] = None,
    law: Optional[LogisticLaw] = None,
    shift_db: float = 0.0,
    quasi_seed: Optional[int] = None,
    dataset_count: Optional[int] = None,
    include_los_reflections: bool = False,
) -> ComparisonResult:
    """
    Deterministic vs quasi-deterministic path loss and excess delay, each by the
    two-sample CvM test. `law` replaces the fitted logistic law and `shift_db`
    moves its location. `quasi_seed` gives the quasi run its own placements;
    by default both runs share them and the excess delays coincide.
    """
    threads = config.THREADS if threads is None else threads
    rcs_fit = None
    setup_time = 0.0
    count = dataset_count or config.DATASET_COUNT
    if law is None:
        started = time.perf_counter()
        source, rcs_fit = build_quasi_source(scene, object_kind, count, seed, threads=threads)
        setup_time = time.perf_counter() - started
        law = source.law
    if shift_db:
        law = LogisticLaw(location_dbsm=law.location_dbsm + shift_db, scale_dbsm=law.scale_dbsm)

    base = McExperiment(
        scene=scene,
        object_kind=object_kind,
        n_objects=n,
        replications=replications,
        master_seed=seed,
        include_los_reflections=include_los_reflections,
    )
    started = time.perf_counter()
    det = run_experiment(base, threads=threads)
    det_time = time.perf_counter() - started
    quasi_exp = base.model_copy(
        update={"mode": "quasi", "quasi_law": law, "master_seed": seed if quasi_seed is None else quasi_seed}
    )
    started = time.perf_counter()
    qd = run_experiment(quasi_exp, threads=threads)
    qd_time = time.perf_counter() - started
    evaluations = replications * n
    costs = [
        ModeCost(mode="deterministic", wall_time_s=det_time, rcs_evaluations=evaluations),
        ModeCost(
            mode="quasi",
            wall_time_s=qd_time,
            rcs_evaluations=count if rcs_fit is not None else 0,
            rcs_draws=evaluations,
            setup_time_s=setup_time,
        ),
    ]
    logger.info(
        "%s n=%d: deterministic %.2f s (%d RCS evaluations), quasi %.2f s (%d draws) + %.2f s dataset",
        object_kind,
        n,
        det_time,
        evaluations,
        qd_time,
        evaluations,
        setup_time,
    )

    path_loss = stats.cvm_two_sample(
        det.path_loss_db, qd.path_loss_db, n_permutations, seed, alpha, threads, label=f"{object_kind} path loss"
    )
    delay = stats.cvm_two_sample(
        det.pooled_excess_delay_ns,
        qd.pooled_excess_delay_ns,
        n_permutations,
        seed,
        alpha,
        threads,
        label=f"{object_kind} excess delay",
    )
    return ComparisonResult(
        object_kind=object_kind,
        n_objects=n,
        replications=replications,
        master_seed=seed,
        quasi_law=law,
        rcs_fit=rcs_fit,
        path_loss=path_loss,
        excess_delay=delay,
        costs=costs,
    )
