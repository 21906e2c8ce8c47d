import math
from typing import Annotated, Literal, Optional

from fastapi import APIRouter
from pydantic import BaseModel, Field

from app import config as settings
from app.models import OBJECT_ALIASES, REFERENCE_RCS, ComparisonResult, FitResult, LogisticLaw, McExperiment, Scene
from app.services import montecarlo, stats
from app.services.rcs import dataset_for_scene
from app.services.scene import default_scene, default_scene_document, load_scene

router = APIRouter()


class SceneRequest(BaseModel):
    # scene YAML; the default scene when omitted
    config: Optional[str] = None
    seed: int = Field(settings.DEFAULT_SEED, ge=0)


class DatasetRequest(SceneRequest):
    object: Literal["pedestrian", "car", "parked_car", "lamppost"] = "pedestrian"
    count: int = Field(settings.DATASET_COUNT, ge=1, le=200_000)
    angle_source: Literal["placement", "coverage"] = "placement"


class DatasetResponse(BaseModel):
    object: str
    angle_source: str
    count: int
    clamped: int
    fit: FitResult
    reference: Optional[LogisticLaw] = None


class RunRequest(SceneRequest):
    object: Literal["pedestrian", "car", "parked_car"] = "pedestrian"
    mode: Literal["deterministic", "quasi"] = "deterministic"
    n_values: list[Annotated[int, Field(ge=1, le=10)]] = Field(default_factory=lambda: [1], min_length=1)
    replications: int = Field(settings.DEFAULT_REPLICATIONS, ge=1, le=10_000)
    dataset_count: int = Field(settings.DATASET_COUNT, ge=8)
    include_los_reflections: bool = False


class CompareRequest(SceneRequest):
    object: Literal["pedestrian", "car", "parked_car"] = "pedestrian"
    n: int = Field(5, ge=1, le=10)
    replications: int = Field(settings.DEFAULT_REPLICATIONS, ge=8, le=10_000)
    alpha: float = Field(settings.ALPHA, gt=0, lt=1)
    permutations: int = Field(settings.N_PERMUTATIONS, ge=1)
    dataset_count: int = Field(settings.DATASET_COUNT, ge=8)
    quasi_law: Optional[LogisticLaw] = None
    shift_db: float = 0.0
    quasi_seed: Optional[int] = Field(None, ge=0)
    include_los_reflections: bool = False


def _scene(req: SceneRequest) -> Scene:
    return load_scene(req.config)


def _finite(row: dict) -> dict:
    """Refused fits come back as NaN; JSON gets null."""
    return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in row.items()}


@router.get("/scene/default")
def get_default_scene():
    return {"document": default_scene_document(), "scene": default_scene().model_dump(mode="json")}


@router.post("/rcs/dataset", response_model=DatasetResponse)
def post_rcs_dataset(req: DatasetRequest):
    kind = OBJECT_ALIASES.get(req.object, req.object)
    samples = dataset_for_scene(_scene(req), kind, req.count, req.seed, source=req.angle_source, threads=settings.THREADS)
    fit = stats.fit_logistic([s.rcs_dbsm for s in samples])
    reference = REFERENCE_RCS.get(kind)
    return DatasetResponse(
        object=kind,
        angle_source=req.angle_source,
        count=len(samples),
        clamped=sum(s.clamped for s in samples),
        fit=fit,
        reference=LogisticLaw(location_dbsm=reference[0], scale_dbsm=reference[1]) if reference else None,
    )


@router.post("/runs")
def post_run(req: RunRequest):
    scene = _scene(req)
    kind = OBJECT_ALIASES[req.object]
    law = None
    if req.mode == "quasi":
        source, _ = montecarlo.build_quasi_source(scene, kind, req.dataset_count, req.seed, threads=settings.THREADS)
        law = source.law
    exp = McExperiment(
        scene=scene,
        object_kind=kind,
        replications=req.replications,
        mode=req.mode,
        master_seed=req.seed,
        quasi_law=law,
        include_los_reflections=req.include_los_reflections,
    )
    results = montecarlo.run_sweep(exp, sorted(set(req.n_values)))
    return {
        "object": kind,
        "mode": req.mode,
        "quasi_law": law,
        "summary": [_finite(montecarlo.summarize(results[n])) for n in sorted(results)],
    }


@router.post("/compare", response_model=ComparisonResult)
def post_compare(req: CompareRequest):
    return montecarlo.compare_modes(
        _scene(req),
        OBJECT_ALIASES[req.object],
        req.n,
        req.replications,
        req.seed,
        alpha=req.alpha,
        n_permutations=req.permutations,
        law=req.quasi_law,
        shift_db=req.shift_db,
        quasi_seed=req.quasi_seed,
        dataset_count=req.dataset_count,
        include_los_reflections=req.include_los_reflections,
    )
