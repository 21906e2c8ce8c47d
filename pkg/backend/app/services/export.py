# backend/app/services/export.py
"""
Output files: Monte-Carlo sample CSVs, JSON reports and the run manifest.
Column names and JSON fields are listed in docs/SCHEMAS.md.
"""
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app import config
from app.models import RunManifest, Scene
from app.services.montecarlo import McResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.json"


def write_json(report: Union[BaseModel, dict, list], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(report, BaseModel):
        text = report.model_dump_json(indent=2)
    else:
        text = json.dumps(_finite(report), indent=2, default=_jsonable, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _finite(value: Any):
    """NaN and infinities become null, JSON has no literal for them."""
    if isinstance(value, BaseModel):
        return _finite(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _jsonable(value: Any):
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def result_stem(result: McResult) -> str:
    return f"{result.object_kind}_{result.mode}_n{result.n_objects}"


def write_mc_result(result: McResult, out_dir: PathLike) -> list[Path]:
    """Path loss per replication and excess delay per (replication, object)."""
    out_dir = Path(out_dir)
    stem = result_stem(result)
    path_loss = pd.DataFrame(
        {"replication": np.arange(result.replications), "path_loss_db": result.path_loss_db}
    )
    reps, n = result.excess_delay_ns.shape
    delays = pd.DataFrame(
        {
            "replication": np.repeat(np.arange(reps), n),
            "object_index": np.tile(np.arange(n), reps),
            "excess_delay_ns": result.excess_delay_ns.ravel(),
        }
    )
    return [
        write_csv(path_loss, out_dir / f"{stem}_path_loss.csv"),
        write_csv(delays, out_dir / f"{stem}_excess_delay.csv"),
    ]


def write_manifest(
    out_dir: PathLike,
    command: str,
    arguments: dict,
    scene: Scene,
    master_seed: int,
    artifacts: list[Path],
) -> Path:
    out_dir = Path(out_dir)
    manifest = RunManifest(
        command=command,
        arguments=arguments,
        config=scene.model_dump(mode="json"),
        master_seed=master_seed,
        artifacts=sorted(str(Path(a).relative_to(out_dir)) for a in artifacts),
        tool_version=config.TOOL_VERSION,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    path = write_json(manifest, out_dir / MANIFEST_NAME)
    logger.info("wrote %s (%d artifacts)", path, len(manifest.artifacts))
    return path


def read_manifest(path: PathLike) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
