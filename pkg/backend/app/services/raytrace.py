# backend/app/services/raytrace.py
"""
Multipath channel of the street canyon: line of sight, first-order specular
reflections off the ground and both walls (image method), and single
scattering off objects.

Scatter paths use the object centre as the distance/phase reference. In
deterministic mode σ comes from the object's geometry; in quasi-deterministic
mode σ in dBsm is drawn from a logistic law.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.exceptions import GeometryError
from app.models import BoxObject, Cylinder, LogisticLaw, Scene
from app.services import em
from app.services.rcs import BistaticGeometry, Target, box_mesh, rcs_dbsm, sigma_of
from app.services.scene import check_inside_canyon, lampposts, wavelength

logger = logging.getLogger(__name__)

PathKind = Literal["los", "wall_reflection", "ground_reflection", "scatter"]
Scatterer = Union[BoxObject, Cylinder]

PATH_COLUMNS = ["kind", "object_id", "r1", "r2", "delay_ns", "excess_delay_ns", "path_loss_db", "sigma_dbsm"]


@dataclass(frozen=True)
class PropagationPath:
    kind: PathKind
    amplitude: complex
    delay_s: float
    excess_delay_s: float
    r1_m: float
    # None for the direct path
    r2_m: Optional[float] = None
    object_id: Optional[str] = None
    sigma_dbsm: Optional[float] = None

    @property
    def path_loss_db(self) -> float:
        return em.path_loss_db(self.amplitude)

    @property
    def power(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class RcsSource:
    mode: Literal["deterministic", "quasi"] = "deterministic"
    law: Optional[LogisticLaw] = None
    # overrides the object's own geometry in deterministic mode
    target: Optional[Target] = None

    def __post_init__(self):
        if self.mode == "quasi" and self.law is None:
            raise GeometryError("quasi RCS source needs a logistic law")

    @classmethod
    def deterministic(cls, target: Optional[Target] = None) -> "RcsSource":
        return cls("deterministic", None, target)

    @classmethod
    def quasi(cls, law: LogisticLaw) -> "RcsSource":
        return cls("quasi", law)

    def sigma_dbsm(self, obj: Scatterer, g: BistaticGeometry, rng: Optional[np.random.Generator]) -> float:
        if self.mode == "quasi":
            if rng is None:
                raise GeometryError("quasi mode needs a random generator")
            return float(rng.logistic(self.law.location_dbsm, self.law.scale_dbsm))
        target = self.target
        if target is None:
            target = obj if isinstance(obj, Cylinder) else box_mesh(obj)
        return rcs_dbsm(sigma_of(target, g, rng))


@dataclass(frozen=True)
class ChannelSummary:
    paths: tuple[PropagationPath, ...]
    total_power: float
    coherent_power: float
    scatter_power: float

    @property
    def path_loss_db(self) -> float:
        """Non-coherent path loss over every path in the summary."""
        return _power_to_db(self.total_power)

    @property
    def scatter_path_loss_db(self) -> float:
        return _power_to_db(self.scatter_power)


def _power_to_db(power: float) -> float:
    return math.inf if power <= 0 else -10 * math.log10(power)


def _antenna_factor(scene: Scene) -> float:
    return em.gain_factor(scene.tx_gain_dbi) * em.gain_factor(scene.rx_gain_dbi)


def _phase(distance: float, lam: float) -> complex:
    return complex(np.exp(-2j * math.pi * distance / lam))


def los_distance(scene: Scene) -> float:
    r0 = math.dist(scene.tx_position_m, scene.rx_position_m)
    if r0 == 0:
        raise GeometryError("TX and RX coincide")
    return r0


def trace_los(scene: Scene) -> PropagationPath:
    lam = wavelength(scene)
    r0 = los_distance(scene)
    amp = _antenna_factor(scene) * em.friis_los_amplitude(r0, lam) * _phase(r0, lam)
    return PropagationPath("los", amp, em.delay_s(r0), 0.0, r0)


def _mirror(point: np.ndarray, axis: int, plane: float) -> np.ndarray:
    image = point.copy()
    image[axis] = 2 * plane - point[axis]
    return image


def _specular(scene: Scene, kind: PathKind, axis: int, plane: float, medium, polarization, tau0: float):
    tx = np.asarray(scene.tx_position_m, dtype=float)
    rx = np.asarray(scene.rx_position_m, dtype=float)
    image = _mirror(tx, axis, plane)
    span = rx - image
    if span[axis] == 0:
        return None
    t = (plane - image[axis]) / span[axis]
    point = image + t * span

    half = scene.street_length_m / 2
    if abs(point[0]) > half:
        logger.debug("%s specular point x=%.2f is off the street", kind, point[0])
        return None
    if axis == 1 and scene.wall_height_m is not None and point[2] > scene.wall_height_m:
        logger.debug("wall specular point z=%.2f is above the wall", point[2])
        return None

    r1 = float(np.linalg.norm(point - tx))
    r2 = float(np.linalg.norm(rx - point))
    total = r1 + r2
    incidence = math.acos(min(1.0, abs(span[axis]) / total))
    lam = wavelength(scene)
    coeff = em.reflection_coefficient(em.ReflectionQuery(incidence, polarization, medium, lam))
    amp = _antenna_factor(scene) * coeff * em.friis_los_amplitude(total, lam) * _phase(total, lam)
    return PropagationPath(kind, amp, em.delay_s(total), em.delay_s(total) - tau0, r1, r2)


def trace_reflections(scene: Scene) -> list[PropagationPath]:
    """Ground bounce, then the walls at Y_w[0] and Y_w[1]."""
    tau0 = em.delay_s(los_distance(scene))
    ground = em.HalfSpace(scene.ground_rel_permittivity)
    wall = em.Slab(scene.wall_rel_permittivity, scene.wall_thickness_m)
    candidates = [
        _specular(scene, "ground_reflection", 2, 0.0, ground, em.GROUND_POLARIZATION, tau0),
        *(
            _specular(scene, "wall_reflection", 1, y, wall, em.WALL_POLARIZATION, tau0)
            for y in scene.wall_y_positions_m
        ),
    ]
    return [p for p in candidates if p is not None]


def scatter_amplitude(sigma_m2: float, r1: float, r2: float, wavelength_m: float) -> float:
    """|a|² = σ λ² / ((4π)³ r1² r2²)."""
    return math.sqrt(sigma_m2 * wavelength_m**2 / ((4 * math.pi) ** 3 * r1**2 * r2**2))


def trace_scatter(
    scene: Scene,
    obj: Scatterer,
    source: RcsSource,
    rng: Optional[np.random.Generator] = None,
    object_id: Optional[str] = None,
) -> PropagationPath:
    center = np.asarray(obj.center_position_m, dtype=float)
    check_inside_canyon(scene, tuple(center))
    tx = np.asarray(scene.tx_position_m, dtype=float)
    rx = np.asarray(scene.rx_position_m, dtype=float)
    r1 = float(np.linalg.norm(center - tx))
    r2 = float(np.linalg.norm(rx - center))
    if r1 == 0 or r2 == 0:
        raise GeometryError(f"object {object_id or obj.center_position_m} coincides with an antenna")

    lam = wavelength(scene)
    g = BistaticGeometry.from_points(tx, center, rx, lam)
    sigma_dbsm = source.sigma_dbsm(obj, g, rng)
    sigma = 10 ** (sigma_dbsm / 10)
    total = r1 + r2
    amp = _antenna_factor(scene) * scatter_amplitude(sigma, r1, r2, lam) * _phase(total, lam)
    tau0 = em.delay_s(los_distance(scene))
    return PropagationPath("scatter", amp, em.delay_s(total), em.delay_s(total) - tau0, r1, r2, object_id, sigma_dbsm)


def assemble_channel(paths: Sequence[PropagationPath]) -> ChannelSummary:
    if not paths:
        raise GeometryError("channel needs at least one path")
    total = sum(p.power for p in paths)
    coherent = abs(sum((p.amplitude for p in paths), 0j)) ** 2
    scatter = sum(p.power for p in paths if p.kind == "scatter")
    return ChannelSummary(tuple(paths), total, coherent, scatter)


def trace_all(
    scene: Scene,
    objects: Sequence[BoxObject],
    source: RcsSource,
    rng: Optional[np.random.Generator] = None,
    include_lampposts: bool = False,
) -> list[PropagationPath]:
    """Every first-order path. Lampposts always use the deterministic closed form."""
    paths = [trace_los(scene), *trace_reflections(scene)]
    for i, obj in enumerate(objects):
        paths.append(trace_scatter(scene, obj, source, rng, f"{obj.kind}-{i}"))
    if include_lampposts:
        fixed = RcsSource.deterministic()
        for i, post in enumerate(lampposts(scene)):
            paths.append(trace_scatter(scene, post, fixed, object_id=f"lamppost-{i}"))
    return paths


def paths_frame(paths: Sequence[PropagationPath]) -> pd.DataFrame:
    rows = [
        (
            p.kind,
            p.object_id,
            p.r1_m,
            p.r2_m,
            p.delay_s * 1e9,
            p.excess_delay_s * 1e9,
            p.path_loss_db,
            p.sigma_dbsm,
        )
        for p in paths
    ]
    return pd.DataFrame(rows, columns=PATH_COLUMNS)


def write_paths_csv(paths: Sequence[PropagationPath], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    paths_frame(paths).to_csv(path, index=False, float_format="%.10g")
    return path
