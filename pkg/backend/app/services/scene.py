# backend/app/services/scene.py
"""
Street-canyon scene: YAML config in and out, derived geometry.

Coordinates: x along the street, y across it (walls at Y_w[0], Y_w[1]), z up,
ground at z = 0.
"""
import logging
from typing import Any

import numpy as np
import yaml
from pydantic import ValidationError

from app.exceptions import PlacementError, SceneParseError, SceneValidationError
from app.models import BoxObject, Cylinder, ObjectKind, Scene, Vec3
from app.services.em import C0

logger = logging.getLogger(__name__)

# document path -> Scene field
_DOCUMENT_FIELDS: dict[str, str] = {
    "frequency_hz": "frequency_hz",
    "antennas.tx.position_m": "tx_position_m",
    "antennas.tx.gain_dbi": "tx_gain_dbi",
    "antennas.rx.position_m": "rx_position_m",
    "antennas.rx.gain_dbi": "rx_gain_dbi",
    "street.length_m": "street_length_m",
    "street.width_m": "street_width_m",
    "street.sidewalk_width_m": "sidewalk_width_m",
    "walls.y_positions_m": "wall_y_positions_m",
    "walls.thickness_m": "wall_thickness_m",
    "walls.height_m": "wall_height_m",
    "walls.rel_permittivity": "wall_rel_permittivity",
    "ground.rel_permittivity": "ground_rel_permittivity",
    "lamppost": "lamppost",
    "objects.pedestrian": "pedestrian",
    "objects.parked_car": "parked_car",
    "placement": "placement",
    "coverage": "coverage",
}
_SCENE_FIELDS = {field: path for path, field in _DOCUMENT_FIELDS.items()}


def _flatten(node: dict, prefix: str, out: dict[str, Any]) -> None:
    for key, value in node.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if path in _DOCUMENT_FIELDS:
            out[_DOCUMENT_FIELDS[path]] = value
        elif isinstance(value, dict) and any(p.startswith(path + ".") for p in _DOCUMENT_FIELDS):
            _flatten(value, path, out)
        else:
            raise SceneParseError(path, "unknown field")


def _error_path(loc: tuple) -> str:
    if not loc:
        return "document"
    head = _SCENE_FIELDS.get(str(loc[0]), str(loc[0]))
    return ".".join([head, *(str(part) for part in loc[1:])])


def load_scene(config_text: str | None) -> Scene:
    """
    Parse a scene document. Missing keys take their defaults, so an empty document
    is the default scene.
    """
    try:
        doc = yaml.safe_load(config_text) if config_text else None
    except yaml.YAMLError as exc:
        raise SceneParseError("document", f"not valid YAML ({exc})") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SceneParseError("document", "top level must be a mapping")

    flat: dict[str, Any] = {}
    _flatten(doc, "", flat)
    if isinstance(flat.get("wall_height_m"), str) and flat["wall_height_m"].strip().lower() == "infinite":
        flat["wall_height_m"] = None

    try:
        scene = Scene.model_validate(flat)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise SceneParseError(_error_path(tuple(first["loc"])), first["msg"]) from exc
    logger.debug("loaded scene f0=%.3e Hz tx=%s rx=%s", scene.frequency_hz, scene.tx_position_m, scene.rx_position_m)
    return scene


def dump_scene(scene: Scene) -> str:
    flat = scene.model_dump(mode="json")
    doc: dict[str, Any] = {}
    for path, field in _DOCUMENT_FIELDS.items():
        node = doc
        *parents, leaf = path.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = flat[field]
    return yaml.safe_dump(doc, sort_keys=False)


def default_scene() -> Scene:
    return Scene()


def default_scene_document() -> str:
    header = "# Street-canyon scenario at 60 GHz. Schema: docs/SCHEMAS.md\n"
    return header + dump_scene(default_scene())


def wavelength(scene: Scene) -> float:
    return C0 / scene.frequency_hz


def lampposts(scene: Scene) -> list[Cylinder]:
    """
    Posts alternate between the two lines; consecutive posts are d/2 apart in x
    so each line keeps spacing d. The row is centred on x = 0.
    """
    lamp = scene.lamppost
    posts = []
    half_step = lamp.spacing_m / 2
    for k in range(lamp.count):
        x = (k - (lamp.count - 1) / 2) * half_step
        y = lamp.line_offsets_m[k % 2]
        posts.append(Cylinder(radius_m=lamp.radius_m, length_m=lamp.length_m, base_position_m=(x, y, 0.0)))
    overhang = [p for p in posts if abs(p.base_position_m[0]) > scene.street_length_m / 2]
    if overhang:
        logger.warning("%d lampposts fall outside the %.1f m street", len(overhang), scene.street_length_m)
    return posts


def object_box(scene: Scene, kind: ObjectKind, center: Vec3) -> BoxObject:
    dims = scene.pedestrian if kind == "pedestrian" else scene.parked_car
    return BoxObject(
        kind=kind,
        length_m=dims.length_m,
        width_m=dims.width_m,
        height_m=dims.height_m,
        center_position_m=tuple(float(c) for c in center),
    )


def check_inside_canyon(scene: Scene, point: Vec3) -> None:
    y0, y1 = scene.wall_y_positions_m
    half = scene.street_length_m / 2
    x, y, z = point
    if not (-half <= x <= half and y0 <= y <= y1 and z >= 0):
        raise SceneValidationError("object inside canyon", f"point {point} lies outside the canyon")


def placement_lanes(scene: Scene, kind: ObjectKind) -> list[tuple[float, float]]:
    """y-intervals an object centre may occupy; car lanes are zero-width."""
    if kind == "pedestrian":
        return [tuple(r) for r in scene.placement.pedestrian_y_ranges_m]
    return [(y, y) for y in scene.placement.car_lanes_y_m]


def draw_placements(scene: Scene, kind: ObjectKind, rng: np.random.Generator, count: int) -> np.ndarray:
    """
    `count` object centres: x uniform over the placement range, lane picked with
    equal probability, y uniform inside the lane, z fixed. Returns a (count, 3) array.
    """
    x_lo, x_hi = scene.placement.x_range_m
    lanes = placement_lanes(scene, kind)
    if not x_lo < x_hi or not lanes or any(lo > hi for lo, hi in lanes):
        raise PlacementError(f"empty placement range for {kind}")
    half = scene.street_length_m / 2
    y0, y1 = scene.wall_y_positions_m
    if x_lo < -half or x_hi > half or any(lo < y0 or hi > y1 for lo, hi in lanes):
        raise PlacementError(f"placement range for {kind} leaves the canyon")

    x = rng.uniform(x_lo, x_hi, size=count)
    lane = rng.integers(0, len(lanes), size=count)
    lo = np.array([lanes[i][0] for i in lane], dtype=float)
    hi = np.array([lanes[i][1] for i in lane], dtype=float)
    y = lo + (hi - lo) * rng.random(size=count)
    z = np.full(count, scene.placement.z_m)
    return np.column_stack([x, y, z])
