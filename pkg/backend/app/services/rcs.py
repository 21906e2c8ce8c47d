# backend/app/services/rcs.py
"""
Bistatic radar cross section of perfectly conducting scatterers.

Flat facets use scalar Physical Optics with Gordon's reduction of the surface
integral to a sum over polygon edges. Lampposts use the closed-form finite
cylinder. σ = 4π |S|², where S (metres) is the coherent sum of facet
amplitudes.

Pedestrians and cars default to an irregular surface: many small tilted
rectangular tiles (`TileMesh`), a random heading per evaluation and σ averaged
over a few frequencies across the channel band. See `SurfaceModel`.

Directions follow the propagation: `incident_direction` points from TX toward
the scatterer, `scattered_direction` from the scatterer toward RX.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Protocol, Union

import numpy as np
import pandas as pd

from app import rng as rngs
from app.exceptions import GeometryError
from app.models import BoxDimensions, BoxObject, Cylinder, ObjectKind, Scene, SurfaceModel
from app.services import coverage
from app.services.em import C0
from app.services.scene import draw_placements, object_box, wavelength

logger = logging.getLogger(__name__)

RCS_FLOOR_DBSM = -100.0
RCS_FLOOR_M2 = 10 ** (RCS_FLOOR_DBSM / 10)

# below this k·|q_t|·D the edge sum is replaced by the area limit
_SPECULAR_LIMIT = 1e-4


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise GeometryError("zero-length direction")
    return v / norm


@dataclass(frozen=True, eq=False)
class BistaticGeometry:
    incident_direction: np.ndarray
    scattered_direction: np.ndarray
    wavelength_m: float

    def __post_init__(self):
        for name in ("incident_direction", "scattered_direction"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise GeometryError(f"{name} must be a unit 3-vector")
            object.__setattr__(self, name, v)
        if self.wavelength_m <= 0:
            raise GeometryError("wavelength must be > 0")

    @classmethod
    def from_points(cls, tx, target, rx, wavelength_m: float) -> "BistaticGeometry":
        tx, target, rx = (np.asarray(p, dtype=float) for p in (tx, target, rx))
        return cls(_unit(target - tx), _unit(rx - target), wavelength_m)

    def reversed(self) -> "BistaticGeometry":
        """Same path run from RX to TX."""
        return BistaticGeometry(-self.scattered_direction, -self.incident_direction, self.wavelength_m)

    def angles(self) -> tuple[float, float, float, float]:
        """(θ_i, φ_i, θ_s, φ_s): polar angle from +z and azimuth from +x of both directions."""
        out = []
        for v in (self.incident_direction, self.scattered_direction):
            out.append(math.acos(max(-1.0, min(1.0, v[2]))))
            out.append(math.atan2(v[1], v[0]) % (2 * math.pi))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class Polygon:
    vertices: np.ndarray
    normal: np.ndarray
    area: float

    @classmethod
    def from_vertices(cls, vertices) -> "Polygon":
        """Planar polygon; the outward normal follows the vertex order (right-hand rule)."""
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise GeometryError("polygon needs at least three 3-D vertices")
        nxt = np.roll(v, -1, axis=0)
        newell = np.sum(np.cross(v, nxt), axis=0)
        twice_area = np.linalg.norm(newell)
        if twice_area == 0:
            return cls(v, np.array([0.0, 0.0, 1.0]), 0.0)
        normal = newell / twice_area
        diameter = max(np.linalg.norm(a - b) for a in v for b in v)
        offsets = (v - v.mean(axis=0)) @ normal
        if np.max(np.abs(offsets)) > 1e-9 * diameter:
            raise GeometryError("polygon is not planar")
        return cls(v, normal, 0.5 * twice_area)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


@dataclass(frozen=True, eq=False)
class FacetMesh:
    polygons: tuple[Polygon, ...]

    def rotated(self, rotation: np.ndarray) -> "FacetMesh":
        return FacetMesh(tuple(Polygon.from_vertices(p.vertices @ rotation.T) for p in self.polygons))


@dataclass(frozen=True, eq=False)
class RcsSample:
    geometry: BistaticGeometry
    rcs_dbsm: float
    clamped: bool = False


def po_polygon_field(poly: Polygon, g: BistaticGeometry) -> complex:
    """
    PO amplitude of one flat PEC facet. A facet contributes only when it is lit
    by the incident wave and faces the receiver.
    """
    n = poly.normal
    i_hat, s_hat = g.incident_direction, g.scattered_direction
    if poly.area == 0 or n @ i_hat >= 0 or n @ s_hat <= 0:
        return 0j

    k = 2 * math.pi / g.wavelength_m
    q = s_hat - i_hat
    q_t = q - (q @ n) * n
    obliquity = 0.5 * (n @ q)
    v = poly.vertices
    diameter = 2 * float(np.max(np.linalg.norm(v - poly.centroid, axis=1)))

    qt2 = float(q_t @ q_t)
    if k * math.sqrt(qt2) * diameter < _SPECULAR_LIMIT:
        integral = poly.area * np.exp(1j * k * (q @ poly.centroid))
    else:
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        mids = v + 0.5 * edges
        along = (edges @ q) / np.where(lengths > 0, lengths, 1.0)
        weights = edges @ np.cross(n, q_t)
        terms = weights * np.exp(1j * k * (mids @ q)) * np.sinc(k * along * lengths / (2 * math.pi))
        integral = terms.sum() / (1j * k * qt2)
    return complex(obliquity * integral / g.wavelength_m)


def mesh_rcs(mesh: FacetMesh, g: BistaticGeometry) -> float:
    if not mesh.polygons:
        raise GeometryError("empty mesh")
    total = sum((po_polygon_field(p, g) for p in mesh.polygons), 0j)
    return 4 * math.pi * abs(total) ** 2


_validity_warned: set[tuple[float, float, float]] = set()


def cylinder_rcs(cyl: Cylinder, g: BistaticGeometry) -> float:
    """
    Finite PEC cylinder, vertical axis, high-frequency closed form:

        σ = (2π R L² / λ) √(sin θ_i sin θ_s) cos(ψ/2) sinc²(k L (cos θ_i + cos θ_s) / 2)

    θ_i, θ_s are the angles of the directions toward TX and toward RX from the
    axis, ψ the azimuth between them. Peak 2πRL²/λ at broadside backscatter.
    """
    lam = g.wavelength_m
    key = (cyl.radius_m, cyl.length_m, lam)
    if min(cyl.radius_m, cyl.length_m) < 10 * lam and key not in _validity_warned:
        _validity_warned.add(key)
        logger.warning("cylinder R=%.3g m L=%.3g m is under 10 wavelengths; closed form is approximate", *key[:2])

    to_tx = -g.incident_direction
    to_rx = g.scattered_direction
    sin_i = math.hypot(to_tx[0], to_tx[1])
    sin_s = math.hypot(to_rx[0], to_rx[1])
    if sin_i == 0 or sin_s == 0:
        return 0.0
    cos_psi = (to_tx[0] * to_rx[0] + to_tx[1] * to_rx[1]) / (sin_i * sin_s)
    half_psi = math.sqrt(max(0.0, 0.5 * (1 + cos_psi)))
    k = 2 * math.pi / lam
    arg = k * cyl.length_m * (to_tx[2] + to_rx[2]) / 2
    sinc = float(np.sinc(arg / math.pi))
    peak = 2 * math.pi * cyl.radius_m * cyl.length_m**2 / lam
    return peak * math.sqrt(sin_i * sin_s) * half_psi * sinc**2


def _rect(center, u, v) -> Polygon:
    c = np.asarray(center, dtype=float)
    return Polygon.from_vertices([c - u - v, c + u - v, c + u + v, c - u + v])


def box_mesh(box: BoxObject) -> FacetMesh:
    """Five faces of an axis-aligned box; the face on the ground is left out."""
    c = np.asarray(box.center_position_m, dtype=float)
    hx = np.array([box.length_m / 2, 0, 0])
    hy = np.array([0, box.width_m / 2, 0])
    hz = np.array([0, 0, box.height_m / 2])
    faces = (
        _rect(c + hx, hy, hz),
        _rect(c - hx, hz, hy),
        _rect(c + hy, hz, hx),
        _rect(c - hy, hx, hz),
        _rect(c + hz, hx, hy),
    )
    return FacetMesh(faces)


def cylinder_mesh(cyl: Cylinder, segments: int = 72) -> FacetMesh:
    """Faceted side wall plus the top cap."""
    if segments < 3:
        raise GeometryError("cylinder mesh needs at least 3 segments")
    x0, y0, z0 = cyl.base_position_m
    angles = np.linspace(0, 2 * math.pi, segments, endpoint=False)
    ring = np.column_stack([x0 + cyl.radius_m * np.cos(angles), y0 + cyl.radius_m * np.sin(angles)])
    z1 = z0 + cyl.length_m
    faces = []
    for a, b in zip(ring, np.roll(ring, -1, axis=0)):
        faces.append(Polygon.from_vertices([[*a, z0], [*b, z0], [*b, z1], [*a, z1]]))
    faces.append(Polygon.from_vertices([[x, y, z1] for x, y in ring]))
    return FacetMesh(tuple(faces))


@dataclass(frozen=True, eq=False)
class TileMesh:
    """Flat rectangles as (N, 3) arrays: centres, unit normals and the two half-axis vectors."""

    centers: np.ndarray
    normals: np.ndarray
    half_u: np.ndarray
    half_v: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(a) for a in (self.centers, self.normals, self.half_u, self.half_v)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2 or next(iter(shapes))[1] != 3:
            raise GeometryError("tile arrays must share one (N, 3) shape")

    @property
    def size(self) -> int:
        return len(self.centers)

    @property
    def areas(self) -> np.ndarray:
        return 4 * np.linalg.norm(self.half_u, axis=1) * np.linalg.norm(self.half_v, axis=1)


def tile_fields(mesh: TileMesh, g: BistaticGeometry, wavelengths_m) -> np.ndarray:
    """
    PO amplitude S of the whole tile mesh at each wavelength. A rectangle's
    surface integral is A e^{jkq·c} sinc(kq·u) sinc(kq·v); lit-and-seen rule as
    for polygons.
    """
    i_hat, s_hat = g.incident_direction, g.scattered_direction
    lit = (mesh.normals @ i_hat < 0) & (mesh.normals @ s_hat > 0)
    lams = np.atleast_1d(np.asarray(wavelengths_m, dtype=float))
    if not lit.any():
        return np.zeros(lams.size, dtype=complex)

    q = s_hat - i_hat
    weight = 0.5 * (mesh.normals[lit] @ q) * mesh.areas[lit]
    k = (2 * math.pi / lams)[:, None]
    phase = np.exp(1j * k * (mesh.centers[lit] @ q))
    # np.sinc(x) = sin(πx)/(πx)
    shape = np.sinc(k * (mesh.half_u[lit] @ q) / math.pi) * np.sinc(k * (mesh.half_v[lit] @ q) / math.pi)
    return (phase * shape) @ weight / lams


def _rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class RoughObject:
    """Tile mesh of one object type plus the per-evaluation heading and band averaging."""

    mesh: TileMesh
    heading_spread_rad: float = 0.0
    band_looks: int = 1
    bandwidth_hz: float = 0.0

    @classmethod
    def for_surface(cls, dims: BoxDimensions, surface: SurfaceModel) -> "RoughObject":
        return cls(
            rough_box_mesh(dims.length_m, dims.width_m, dims.height_m, surface),
            math.radians(surface.heading_spread_deg),
            surface.band_looks,
            surface.bandwidth_hz,
        )

    def wavelengths(self, wavelength_m: float) -> np.ndarray:
        """Carrier wavelength, or `band_looks` wavelengths evenly spread over the band."""
        if self.band_looks == 1 or self.bandwidth_hz == 0:
            return np.array([wavelength_m])
        f0 = C0 / wavelength_m
        offsets = self.bandwidth_hz * (np.linspace(0.0, 1.0, self.band_looks) - 0.5)
        return C0 / (f0 + offsets)

    def sigma(self, g: BistaticGeometry, rng: Optional[np.random.Generator] = None) -> float:
        """Without a generator the object keeps its nominal heading."""
        if rng is not None and self.heading_spread_rad > 0:
            # turning the object by h is turning both directions by -h
            turn = _rotation_z(-rng.uniform(-self.heading_spread_rad, self.heading_spread_rad))
            g = BistaticGeometry(turn @ g.incident_direction, turn @ g.scattered_direction, g.wavelength_m)
        fields = tile_fields(self.mesh, g, self.wavelengths(g.wavelength_m))
        return float(np.mean(4 * math.pi * np.abs(fields) ** 2))


def _tile_normals(rng: np.random.Generator, count: int, face_normal: np.ndarray, surface: SurfaceModel) -> np.ndarray:
    if face_normal[2] > 0.5:
        # top: tilt uniform in solid angle up to the cap
        cos_t = 1 - rng.random(count) * (1 - math.cos(math.radians(surface.top_tilt_deg)))
        sin_t = np.sqrt(1 - cos_t**2)
        phi = rng.uniform(0, 2 * math.pi, count)
        return np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
    lo, hi = np.radians(surface.side_elevation_deg)
    elevation = rng.uniform(lo, hi, count)
    spread = math.radians(surface.side_azimuth_spread_deg)
    azimuth = math.atan2(face_normal[1], face_normal[0]) + rng.uniform(-spread, spread, count)
    return np.column_stack(
        [np.cos(elevation) * np.cos(azimuth), np.cos(elevation) * np.sin(azimuth), np.sin(elevation)]
    )


@lru_cache(maxsize=16)
def rough_box_mesh(length_m: float, width_m: float, height_m: float, surface: SurfaceModel) -> TileMesh:
    """
    Tiles over the five exposed faces of a box centred at (0, 0, h/2). The
    layout comes from the (mesh_seed, 0, surface) substream, so one surface
    model always gives the same mesh.
    """
    rng = rngs.substream(surface.mesh_seed, 0, rngs.SURFACE)
    hx = np.array([length_m / 2, 0, 0])
    hy = np.array([0, width_m / 2, 0])
    hz = np.array([0, 0, height_m / 2])
    c = hz.copy()
    faces = (
        (c + hx, hx, hy, hz),
        (c - hx, -hx, hz, hy),
        (c + hy, hy, hz, hx),
        (c - hy, -hy, hx, hz),
        (c + hz, hz, hx, hy),
    )
    centers, normals, half_u, half_v = [], [], [], []
    for center, outward, u, v in faces:
        n_face = outward / np.linalg.norm(outward)
        nu = math.ceil(2 * np.linalg.norm(u) / surface.tile_size_m - 1e-9)
        nv = math.ceil(2 * np.linalg.norm(v) / surface.tile_size_m - 1e-9)
        cell_u, cell_v = u / nu, v / nv
        for a in range(nu):
            for b in range(nv):
                cell = center + (2 * (a + 0.5) / nu - 1) * u + (2 * (b + 0.5) / nv - 1) * v
                split = 2 ** int(rng.integers(surface.levels))
                offsets = 2 * (np.arange(split) + 0.5) / split - 1
                ou, ov = np.meshgrid(offsets, offsets, indexing="ij")
                tiles = cell + ou.reshape(-1, 1) * cell_u + ov.reshape(-1, 1) * cell_v
                tilted = _tile_normals(rng, len(tiles), n_face, surface)
                # keep each tile's extent, lay its axes in the tilted plane
                u_dir = cell_u / np.linalg.norm(cell_u)
                axis_u = u_dir - (tilted @ u_dir)[:, None] * tilted
                axis_u /= np.linalg.norm(axis_u, axis=1, keepdims=True)
                axis_v = np.cross(tilted, axis_u)
                centers.append(tiles)
                normals.append(tilted)
                half_u.append(axis_u * np.linalg.norm(cell_u) / split)
                half_v.append(axis_v * np.linalg.norm(cell_v) / split)
    mesh = TileMesh(*(np.vstack(parts) for parts in (centers, normals, half_u, half_v)))
    logger.debug("rough box %.2fx%.2fx%.2f m: %d tiles", length_m, width_m, height_m, mesh.size)
    return mesh


def object_target(scene: Scene, kind: ObjectKind) -> Union[FacetMesh, RoughObject]:
    """Scattering model of one object type: its irregular surface, or the flat box when it has none."""
    dims = getattr(scene, kind)
    if dims.surface is not None:
        return RoughObject.for_surface(dims, dims.surface)
    return box_mesh(object_box(scene, kind, (0.0, 0.0, dims.height_m / 2)))


def rcs_dbsm(sigma: float) -> float:
    return 10 * math.log10(max(sigma, RCS_FLOOR_M2))


Target = Union[FacetMesh, Cylinder, RoughObject]


def sigma_of(target: Target, g: BistaticGeometry, rng: Optional[np.random.Generator] = None) -> float:
    """`rng` draws the heading of a rough object; the other targets ignore it."""
    if isinstance(target, Cylinder):
        return cylinder_rcs(target, g)
    if isinstance(target, RoughObject):
        return target.sigma(g, rng)
    return mesh_rcs(target, g)


class AngleSource(Protocol):
    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """(incident_direction, scattered_direction) for one sample."""


@dataclass(frozen=True)
class CoverageAngleSource:
    """Incident and scattered sides drawn independently from their coverage densities."""

    tx: object
    rx: object

    @classmethod
    def for_scene(cls, scene: Scene) -> "CoverageAngleSource":
        return cls(scene.coverage.tx, scene.coverage.rx)

    def draw(self, rng):
        theta_i, phi_i = coverage.sample_coverage(self.tx, rng)
        theta_s, phi_s = coverage.sample_coverage(self.rx, rng)
        incident = coverage.direction_from_antenna(self.tx, theta_i, phi_i)
        scattered = -coverage.direction_from_antenna(self.rx, theta_s, phi_s)
        return incident, scattered


@dataclass(frozen=True)
class PlacementAngleSource:
    """Both directions taken from one Monte-Carlo placement of the object."""

    scene: Scene
    kind: str = "pedestrian"

    def draw(self, rng):
        center = draw_placements(self.scene, self.kind, rng, 1)[0]
        tx = np.asarray(self.scene.tx_position_m)
        rx = np.asarray(self.scene.rx_position_m)
        return _unit(center - tx), _unit(rx - center)


def generate_rcs_dataset(
    target: Target,
    sampler: AngleSource,
    count: int,
    wavelength_m: float,
    seed: int = 0,
    threads: int = 1,
) -> list[RcsSample]:
    """
    `count` RCS samples. Sample i draws its angles, then the heading of a rough
    object, from the (seed, i) substream, so the dataset is the same for any
    thread count.
    """
    if count <= 0:
        return []

    def one(index: int) -> RcsSample:
        gen = rngs.substream(seed, index, rngs.DATASET)
        incident, scattered = sampler.draw(gen)
        g = BistaticGeometry(_unit(incident), _unit(scattered), wavelength_m)
        sigma = sigma_of(target, g, gen)
        return RcsSample(g, rcs_dbsm(sigma), sigma < RCS_FLOOR_M2)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(one, range(count), chunksize=256))
    else:
        samples = [one(i) for i in range(count)]

    clamped = sum(s.clamped for s in samples)
    if clamped:
        logger.warning("%d of %d RCS samples hit the %.0f dBsm floor", clamped, count, RCS_FLOOR_DBSM)
    logger.info("generated %d RCS samples (seed=%d)", count, seed)
    return samples


def dataset_for_scene(scene: Scene, object_name: str, count: int, seed: int, source: str = "placement", threads: int = 1):
    """
    Dataset for one of the scene's object types: 'pedestrian', 'car'/'parked_car'
    or 'lamppost'. The target stays at the origin: only directions matter to σ.
    """
    kind = "parked_car" if object_name in ("car", "parked_car") else object_name
    if kind == "lamppost":
        lamp = scene.lamppost
        target: Target = Cylinder(
            radius_m=lamp.radius_m, length_m=lamp.length_m, base_position_m=(0.0, 0.0, 0.0)
        )
        placement_kind = "pedestrian"
    elif kind in ("pedestrian", "parked_car"):
        target = object_target(scene, kind)
        placement_kind = kind
    else:
        raise GeometryError(f"unknown object {object_name!r}")

    if source == "coverage":
        sampler: AngleSource = CoverageAngleSource.for_scene(scene)
    elif source == "placement":
        sampler = PlacementAngleSource(scene, placement_kind)
    else:
        raise GeometryError(f"unknown angle source {source!r}")
    return generate_rcs_dataset(target, sampler, count, wavelength(scene), seed=seed, threads=threads)


DATASET_COLUMNS = ["theta_i", "phi_i", "theta_s", "phi_s", "rcs_dbsm"]


def dataset_frame(samples: list[RcsSample]) -> pd.DataFrame:
    rows = [(*s.geometry.angles(), s.rcs_dbsm) for s in samples]
    return pd.DataFrame(rows, columns=DATASET_COLUMNS)


def write_dataset_csv(samples: list[RcsSample], path: Union[str, Path]) -> Path:
    """Angles in radians (θ from +z, φ from +x, propagation directions), σ in dBsm."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(samples).to_csv(path, index=False, float_format="%.10g")
    return path
