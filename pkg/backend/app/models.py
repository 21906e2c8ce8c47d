from __future__ import annotations

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.exceptions import SceneValidationError

Vec3 = tuple[float, float, float]
ObjectKind = Literal["pedestrian", "parked_car"]
Mode = Literal["deterministic", "quasi"]

# user-facing object names
OBJECT_ALIASES: dict[str, ObjectKind] = {"pedestrian": "pedestrian", "car": "parked_car", "parked_car": "parked_car"}

# published logistic RCS laws (location, scale) in dBsm, reported next to fitted ones
REFERENCE_RCS: dict[str, tuple[float, float]] = {"pedestrian": (6.17, 3.9), "parked_car": (11.0, 4.3)}


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class SurfaceModel(_Frozen):
    """
    Irregular object surface. Each face is cut into cells of `tile_size_m`; a
    cell is split into 4**k tiles with k uniform in [0, levels). Side tiles get
    an elevation uniform in `side_elevation_deg` and an azimuth within
    `side_azimuth_spread_deg` of the face normal, top tiles a tilt of at most
    `top_tilt_deg`. The object heading is uniform within ±`heading_spread_deg`
    of the street axis, drawn per evaluation. σ is the mean over `band_looks`
    frequencies spread evenly across `bandwidth_hz` around the carrier.
    """

    tile_size_m: float = 0.2
    levels: int = Field(4, ge=1, le=6)
    side_elevation_deg: tuple[float, float] = (-5.0, 40.0)
    side_azimuth_spread_deg: float = Field(45.0, ge=0, le=180)
    top_tilt_deg: float = Field(45.0, ge=0, le=90)
    heading_spread_deg: float = Field(180.0, ge=0, le=180)
    band_looks: int = Field(2, ge=1, le=16)
    bandwidth_hz: float = Field(2e9, ge=0)
    mesh_seed: int = Field(1, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.tile_size_m <= 0:
            raise SceneValidationError("tile size > 0")
        lo, hi = self.side_elevation_deg
        if not -90 < lo < hi < 90:
            raise SceneValidationError("-90 < elevation low < elevation high < 90")
        return self


PEDESTRIAN_SURFACE = SurfaceModel()
CAR_SURFACE = SurfaceModel(
    tile_size_m=0.3, side_elevation_deg=(-5.0, 30.0), side_azimuth_spread_deg=90.0, heading_spread_deg=5.0
)


class BoxDimensions(_Frozen):
    length_m: float
    width_m: float
    height_m: float
    # None is a flat five-face box
    surface: Optional[SurfaceModel] = None

    @model_validator(mode="after")
    def _positive(self):
        if min(self.length_m, self.width_m, self.height_m) <= 0:
            raise SceneValidationError("box dimensions > 0")
        return self


class LamppostSpec(_Frozen):
    radius_m: float = 0.1
    length_m: float = 3.0
    spacing_m: float = 32.0
    count: int = 10
    line_offsets_m: tuple[float, float] = (2.0, 14.0)


class PlacementRanges(_Frozen):
    """Monte-Carlo placement ranges for object centres."""

    x_range_m: tuple[float, float] = (-75.0, 75.0)
    pedestrian_y_ranges_m: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 2.0), (14.0, 16.0))
    car_lanes_y_m: tuple[float, float] = (3.0, 13.0)
    z_m: float = 1.0


class CoverageParams(_Frozen):
    delta_z_m: float
    strip_near_m: float
    strip_far_m: float
    canyon_length_m: float
    strip_width_m: float
    # derived from a and L1 when omitted
    phi0_rad: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if not 0 < self.strip_near_m < self.strip_far_m:
            raise SceneValidationError("0 < a < b")
        if self.canyon_length_m <= 0:
            raise SceneValidationError("L1 > 0")
        if self.strip_width_m <= 0:
            raise SceneValidationError("W2 > 0")
        if self.delta_z_m == 0:
            raise SceneValidationError("delta_z != 0")
        if abs((self.strip_far_m - self.strip_near_m) - self.strip_width_m) > 1e-9:
            raise SceneValidationError("W2 = b - a")
        if self.phi0_rad is not None and not 0 <= self.phi0_rad < math.pi / 2:
            raise SceneValidationError("0 <= phi0 < pi/2")
        return self

    @property
    def phi0(self) -> float:
        if self.phi0_rad is not None:
            return self.phi0_rad
        return math.atan2(2.0 * self.strip_near_m, self.canyon_length_m)


class CoverageSection(_Frozen):
    tx: CoverageParams = CoverageParams(
        delta_z_m=2.5, strip_near_m=2.0, strip_far_m=4.0, canyon_length_m=150.0, strip_width_m=2.0
    )
    rx: CoverageParams = CoverageParams(
        delta_z_m=0.5, strip_near_m=13.0, strip_far_m=15.0, canyon_length_m=150.0, strip_width_m=2.0
    )


class Scene(_Frozen):
    frequency_hz: float = 60e9
    street_length_m: float = 150.0
    street_width_m: float = 12.0
    sidewalk_width_m: float = 2.0
    wall_y_positions_m: tuple[float, float] = (0.0, 16.0)
    wall_thickness_m: float = 0.1
    # None means infinitely tall walls
    wall_height_m: Optional[float] = None
    wall_rel_permittivity: float = 3.26
    ground_rel_permittivity: float = 6.0
    tx_position_m: Vec3 = (0.0, 2.0, 3.5)
    rx_position_m: Vec3 = (0.0, 15.0, 1.5)
    tx_gain_dbi: float = 0.0
    rx_gain_dbi: float = 0.0
    lamppost: LamppostSpec = LamppostSpec()
    pedestrian: BoxDimensions = BoxDimensions(length_m=0.4, width_m=0.4, height_m=1.8, surface=PEDESTRIAN_SURFACE)
    parked_car: BoxDimensions = BoxDimensions(length_m=4.55, width_m=1.77, height_m=1.24, surface=CAR_SURFACE)
    placement: PlacementRanges = PlacementRanges()
    coverage: CoverageSection = CoverageSection()

    @model_validator(mode="after")
    def _check(self):
        if self.frequency_hz <= 0:
            raise SceneValidationError("frequency > 0")
        lengths = {
            "street_length_m": self.street_length_m,
            "street_width_m": self.street_width_m,
            "sidewalk_width_m": self.sidewalk_width_m,
            "wall_thickness_m": self.wall_thickness_m,
            "lamppost.radius_m": self.lamppost.radius_m,
            "lamppost.length_m": self.lamppost.length_m,
            "lamppost.spacing_m": self.lamppost.spacing_m,
        }
        for name, value in lengths.items():
            if value <= 0:
                raise SceneValidationError("lengths > 0", f"lengths > 0 ({name} = {value})")
        if self.wall_height_m is not None and self.wall_height_m <= 0:
            raise SceneValidationError("lengths > 0", "lengths > 0 (wall_height_m)")
        if self.lamppost.count < 0:
            raise SceneValidationError("lamppost count >= 0")
        if self.wall_rel_permittivity < 1 or self.ground_rel_permittivity < 1:
            raise SceneValidationError("permittivity >= 1")
        y0, y1 = self.wall_y_positions_m
        if not y0 < y1:
            raise SceneValidationError("wall_y_positions_m ordered")
        if abs(self.street_width_m + 2 * self.sidewalk_width_m - (y1 - y0)) > 1e-9:
            raise SceneValidationError("W1 + 2*W2 = Y_w[1] - Y_w[0]")
        for name, pos in (("tx", self.tx_position_m), ("rx", self.rx_position_m)):
            if not y0 < pos[1] < y1:
                raise SceneValidationError("antenna between walls", f"{name} must satisfy Y_w[0] < y < Y_w[1]")
        return self


class BoxObject(_Frozen):
    kind: ObjectKind
    length_m: float
    width_m: float
    height_m: float
    center_position_m: Vec3
    conductor: bool = True

    @model_validator(mode="after")
    def _check(self):
        if min(self.length_m, self.width_m, self.height_m) <= 0:
            raise SceneValidationError("box dimensions > 0")
        if self.center_position_m[2] - self.height_m / 2 < -1e-12:
            raise SceneValidationError("box base z >= 0")
        return self


class Cylinder(_Frozen):
    radius_m: float
    length_m: float
    base_position_m: Vec3

    @model_validator(mode="after")
    def _check(self):
        if self.radius_m <= 0 or self.length_m <= 0:
            raise SceneValidationError("cylinder dimensions > 0")
        return self

    @property
    def center_position_m(self) -> Vec3:
        x, y, z = self.base_position_m
        return (x, y, z + self.length_m / 2)


class LogisticLaw(_Frozen):
    location_dbsm: float
    scale_dbsm: float = Field(gt=0)


class FitResult(BaseModel):
    family: Literal["logistic", "weibull", "lognormal"]
    params: dict[str, float]
    loglik: float
    sample_count: int
    iterations: int = 0
    degenerate: bool = False


class GofResult(BaseModel):
    label: Optional[str] = None
    T: float = Field(ge=0)
    p_value: float = Field(ge=0, le=1)
    n_permutations: int
    alpha: float
    decision: Literal["pass", "reject"]
    asymptotic_p_value: Optional[float] = None
    x_count: int
    y_count: int

    @property
    def passed(self) -> bool:
        return self.decision == "pass"


class McExperiment(BaseModel):
    scene: Scene = Scene()
    object_kind: ObjectKind = "pedestrian"
    n_objects: int = Field(1, ge=1, le=10)
    replications: int = Field(1000, ge=1)
    mode: Mode = "deterministic"
    master_seed: int = Field(2023, ge=0)
    # quasi mode only; None means "fit from a deterministic dataset"
    quasi_law: Optional[LogisticLaw] = None
    include_los_reflections: bool = False


class RunManifest(BaseModel):
    command: str
    arguments: dict
    config: dict
    master_seed: int
    artifacts: list[str] = []
    tool_version: str
    timestamp: str


class ModeCost(BaseModel):
    """Compute spent by one mode of a comparison."""

    mode: Mode
    wall_time_s: float = Field(ge=0)
    # physical-optics or closed-form σ evaluations
    rcs_evaluations: int = Field(0, ge=0)
    # σ values drawn from the logistic law
    rcs_draws: int = Field(0, ge=0)
    # dataset generation and fit feeding the quasi law, not part of wall_time_s
    setup_time_s: float = Field(0.0, ge=0)


class ComparisonResult(BaseModel):
    """Deterministic vs quasi-deterministic outcome for one object kind and n."""

    object_kind: ObjectKind
    n_objects: int
    replications: int
    master_seed: int
    quasi_law: LogisticLaw
    # logistic fit of the RCS dataset behind quasi_law, before any override or shift
    rcs_fit: Optional[FitResult] = None
    path_loss: GofResult
    excess_delay: GofResult
    costs: list[ModeCost] = []

    @property
    def passed(self) -> bool:
        return self.path_loss.passed and self.excess_delay.passed
