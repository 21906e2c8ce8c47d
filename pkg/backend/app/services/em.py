# backend/app/services/em.py
"""
Free-space terms and Fresnel reflection for the ground (half-space) and the
walls (single lossless slab backed by free space).

Time convention e^{+jwt}: fields travelling through a medium pick up e^{-jkd},
lossy permittivities carry a negative imaginary part.
"""
import cmath
import math
from dataclasses import dataclass
from typing import Literal, Union

from app.exceptions import GeometryError

C0 = 299_792_458.0

Polarization = Literal["TE", "TM"]

# vertical E-field: in the plane of incidence for the ground, normal to it for walls
GROUND_POLARIZATION: Polarization = "TM"
WALL_POLARIZATION: Polarization = "TE"


@dataclass(frozen=True)
class HalfSpace:
    rel_permittivity: complex


@dataclass(frozen=True)
class Slab:
    rel_permittivity: complex
    thickness_m: float

    def __post_init__(self):
        if not self.thickness_m > 0:
            raise GeometryError(f"slab thickness must be > 0, got {self.thickness_m}")


@dataclass(frozen=True)
class ReflectionQuery:
    incidence_angle_rad: float
    polarization: Polarization
    medium: Union[HalfSpace, Slab]
    wavelength_m: float

    def __post_init__(self):
        if not 0 <= self.incidence_angle_rad < math.pi / 2:
            raise GeometryError(f"incidence angle {self.incidence_angle_rad} outside [0, pi/2)")
        if self.polarization not in ("TE", "TM"):
            raise GeometryError(f"unknown polarization {self.polarization!r}")
        if complex(self.medium.rel_permittivity).real < 1:
            raise GeometryError("permittivity >= 1")
        if self.wavelength_m <= 0:
            raise GeometryError("wavelength must be > 0")


def _interface(eps: complex, theta: float, polarization: Polarization) -> tuple[complex, complex]:
    """Air-to-medium coefficient and the normal wavenumber factor sqrt(eps - sin^2)."""
    cos_t = math.cos(theta)
    # eps - sin^2 written as (eps - 1) + cos^2 so eps = 1 gives root == cos_t exactly
    root = cmath.sqrt((eps - 1) + cos_t**2)
    if polarization == "TE":
        r = (cos_t - root) / (cos_t + root)
    else:
        r = (eps * cos_t - root) / (eps * cos_t + root)
    return r, root


def fresnel_half_space(q: ReflectionQuery) -> complex:
    if not isinstance(q.medium, HalfSpace):
        raise GeometryError("fresnel_half_space needs a half-space medium")
    r, _ = _interface(complex(q.medium.rel_permittivity), q.incidence_angle_rad, q.polarization)
    return r


def fresnel_slab(q: ReflectionQuery) -> complex:
    """
    Single layer in free space, all internal bounces summed:
    R = r01 (1 - e^{-2j delta}) / (1 - r01^2 e^{-2j delta}), delta = k0 d sqrt(eps - sin^2).
    """
    if not isinstance(q.medium, Slab):
        raise GeometryError("fresnel_slab needs a slab medium")
    r01, root = _interface(complex(q.medium.rel_permittivity), q.incidence_angle_rad, q.polarization)
    k0 = 2 * math.pi / q.wavelength_m
    phase = cmath.exp(-2j * k0 * q.medium.thickness_m * root)
    return r01 * (1 - phase) / (1 - r01 * r01 * phase)


def reflection_coefficient(q: ReflectionQuery) -> complex:
    if isinstance(q.medium, Slab):
        return fresnel_slab(q)
    return fresnel_half_space(q)


def friis_los_amplitude(r0: float, wavelength_m: float) -> float:
    if r0 <= 0:
        raise GeometryError(f"distance must be > 0, got {r0}")
    return wavelength_m / (4 * math.pi * r0)


def delay_s(distance_m: float) -> float:
    return distance_m / C0


def path_loss_db(amplitude: complex) -> float:
    mag = abs(amplitude)
    if mag == 0:
        return math.inf
    return -20 * math.log10(mag)


def gain_factor(gain_dbi: float) -> float:
    """Amplitude factor of an antenna gain."""
    return 10 ** (gain_dbi / 20)
