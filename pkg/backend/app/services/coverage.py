# backend/app/services/coverage.py
"""
Angular coverage density of an object lying on one of two ground strips seen
from an antenna Δz above it:

    f(θ, φ) = Δz² sin θ / (2 L1 W2 cos³ θ)

θ is measured from the nadir, φ from the street axis. The strips are
a < |y| < b, |x| < L1/2 (one on each side of the antenna), so the exact
support is

    φ0 < φ < π − φ0 (or its mirror in (π, 2π)),   φ0 = arctan(2a / L1)
    arctan(a / (Δz |sin φ|)) < θ < arctan(min(b / |sin φ|, L1 / (2 |cos φ|)) / Δz)

The second bound of the upper θ limit is the street end; without it the
density does not integrate to one.
"""
import math

import numpy as np
from scipy import integrate

from app.models import CoverageParams

TWO_PI = 2 * math.pi


def _bounds(params: CoverageParams, phi):
    """Lower and upper θ limits for azimuth φ (either side)."""
    dz = abs(params.delta_z_m)
    s = np.abs(np.sin(phi))
    c = np.abs(np.cos(phi))
    with np.errstate(divide="ignore"):
        rho_lo = np.where(s > 0, params.strip_near_m / s, np.inf)
        rho_side = np.where(s > 0, params.strip_far_m / s, np.inf)
        rho_end = np.where(c > 0, params.canyon_length_m / (2 * c), np.inf)
    rho_hi = np.minimum(rho_side, rho_end)
    return np.arctan(rho_lo / dz), np.arctan(rho_hi / dz)


def support(params: CoverageParams, theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    phi0 = params.phi0
    upper = phi > math.pi
    folded = np.where(upper, phi - math.pi, phi)
    in_phi = (folded > phi0) & (folded < math.pi - phi0)
    lo, hi = _bounds(params, phi)
    inside = in_phi & (theta > lo) & (theta < hi) & (theta < math.pi / 2)
    return inside if inside.ndim else bool(inside)


def coverage_pdf(params: CoverageParams, theta, phi):
    theta_arr = np.asarray(theta, dtype=float)
    inside = np.asarray(support(params, theta, phi))
    cos_t = np.cos(theta_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        density = params.delta_z_m**2 * np.sin(theta_arr) / (
            2 * params.canyon_length_m * params.strip_width_m * cos_t**3
        )
    out = np.where(inside, density, 0.0)
    return out if out.ndim else float(out)


def sample_coverage(params: CoverageParams, rng: np.random.Generator, size: int | None = None):
    """
    Exact sampler: a ground point uniform over the two strips, converted to
    angles. The side is chosen with probability 1/2.
    """
    n = 1 if size is None else size
    side = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    half = params.canyon_length_m / 2
    x = rng.uniform(-half, half, n)
    y = rng.uniform(params.strip_near_m, params.strip_far_m, n)
    theta = np.arctan(np.hypot(x, y) / abs(params.delta_z_m))
    phi = np.mod(np.arctan2(side * y, x), TWO_PI)
    if size is None:
        return float(theta[0]), float(phi[0])
    return theta, phi


def _phi_weight(params: CoverageParams, phi):
    """Unnormalised marginal of φ on one side: ∫ f dθ ∝ tan²θ_hi − tan²θ_lo."""
    lo, hi = _bounds(params, phi)
    return np.tan(hi) ** 2 - np.tan(lo) ** 2


def sample_coverage_by_density(params: CoverageParams, rng: np.random.Generator, size: int):
    """
    Sampler driven by the density itself: φ by rejection against its marginal,
    then θ by inverting the conditional CDF, which is proportional to tan²θ.
    """
    phi0 = params.phi0
    grid = np.linspace(phi0, math.pi - phi0, 4097)
    envelope = 1.05 * float(np.max(_phi_weight(params, grid)))

    phis: list[np.ndarray] = []
    have = 0
    while have < size:
        batch = max(1024, 4 * (size - have))
        cand = rng.uniform(phi0, math.pi - phi0, batch)
        keep = cand[rng.random(batch) * envelope < _phi_weight(params, cand)]
        phis.append(keep)
        have += keep.size
    phi = np.concatenate(phis)[:size]

    lo, hi = _bounds(params, phi)
    t2 = np.tan(lo) ** 2 + rng.random(size) * (np.tan(hi) ** 2 - np.tan(lo) ** 2)
    theta = np.arctan(np.sqrt(t2))
    flip = rng.random(size) < 0.5
    phi = np.where(flip, TWO_PI - phi, phi)
    return theta, phi


def _integrate(params: CoverageParams, weight) -> float:
    """2 × ∫∫ weight(θ) f(θ, φ) over one side, split at the street-end kink."""
    phi0 = params.phi0
    kink = math.atan2(params.strip_far_m, params.canyon_length_m / 2)
    edges = [phi0, max(phi0, kink), math.pi - max(phi0, kink), math.pi - phi0]
    dz2 = params.delta_z_m**2
    norm = 2 * params.canyon_length_m * params.strip_width_m

    def integrand(theta, phi):
        return weight(theta) * dz2 * math.sin(theta) / (norm * math.cos(theta) ** 3)

    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        if right <= left:
            continue
        value, _ = integrate.dblquad(
            integrand,
            left,
            right,
            lambda phi: float(_bounds(params, phi)[0]),
            lambda phi: float(_bounds(params, phi)[1]),
            epsabs=1e-10,
            epsrel=1e-9,
        )
        total += value
    return 2 * total


def coverage_total_probability(params: CoverageParams) -> float:
    return _integrate(params, lambda theta: 1.0)


def coverage_mean_theta(params: CoverageParams) -> float:
    return _integrate(params, lambda theta: theta)


def direction_from_antenna(params: CoverageParams, theta, phi) -> np.ndarray:
    """Unit vector from the antenna toward the ground point at (θ, φ)."""
    down = -1.0 if params.delta_z_m > 0 else 1.0
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), down * np.cos(theta)], axis=-1
    )
