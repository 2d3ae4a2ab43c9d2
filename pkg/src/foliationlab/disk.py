"""Poincare-disk geometry: distances, hyperbolic disks, sampling, cover checks.

Curvature normalization used everywhere in the lab: on the unit disk with
metric 4|dz|^2/(1-|z|^2)^2 the induced distance is

    d(xi, zeta) = 2 artanh |(xi - zeta)/(1 - conj(xi) zeta)|,

so d(0, r) = ln((1+r)/(1-r)) and a hyperbolic radius R corresponds to the
Euclidean radius r = (e^R - 1)/(e^R + 1) = tanh(R/2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HPoint",
    "HDisk",
    "CoverVerdict",
    "poincare_distance",
    "poincare_distance_many",
    "hradius_to_eradius",
    "eradius_to_hradius",
    "mobius_from_origin",
    "mobius_to_origin",
    "hdisk_euclidean",
    "hpoint_at",
    "sample_hdisk",
    "hdisk_cover_check",
]


@dataclass(frozen=True, slots=True)
class HPoint:
    """A point of the open unit disk."""

    value: complex

    def __post_init__(self):
        if not abs(self.value) < 1.0:
            raise ValueError(f"HPoint must satisfy |value| < 1, got |{self.value}| = {abs(self.value)}")


@dataclass(frozen=True, slots=True)
class HDisk:
    """Hyperbolic disk of center ``center`` and hyperbolic radius ``hradius``.

    The induced Euclidean region is automatically inside the open unit disk
    for any finite hradius, so only nonnegativity is checked.
    """

    center: HPoint
    hradius: float

    def __post_init__(self):
        if self.hradius < 0:
            raise ValueError("hradius must be >= 0")

    def contains(self, point, slack: float = 0.0) -> bool:
        return poincare_distance(self.center, point) <= self.hradius + slack


def _as_complex(p) -> complex:
    return p.value if isinstance(p, HPoint) else complex(p)


def poincare_distance(xi, zeta) -> float:
    """Hyperbolic distance (curvature -1) between two points of the disk."""
    a = _as_complex(xi)
    b = _as_complex(zeta)
    num = abs(a - b)
    den = abs(1.0 - a.conjugate() * b)
    ratio = num / den
    if ratio >= 1.0:  # numerically pinched against the boundary
        ratio = math.nextafter(1.0, 0.0)
    return 2.0 * math.atanh(ratio)


def poincare_distance_many(xi, zetas: np.ndarray) -> np.ndarray:
    """Vectorized ``poincare_distance`` from one point to an array of points."""
    a = _as_complex(xi)
    zetas = np.asarray(zetas, dtype=complex)
    ratio = np.abs(a - zetas) / np.abs(1.0 - np.conjugate(a) * zetas)
    ratio = np.clip(ratio, 0.0, 1.0 - 1e-17)
    return 2.0 * np.arctanh(ratio)


def hradius_to_eradius(R: float) -> float:
    """Euclidean radius of the hyperbolic circle of radius R about 0."""
    if R < 0:
        raise ValueError("hyperbolic radius must be >= 0")
    return math.tanh(R / 2.0)


def eradius_to_hradius(r: float) -> float:
    """Inverse of :func:`hradius_to_eradius`; r must lie in [0, 1)."""
    if not 0.0 <= r < 1.0:
        raise ValueError("euclidean radius must lie in [0, 1)")
    return 2.0 * math.atanh(r)


def mobius_from_origin(center, w):
    """Disk automorphism sending 0 to ``center`` (an isometry), applied to w.

    Accepts scalars or numpy arrays for ``w``.
    """
    c = _as_complex(center)
    return (w + c) / (1.0 + np.conjugate(c) * w)


def mobius_to_origin(center, w):
    """Inverse of :func:`mobius_from_origin`."""
    c = _as_complex(center)
    return (w - c) / (1.0 - np.conjugate(c) * w)


def hdisk_euclidean(disk: HDisk) -> tuple[complex, float]:
    """Euclidean (center, radius) of the region occupied by ``disk``."""
    c = disk.center.value
    s = abs(c)
    r = hradius_to_eradius(disk.hradius)
    den = 1.0 - (r * s) ** 2
    ecenter = c * (1.0 - r * r) / den
    eradius = r * (1.0 - s * s) / den
    return ecenter, eradius


def hpoint_at(base, direction: float, distance: float) -> HPoint:
    """Point at hyperbolic ``distance`` from ``base`` along ``direction``.

    ``direction`` is the angle of the initial geodesic velocity measured at
    ``base`` in the chart obtained by moving ``base`` to the origin.
    """
    step = hradius_to_eradius(distance) * cmath.exp(1j * direction)
    return HPoint(complex(mobius_from_origin(base, step)))


def sample_hdisk(disk: HDisk, count: int, rng, ring_fraction: float = 0.25) -> np.ndarray:
    """Sample points of ``disk``: area-uniform (hyperbolic) plus a boundary ring.

    Hyperbolic area of D_rho grows like sinh^2(rho/2), so the area-uniform
    radial law is rho = 2 asinh(sqrt(u) sinh(R/2)).
    """
    count = int(count)
    n_ring = max(1, int(count * ring_fraction)) if count > 1 else 0
    n_area = count - n_ring
    R = disk.hradius
    u = rng.random(n_area)
    rho = 2.0 * np.arcsinh(np.sqrt(u) * math.sinh(R / 2.0))
    theta = rng.random(n_area) * 2.0 * math.pi
    radial = np.tanh(rho / 2.0) * np.exp(1j * theta)
    if n_ring:
        phi = (np.arange(n_ring) + rng.random(n_ring)) * (2.0 * math.pi / n_ring)
        ring = math.tanh(R * (1.0 - 1e-9) / 2.0) * np.exp(1j * phi)
        pts = np.concatenate([radial, ring])
    else:
        pts = radial
    return np.asarray(mobius_from_origin(disk.center, pts), dtype=complex)


@dataclass(frozen=True, slots=True)
class CoverVerdict:
    covered: bool
    witness: HPoint | None
    samples_checked: int

    def __bool__(self):
        return self.covered


def hdisk_cover_check(
    target: HDisk,
    cover: list[HDisk],
    sample_count: int,
    rng_seed: int,
    slack: float = 1e-9,
) -> CoverVerdict:
    """Sampled check that ``target`` is contained in the union of ``cover``.

    This is a falsifier, not a proof: it samples ``target`` area-uniformly in
    hyperbolic measure plus a boundary ring and returns the first uncovered
    point as a witness. ``slack`` absorbs floating-point boundary ties.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    pts = sample_hdisk(target, sample_count, rng)
    centers = np.array([d.center.value for d in cover], dtype=complex)
    radii = np.array([d.hradius for d in cover], dtype=float)
    for p in pts:
        d = poincare_distance_many(p, centers)
        if not np.any(d <= radii + slack):
            return CoverVerdict(False, HPoint(complex(p)), sample_count)
    return CoverVerdict(True, None, sample_count)
