"""Orthogonal projections between leaves, holonomy transport between
transversals, quasi-round images, four-disk covers, the monodromy guard,
and the cut-off blend of flow times near the singular point.

The Hermitian pairing used for orthogonality is the chart-standard one
(metric ||dz||^2): <a, b> = a1 conj(b1) + a2 conj(b2).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .cells import EDisk
from .constants import SIGMA0, ConstantsBundle
from .errors import FoliationLabError, NewtonFailure
from .mesh import Transversal, _bb_reciprocal_nodes, _pd_side2_newton
from .models import (
    ChartPoint,
    FlowPath,
    SingularityModel,
    eval_field,
    field_jacobian,
    flow,
    norm1,
)

__all__ = [
    "QuasiRoundFit",
    "orthogonal_project",
    "holonomy_along",
    "holonomy_image",
    "four_disk_cover",
    "monodromy_guard",
    "cutoff_profile",
    "blend_correction",
    "transversal_point",
    "free_coordinate",
]


def _pair(a1, a2, b1, b2):
    return a1 * b1.conjugate() + a2 * b2.conjugate()


def orthogonal_project(model: SingularityModel, x: ChartPoint, y: ChartPoint,
                       constants: ConstantsBundle, tol: float = 1e-10,
                       max_iter: int = 60):
    """Nearest-point projection of x onto the leaf through y.

    Solves the first-order orthogonality condition
    <flow_y(t) - x, X(flow_y(t))> = 0 by a real 2x2 Newton iteration from
    t = 0 and returns (projected point, flow time t*). The hypothesis
    |x - y| <= eps1 |x| and the time bound |t*| <= K_proj ||x-y||_1/||x||_1
    are enforced.
    """
    dxy = math.hypot(abs(x.z1 - y.z1), abs(x.z2 - y.z2))
    nx = math.hypot(abs(x.z1), abs(x.z2))
    if dxy > constants.eps1 * nx:
        raise FoliationLabError(
            f"projection hypothesis violated: |x-y| = {dxy:.3g} > eps1 |x| = {constants.eps1 * nx:.3g}")
    scale = max(dxy, 1e-300)
    t = 0j
    for _ in range(max_iter):
        p = flow(model, y, t, check=False)
        f1, f2 = eval_field(model, p, check=False)
        g = _pair(p.z1 - x.z1, p.z2 - x.z2, f1, f2)
        fnorm2 = abs(f1) ** 2 + abs(f2) ** 2
        if abs(g) <= tol * math.sqrt(fnorm2) * scale:
            break
        jac = field_jacobian(model, p)
        dX1 = jac[0, 0] * f1 + jac[0, 1] * f2
        dX2 = jac[1, 0] * f1 + jac[1, 1] * f2
        B = _pair(p.z1 - x.z1, p.z2 - x.z2, dX1, dX2)
        ga = fnorm2 + B          # d g / d Re(t)
        gb = 1j * (fnorm2 - B)   # d g / d Im(t)
        J = np.array([[ga.real, gb.real], [ga.imag, gb.imag]])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-300:
            raise NewtonFailure("projection Newton hit a singular Jacobian", residual=abs(g))
        rhs = np.array([-g.real, -g.imag])
        da = (rhs[0] * J[1, 1] - rhs[1] * J[0, 1]) / det
        db = (rhs[1] * J[0, 0] - rhs[0] * J[1, 0]) / det
        t = t + complex(da, db)
    else:
        raise NewtonFailure("projection Newton did not converge", residual=abs(g))
    bound = constants.K_proj * norm1(x.z1 - y.z1, x.z2 - y.z2) / x.norm1
    if abs(t) > bound:
        raise FoliationLabError(
            f"projection time |t*| = {abs(t):.3g} exceeds K_proj ||x-y||_1/||x||_1 = {bound:.3g}")
    return flow(model, y, t, check=False), t


def transversal_point(t: Transversal, free: complex) -> ChartPoint:
    if t.kind != "singular":
        raise ValueError("chart points exist only on singular transversals")
    return ChartPoint(t.coord, free) if t.u == 1 else ChartPoint(free, t.coord)


def free_coordinate(t: Transversal, z: ChartPoint) -> complex:
    return z.z2 if t.u == 1 else z.z1


def _transport(model, w: ChartPoint, times) -> ChartPoint:
    cur = w
    for a, b in zip(times, times[1:]):
        cur = flow(model, cur, b - a, check=False)
    return cur


def _land(model, w: ChartPoint, target: Transversal) -> ChartPoint:
    """Flow-time correction landing w on the target's coordinate constraint."""
    u = target.u
    if (w.z1 if u == 1 else w.z2) == 0:
        # separatrix points are invariant and can never land on this side
        raise FoliationLabError("cannot land a separatrix point on a cross-side level")
    if model.kind == "linearizable":
        lam_u = 1.0 if u == 1 else model.lam
        wu = w.z1 if u == 1 else w.z2
        t = cmath.log(target.coord / wu) / lam_u
        return flow(model, w, t, check=False)
    if model.kind == "poincare_dulac":
        if u == 1:
            t = cmath.log(target.coord / w.z1)
            return flow(model, w, t, check=False)
        t = _pd_side2_newton(model, w, target.coord)
        return flow(model, w, t, check=False)
    if u == 1:
        t = cmath.log(target.coord / w.z1)
        return flow(model, w, t, check=False)
    t_hat = cmath.log(target.coord / w.z2)  # exact in reciprocal time
    _, _, pts = _bb_reciprocal_nodes(model, w, t_hat, nodes=12)
    return pts[-1]


def holonomy_along(model: SingularityModel, path: FlowPath, target: Transversal,
                   w: ChartPoint) -> ChartPoint:
    """Holonomy image of w along a flow path ending on ``target``.

    w is transported by the same complex flow times as the path, then the
    landing correction puts it exactly on the target's coordinate level:
    closed-form logarithms on exponential sides, a Newton solve for the
    resonant second side, and the reciprocal-field motion for the
    two-separatrix second side.
    """
    w2 = _transport(model, w, path.times)
    landed = _land(model, w2, target)
    u = target.u
    zu = landed.z1 if u == 1 else landed.z2
    if abs(zu - target.coord) > 1e-7 * max(target.level, 1e-300):
        raise FoliationLabError("holonomy landing missed the target level")
    return landed


@dataclass(frozen=True)
class QuasiRoundFit:
    """Least-sigma disk fit of a holonomy image, certified by boundary
    sampling: sigma^-1 D subset U subset sigma D for the fitted D."""

    disk: EDisk
    sigma: float
    boundary_samples: int

    def __post_init__(self):
        if self.sigma < 1.0:
            raise ValueError("sigma must be >= 1")


def holonomy_image(model: SingularityModel, path: FlowPath, source: Transversal,
                   target: Transversal, source_disk: EDisk,
                   boundary_samples: int = 24) -> QuasiRoundFit:
    """Quasi-round fit of the holonomy image of a disk on the source
    transversal.

    The fit is center-anchored (center = image of the source center, the
    radius is the geometric mean of the extreme boundary distances), which
    matches the expansion the image estimates are made around. Same-side
    linearizable images are exact disks and shortcut the sampling.
    """
    if model.kind == "linearizable" and source.u == target.u:
        lam_v = model.lam if source.u == 1 else 1.0
        T = path.times[-1]
        factor = cmath.exp(lam_v * T)
        c_img = free_coordinate(target, holonomy_along(
            model, path, target, transversal_point(source, source_disk.center)))
        return QuasiRoundFit(EDisk(c_img, abs(factor) * source_disk.radius), 1.0, 0)
    if model.kind == "linearizable":
        # cross-side image is the power map v -> A v^{-beta}, closed form
        v0 = source_disk.center
        if abs(v0) <= 1.05 * source_disk.radius:
            raise FoliationLabError("cross-side image of a separatrix disk is not quasi-round")
        beta = 1.0 / model.lam if source.u == 1 else model.lam
        c_img = free_coordinate(target, holonomy_along(
            model, path, target, transversal_point(source, v0)))
        phis = np.exp(2j * math.pi * np.arange(boundary_samples) / boundary_samples)
        vs = v0 + source_disk.radius * phis
        imgs = c_img * np.exp(-beta * np.log(vs / v0))
        d = np.abs(imgs - c_img)
        dmin, dmax = float(np.min(d)), float(np.max(d))
        if dmin <= 0:
            raise FoliationLabError("holonomy image degenerated at a boundary sample")
        return QuasiRoundFit(EDisk(c_img, math.sqrt(dmin * dmax)),
                             math.sqrt(dmax / dmin), boundary_samples)
    center_img = free_coordinate(target, holonomy_along(
        model, path, target, transversal_point(source, source_disk.center)))
    dmin, dmax = math.inf, 0.0
    for i in range(boundary_samples):
        phi = 2.0 * math.pi * i / boundary_samples
        wfree = source_disk.center + source_disk.radius * cmath.exp(1j * phi)
        img = free_coordinate(target, holonomy_along(
            model, path, target, transversal_point(source, wfree)))
        d = abs(img - center_img)
        dmin, dmax = min(dmin, d), max(dmax, d)
    if dmin <= 0:
        raise FoliationLabError("holonomy image degenerated at a boundary sample")
    return QuasiRoundFit(EDisk(center_img, math.sqrt(dmin * dmax)),
                         math.sqrt(dmax / dmin), boundary_samples)


_FOUR_DISK_CENTER = 4.0 * math.sqrt(3.0) / 3.0 - 2.0   # ~0.309401
_FOUR_DISK_RADIUS = 2.0 - 2.0 * math.sqrt(3.0) / 3.0   # ~0.845299


def four_disk_cover(fit: QuasiRoundFit) -> list[EDisk]:
    """Four disks covering a sigma-quasi-round set U with doubled disks
    inside 2U; requires sigma < sigma0 = sqrt(sqrt 6 - sqrt 2)."""
    if fit.sigma >= SIGMA0:
        raise FoliationLabError(f"sigma = {fit.sigma:.6f} is not below sigma0 = {SIGMA0:.6f}")
    c, r = fit.disk.center, fit.disk.radius
    inv = 1.0 / fit.sigma
    return [EDisk(c + r * _FOUR_DISK_CENTER * inv * (1j ** k), r * _FOUR_DISK_RADIUS * inv)
            for k in range(1, 5)]


def monodromy_guard(dt_z: complex, dt_w: complex, eps2: float,
                    lattice_tol: float = 1e-9) -> str:
    """Compare two return-time differences against the 2 pi i Z lattice.

    Both differences are snapped to the lattice (within ``lattice_tol``);
    the verdict is 'equal' when they snap to the same lattice point,
    'distinct' otherwise, and 'violation' if either is off-lattice.
    """
    if not 0 < eps2 < 2.0 * math.pi:
        raise ValueError("eps2 must lie in (0, 2 pi)")
    ns = []
    for dt in (dt_z, dt_w):
        n = round(dt.imag / (2.0 * math.pi))
        off = abs(dt - 2j * math.pi * n)
        if off > lattice_tol * max(1.0, abs(dt)):
            return "violation"
        ns.append(n)
    return "equal" if ns[0] == ns[1] else "distinct"


def cutoff_profile(rho: float):
    """C^1 polynomial smoothstep: 1 on [0, rho/4], 0 on [rho/2, infinity)."""
    lo, hi = rho / 4.0, rho / 2.0

    def chi(s: float) -> float:
        if s <= lo:
            return 1.0
        if s >= hi:
            return 0.0
        u = (s - lo) / (hi - lo)
        return 1.0 - (3.0 * u * u - 2.0 * u ** 3)

    return chi


def blend_correction(chi, norm_at_endpoint: float, gamma1: complex, delta1: complex) -> complex:
    """Blend of the two comparison flow times near the singular point:
    chi(||endpoint||) (gamma1 - delta1) + delta1."""
    c = chi(norm_at_endpoint)
    return c * (gamma1 - delta1) + delta1
