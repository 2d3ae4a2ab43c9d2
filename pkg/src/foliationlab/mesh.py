"""Mesh of transversals, the reach-a-transversal motions, neighbor counts,
and the initial disk coverings of the transversals.

Singular transversals are coordinate-level slices z_u = level * e^{i theta_k}
with geometrically spaced levels anchored at the singular radius; the fringe
annulus ||z||_1 in [2 rho, 1) is modeled by abstract regular boxes carrying a
lattice of slice transversals (constant density c0). Transversal descriptors
are parametric: levels and angles are index formulas, so meshes are cheap no
matter how many descriptors they define.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .cells import CellCovering, EDisk
from .constants import ConstantsBundle
from .errors import FoliationLabError, NewtonFailure
from .metric import poincare_length, poincare_length_quick, r_sing
from .models import (
    ChartPoint,
    FlowPath,
    SingularityModel,
    bb_time_factor,
    eval_field,
    flow,
    norm1,
)

__all__ = [
    "Transversal",
    "Mesh",
    "build_mesh",
    "ReachResult",
    "reach_transversal",
    "NeighborReport",
    "neighbor_count",
    "build_initial_covering",
    "HD12Report",
    "check_HD12",
]


@dataclass(frozen=True)
class Transversal:
    """A transversal slice: singular (z_u = coord, free coordinate bounded by
    extent) or regular (lattice slice of a fringe box)."""

    kind: str                   # "singular" | "regular"
    j: int = 0
    k: int = 0
    u: int = 1
    coord: complex = 0j
    level: float = 0.0
    theta: float = 0.0
    extent: float = 0.0
    lattice: tuple = ()

    @property
    def id(self):
        if self.kind == "singular":
            return ("s", self.j, self.k, self.u)
        return ("r",) + tuple(self.lattice)

    def contains(self, z: ChartPoint, coord_tol: float = 1e-8, extent_slack: float = 1e-9) -> bool:
        if self.kind != "singular":
            raise NotImplementedError("membership is chart-level only for singular transversals")
        zu = z.z1 if self.u == 1 else z.z2
        zv = z.z2 if self.u == 1 else z.z1
        return (abs(zu - self.coord) <= coord_tol * max(self.level, 1e-300)
                and abs(zv) <= self.extent * (1.0 + extent_slack))


class Mesh:
    """Parametric mesh of transversals for one singular chart plus fringe
    lattice. Levels: r_j = r0^{(1 - C5 hbar)^j} with r0 the singular radius;
    angles theta_k = 2 pi k / P, P = ceil(pi / (C5 hbar))."""

    def __init__(self, model: SingularityModel, R_desk: float, constants: ConstantsBundle,
                 B: float | None = None):
        self.model = model
        self.R = float(R_desk)
        self.constants = constants
        self.rho = constants.rho
        self.B = B if B is not None else constants.c0 / 2.0
        self.r0T = r_sing(R_desk, constants.eps, constants.C3)
        self.decay = 1.0 - constants.C5 * constants.hbar
        if not 0.0 < self.decay < 1.0:
            raise FoliationLabError("C5 hbar must lie in (0, 1)")
        self.P = int(math.ceil(math.pi / (constants.C5 * constants.hbar)))
        self.L0 = abs(math.log(self.r0T))
        if self.r0T > 2.0 * self.rho:
            raise FoliationLabError(
                f"R_desk too small: singular radius {self.r0T:.3g} exceeds 2 rho = {2 * self.rho:.3g}")
        fringe = abs(math.log(2.0 * self.rho))
        self.N_a = int(math.floor(math.log(fringe / self.L0) / math.log(self.decay)))
        if self.model.kind == "poincare_dulac":
            j = 0
            while self._pd_max_level(j - 1) >= self.r0T:
                j -= 1
                if j < -10_000:
                    raise FoliationLabError("runaway level range")
            self.N_a_prime = j
        else:
            self.N_a_prime = 0

    # -- level formulas ---------------------------------------------------
    def level_log(self, j: int) -> float:
        return self.decay ** j * self.L0

    def level_radius(self, j: int) -> float:
        return math.exp(-self.level_log(j))

    def _pd_side2_level(self, j: int) -> float:
        r = self.level_radius(j)
        return r ** self.model.m * self.level_log(j)

    def _pd_max_level(self, j: int) -> float:
        return max(self.level_radius(j), self._pd_side2_level(j))

    def side_level(self, j: int, u: int) -> float:
        if self.model.kind == "poincare_dulac" and u == 2:
            return self._pd_side2_level(j)
        return self.level_radius(j)

    def extent(self, j: int, u: int) -> float:
        if self.model.kind == "poincare_dulac":
            if u == 1:
                return 1.5 * self._pd_side2_level(j)
            return 1.5 ** (1.0 / self.model.m) * self.level_radius(j)
        return 1.5 * self.level_radius(j)

    def theta(self, k: int) -> float:
        return 2.0 * math.pi * k / self.P

    def transversal(self, j: int, k: int, u: int) -> Transversal:
        if not (self.N_a_prime <= j <= self.N_a and 1 <= k <= self.P and u in (1, 2)):
            raise KeyError(f"transversal index ({j},{k},{u}) out of range")
        lv = self.side_level(j, u)
        th = self.theta(k)
        return Transversal(kind="singular", j=j, k=k, u=u, level=lv, theta=th,
                           coord=lv * cmath.exp(1j * th), extent=self.extent(j, u))

    def singular_transversals(self):
        for j in range(self.N_a_prime, self.N_a + 1):
            for k in range(1, self.P + 1):
                for u in (1, 2):
                    yield self.transversal(j, k, u)

    @property
    def singular_count(self) -> int:
        return (self.N_a - self.N_a_prime + 1) * self.P * 2

    def regular_spacing(self) -> float:
        return self.B * self.constants.hbar

    def regular_transversal(self, a: int, b: int) -> Transversal:
        s = self.regular_spacing()
        pt = complex(a * s, b * s)
        return Transversal(kind="regular", lattice=(a, b), coord=pt)

    def nearest_regular(self, plaque_point: complex) -> Transversal:
        s = self.regular_spacing()
        return self.regular_transversal(int(round(plaque_point.real / s)), int(round(plaque_point.imag / s)))

    def level_index_for(self, value: float, side2: bool = False) -> int:
        """Smallest level index whose (side) level value is >= value, clamped."""
        if side2 and self.model.kind == "poincare_dulac":
            j = self.N_a_prime
            while j <= self.N_a and self._pd_side2_level(j) < value:
                j += 1
            return min(j, self.N_a)
        x = abs(math.log(min(max(value, 1e-300), 0.999999)))
        j_real = math.log(x / self.L0) / math.log(self.decay)
        j = int(math.ceil(j_real - 1e-12))
        return max(self.N_a_prime, min(j, self.N_a))

    def nearest_angle(self, theta: float) -> int:
        k = int(round(theta / (2.0 * math.pi / self.P))) % self.P
        return self.P if k == 0 else k

    def on_some_transversal(self, z: ChartPoint, coord_tol: float = 1e-9):
        for u in (1, 2):
            zu = z.z1 if u == 1 else z.z2
            if zu == 0:
                continue
            j = self.level_index_for(abs(zu), side2=(u == 2))
            for jj in (j, j - 1, j + 1):
                if not self.N_a_prime <= jj <= self.N_a:
                    continue
                k = self.nearest_angle(math.atan2(zu.imag, zu.real) % (2 * math.pi))
                t = self.transversal(jj, k, u)
                if t.contains(z, coord_tol=coord_tol):
                    return t
        return None

    def manifest(self) -> dict:
        return {
            "model": self.model.describe(),
            "R_desk": self.R,
            "r_sing": self.r0T,
            "P": self.P,
            "levels": [self.N_a_prime, self.N_a],
            "rho": self.rho,
            "B": self.B,
            "C5": self.constants.C5,
            "hbar": self.constants.hbar,
            "singular_count": self.singular_count,
        }


def build_mesh(model: SingularityModel, R_desk: float, constants: ConstantsBundle,
               B: float | None = None) -> Mesh:
    return Mesh(model, R_desk, constants, B=B)


# -- reach motion ----------------------------------------------------------


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _lin_omega(lam: complex) -> complex:
    """Unit direction with Re > 0 maximizing min(Re w, |Re(lam w)|)."""
    best, best_val = 1.0 + 0j, -1.0
    for beta in np.linspace(-math.pi / 2 + 0.05, math.pi / 2 - 0.05, 721):
        w = cmath.exp(1j * beta)
        val = min(w.real, abs((lam * w).real))
        if val > best_val + 1e-15:
            best, best_val = w, val
    return best


def _first_hit(curve, target: float, t_hi: float, n_march: int = 200) -> float:
    """First t in (0, t_hi] with curve(t) >= target; curve(0) < target."""
    prev = 0.0
    for i in range(1, n_march + 1):
        t = t_hi * i / n_march
        if curve(t) >= target:
            lo, hi = prev, t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if curve(mid) >= target:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    raise FoliationLabError("level set not reached within the time bound")


@dataclass(frozen=True)
class ReachResult:
    path1: FlowPath            # flow path in the u=1 reparametrized field's time
    path2: FlowPath            # flow path in the u=2 reparametrized field's time
    transversal: Transversal
    endpoint: ChartPoint
    length: float              # measured model length of the motion
    on_transversal: bool
    im_parts: tuple            # (|Im gamma^1(1)|, |Im gamma^2(1)|)

    @property
    def empty(self) -> bool:
        return len(self.path1.times) == 1


def _bb_reciprocal_nodes(model, z: ChartPoint, t_hat: complex, nodes: int = 24, rtol: float = 1e-11):
    """Trace the reciprocal-field motion for X-hat time t_hat.

    Returns (gamma_nodes for the model field, hat_nodes, chart points,
    model length of the motion); under the reciprocal field z2 moves
    exactly like z2 e^t, and the model length is accumulated as an extra
    integration state so no separate quadrature is needed.
    """
    from scipy.integrate import solve_ivp

    z2_0 = z.z2

    def rhs(s, y):
        z1 = complex(y[2], y[3])
        z2 = z2_0 * cmath.exp(s * t_hat)
        c = bb_time_factor(model, (z1, z2))
        dg = t_hat * c
        dz1 = dg * z1
        f1, f2 = eval_field(model, (z1, z2), check=False)
        n = max(abs(z1), abs(z2), 1e-300)
        dlen = 2.0 * abs(dg) * math.hypot(abs(f1), abs(f2)) / (n * (1.0 + abs(math.log(n))))
        return [dg.real, dg.imag, dz1.real, dz1.imag, dlen]

    s_eval = np.linspace(0.0, 1.0, nodes + 1)
    sol = solve_ivp(rhs, (0.0, 1.0), [0.0, 0.0, z.z1.real, z.z1.imag, 0.0],
                    method="DOP853", rtol=rtol, atol=rtol * 1e-2, t_eval=s_eval)
    if not sol.success:
        raise FoliationLabError(f"reciprocal motion failed: {sol.message}")
    gam = sol.y[0] + 1j * sol.y[1]
    z1s = sol.y[2] + 1j * sol.y[3]
    z2s = z2_0 * np.exp(s_eval * t_hat)
    pts = [ChartPoint(complex(a), complex(b)) for a, b in zip(z1s, z2s)]
    hats = s_eval * t_hat
    return list(gam), list(hats), pts, float(sol.y[4][-1])


def _hat_times_from_model_times(model, times, points):
    """Accumulate X-hat times along a polyline of model-field times."""
    hats = [0j]
    for i in range(len(times) - 1):
        c0 = bb_time_factor(model, points[i])
        c1 = bb_time_factor(model, points[i + 1])
        inv = 0.5 * (1.0 / c0 + 1.0 / c1)
        hats.append(hats[-1] + (times[i + 1] - times[i]) * inv)
    return hats


def _pd_side2_newton(model, z: ChartPoint, target: complex, tol: float = 1e-13, iters: int = 60):
    """Solve (z2 + mu t z1^m) e^{m t} = target for small complex t."""
    m, mu = model.m, model.mu
    a = mu * z.z1 ** m

    def g(t):
        return (z.z2 + a * t) * cmath.exp(m * t) - target

    def gp(t):
        return (a + m * (z.z2 + a * t)) * cmath.exp(m * t)

    t = 0j
    scale = max(abs(target), abs(z.z2), 1e-300)
    for _ in range(iters):
        if abs(t) > 2.0:  # landing times must be small; bail before exp overflow
            raise NewtonFailure("resonant angular landing diverged", residual=abs(t))
        r = g(t)
        if abs(r) <= tol * scale:
            return t
        d = gp(t)
        if d == 0:
            break
        t = t - r / d
    r = g(t)
    if abs(r) <= 1e-9 * scale:
        return t
    raise NewtonFailure("resonant angular landing did not converge", residual=abs(r))


def reach_transversal(model: SingularityModel, z: ChartPoint, mesh: Mesh) -> ReachResult:
    """Two-phase motion taking z to a mesh transversal.

    Phase 1 flows in a fixed direction (the deterministic omega choice for
    the linearizable model, real time otherwise, the reciprocal field when
    the second separatrix dominates) until the level set; phase 2 is an
    angular correction, closed form where available and a Newton solve for
    the resonant second side. The measured model length of the whole motion
    is returned; the caller compares it against the hbar budget.
    """
    if not (mesh.r0T * 0.999 <= z.norm1 <= 2.0 * mesh.rho * 1.001):
        raise ValueError("reach_transversal expects r_sing <= ||z||_1 <= 2 rho")
    t_existing = mesh.on_some_transversal(z)
    if t_existing is not None:
        empty = FlowPath(z, (0j,))
        return ReachResult(empty, empty, t_existing, z, 0.0, True, (0.0, 0.0))

    kind = model.kind
    if kind == "poincare_dulac":
        nodes, pts, u_land, j = _pd_phase1(model, z, mesh)
    elif kind == "linearizable":
        nodes, pts, u_land, j = _lin_phase1(model, z, mesh)
    else:
        nodes, pts, u_land, j = _bb_phase1(model, z, mesh)

    end = pts[-1]
    zu = end.z1 if u_land == 1 else end.z2
    theta = math.atan2(zu.imag, zu.real) % (2.0 * math.pi)
    k = mesh.nearest_angle(theta)
    dtheta = _wrap_angle(mesh.theta(k) - theta)
    target_t = mesh.transversal(j, k, u_land)

    hat_nodes = None
    if kind == "linearizable":
        t2 = 1j * dtheta if u_land == 1 else 1j * dtheta / model.lam
        nodes = nodes + [nodes[-1] + t2]
        pts = pts + [flow(model, end, t2, check=False)]
    elif kind == "poincare_dulac":
        if u_land == 1:
            t2 = 1j * dtheta
        else:
            t2 = _pd_side2_newton(model, end, target_t.coord)
        nodes = nodes + [nodes[-1] + t2]
        pts = pts + [flow(model, end, t2, check=False)]
    else:
        if u_land == 1:
            t2 = 1j * dtheta
            nodes = nodes + [nodes[-1] + t2]
            pts = pts + [flow(model, end, t2, check=False)]
        else:
            g2, h2, p2, _ = _bb_reciprocal_nodes(model, end, 1j * dtheta, nodes=12)
            base = nodes[-1]
            nodes = nodes + [base + g for g in g2[1:]]
            pts = pts + p2[1:]

    endpoint = pts[-1]
    path_model = FlowPath(z, tuple(nodes))
    length = poincare_length_quick(model, path_model, order=24)
    on_t = target_t.contains(endpoint, coord_tol=1e-6)

    if kind == "linearizable":
        path1 = path_model
        path2 = FlowPath(z, tuple(t * model.lam for t in nodes))
    elif kind == "poincare_dulac":
        path1 = path_model
        path2 = path_model
    else:
        hat_times = _hat_times_from_model_times(model, nodes, pts)
        path1 = path_model
        path2 = FlowPath(z, tuple(hat_times))
    im_parts = (abs(path1.times[-1].imag), abs(path2.times[-1].imag))
    return ReachResult(path1, path2, target_t, endpoint, length, on_t, im_parts)


def _lin_phase1(model, z, mesh):
    # flow the side carrying the norm (reparametrized field for side 2)
    if abs(z.z1) >= abs(z.z2):
        omega = _lin_omega(model.lam)
    else:
        omega = _lin_omega(1.0 / model.lam) / model.lam
    nrm = z.norm1
    j = mesh.level_index_for(nrm)
    rj = mesh.level_radius(j)
    dom_rate = omega.real if abs(z.z1) >= abs(z.z2) else (model.lam * omega).real
    if nrm >= rj:  # above the top level: come back down
        omega = -omega

    def curve(t):
        w = flow(model, z, t * omega, check=False)
        s = max(abs(w.z1), abs(w.z2))
        return s if nrm < rj else -s

    t_hi = (abs(math.log(rj / nrm)) / abs(dom_rate) + 1e-9) * 2.0 + 0.05
    T = _first_hit(curve, rj if nrm < rj else -rj, t_hi)
    end = flow(model, z, T * omega, check=False)
    u_land = 1 if abs(end.z1) >= abs(end.z2) else 2
    return [0j, T * omega], [z, end], u_land, j


def _bb_phase1(model, z, mesh):
    if abs(z.z1) >= abs(z.z2):
        j = mesh.level_index_for(abs(z.z1))
        rj = mesh.level_radius(j)
        T = math.log(rj / abs(z.z1))
        end = flow(model, z, complex(T), check=False)
        return [0j, complex(T)], [z, end], 1, j
    j = mesh.level_index_for(abs(z.z2))
    rj = mesh.level_radius(j)
    T = math.log(rj / abs(z.z2))  # exact in reciprocal time
    g, h, pts, _ = _bb_reciprocal_nodes(model, z, complex(T))
    return [0j] + g[1:], pts, 2, j


def _pd_phase1(model, z, mesh):
    j1 = mesh.level_index_for(abs(z.z1)) if z.z1 != 0 else mesh.N_a_prime
    j2 = mesh.level_index_for(abs(z.z2), side2=True) if z.z2 != 0 else mesh.N_a_prime
    j = max(j1, j2)
    rj = mesh.level_radius(j)
    Lj = mesh._pd_side2_level(j)

    def ratio(t):
        w = flow(model, z, complex(t), check=False)
        return max(abs(w.z1) / rj, abs(w.z2) / Lj)

    if ratio(0.0) >= 1.0:
        # already at/above a level set (levels are coarse at desk scale):
        # land on whichever side is closest by shrinking in negative time
        T = -_first_hit(lambda t: 1.0 / ratio(-t), 1.0, 4.0)
    else:
        base = abs(math.log(max(min(abs(z.z1) if z.z1 != 0 else 1.0, 1.0), 1e-300)))
        t_hi = 2.0 * math.log(rj / mesh.level_radius(j - 1)) + 0.5
        T = _first_hit(ratio, 1.0, t_hi)
    end = flow(model, z, complex(T), check=False)
    u_land = 1 if abs(end.z1) / rj >= abs(end.z2) / Lj else 2
    return [0j, complex(T)], [z, end], u_land, j


# -- neighbor counting -----------------------------------------------------


@dataclass(frozen=True)
class NeighborReport:
    max_count: int
    histogram: dict
    budget: float
    K_prime: int

    @property
    def within_budget(self) -> bool:
        return self.max_count <= self.K_prime


def _canonical_motion_length(model, x: ChartPoint, target: Transversal, mesh: Mesh,
                             budget: float) -> float | None:
    """Model length of the canonical two-phase motion x -> target, or None
    if the motion fails, exits its cone, or exceeds ~budget on a cheap bound."""
    u = target.u
    xu = x.z1 if u == 1 else x.z2
    if xu == 0:
        return None
    lvl = target.level
    Lx = 1.0 + abs(math.log(x.norm1))
    d_log = abs(math.log(lvl / abs(xu)))
    # Gronwall cone prune: radial cost is at least 2 d_log / (C0 (1 + L))
    if 2.0 * d_log / (mesh.constants.C0 * (Lx + d_log + 1.0)) > budget * 1.5:
        return None
    try:
        bb_len = 0.0
        if model.kind == "briot_bouquet" and u == 2:
            T = math.log(lvl / abs(xu))
            g, h, pts, bb_len = _bb_reciprocal_nodes(model, x, complex(T), nodes=8, rtol=1e-8)
            nodes, end = [0j] + g[1:], pts[-1]
        else:
            direction = 1.0 + 0j
            if model.kind == "linearizable" and u == 2:
                direction = 1.0 / model.lam
            if model.kind == "poincare_dulac" and u == 2:
                # the resonant second coordinate is not a pure exponential
                def curve(t):
                    w = flow(model, x, complex(t), check=False)
                    return abs(w.z2)
                grow = lvl > abs(xu)
                def signed(t):
                    return curve(t) if grow else 1.0 / max(curve(-t), 1e-300)
                tgt = lvl if grow else 1.0 / lvl
                T = _first_hit(signed, tgt, d_log * 3.0 + 0.2, n_march=60)
                T = T if grow else -T
            else:
                # |z_u| moves as a pure exponential along the canonical direction
                T = math.log(lvl / abs(xu))
            nodes = [0j, T * direction]
            end = flow(model, x, T * direction, check=False)
        zu = end.z1 if u == 1 else end.z2
        dtheta = _wrap_angle(target.theta - (math.atan2(zu.imag, zu.real) % (2 * math.pi)))
        if model.kind == "poincare_dulac" and u == 2:
            t2 = _pd_side2_newton(model, end, target.coord)
            nodes = nodes + [nodes[-1] + t2]
            end2 = flow(model, end, t2, check=False)
        elif model.kind == "briot_bouquet" and u == 2:
            g2, _, p2, len2 = _bb_reciprocal_nodes(model, end, 1j * dtheta, nodes=6, rtol=1e-8)
            bb_len += len2
            base = nodes[-1]
            nodes = nodes + [base + g for g in g2[1:]]
            end2 = p2[-1]
        else:
            t2 = 1j * dtheta if u == 1 or model.kind == "poincare_dulac" else 1j * dtheta / model.lam
            if model.kind == "linearizable" and u == 2:
                t2 = 1j * dtheta / model.lam
            nodes = nodes + [nodes[-1] + t2]
            end2 = flow(model, end, t2, check=False)
        zv = end2.z2 if u == 1 else end2.z1
        if abs(zv) > target.extent * (1 + 1e-6):
            return None
        if model.kind == "briot_bouquet" and u == 2:
            return bb_len
        return poincare_length_quick(model, FlowPath(x, tuple(nodes)))
    except FoliationLabError:
        return None


def neighbor_count(mesh: Mesh, model: SingularityModel, h1: float,
                   sample_density: int = 3, rng_seed: int = 0) -> NeighborReport:
    """Measured neighbor relation of the mesh.

    For sampled points per transversal, enumerates transversals reachable by
    the canonical two-phase motions of model length <= 2 h1 (candidates
    pruned by Gronwall norm cones). Reachability via explicit motions makes
    the count a constructive lower estimate of the full leafwise relation;
    it is compared against the configured K'.
    """
    budget = 2.0 * h1
    rng = np.random.default_rng(rng_seed)
    hist = {}
    max_count = 0
    for t in mesh.singular_transversals():
        count_here = 0
        for _ in range(sample_density):
            r = t.extent * math.sqrt(rng.random()) * 0.95
            a = rng.random() * 2 * math.pi
            free = r * cmath.exp(1j * a)
            x = ChartPoint(t.coord, free) if t.u == 1 else ChartPoint(free, t.coord)
            if x.norm1 == 0:
                continue
            reached = set()
            for j in range(mesh.N_a_prime, mesh.N_a + 1):
                for u in (1, 2):
                    for k in range(1, mesh.P + 1):
                        cand = mesh.transversal(j, k, u)
                        ln = _canonical_motion_length(model, x, cand, mesh, budget)
                        if ln is not None and ln <= budget:
                            reached.add(cand.id)
            count_here = max(count_here, len(reached))
        hist[t.id] = count_here
        max_count = max(max_count, count_here)
    return NeighborReport(max_count, hist, budget, mesh.constants.K_prime)


# -- initial coverings ------------------------------------------------------


def build_initial_covering(transversal: Transversal, kappa: float, model: SingularityModel,
                           covering: CellCovering | None = None, B: float = 0.5) -> list[EDisk]:
    """Initial disk covering of a transversal's free coordinate.

    Separatrix-type transversals restrict the kappa-scale disk covering of
    the unit disk to the disks meeting the extent; the resonant first side
    uses a uniform grid of disks of radius level / kappa (count O(kappa^2));
    regular slices use a grid of radius B / kappa^2 disks.
    """
    if transversal.kind == "regular":
        s = B / kappa ** 2
        return _grid_cover(1.0, s)
    if model.kind == "poincare_dulac" and transversal.u == 1:
        lvl = 1.5 * transversal.level / 1.5  # z2 extent carries the level scale
        radius = transversal.level * 1.0 / kappa
        return _grid_cover(transversal.extent, radius)
    if covering is None:
        covering = CellCovering(kappa)
    ext = transversal.extent
    out = []
    for _, d in covering.cells():
        if abs(d.center) <= d.radius + ext:
            out.append(d)
    return out


def _grid_cover(extent: float, radius: float) -> list[EDisk]:
    step = radius * math.sqrt(2.0)
    n = int(math.ceil(extent / step)) + 1
    out = []
    for a in range(-n, n + 1):
        for b in range(-n, n + 1):
            c = complex(a * step, b * step)
            if abs(c) <= extent + radius:
                out.append(EDisk(c, radius))
    return out


@dataclass(frozen=True)
class HD12Report:
    pairs_checked: int
    proj_pass: int
    relclose_pass: int
    worst_proj_ratio: float
    worst_rel_defect: float

    @property
    def all_pass(self) -> bool:
        return self.proj_pass == self.pairs_checked == self.relclose_pass


def check_HD12(transversal: Transversal, covering: list[EDisk], model: SingularityModel,
               constants: ConstantsBundle, pair_samples: int = 20, h1: float = 0.3,
               delta_desk: float = 0.5, rng_seed: int = 0, rsing: float = 0.0) -> HD12Report:
    """Projection existence and relative closeness over doubled covering disks.

    For sampled x, y in a common doubled disk (outside the singular core)
    the orthogonal projection of x to the leaf of y must land within a small
    multiple of |x - y| and the pair (x, projection) must be (3 h1,
    delta_desk)-relatively close following the flow.
    """
    from .cells import relatively_close_check
    from .holonomy import orthogonal_project

    rng = np.random.default_rng(rng_seed)
    n_ok_p = n_ok_r = n = 0
    worst_p = 0.0
    worst_r = 0.0
    attempts = 0
    while n < pair_samples and attempts < pair_samples * 20:
        attempts += 1
        d = covering[rng.integers(0, len(covering))]
        za, wa = d.scaled(2.0).sample(2, rng)
        if abs(za) > transversal.extent or abs(wa) > transversal.extent or za == wa:
            continue
        if transversal.u == 1:
            x = ChartPoint(transversal.coord, complex(za))
            y = ChartPoint(transversal.coord, complex(wa))
        else:
            x = ChartPoint(complex(za), transversal.coord)
            y = ChartPoint(complex(wa), transversal.coord)
        if min(x.norm1, y.norm1) <= rsing or x.norm1 == 0 or y.norm1 == 0:
            continue
        n += 1
        try:
            proj, tstar = orthogonal_project(model, x, y, constants)
            num = max(abs(x.z1 - proj.z1), abs(x.z2 - proj.z2))
            den = max(abs(x.z1 - y.z1), abs(x.z2 - y.z2))
            ratio = num / den if den > 0 else 0.0
            worst_p = max(worst_p, ratio)
            ok_p = ratio <= constants.kappa_proj * 2.0
            v = relatively_close_check(model, x, proj, 3.0 * h1, delta_desk,
                                       path_samples=4, rng_seed=rng_seed + n)
            worst_r = max(worst_r, v.worst_defect)
            n_ok_p += ok_p
            n_ok_r += bool(v)
        except FoliationLabError:
            pass
    return HD12Report(n, n_ok_p, n_ok_r, worst_p, worst_r)
