"""Model leafwise hyperbolic metric and the estimates built on it.

The lab fixes the model density eta(z) = ||z||_1 (1 + |ln ||z||_1|), the
exact middle of the two-sided comparison the theory provides for the true
extremal density near a non-degenerate singularity. Every "Poincare" length
or distance downstream is a model quantity; this is the central, documented
idealization of the lab. In regular flow boxes the model uses the constant
Brody bound c0 instead, and the continuity defect of the two regimes at
||z||_1 = 2 rho is logged, not hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .constants import ConstantsBundle
from .errors import FoliationLabError, TrajectoryEscape
from .models import (
    ChartPoint,
    FlowPath,
    SingularityModel,
    bb_time_factor,
    eval_field,
    flow,
    norm1,
    segment_evaluator,
)

__all__ = [
    "eta_model",
    "eta_regular_defect",
    "poincare_length",
    "gronwall_envelope",
    "gamma_time_bound",
    "r_sing",
    "bowen_threshold",
    "BowenCellVerdict",
    "bowen_cell_check",
    "EscapeResult",
    "escape_to_fringe",
    "ModelMetric",
]


def eta_model(z):
    """Model leafwise density ||z||_1 (1 + |ln ||z||_1|); broadcasts.

    Undefined at the singular point.
    """
    if isinstance(z, ChartPoint):
        n = z.norm1
    else:
        n = norm1(z[0], z[1]) if isinstance(z, tuple) else np.asarray(z, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(n == 0.0):
        raise ValueError("eta is undefined at the singular point")
    val = n * (1.0 + np.abs(np.log(n)))
    return float(val) if val.shape == () else val


@dataclass(frozen=True)
class ModelMetric:
    """The model metric with its constants and chart scale."""

    constants: ConstantsBundle
    chart_scale: float = 1.0

    def eta(self, z):
        return eta_model(z) * self.chart_scale


def eta_regular_defect(constants: ConstantsBundle) -> float:
    """Mismatch of the singular model density and the regular constant c0
    at the hand-off norm 2 rho (logged continuity defect)."""
    n = 2.0 * constants.rho
    return float(constants.c0 - n * (1.0 + abs(math.log(n))))


def _segment_length(model, z, dt, rtol=1e-10, max_depth=14):
    """Adaptive (doubling Gauss-Legendre) model length of one time segment."""
    if dt == 0:
        return 0.0
    evaluate = segment_evaluator(model, z, dt)
    absdt = abs(dt)

    glx, glw = np.polynomial.legendre.leggauss(12)

    def gl(a, b):
        s = 0.5 * (b - a) * glx + 0.5 * (a + b)
        w1, w2 = evaluate(s)
        f1, f2 = eval_field(model, (w1, w2), check=False)
        speed = np.sqrt(np.abs(f1) ** 2 + np.abs(f2) ** 2)
        n = norm1(w1, w2)
        integrand = 2.0 * absdt * speed / (n * (1.0 + np.abs(np.log(n))))
        return 0.5 * (b - a) * float(np.dot(glw, integrand))

    def refine(a, b, whole, depth):
        mid = 0.5 * (a + b)
        left, right = gl(a, mid), gl(mid, b)
        if depth >= max_depth or abs(left + right - whole) <= rtol * (abs(whole) + 1e-15):
            return left + right
        return refine(a, mid, left, depth + 1) + refine(mid, b, right, depth + 1)

    return refine(0.0, 1.0, gl(0.0, 1.0), 0)


def poincare_length_quick(model: SingularityModel, path: FlowPath, order: int = 16) -> float:
    """Fixed-order Gauss-Legendre model length (no adaptivity); used by hot
    enumeration loops where ~1e-5 relative accuracy is plenty."""
    glx, glw = np.polynomial.legendre.leggauss(order)
    s_nodes = 0.5 * (glx + 1.0)
    total = 0.0
    current = (path.base.z1, path.base.z2)
    for a, b in zip(path.times, path.times[1:]):
        dt = b - a
        if dt == 0:
            continue
        evaluate = segment_evaluator(model, current, dt)
        w1, w2 = evaluate(s_nodes)
        f1, f2 = eval_field(model, (w1, w2), check=False)
        speed = np.sqrt(np.abs(f1) ** 2 + np.abs(f2) ** 2)
        n = norm1(w1, w2)
        integrand = 2.0 * abs(dt) * speed / (n * (1.0 + np.abs(np.log(n))))
        total += 0.5 * float(np.dot(glw, integrand))
        e1, e2 = evaluate(1.0)
        current = (complex(e1), complex(e2))
    return total


def poincare_length(model: SingularityModel, path: FlowPath, rtol: float = 1e-10) -> float:
    """Model hyperbolic length of the flow image of ``path``.

    Additive under concatenation and invariant under reparametrization of
    the time polyline (inserting collinear vertices changes nothing beyond
    quadrature tolerance).
    """
    total = 0.0
    current = (path.base.z1, path.base.z2)
    if norm1(*current) >= 1.0:
        raise TrajectoryEscape("base point outside the bidisk", point=current)
    for a, b in zip(path.times, path.times[1:]):
        dt = b - a
        if dt == 0:
            continue
        evaluate = segment_evaluator(model, current, dt)
        nodes = evaluate(np.linspace(0.0, 1.0, 9))
        if np.any(norm1(*nodes) >= 1.0):
            raise TrajectoryEscape("trajectory leaves the bidisk along the path", point=current)
        total += _segment_length(model, current, dt, rtol=rtol)
        w1, w2 = evaluate(1.0)
        current = (complex(w1), complex(w2))
    return total


def gronwall_envelope(x0: float, spec, t: float) -> float:
    """Comparison solution of the integral-inequality envelope.

    ``spec`` is ``("linear", C, f)`` with f a constant or callable forcing
    term, or ``("quadratic_bb", a)`` for x' = a x^2 (a = C |z1|^alpha), whose
    solution x0 / (1 - a x0 t) blows up at t = 1/(a x0). Any measured
    quantity obeying the corresponding integral inequality must lie below
    the returned value.
    """
    if x0 < 0 or t < 0:
        raise ValueError("domain requires x0 >= 0 and t >= 0")
    kind = spec[0]
    if kind == "linear":
        _, C, f = spec
        if callable(f):
            integral, _ = quad(lambda s: f(s) * math.exp(-C * s), 0.0, t, limit=200)
        else:
            fc = float(f)
            integral = fc * t if C == 0 else fc * (1.0 - math.exp(-C * t)) / C
        return (x0 + integral) * math.exp(C * t)
    if kind == "quadratic_bb":
        _, a = spec
        denom = 1.0 - a * x0 * t
        if denom <= 0:
            raise ValueError(f"t = {t} is past the blow-up time {1.0 / (a * x0):.6g}")
        return x0 / denom
    raise ValueError(f"unknown envelope spec {kind!r}")


def gamma_time_bound(z, R: float, constants: ConstantsBundle) -> float:
    """Bound C0^-1 |ln ||z||_1| (e^{C3 R} - 1) on |gamma(t)| for paths of
    model length <= R anchored at z."""
    n = z.norm1 if isinstance(z, ChartPoint) else float(norm1(z[0], z[1]))
    if not 0.0 < n < 0.5:
        raise ValueError("gamma_time_bound expects 0 < ||z||_1 < 1/2")
    return abs(math.log(n)) / constants.C0 * math.expm1(constants.C3 * R)


def r_sing(R: float, eps: float, C3: float) -> float:
    """Radius exp(ln(eps/4) e^{C3 R}) below which orbits cannot leave the
    eps-bidisk within hyperbolic time R."""
    if R < 0 or not 0 < eps < 0.5 or C3 <= 0:
        raise ValueError("need R >= 0, eps in (0, 1/2), C3 > 0")
    return math.exp(math.log(eps / 4.0) * math.exp(C3 * R))


def bowen_threshold(R: float, eps: float, C3: float) -> float:
    """Norm threshold exp(ln(eps) e^{C3 R}) of the singular Bowen cell."""
    if R < 0 or not 0 < eps < 0.5 or C3 <= 0:
        raise ValueError("need R >= 0, eps in (0, 1/2), C3 > 0")
    return math.exp(math.log(eps) * math.exp(C3 * R))


@dataclass(frozen=True)
class BowenCellVerdict:
    ok: bool
    witness: FlowPath | None
    max_norm_seen: float
    paths_checked: int

    def __bool__(self):
        return self.ok


def bowen_cell_check(model, z, R, eps, constants, samples=200, rng_seed=0) -> BowenCellVerdict:
    """Sample flow paths of model length <= R from z and assert the
    trajectory never leaves the eps-bidisk.

    A violation signals mis-estimated constants and is returned as a
    counterexample path.
    """
    from .sampling import sample_flow_path

    zp = z if isinstance(z, ChartPoint) else ChartPoint(*z)
    threshold = bowen_threshold(R, eps, constants.C3)
    if not zp.norm1 < threshold:
        raise ValueError(f"||z||_1 = {zp.norm1:.3g} is not below the cell threshold {threshold:.3g}")
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for i in range(samples):
        sampled = sample_flow_path(model, zp, budget=R, rng=rng,
                                   mode="radial" if i % 3 == 0 else "jitter")
        norms = np.array([p.norm1 for p in sampled.points])
        m = float(np.max(norms)) if len(norms) else zp.norm1
        worst = max(worst, m)
        if m >= eps:
            return BowenCellVerdict(False, sampled.path, worst, i + 1)
    return BowenCellVerdict(True, None, worst, samples)


@dataclass(frozen=True)
class EscapeResult:
    path: FlowPath
    endpoint: ChartPoint
    length: float
    side: int

    @property
    def empty(self) -> bool:
        return len(self.path.times) == 1


def _first_hit_real_direction(model, z, omega, target, t_hi):
    """First real t >= 0 with ||flow(z, t omega)||_1 = target, by march+bisect."""
    def g(t):
        w = flow(model, z, t * omega, check=False)
        return max(abs(w.z1), abs(w.z2)) - target

    if g(0.0) >= 0:
        return 0.0
    n_march = 160
    prev = 0.0
    for i in range(1, n_march + 1):
        t = t_hi * i / n_march
        if g(t) >= 0:
            lo, hi = prev, t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if g(mid) >= 0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    raise FoliationLabError("escape flow did not reach the fringe within its time bound")


def escape_to_fringe(model: SingularityModel, z, eps: float) -> EscapeResult:
    """Flow path from z to a point of norm in [1/2, 1), following the
    positive-real-time recipe on the dominant coordinate.

    Linearizable / two-separatrix models flow the side carrying the norm
    (through the reciprocal reparametrization when the second side
    dominates); the resonant model flows positive real time in both
    sub-cases |z1| >= |z2|^2 and |z1| < |z2|^2. The measured model length
    plays the role of the escape budget and is recorded by callers per model.
    """
    from .metric import poincare_length as _plen  # self-import keeps signature local

    zp = z if isinstance(z, ChartPoint) else ChartPoint(*z)
    if zp.norm1 < eps:
        raise ValueError("escape_to_fringe expects ||z||_1 >= eps")
    if zp.norm1 >= 0.5:
        path = FlowPath(zp, (0j,))
        return EscapeResult(path, zp, 0.0, side=0)

    if model.kind == "linearizable":
        if abs(zp.z1) >= abs(zp.z2):
            omega, side = 1.0 + 0j, 1
            t_hi = math.log(0.5 / abs(zp.z1)) * 1.0001 + 1e-9
        else:
            omega, side = 1.0 / model.lam, 2
            t_hi = math.log(0.5 / abs(zp.z2)) * 1.0001 + 1e-9
        T = _first_hit_real_direction(model, zp, omega, 0.5, t_hi)
        path = FlowPath(zp, (0j, T * omega))
    elif model.kind == "poincare_dulac":
        side = 1 if abs(zp.z1) >= abs(zp.z2) ** 2 else 2
        base = abs(zp.z2) if zp.z2 != 0 else abs(zp.z1)
        t_hi = (abs(math.log(max(base, abs(zp.z1), 1e-300))) + math.log(4.0)) / min(1, model.m) * 2.0
        T = _first_hit_real_direction(model, zp, 1.0 + 0j, 0.5, t_hi)
        path = FlowPath(zp, (0j, complex(T)))
    else:
        if abs(zp.z1) >= abs(zp.z2):
            side = 1
            T = math.log(0.5 / abs(zp.z1))
            path = FlowPath(zp, (0j, complex(T)))
        else:
            side = 2
            path = _bb_reciprocal_escape(model, zp)
    traj_end = flow_along_endpoint(model, path)
    length = _plen(model, path)
    return EscapeResult(path, traj_end, length, side)


def flow_along_endpoint(model, path: FlowPath) -> ChartPoint:
    current = ChartPoint(path.base.z1, path.base.z2)
    for a, b in zip(path.times, path.times[1:]):
        current = flow(model, current, b - a, check=False)
    return current


def _bb_reciprocal_escape(model: SingularityModel, z: ChartPoint, nodes: int = 48) -> FlowPath:
    """Flow path (for the model field) tracing positive real time of the
    reciprocal field c(z) X, under which z2 moves exactly like z2 e^t."""
    from scipy.integrate import solve_ivp

    T = math.log(0.5 / abs(z.z2))
    z2_0 = z.z2

    def rhs(t, y):
        gamma = complex(y[0], y[1])
        z1 = complex(y[2], y[3])
        z2 = z2_0 * np.exp(t)
        c = bb_time_factor(model, (z1, z2))
        dz1 = c * z1
        return [c.real, c.imag, dz1.real, dz1.imag]

    t_eval = np.linspace(0.0, T, nodes + 1)
    sol = solve_ivp(rhs, (0.0, T), [0.0, 0.0, z.z1.real, z.z1.imag],
                    method="DOP853", rtol=1e-10, atol=1e-12, t_eval=t_eval)
    if not sol.success:
        raise FoliationLabError(f"reciprocal escape integration failed: {sol.message}")
    times = tuple(complex(a, b) for a, b in zip(sol.y[0], sol.y[1]))
    return FlowPath(z, times)
