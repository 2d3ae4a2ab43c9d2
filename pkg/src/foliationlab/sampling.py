"""Flow-path sampling at a fixed model-length budget.

The definition of relative closeness quantifies over flow paths representing
points of a hyperbolic disk under the (unavailable) uniformization. The lab
substitutes a falsification family: paths traced at unit model-length speed
in a piecewise-constant complex direction, i.e. the ODE

    d gamma / du = e^{i theta(u)} eta(z(u)) / (2 ||X(z(u))||_2),

so that the model length of gamma|[0, u] is exactly u. Directions are either
fixed ("radial") or jittered on fixed arc-length intervals; either way the
time path is a straight polyline, one vertex per direction interval.

Direction schedules depend only on the rng, never on the anchor point, so a
schedule can be replayed from a second anchor (both-role checks) and a
truncated budget yields a prefix of the longer path (monotonicity in the
budget for nested runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure
from .models import ChartPoint, FlowPath, SingularityModel, eval_field, norm1

__all__ = ["PathSpec", "SampledPath", "make_spec", "trace_path", "sample_flow_path"]

ARC_INTERVAL = 0.25  # direction changes every this much model length


@dataclass(frozen=True)
class PathSpec:
    """Anchor-independent description of a sampled path."""

    budget: float
    thetas: tuple  # one direction per arc interval

    def n_intervals(self) -> int:
        return len(self.thetas)


@dataclass(frozen=True)
class SampledPath:
    path: FlowPath
    arc: tuple          # model length at each node
    points: tuple       # chart points at each node
    escaped: bool       # True if truncated at the escape radius

    @property
    def budget_reached(self) -> float:
        return self.arc[-1] if self.arc else 0.0


def make_spec(budget: float, rng, mode: str = "jitter", jitter: float = 1.5) -> PathSpec:
    """Draw a direction schedule for a path of model length ``budget``."""
    n = max(1, int(math.ceil(budget / ARC_INTERVAL)))
    base = rng.uniform(0.0, 2.0 * math.pi)
    if mode == "radial":
        thetas = (base,) * n
    elif mode == "jitter":
        offs = rng.uniform(-jitter, jitter, size=n - 1) if n > 1 else []
        thetas = (base, *[base + o for o in offs])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return PathSpec(float(budget), tuple(thetas))


def _interval_rhs(model, anchor1, anchor2, theta):
    """RHS in state (s,) or (s, z2re, z2im); s = flow-time distance along e^{i theta}."""
    direction = complex(math.cos(theta), math.sin(theta))
    kind = model.kind

    if kind == "briot_bouquet":
        a, k, f = model.alpha, model.k, model.f

        def rhs(u, y):
            s = y[0]
            z1 = anchor1 * np.exp(direction * s)
            z2 = complex(y[1], y[2])
            f2 = -a * z2 * (1.0 + z1 ** k * z2 * f(z1, z2))
            n = max(abs(z1), abs(z2), 1e-300)
            speed = n * (1.0 + abs(math.log(n))) / (2.0 * math.hypot(abs(z1), abs(f2)))
            dz2 = direction * speed * f2
            return [speed, dz2.real, dz2.imag]

        return rhs, direction

    lam = model.lam if kind == "linearizable" else None
    m = model.m if kind == "poincare_dulac" else None
    mu = model.mu if kind == "poincare_dulac" else None

    def rhs(u, y):
        s = y[0]
        t = direction * s
        z1 = anchor1 * np.exp(t)
        if kind == "linearizable":
            z2 = anchor2 * np.exp(lam * t)
            f1, f2 = z1, lam * z2
        else:
            z2 = (anchor2 + mu * t * anchor1 ** m) * np.exp(m * t)
            f1, f2 = z1, m * z2 + mu * z1 ** m
        n = max(abs(z1), abs(z2), 1e-300)
        speed = n * (1.0 + abs(math.log(n))) / (2.0 * math.hypot(abs(f1), abs(f2)))
        return [speed]

    return rhs, direction


def trace_path(
    model: SingularityModel,
    z0: ChartPoint,
    spec: PathSpec,
    nodes_per_interval: int = 6,
    escape_radius: float = 0.999999999,
) -> SampledPath:
    """Trace the path of ``spec`` anchored at ``z0``.

    Returns nodes (times, chart points, model arc); if the trajectory meets
    the escape radius the path is truncated at the last valid node and
    flagged, so the truncated sample still has model length <= budget.
    """
    if z0.norm1 <= 0:
        raise ValueError("cannot anchor a flow path at the singular point")
    times = [0j]
    arcs = [0.0]
    points = [z0]
    cur = z0
    remaining = spec.budget
    for i, theta in enumerate(spec.thetas):
        du = min(ARC_INTERVAL, remaining)
        if du <= 0:
            break
        remaining -= du
        rhs, direction = _interval_rhs(model, cur.z1, cur.z2, theta)
        y0 = [0.0] if model.kind != "briot_bouquet" else [0.0, cur.z2.real, cur.z2.imag]
        u_eval = np.linspace(0.0, du, nodes_per_interval + 1)[1:]
        sol = solve_ivp(rhs, (0.0, du), y0, method="RK45", rtol=1e-8, atol=1e-10, t_eval=u_eval)
        if not sol.success:
            raise IntegrationFailure(f"path tracing failed: {sol.message}")
        base_time = times[-1]
        base_arc = arcs[-1]
        escaped = False
        for col, u in zip(sol.y.T, sol.t):
            s = col[0]
            t = direction * s
            z1 = cur.z1 * np.exp(t)
            if model.kind == "linearizable":
                z2 = cur.z2 * np.exp(model.lam * t)
            elif model.kind == "poincare_dulac":
                z2 = (cur.z2 + model.mu * t * cur.z1 ** model.m) * np.exp(model.m * t)
            else:
                z2 = complex(col[1], col[2])
            pt = ChartPoint(complex(z1), complex(z2))
            if pt.norm1 >= escape_radius:
                escaped = True
                break
            times.append(base_time + t)
            arcs.append(base_arc + u)
            points.append(pt)
        if escaped:
            return SampledPath(FlowPath(z0, tuple(times)), tuple(arcs), tuple(points), True)
        cur = points[-1]
    return SampledPath(FlowPath(z0, tuple(times)), tuple(arcs), tuple(points), False)


def sample_flow_path(
    model: SingularityModel,
    z0: ChartPoint,
    budget: float,
    rng,
    mode: str = "jitter",
    nodes_per_interval: int = 6,
    escape_radius: float = 0.999999999,
) -> SampledPath:
    spec = make_spec(budget, rng, mode=mode)
    return trace_path(model, z0, spec, nodes_per_interval=nodes_per_interval, escape_radius=escape_radius)
