"""Normal-form vector fields on the bidisk, their flows, and variants.

Three model kinds are supported:

* ``linearizable``      X = z1 d/dz1 + lam z2 d/dz2,           lam != 0
* ``poincare_dulac``    X = z1 d/dz1 + (m z2 + mu z1^m) d/dz2, m >= 1, 0 < |mu| < 1/2
* ``briot_bouquet``     X = z1 d/dz1 - alpha z2 (1 + z1^k z2 f(z1, z2)) d/dz2

The Briot-Bouquet model is stored in the unified (alpha, k, f) shape with
alpha real positive, k a positive integer with k >= alpha, and f a finite
coefficient table with estimated sup < 1 on the closed bidisk. A model built
from the classical two-separatrix form carries its resonance bucket q with
alpha in [1/(q+1), 1/q) (alpha = 1 when q = 0) and k = 1, with every monomial
of f divisible by z2^q; the coordinate-swapped reciprocal model produced by
:func:`hat_field` has alpha possibly > 1 and is flagged ``hatted``.

Flows of the first two kinds are closed-form; the Briot-Bouquet flow keeps
z1(t) = z1 e^t exact and integrates the z2 component with an embedded
adaptive Runge-Kutta scheme (rtol 1e-10, atol 1e-12). Complex time is always
traversed along straight segments between path vertices; branch continuity
comes from restarting at vertices, never from principal-branch logarithms
mid-trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure, TrajectoryEscape
from .series import PolyTable, reciprocal_one_plus

__all__ = [
    "ChartPoint",
    "FlowPath",
    "SingularityModel",
    "ReparamField",
    "linearizable",
    "poincare_dulac",
    "briot_bouquet",
    "norm1",
    "eval_field",
    "field_jacobian",
    "flow",
    "segment_evaluator",
    "integrate_flow",
    "flow_along_path",
    "hat_field",
    "bb_time_factor",
    "reparametrized_field",
    "check_nondegenerate",
    "model_to_dict",
    "model_from_dict",
]

RTOL = 1e-10
ATOL = 1e-12


def norm1(z1, z2):
    """The chart norm max(|z1|, |z2|); broadcasts over arrays."""
    return np.maximum(np.abs(z1), np.abs(z2))


@dataclass(frozen=True, slots=True)
class ChartPoint:
    """A point (z1, z2) of the chart bidisk."""

    z1: complex
    z2: complex

    @property
    def norm1(self) -> float:
        return max(abs(self.z1), abs(self.z2))

    def as_tuple(self):
        return (self.z1, self.z2)


@dataclass(frozen=True)
class FlowPath:
    """Piecewise-linear path in complex flow time anchored at ``base``.

    ``times`` starts at 0; the trajectory-in-bidisk invariant is checked on
    evaluation, not at construction.
    """

    base: ChartPoint
    times: tuple = (0j,)

    def __post_init__(self):
        times = tuple(complex(t) for t in self.times)
        if not times or times[0] != 0:
            raise ValueError("a flow path must start at time 0")
        object.__setattr__(self, "times", times)

    @property
    def flat_length(self) -> float:
        """Euclidean length of the time path in C."""
        return float(sum(abs(b - a) for a, b in zip(self.times, self.times[1:])))

    @property
    def endpoint_time(self) -> complex:
        return self.times[-1]


@dataclass(frozen=True)
class SingularityModel:
    kind: str
    lam: complex = 0j
    m: int = 0
    mu: complex = 0j
    alpha: float = 0.0
    q: int | None = None
    k: int = 0
    f: PolyTable | None = None
    hatted: bool = False
    hat_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind == "linearizable":
            if self.lam == 0:
                raise ValueError("linearizable model needs lam != 0")
        elif self.kind == "poincare_dulac":
            if self.m < 1:
                raise ValueError("poincare_dulac model needs m >= 1")
            if not 0 < abs(self.mu) < 0.5:
                raise ValueError("poincare_dulac model needs 0 < |mu| < 1/2")
        elif self.kind == "briot_bouquet":
            if self.alpha <= 0:
                raise ValueError("briot_bouquet model needs alpha > 0")
            if self.k < 1 or self.k < self.alpha:
                raise ValueError("briot_bouquet model needs integer k >= max(1, alpha)")
            if self.f is None:
                object.__setattr__(self, "f", PolyTable.zero())
            if not self.hatted:
                if not 0 < self.alpha <= 1:
                    raise ValueError("non-hatted briot_bouquet model needs alpha in (0, 1]")
                q = self.q
                if q is None:
                    raise ValueError("non-hatted briot_bouquet model needs its resonance bucket q")
                if q == 0:
                    if self.alpha != 1.0:
                        raise ValueError("q = 0 forces alpha = 1")
                elif not (1.0 / (q + 1) <= self.alpha < 1.0 / q):
                    raise ValueError("alpha must lie in [1/(q+1), 1/q)")
            sup = self.f.sup_estimate()
            if sup >= 1.0:
                raise ValueError(f"estimated sup of |f| on the closed bidisk is {sup:.4f} >= 1")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "linearizable":
            return f"linearizable(lam={self.lam})"
        if self.kind == "poincare_dulac":
            return f"poincare_dulac(m={self.m}, mu={self.mu})"
        tag = ", hatted" if self.hatted else ""
        return f"briot_bouquet(alpha={self.alpha}, k={self.k}, deg f={self.f.total_degree}{tag})"


def linearizable(lam, label="") -> SingularityModel:
    return SingularityModel(kind="linearizable", lam=complex(lam), label=label)


def poincare_dulac(m, mu, label="") -> SingularityModel:
    return SingularityModel(kind="poincare_dulac", m=int(m), mu=complex(mu), label=label)


def briot_bouquet(alpha, q=0, f=None, k=1, hatted=False, hat_scale=1.0, label="") -> SingularityModel:
    if f is not None and not isinstance(f, PolyTable):
        f = PolyTable.from_monomials(f)
    return SingularityModel(
        kind="briot_bouquet", alpha=float(alpha), q=q, k=int(k), f=f,
        hatted=hatted, hat_scale=float(hat_scale), label=label,
    )


def _require_in_bidisk(z1, z2):
    if norm1(z1, z2) >= 1.0:
        raise TrajectoryEscape(f"point ({z1}, {z2}) lies outside the open bidisk", point=(z1, z2))


def eval_field(model: SingularityModel, z, check: bool = True):
    """Tangent vector (F1, F2) of the model field at z; broadcasts over arrays."""
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (z[0], z[1])
    if check and np.ndim(z1) == 0:
        _require_in_bidisk(z1, z2)
    if model.kind == "linearizable":
        return z1, model.lam * z2
    if model.kind == "poincare_dulac":
        return z1, model.m * z2 + model.mu * z1 ** model.m
    return z1, -model.alpha * z2 * (1.0 + z1 ** model.k * z2 * model.f(z1, z2))


def field_jacobian(model: SingularityModel, z):
    """2x2 complex Jacobian of the field at z."""
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (z[0], z[1])
    if model.kind == "linearizable":
        return np.array([[1.0, 0.0], [0.0, model.lam]], dtype=complex)
    if model.kind == "poincare_dulac":
        d21 = model.m * model.mu * z1 ** (model.m - 1)
        return np.array([[1.0, 0.0], [d21, model.m]], dtype=complex)
    a, k, f = model.alpha, model.k, model.f
    fz = f(z1, z2)
    d21 = -a * z2 ** 2 * (k * z1 ** (k - 1) * fz + z1 ** k * f.d_z1()(z1, z2))
    d22 = -a * (1.0 + 2.0 * z1 ** k * z2 * fz + z1 ** k * z2 ** 2 * f.d_z2()(z1, z2))
    return np.array([[1.0, 0.0], [d21, d22]], dtype=complex)


def _bb_z2_rhs(model, z1, t):
    a, k, f = model.alpha, model.k, model.f

    def rhs(s, y):
        w2 = complex(y[0], y[1])
        w1 = z1 * np.exp(s * t)
        d = t * (-a * w2 * (1.0 + w1 ** k * w2 * f(w1, w2)))
        return [d.real, d.imag]

    return rhs


def _bb_escape_event(z1, t):
    def event(s, y):
        return y[0] * y[0] + y[1] * y[1] - 1.0

    event.terminal = True
    event.direction = 1.0
    return event


def _bb_flow_segment(model, z1, z2, t, dense=False):
    """Briot-Bouquet flow along the straight segment 0 -> t.

    z1 is advanced exactly; z2 is integrated. Returns (z1(t), z2(t)) or, with
    ``dense``, a callable s -> (z1(s t), z2(s t)) for s in [0, 1].
    """
    if t == 0:
        if dense:
            return lambda s: (np.broadcast_to(z1, np.shape(s)).copy(), np.broadcast_to(z2, np.shape(s)).copy())
        return z1, z2
    # |z1 e^{st}| is monotone in s; escape through z1 is detectable analytically.
    z1_max = abs(z1) * math.exp(max(0.0, (t).real))
    if z1_max >= 1.0:
        s_esc = (0.0 - math.log(abs(z1))) / t.real if t.real > 0 else 0.0
        raise TrajectoryEscape("z1 coordinate leaves the bidisk along the segment", time=s_esc * t, point=(z1, z2))
    sol = solve_ivp(
        _bb_z2_rhs(model, z1, t), (0.0, 1.0), [z2.real, z2.imag],
        method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True,
        events=_bb_escape_event(z1, t),
    )
    if sol.status == 1:  # escape event fired
        s_esc = float(sol.t_events[0][0])
        raise TrajectoryEscape("z2 coordinate leaves the bidisk along the segment", time=s_esc * t, point=(z1, z2))
    if not sol.success:
        raise IntegrationFailure(f"flow integration failed: {sol.message}")

    if dense:
        interp = sol.sol

        def evaluate(s):
            s = np.asarray(s, dtype=float)
            y = interp(s)
            return z1 * np.exp(s * t), y[0] + 1j * y[1]

        return evaluate
    y = sol.y[:, -1]
    return z1 * np.exp(t), complex(y[0], y[1])


def flow(model: SingularityModel, z, t, check: bool = True, check_nodes: int = 8):
    """Flow of the model field from z along the straight time segment 0 -> t.

    Linearizable and Poincare-Dulac flows are closed-form (t may be an
    ndarray); the Briot-Bouquet flow integrates the z2 component. With
    ``check`` the trajectory is sampled along the segment and
    :class:`TrajectoryEscape` is raised if it leaves the open bidisk.
    """
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (z[0], z[1])
    if model.kind == "briot_bouquet":
        t = complex(t)
        w1, w2 = _bb_flow_segment(model, complex(z1), complex(z2), t)
        if check and norm1(w1, w2) >= 1.0:
            raise TrajectoryEscape("endpoint outside the bidisk", time=t, point=(w1, w2))
        return ChartPoint(w1, w2) if isinstance(z, ChartPoint) else (w1, w2)

    t_arr = np.asarray(t, dtype=complex)
    if model.kind == "linearizable":
        w1 = z1 * np.exp(t_arr)
        w2 = z2 * np.exp(model.lam * t_arr)
    else:
        e = np.exp(model.m * t_arr)
        w1 = z1 * np.exp(t_arr)
        w2 = (z2 + model.mu * t_arr * z1 ** model.m) * e
    if check:
        s = np.linspace(0.0, 1.0, check_nodes + 1)[1:]
        if np.ndim(t_arr) == 0:
            nodes = s * complex(t_arr)
        else:
            nodes = (s[:, None] * t_arr.reshape(1, -1)).ravel()
        if model.kind == "linearizable":
            bad = norm1(z1 * np.exp(nodes), z2 * np.exp(model.lam * nodes)) >= 1.0
        else:
            bad = norm1(z1 * np.exp(nodes), (z2 + model.mu * nodes * z1 ** model.m) * np.exp(model.m * nodes)) >= 1.0
        if np.any(bad):
            first = nodes[np.argmax(bad)]
            raise TrajectoryEscape("trajectory leaves the bidisk along the segment", time=complex(first), point=(z1, z2))
    if np.ndim(t_arr) == 0:
        w1c, w2c = complex(w1), complex(w2)
        return ChartPoint(w1c, w2c) if isinstance(z, ChartPoint) else (w1c, w2c)
    return w1, w2


def segment_evaluator(model: SingularityModel, z, t):
    """Dense trajectory s in [0,1] -> (z1(s t), z2(s t)) along one segment."""
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (complex(z[0]), complex(z[1]))
    t = complex(t)
    if model.kind == "briot_bouquet":
        return _bb_flow_segment(model, z1, z2, t, dense=True)
    if model.kind == "linearizable":
        lam = model.lam

        def evaluate(s):
            s = np.asarray(s, dtype=float)
            return z1 * np.exp(s * t), z2 * np.exp(lam * s * t)

        return evaluate
    m, mu = model.m, model.mu

    def evaluate(s):
        s = np.asarray(s, dtype=float)
        st = s * t
        return z1 * np.exp(st), (z2 + mu * st * z1 ** m) * np.exp(m * st)

    return evaluate


def integrate_flow(model: SingularityModel, z, t, rtol=RTOL, atol=ATOL):
    """Flow by direct integration of both coordinates (accuracy oracle)."""
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (complex(z[0]), complex(z[1]))
    t = complex(t)
    if t == 0:
        return (z1, z2)

    def rhs(s, y):
        w1, w2 = complex(y[0], y[1]), complex(y[2], y[3])
        f1, f2 = eval_field(model, (w1, w2), check=False)
        d1, d2 = t * f1, t * f2
        return [d1.real, d1.imag, d2.real, d2.imag]

    def escape(s, y):
        return max(y[0] ** 2 + y[1] ** 2, y[2] ** 2 + y[3] ** 2) - 1.0

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, 1.0), [z1.real, z1.imag, z2.real, z2.imag],
                    method="DOP853", rtol=rtol, atol=atol, events=escape)
    if sol.status == 1:
        raise TrajectoryEscape("trajectory leaves the bidisk", time=float(sol.t_events[0][0]) * t, point=(z1, z2))
    if not sol.success:
        raise IntegrationFailure(sol.message)
    y = sol.y[:, -1]
    return (complex(y[0], y[1]), complex(y[2], y[3]))


@dataclass(frozen=True)
class Trajectory:
    """Flow trajectory along a path: complex times and chart points."""

    times: tuple
    points: tuple
    vertex_indices: tuple

    @property
    def vertices(self):
        return tuple(self.points[i] for i in self.vertex_indices)


def flow_along_path(model: SingularityModel, path: FlowPath, nodes_per_segment: int = 8) -> Trajectory:
    """Evaluate the flow along a piecewise-linear complex-time path.

    Integration restarts at every vertex, which keeps branch continuity by
    continuation. Each node is checked to lie inside the open bidisk.
    """
    current = (path.base.z1, path.base.z2)
    _require_in_bidisk(*current)
    times = [0j]
    points = [ChartPoint(*current)]
    vertex_indices = [0]
    for a, b in zip(path.times, path.times[1:]):
        dt = b - a
        if dt == 0:
            vertex_indices.append(len(points) - 1)
            continue
        evaluate = segment_evaluator(model, current, dt)
        s_nodes = np.linspace(0.0, 1.0, nodes_per_segment + 1)[1:]
        w1, w2 = evaluate(s_nodes)
        bad = norm1(w1, w2) >= 1.0
        if np.any(bad):
            i = int(np.argmax(bad))
            raise TrajectoryEscape(
                "trajectory leaves the bidisk along the path",
                time=a + s_nodes[i] * dt, point=current,
            )
        for s, u1, u2 in zip(s_nodes, w1, w2):
            times.append(a + s * dt)
            points.append(ChartPoint(complex(u1), complex(u2)))
        current = (complex(w1[-1]), complex(w2[-1]))
        vertex_indices.append(len(points) - 1)
    return Trajectory(tuple(times), tuple(points), tuple(vertex_indices))


def bb_time_factor(model: SingularityModel, z):
    """Reparametrizing factor c(z) with c(z) X tracing the reciprocal motion.

    Under the field c(z) X the z2 coordinate moves exactly like z2 e^t.
    """
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (z[0], z[1])
    return -1.0 / (model.alpha * (1.0 + z1 ** model.k * z2 * model.f(z1, z2)))


def hat_field(model: SingularityModel, max_degree: int = 16, target_sup: float = 0.98) -> SingularityModel:
    """Coordinate-swapped reciprocal model of a two-separatrix normal form.

    Requires the classical form (k = 1, every monomial of f divisible by
    z2^q). The reciprocal series (1 + z1 z2 f)^{-1} = 1 + z1 z2 g is expanded
    to ``max_degree``; the swapped model has alpha_hat = 1/alpha and
    k_hat = q + 1. When the estimated sup of the new table is not < 1 the
    hat chart is shrunk by a homothety of ratio ``hat_scale`` < 1 (recorded
    on the model; chart maps are :func:`to_hat_chart` / :func:`from_hat_chart`).

    Flows of the original and hatted fields trace the same leaves up to the
    truncation of the reciprocal series.
    """
    if model.kind != "briot_bouquet" or model.hatted:
        raise ValueError("hat_field expects a non-hatted briot_bouquet model")
    if model.k != 1:
        raise ValueError("hat_field expects the classical form with k = 1")
    q = model.q
    u = model.f.shifted(1, 1)
    g_shift = reciprocal_one_plus(u, max_degree + 2)
    if g_shift.is_zero():
        g_tilde = PolyTable.zero()
    else:
        g_tilde = g_shift.unshifted(1, 1)
    # structural guarantee: monomials of f carry z2^q, hence so do those of g
    hat_table = g_tilde.swapped().unshifted(q, 0)
    alpha_hat = 1.0 / model.alpha
    k_hat = q + 1
    if k_hat < alpha_hat:
        raise ValueError("resonance bucket is inconsistent: q + 1 < 1/alpha")
    scale = 1.0
    table = hat_table
    for _ in range(200):
        if table.sup_estimate() < target_sup:
            break
        scale *= 0.9
        table = hat_table.scaled(scale, scale) * (scale ** (k_hat + 1))
    else:
        raise IntegrationFailure("series truncation failed to reach sup |g| < 1 at max degree")
    return SingularityModel(
        kind="briot_bouquet", alpha=alpha_hat, q=None, k=k_hat, f=table,
        hatted=True, hat_scale=scale, label=(model.label + ":hat") if model.label else "hat",
    )


def to_hat_chart(hat_model: SingularityModel, z) -> ChartPoint:
    """Chart map from the original coordinates into the hatted chart."""
    c = hat_model.hat_scale
    z1, z2 = (z.z1, z.z2) if isinstance(z, ChartPoint) else (z[0], z[1])
    return ChartPoint(z2 / c, z1 / c)


def from_hat_chart(hat_model: SingularityModel, v) -> ChartPoint:
    c = hat_model.hat_scale
    v1, v2 = (v.z1, v.z2) if isinstance(v, ChartPoint) else (v[0], v[1])
    return ChartPoint(c * v2, c * v1)


@dataclass(frozen=True)
class ReparamField:
    """A reparametrized field used by the transversal-reaching motions.

    ``leaf_consistent`` records whether the field is tangent to the model
    foliation. The u = 1 linearizable display is implemented as printed even
    though it is not a leafwise reparametrization of the model field (its
    z1 component lacks the z1 factor); pass ``lin_u1_variant=True`` to
    :func:`reparametrized_field` for the tangent variant.
    """

    label: str
    evaluate: object
    closed_flow: object = None
    leaf_consistent: bool = True
    time_factor: complex | None = None


def reparametrized_field(model: SingularityModel, u: int, lin_u1_variant: bool = False) -> ReparamField:
    if u not in (1, 2):
        raise ValueError("u must be 1 or 2")
    if model.kind == "linearizable":
        lam = model.lam
        if u == 1:
            if lin_u1_variant:
                return ReparamField(
                    "lin-u1-variant", lambda z1, z2: (z1, lam * z2),
                    closed_flow=lambda z1, z2, t: (z1 * np.exp(t), z2 * np.exp(lam * t)),
                    time_factor=1.0,
                )
            return ReparamField(
                "lin-u1-printed", lambda z1, z2: (1.0 + 0j * z1, lam * z2),
                closed_flow=lambda z1, z2, t: (z1 + t, z2 * np.exp(lam * t)),
                leaf_consistent=False,
            )
        return ReparamField(
            "lin-u2", lambda z1, z2: (z1 / lam, z2),
            closed_flow=lambda z1, z2, t: (z1 * np.exp(t / lam), z2 * np.exp(t)),
            time_factor=1.0 / lam,
        )
    if model.kind == "poincare_dulac":
        return ReparamField(
            f"pd-u{u}", lambda z1, z2: eval_field(model, (z1, z2), check=False),
            closed_flow=lambda z1, z2, t: flow(model, (z1, z2), t, check=False),
            time_factor=1.0,
        )
    if u == 1:
        return ReparamField(
            "bb-u1", lambda z1, z2: eval_field(model, (z1, z2), check=False),
            time_factor=1.0,
        )

    def evaluate(z1, z2):
        c = bb_time_factor(model, (z1, z2))
        f1, f2 = eval_field(model, (z1, z2), check=False)
        return c * f1, c * f2

    return ReparamField("bb-u2", evaluate, time_factor=None)


def check_nondegenerate(jet, constant=(0.0, 0.0), tol: float = 1e-13) -> bool:
    """True iff the 1-jet has an isolated zero at the singular point."""
    c = np.asarray(constant, dtype=complex)
    if np.any(np.abs(c) > tol):
        return False
    a = np.asarray(jet, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError("jet must be a 2x2 matrix")
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return bool(abs(det) > tol)


def model_to_dict(model: SingularityModel) -> dict:
    d = {"kind": model.kind}
    if model.label:
        d["label"] = model.label
    if model.kind == "linearizable":
        d["lambda"] = [model.lam.real, model.lam.imag]
    elif model.kind == "poincare_dulac":
        d["m"] = model.m
        d["mu"] = [model.mu.real, model.mu.imag]
    else:
        d["alpha"] = model.alpha
        if model.q is not None:
            d["q"] = model.q
        d["k"] = model.k
        d["f"] = [[i, j, c.real, c.imag] for i, j, c in model.f.monomials()]
        if model.hatted:
            d["hatted"] = True
            d["hat_scale"] = model.hat_scale
    return d


def model_from_dict(d: dict) -> SingularityModel:
    kind = d["kind"]
    label = d.get("label", "")
    if kind == "linearizable":
        re, im = d["lambda"]
        return linearizable(complex(re, im), label=label)
    if kind == "poincare_dulac":
        re, im = d["mu"]
        return poincare_dulac(d["m"], complex(re, im), label=label)
    if kind == "briot_bouquet":
        f = PolyTable.from_monomials((i, j, complex(re, im)) for i, j, re, im in d.get("f", []))
        return briot_bouquet(
            d["alpha"], q=d.get("q"), f=f, k=d.get("k", 1),
            hatted=d.get("hatted", False), hat_scale=d.get("hat_scale", 1.0), label=label,
        )
    raise ValueError(f"unknown model kind {kind!r}")
