"""Disk covering of the unit disk, product cells, and the pairwise
relative-closeness machinery over them.

Everywhere the asymptotic construction uses e^{C4 R}, the lab exposes the
single desk parameter kappa; the map kappa <-> (C4, R_desk) is recorded in
reports so asymptotic claims can be probed by sweeping kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError
from .metric import bowen_cell_check, bowen_threshold, r_sing
from .models import ChartPoint, FlowPath, SingularityModel, flow, norm1
from .sampling import make_spec, trace_path

__all__ = [
    "EDisk",
    "CellCovering",
    "build_disk_covering",
    "classify_pair",
    "RelCloseVerdict",
    "relatively_close_check",
    "CellPairRow",
    "CellReport",
    "cell_decomposition_check",
    "sample_negative_pairs",
]


@dataclass(frozen=True, slots=True)
class EDisk:
    """Euclidean disk D(center, radius) in a transversal chart."""

    center: complex
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def scaled(self, s: float) -> "EDisk":
        return EDisk(self.center, self.radius * s)

    def contains(self, z, slack: float = 0.0) -> bool:
        return abs(z - self.center) <= self.radius + slack

    def sample(self, count: int, rng) -> np.ndarray:
        r = self.radius * np.sqrt(rng.random(count))
        a = rng.random(count) * 2.0 * math.pi
        return self.center + r * np.exp(1j * a)


class CellCovering:
    """The radial-annular disk covering of the unit disk at scale kappa.

    r0 = e^-kappa, r_n = r0 e^{n/kappa}, N = ceil(kappa^2), N' = ceil(4 pi
    kappa); D_0 = D(0, r0) and D_nk = D(r_{n-1} e^{i theta_k}, r_n - r_{n-1})
    with theta_k = 2 pi k / N'. The formulas leave a thin uncovered sliver at
    the outer edge of ring N whenever r_N is close to 1 (the mid-angle reach
    of a ring falls short of its outer radius by O(1/kappa^2)); a guard ring
    n = N + 1 of the same shape is appended when needed so the covering
    really covers the open unit disk. Cell lookup is by (n, k), n = 0 for
    the separatrix disk.
    """

    def __init__(self, kappa: float, self_check_samples: int = 4000, rng_seed: int = 11):
        if kappa < 4:
            raise ValueError("kappa must be >= 4")
        self.kappa = float(kappa)
        self.N = int(math.ceil(kappa ** 2))
        self.Nprime = int(math.ceil(4.0 * math.pi * kappa))
        self.r0 = math.exp(-kappa)
        # mid-angle reach of ring N decides whether a guard ring is needed
        phi = math.pi / self.Nprime
        growth = math.exp(1.0 / kappa)
        reach = math.cos(phi) + math.sqrt(max((growth - 1.0) ** 2 - math.sin(phi) ** 2, 0.0))
        self.guard_rings = 0
        while self.ring_radius(self.N - 1 + self.guard_rings) * reach < 1.0:
            self.guard_rings += 1
        self.n_max = self.N + self.guard_rings
        self._check(self_check_samples, rng_seed)

    def ring_radius(self, n: int) -> float:
        return self.r0 * math.exp(n / self.kappa)

    @property
    def relative_width(self) -> float:
        """Cell width over inner radius, e^{1/kappa} - 1."""
        return math.expm1(1.0 / self.kappa)

    def disk(self, n: int, k: int = 0) -> EDisk:
        if n == 0:
            return EDisk(0j, self.r0)
        if not 1 <= n <= self.n_max:
            raise KeyError(f"ring index {n} out of range")
        if not 1 <= k <= self.Nprime:
            raise KeyError(f"angle index {k} out of range")
        rin = self.ring_radius(n - 1)
        theta = 2.0 * math.pi * k / self.Nprime
        return EDisk(rin * complex(math.cos(theta), math.sin(theta)), rin * self.relative_width)

    def __len__(self):
        return 1 + self.n_max * self.Nprime

    def cells(self):
        yield (0, 0), self.disk(0)
        for n in range(1, self.n_max + 1):
            for k in range(1, self.Nprime + 1):
                yield (n, k), self.disk(n, k)

    def cell_of_point(self, z: complex):
        """Some cell id containing z (raises CoverageError if none)."""
        ids = self.candidate_cells(z)
        for nk in ids:
            if self.disk(*nk).contains(z, slack=1e-15):
                return nk
        raise CoverageError(f"point {z} not covered at kappa = {self.kappa}")

    def candidate_cells(self, z: complex):
        r = abs(z)
        if r < self.r0:
            return [(0, 0)]
        n_guess = int(math.floor(self.kappa * math.log(r / self.r0))) + 1
        theta = math.atan2(z.imag, z.real) % (2.0 * math.pi)
        k_guess = int(round(theta * self.Nprime / (2.0 * math.pi)))
        out = [(0, 0)] if r <= self.r0 * 1.001 else []
        for n in (n_guess, n_guess + 1, n_guess - 1, n_guess + 2):
            if 1 <= n <= self.n_max:
                for dk in (0, 1, -1, 2, -2):
                    k = (k_guess + dk - 1) % self.Nprime + 1
                    out.append((n, k))
        return out

    def covers_point(self, z: complex) -> bool:
        try:
            self.cell_of_point(z)
            return True
        except CoverageError:
            return False

    def _check(self, samples: int, rng_seed: int):
        rng = np.random.default_rng(rng_seed)
        r = np.sqrt(rng.random(samples))
        a = rng.random(samples) * 2 * math.pi
        pts = r * np.exp(1j * a)
        # concentrate extra probes at the delicate outer shell
        shell = (1.0 - 2e-4 * rng.random(samples // 4)) * np.exp(2j * math.pi * rng.random(samples // 4))
        for z in np.concatenate([pts, shell]):
            if not self.covers_point(complex(z)):
                raise CoverageError(f"kappa = {self.kappa} too small: sampled gap at {z}")


def build_disk_covering(kappa: float, self_check_samples: int = 4000, rng_seed: int = 11) -> CellCovering:
    return CellCovering(kappa, self_check_samples, rng_seed)


def _ratio_ok(a: complex, b: complex, thr_ab: float, thr_ba: float) -> bool:
    if a == 0 or b == 0:
        return False
    return abs(1.0 - a / b) <= thr_ab and abs(1.0 - b / a) <= thr_ba


def classify_pair(model: SingularityModel, z, w, delta: float, rsing: float):
    """Per-coordinate configuration labels for a pair of points.

    Linearizable and Briot-Bouquet pairs get C1 (both coordinates below
    delta rsing^2) or C2 (bounded mutual ratio defect, threshold delta for
    the linearizable model and delta/8 for Briot-Bouquet); the resonant
    model uses the log-weighted thresholds with the C1.1/C1.2/C2.1/C2.2
    split. The first satisfied configuration per coordinate wins, 'none'
    otherwise.
    """
    zp = z if isinstance(z, ChartPoint) else ChartPoint(*z)
    wp = w if isinstance(w, ChartPoint) else ChartPoint(*w)
    if zp.norm1 == 0 or wp.norm1 == 0:
        raise ValueError("classify_pair expects nonzero points")
    sep_thr = delta * rsing ** 2
    if model.kind != "poincare_dulac":
        ratio_thr = delta if model.kind == "linearizable" else delta / 8.0
        labels = []
        for a, b in ((zp.z1, wp.z1), (zp.z2, wp.z2)):
            if abs(a) <= sep_thr and abs(b) <= sep_thr:
                labels.append("C1")
            elif _ratio_ok(a, b, ratio_thr, ratio_thr):
                labels.append("C2")
            else:
                labels.append("none")
        return tuple(labels)
    lz = abs(math.log(zp.norm1))
    lw = abs(math.log(wp.norm1))
    thr_z = delta / (4.0 * lz) if lz > 0 else math.inf
    thr_w = delta / (4.0 * lw) if lw > 0 else math.inf
    if abs(zp.z1) <= sep_thr and abs(wp.z1) <= sep_thr:
        lab1 = "C1.1"
    elif _ratio_ok(zp.z1, wp.z1, thr_w, thr_z):
        lab1 = "C1.2"
    else:
        lab1 = "none"
    m = model.m
    if abs(zp.z2 - wp.z2) <= 0.5 * delta * max(abs(zp.z1) ** m, abs(wp.z1) ** m):
        lab2 = "C2.1"
    elif _ratio_ok(zp.z2, wp.z2, thr_w, thr_z):
        lab2 = "C2.2"
    else:
        lab2 = "none"
    return (lab1, lab2)


@dataclass(frozen=True)
class RelCloseVerdict:
    passed: bool
    worst_defect: float      # max over nodes of ||dz||_1 / (delta ||anchor||_1)
    counterexample: FlowPath | None
    paths_checked: int

    def __bool__(self):
        return self.passed


def _replay(model, point, times):
    """Flow of ``point`` evaluated at the vertex times of a path."""
    if model.kind != "briot_bouquet":
        t = np.asarray(times, dtype=complex)
        if model.kind == "linearizable":
            return point.z1 * np.exp(t), point.z2 * np.exp(model.lam * t)
        return (point.z1 * np.exp(t),
                (point.z2 + model.mu * t * point.z1 ** model.m) * np.exp(model.m * t))
    cur = (point.z1, point.z2)
    out1, out2 = [cur[0]], [cur[1]]
    for a, b in zip(times, times[1:]):
        cur = flow(model, cur, b - a, check=False)
        out1.append(cur[0])
        out2.append(cur[1])
    return np.array(out1), np.array(out2)


def relatively_close_check(
    model: SingularityModel,
    z,
    w,
    h: float,
    delta: float,
    path_samples: int = 12,
    rng_seed: int = 0,
) -> RelCloseVerdict:
    """Falsify that z and w are (h, delta)-relatively close following the flow.

    Samples radial-then-jittered flow paths of model length <= h anchored at
    both points; along each path the displayed inequality
    ||Phi_a - Phi_b||_1 <= delta ||Phi_anchor||_1 is checked at every node.
    Escapes of the companion trajectory count as violations.
    """
    zp = z if isinstance(z, ChartPoint) else ChartPoint(*z)
    wp = w if isinstance(w, ChartPoint) else ChartPoint(*w)
    if zp.norm1 == 0 or wp.norm1 == 0:
        raise ValueError("relatively_close_check expects nonzero points")
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    checked = 0
    specs = [make_spec(h, rng, mode="radial" if i < max(1, path_samples // 3) else "jitter")
             for i in range(max(1, path_samples))]
    for spec in specs:
        for anchor, other in ((zp, wp), (wp, zp)):
            sp = trace_path(model, anchor, spec, escape_radius=0.999999)
            checked += 1
            a1 = np.array([p.z1 for p in sp.points])
            a2 = np.array([p.z2 for p in sp.points])
            try:
                b1, b2 = _replay(model, other, sp.path.times)
            except Exception:
                return RelCloseVerdict(False, math.inf, sp.path, checked)
            # companion must stay in the bidisk
            if np.any(norm1(b1, b2) >= 1.0):
                return RelCloseVerdict(False, math.inf, sp.path, checked)
            defect = norm1(a1 - b1, a2 - b2) / (delta * norm1(a1, a2))
            m = float(np.max(defect))
            worst = max(worst, m)
            if m > 1.0:
                return RelCloseVerdict(False, worst, sp.path, checked)
    return RelCloseVerdict(True, worst, None, checked)


@dataclass(frozen=True)
class CellPairRow:
    pair_id: int
    cell_id: str
    labels: tuple
    branch: str        # "bowen" or "relative"
    worst_margin: float
    verdict: bool


@dataclass(frozen=True)
class CellReport:
    rows: list
    kappa: float
    delta_desk: float
    rsing_desk: float
    R_desk: float
    pass_rate: float

    def csv_rows(self):
        yield ("pair_id", "cell_id", "labels", "branch", "worst_margin", "verdict")
        for r in self.rows:
            yield (r.pair_id, r.cell_id, "|".join(r.labels), r.branch,
                   f"{r.worst_margin:.6g}", "pass" if r.verdict else "fail")


def _sample_cell_pairs(covering, rng, pair_samples, max_center=0.25):
    """Random product cells U = D1 x D2 with 2U inside the half bidisk."""
    ids = [(0, 0)]
    n_cap = int(math.floor(covering.kappa * math.log(max_center / covering.r0)))
    for n in range(1, min(n_cap, covering.n_max) + 1):
        for k in range(1, covering.Nprime + 1):
            ids.append((n, k))
    for _ in range(pair_samples):
        nk1 = ids[rng.integers(0, len(ids))]
        nk2 = ids[rng.integers(0, len(ids))]
        d1, d2 = covering.disk(*nk1), covering.disk(*nk2)
        z = ChartPoint(complex(d1.scaled(2.0).sample(1, rng)[0]), complex(d2.scaled(2.0).sample(1, rng)[0]))
        w = ChartPoint(complex(d1.scaled(2.0).sample(1, rng)[0]), complex(d2.scaled(2.0).sample(1, rng)[0]))
        if z.norm1 == 0 or w.norm1 == 0:
            continue
        yield (nk1, nk2), z, w


def cell_decomposition_check(
    model: SingularityModel,
    covering: CellCovering,
    constants,
    pair_samples: int = 100,
    path_samples: int = 8,
    h: float = 0.05,
    rng_seed: int = 0,
    delta_desk: float | None = None,
    bowen_samples: int = 40,
) -> CellReport:
    """Desk harness for the product-cell decomposition.

    Pairs sampled from doubled product cells are routed to the singular
    Bowen-cell check when both lie in the singular core, and to the
    relative-closeness check at delta_desk (default 10x the cell relative
    width; the asymptotic delta = e^{-2R} is tied to C4 > C3 + 2, which the
    kappa parametrization preserves only up to this logged factor) otherwise.
    """
    kappa = covering.kappa
    R_desk = math.log(kappa) / constants.C4
    rs = r_sing(R_desk, constants.eps, constants.C3)
    if delta_desk is None:
        delta_desk = 10.0 * covering.relative_width
    rng = np.random.default_rng(rng_seed)
    rows = []
    n_pass = 0
    for i, (cells_, z, w) in enumerate(_sample_cell_pairs(covering, rng, pair_samples)):
        cell_id = f"{cells_[0]}x{cells_[1]}"
        labels = classify_pair(model, z, w, delta_desk, rs)
        if z.norm1 < rs and w.norm1 < rs:
            okz = bowen_cell_check(model, z, R_desk, constants.eps, constants,
                                   samples=bowen_samples, rng_seed=rng_seed + i)
            okw = bowen_cell_check(model, w, R_desk, constants.eps, constants,
                                   samples=bowen_samples, rng_seed=rng_seed + i + 1)
            verdict = bool(okz) and bool(okw)
            margin = max(okz.max_norm_seen, okw.max_norm_seen) / constants.eps
            branch = "bowen"
        else:
            v = relatively_close_check(model, z, w, h, delta_desk,
                                       path_samples=path_samples, rng_seed=rng_seed + 7 * i)
            verdict = v.passed
            margin = v.worst_defect
            branch = "relative"
        n_pass += verdict
        rows.append(CellPairRow(i, cell_id, labels, branch, margin, verdict))
    rate = n_pass / len(rows) if rows else 1.0
    return CellReport(rows, kappa, delta_desk, rs, R_desk, rate)


def sample_negative_pairs(covering: CellCovering, rng, count: int, separation: float = 3.0,
                          max_center: float = 0.25):
    """Pairs straddling cells at ``separation`` times the cell relative
    width (negative controls for the decomposition harness)."""
    w_rel = covering.relative_width
    out = []
    n_cap = int(math.floor(covering.kappa * math.log(max_center / covering.r0)))
    while len(out) < count:
        n = int(rng.integers(2, max(3, min(n_cap, covering.n_max))))
        k = int(rng.integers(1, covering.Nprime + 1))
        d = covering.disk(n, k)
        z1 = complex(d.sample(1, rng)[0])
        bump = 1.0 + separation * w_rel * np.exp(1j * rng.uniform(0, 2 * math.pi))
        z = ChartPoint(z1, complex(d.sample(1, rng)[0]))
        w = ChartPoint(z1 * bump, z.z2 * (1.0 + separation * w_rel * np.exp(1j * rng.uniform(0, 2 * math.pi))))
        if w.norm1 < 0.5 and w.norm1 > 0:
            out.append((z, w))
    return out
