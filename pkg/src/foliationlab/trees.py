"""Flow fans and hyperbolic motion trees over the transversal mesh.

A tree maps words over [0, p-1] of length <= H to points of the Poincare
disk. Chart-side nodes carry a chart point on a mesh transversal; their
children come from the standard flow fan (times C8^-1 h1 |ln r_j| e^{2 pi i
k / p}) followed by the reach-a-transversal correction. Fringe nodes use the
exact regular fan at hyperbolic radius h1 and snap to the regular lattice.

Model surrogates, documented: the lift of a fan path is placed radially at
hyperbolic distance = its measured model length (fan directions map to disk
directions through a per-node frame), and the reach correction extends the
child radially outward by its measured length, so the displayed inclusions
are always re-checked numerically on the placed points, never assumed.
"""

from __future__ import annotations

import cmath
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantsBundle
from .disk import HDisk, HPoint, hradius_to_eradius, mobius_from_origin, poincare_distance
from .errors import FoliationLabError
from .mesh import Mesh, ReachResult, reach_transversal
from .metric import poincare_length_quick
from .models import ChartPoint, FlowPath, SingularityModel, eval_field, flow, norm1

__all__ = [
    "FanResult",
    "flow_fan",
    "TreeNode",
    "MotionTree",
    "CutoffTree",
    "build_motion_tree",
    "cutoff_tree",
    "verify_tree_coverage",
    "local_inclusion_check",
]


@dataclass(frozen=True)
class FanResult:
    times: tuple          # complex fan flow times, one per branch
    points: tuple         # chart points reached
    lengths: tuple        # measured model lengths of the fan paths
    preimages: tuple      # HPoint positions in the Poincare disk


def _fan_lengths_closed(model, z: ChartPoint, taus: np.ndarray, order: int = 12) -> np.ndarray:
    """Vectorized model lengths of straight fan segments for closed-form flows."""
    glx, glw = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (glx + 1.0)                      # (order,)
    st = s[:, None] * taus[None, :]            # (order, p)
    z1 = z.z1 * np.exp(st)
    if model.kind == "linearizable":
        z2 = z.z2 * np.exp(model.lam * st)
        f1, f2 = z1, model.lam * z2
    else:
        z2 = (z.z2 + model.mu * st * z.z1 ** model.m) * np.exp(model.m * st)
        f1, f2 = z1, model.m * z2 + model.mu * z1 ** model.m
    n = norm1(z1, z2)
    speed = np.sqrt(np.abs(f1) ** 2 + np.abs(f2) ** 2)
    integrand = 2.0 * np.abs(taus)[None, :] * speed / (n * (1.0 + np.abs(np.log(n))))
    return 0.5 * (glw[:, None] * integrand).sum(axis=0)


def flow_fan(model: SingularityModel, z: ChartPoint, level_log: float,
             constants: ConstantsBundle, base: complex = 0j, frame: float = 0.0) -> FanResult:
    """Standard flow fan at a point of a transversal with |ln level| = level_log.

    Branch k flows for time C8^-1 h1 level_log e^{2 pi i k / p}; the
    preimage of branch k is placed at hyperbolic distance = the measured
    model length of the fan segment, in disk direction frame + 2 pi k / p
    from ``base``.
    """
    p = constants.p
    radius_t = constants.h1 * level_log / constants.C8
    ks = np.arange(p)
    taus = radius_t * np.exp(2j * math.pi * ks / p)
    if model.kind == "briot_bouquet":
        pts, lens = [], []
        for tau in taus:
            w = flow(model, z, complex(tau), check=False)
            pts.append(w)
            lens.append(poincare_length_quick(model, FlowPath(z, (0j, complex(tau)))))
        lengths = np.array(lens)
    else:
        w1 = z.z1 * np.exp(taus)
        if model.kind == "linearizable":
            w2 = z.z2 * np.exp(model.lam * taus)
        else:
            w2 = (z.z2 + model.mu * taus * z.z1 ** model.m) * np.exp(model.m * taus)
        pts = [ChartPoint(complex(a), complex(b)) for a, b in zip(w1, w2)]
        lengths = _fan_lengths_closed(model, z, taus)
    dirs = frame + 2.0 * math.pi * ks / p
    radial = np.tanh(lengths / 2.0) * np.exp(1j * dirs)
    zetas = mobius_from_origin(base, radial)
    pre = tuple(HPoint(complex(v)) for v in zetas)
    return FanResult(tuple(complex(t) for t in taus), tuple(pts), tuple(float(l) for l in lengths), pre)


def _arrival_frame(base: complex, direction: float, radial_e: float) -> float:
    """Direction of the transported geodesic at its endpoint (parallel-ish
    frame used to orient the child's own fan)."""
    w = radial_e * cmath.exp(1j * direction)
    return direction - 2.0 * cmath.phase(1.0 + base.conjugate() * w)


def _extend(theta: complex, base: complex, direction: float, extra: float) -> complex:
    """Extend radially outward (in the base-centered chart) by hyperbolic ``extra``."""
    if extra <= 0:
        return theta
    w = (theta - base) / (1.0 - base.conjugate() * theta)
    d = poincare_distance(0, w)
    r_new = math.tanh((d + extra) / 2.0)
    w_new = r_new * cmath.exp(1j * cmath.phase(w)) if w != 0 else r_new * cmath.exp(1j * direction)
    return complex(mobius_from_origin(base, w_new))


@dataclass
class TreeNode:
    word: tuple
    theta: complex                 # position in the Poincare disk
    frame: float                   # fan orientation at this node
    chart: ChartPoint | None       # chart point (None once on the fringe)
    transversal_id: tuple | None
    regular: bool
    fan_length: float = 0.0        # model length of the fan segment that made it
    reach_length: float = 0.0      # model length of the reach correction
    expandable: bool = True
    step_times: tuple | None = None  # parent-chart flow polyline that made this node


class MotionTree:
    """Hyperbolic motion tree of deepness H with branching p."""

    def __init__(self, model, mesh, constants: ConstantsBundle, H: int):
        self.model = model
        self.mesh = mesh
        self.constants = constants
        self.H = int(H)
        self.p = constants.p
        self.h1 = constants.h1
        self.hbar = constants.hbar
        self.nodes: dict[tuple, TreeNode] = {}
        self.expanded: set[tuple] = set()

    @property
    def cutoff_radius(self) -> float:
        return 2.0 * self.h1 + self.H * self.hbar

    @property
    def coverage_radius(self) -> float:
        return self.h1 + self.H * self.hbar

    def theta(self, word) -> complex:
        return self.nodes[word].theta

    def children(self, word):
        return [word + (k,) for k in range(self.p) if word + (k,) in self.nodes]

    def cutoff_words(self):
        """Prefix-closed member set: every prefix image inside D_{2h1 + H hbar}."""
        out = set()
        radius = self.cutoff_radius
        for w in sorted(self.nodes, key=len):
            if w and w[:-1] not in out:
                continue
            if poincare_distance(0, self.nodes[w].theta) < radius:
                out.add(w)
        return out

    def dump(self) -> dict:
        return {
            "H": self.H, "p": self.p, "h1": self.h1, "hbar": self.hbar,
            "nodes": [
                {
                    "word": list(n.word),
                    "theta": [n.theta.real, n.theta.imag],
                    "transversal": list(n.transversal_id) if n.transversal_id else None,
                    "regular": n.regular,
                }
                for n in self.nodes.values()
            ],
        }


@dataclass(frozen=True)
class CutoffTree:
    members: frozenset

    def __contains__(self, word):
        return word in self.members

    def __len__(self):
        return len(self.members)


def cutoff_tree(tree: MotionTree) -> CutoffTree:
    return CutoffTree(frozenset(tree.cutoff_words()))


def _lin_first_hit_closed(model, z: ChartPoint, direction: complex, rj: float):
    """First real t with ||flow(z, t direction)||_1 = rj for the
    linearizable model (both coordinates are exponentials in t): candidate
    crossing times per coordinate, validated against the true norm."""
    a = direction.real
    b = (model.lam * direction).real
    cands = []
    for coeff, mag in ((a, abs(z.z1)), (b, abs(z.z2))):
        if mag == 0 or coeff == 0:
            continue
        cands.append(math.log(rj / mag) / coeff)
    good = []
    for t in cands:
        n1 = abs(z.z1) * math.exp(a * t)
        n2 = abs(z.z2) * math.exp(b * t)
        if max(n1, n2) <= rj * (1.0 + 1e-9):
            good.append(t)
    if not good:
        raise FoliationLabError("no norm-level crossing along the chosen direction")
    return min(good, key=abs)


def _lin_reach_direction(model, z: ChartPoint, omega1: complex, omega2: complex) -> complex:
    """Phase-1 flow-time direction growing the dominant coordinate."""
    if abs(z.z1) >= abs(z.z2):
        return omega1
    return omega2 / model.lam


def _lin_reach_lite(model, z: ChartPoint, mesh: Mesh, omega: complex, omega2: complex | None = None):
    """Closed-form reach (level + nearest angle) for the linearizable model.

    Same two-phase motion as reach_transversal, with the first-hit time in
    closed form; returns (transversal id, endpoint, model length).
    """
    if omega2 is None:
        omega2 = omega
    j = mesh.level_index_for(z.norm1)
    rj = mesh.level_radius(j)
    d = _lin_reach_direction(model, z, omega, omega2)
    T = _lin_first_hit_closed(model, z, d, rj)
    end = flow(model, z, T * d, check=False)
    u = 1 if abs(end.z1) >= abs(end.z2) else 2
    zu = end.z1 if u == 1 else end.z2
    theta = math.atan2(zu.imag, zu.real) % (2.0 * math.pi)
    k = mesh.nearest_angle(theta)
    dtheta = (mesh.theta(k) - theta + math.pi) % (2.0 * math.pi) - math.pi
    t2 = 1j * dtheta if u == 1 else 1j * dtheta / model.lam
    end2 = flow(model, end, t2, check=False)
    path = FlowPath(z, (0j, T * d, T * d + t2))
    length = poincare_length_quick(model, path, order=12)
    return (("s", j, k, u), end2, length, path.times)


def build_motion_tree(
    model: SingularityModel,
    mesh: Mesh,
    x: ChartPoint,
    R_desk: float,
    constants: ConstantsBundle,
    H: int | None = None,
    node_cap: int = 200_000,
    lin_fast: bool = True,
) -> MotionTree:
    """Motion tree rooted at a transversal point.

    Expansion is lazy, outer-first (max hyperbolic radius first), capped at
    ``node_cap`` created nodes; nodes outside D_{2h1 + H hbar} or whose
    chart point fell below the singular radius are not expanded. Chart
    nodes use the flow fan + reach correction; fringe nodes the exact
    regular fan with regular-lattice ids.
    """
    if H is None:
        H = max(0, int(math.ceil((R_desk - constants.h1) / constants.hbar)))
    tree = MotionTree(model, mesh, constants, H)
    root_t = mesh.on_some_transversal(x, coord_tol=1e-6)
    root = TreeNode((), 0j, 0.0, x, root_t.id if root_t else None,
                    regular=x.norm1 > 2.0 * constants.rho)
    tree.nodes[()] = root
    if H == 0:
        return tree
    from .mesh import _lin_omega
    omega = _lin_omega(model.lam) if model.kind == "linearizable" else 1.0 + 0j
    omega2 = _lin_omega(1.0 / model.lam) if model.kind == "linearizable" else 1.0 + 0j

    counter = 0
    heap = []

    def push(word):
        nonlocal counter
        n = tree.nodes[word]
        d = poincare_distance(0, n.theta)
        heapq.heappush(heap, (-d, counter, word))
        counter += 1

    push(())
    cutoff_r = tree.cutoff_radius
    r1 = hradius_to_eradius(constants.h1)
    while heap and len(tree.nodes) < node_cap:
        _, _, word = heapq.heappop(heap)
        node = tree.nodes[word]
        if len(word) >= H or not node.expandable:
            continue
        if poincare_distance(0, node.theta) >= cutoff_r:
            continue
        tree.expanded.add(word)
        if node.regular or node.chart is None:
            # exact regular fan: children at hyperbolic radius h1
            for k in range(tree.p):
                d = node.frame + 2.0 * math.pi * k / tree.p
                zeta = complex(mobius_from_origin(node.theta, r1 * cmath.exp(1j * d)))
                child = TreeNode(word + (k,), zeta, _arrival_frame(node.theta, d, r1),
                                 None, ("r",) + _lattice_of(zeta, mesh), regular=True,
                                 fan_length=constants.h1)
                tree.nodes[child.word] = child
                push(child.word)
                if len(tree.nodes) >= node_cap:
                    break
            continue
        lvl_log = mesh.level_log(_node_level(node, mesh))
        fan = flow_fan(model, node.chart, lvl_log, constants, base=node.theta, frame=node.frame)
        for k in range(tree.p):
            zeta = fan.preimages[k].value
            wpt = fan.points[k]
            d = node.frame + 2.0 * math.pi * k / tree.p
            nrm = wpt.norm1
            if nrm > 2.0 * constants.rho:
                child = TreeNode(word + (k,), zeta, _arrival_frame(node.theta, d,
                                 math.tanh(fan.lengths[k] / 2.0)),
                                 wpt, ("r",) + _lattice_of(zeta, mesh), regular=True,
                                 fan_length=fan.lengths[k])
            elif nrm < mesh.r0T:
                child = TreeNode(word + (k,), zeta, 0.0, wpt, None, regular=False,
                                 fan_length=fan.lengths[k], expandable=False)
            else:
                try:
                    if lin_fast and model.kind == "linearizable":
                        tid, end, rl, rts = _lin_reach_lite(model, wpt, mesh, omega, omega2)
                    else:
                        rr = reach_transversal(model, wpt, mesh)
                        tid, end, rl, rts = rr.transversal.id, rr.endpoint, rr.length, rr.path1.times
                    xi = _extend(zeta, node.theta, d, rl)
                    tau = fan.times[k]
                    step = (0j, tau) + tuple(tau + t for t in rts[1:])
                    child = TreeNode(word + (k,), xi, _arrival_frame(node.theta, d,
                                     math.tanh(fan.lengths[k] / 2.0)),
                                     end, tid, regular=False,
                                     fan_length=fan.lengths[k], reach_length=rl,
                                     step_times=step)
                except FoliationLabError:
                    child = TreeNode(word + (k,), zeta, 0.0, wpt, None, regular=False,
                                     fan_length=fan.lengths[k], expandable=False)
            tree.nodes[child.word] = child
            push(child.word)
            if len(tree.nodes) >= node_cap:
                break
    return tree


def _node_level(node: TreeNode, mesh: Mesh) -> int:
    if node.transversal_id and node.transversal_id[0] == "s":
        return node.transversal_id[1]
    return mesh.level_index_for(node.chart.norm1)


def _lattice_of(zeta: complex, mesh: Mesh) -> tuple:
    s = mesh.regular_spacing()
    return (int(round(zeta.real / s)), int(round(zeta.imag / s)))


def local_inclusion_check(tree: MotionTree, word: tuple, sample_count: int = 64,
                          rng_seed: int = 0) -> bool:
    """Defining inclusions at one expanded node: children inside the closed
    D_{h1+hbar}(parent) and D_{h1+hbar}(parent) covered by the parent and
    child h1-disks (sampled)."""
    from .disk import hdisk_cover_check

    node = tree.nodes[word]
    kids = tree.children(word)
    if not kids:
        return False
    h1, hbar = tree.h1, tree.hbar
    for kw in kids:
        if poincare_distance(node.theta, tree.nodes[kw].theta) > h1 + hbar + 1e-9:
            return False
    cover = [HDisk(HPoint(node.theta), h1)] + [HDisk(HPoint(tree.nodes[kw].theta), h1) for kw in kids]
    verdict = hdisk_cover_check(HDisk(HPoint(node.theta), h1 + hbar), cover,
                                sample_count, rng_seed)
    return verdict.covered


def verify_tree_coverage(tree: MotionTree, sample_count: int = 100_000,
                         rng_seed: int = 0):
    """Sampled check of D_{h1 + H hbar} subset of the union of cutoff-node
    h1-disks. Returns (covered, witness or None, n_cutoff)."""
    cutoff = tree.cutoff_words()
    centers = np.array([tree.nodes[w].theta for w in sorted(cutoff, key=lambda w: (len(w), w))],
                       dtype=complex)
    target = HDisk(HPoint(0j), tree.coverage_radius)
    rng = np.random.default_rng(rng_seed)
    from .disk import sample_hdisk

    pts = sample_hdisk(target, sample_count, rng)
    # Euclidean footprints: hyperbolic disks are Euclidean disks
    r = math.tanh(tree.h1 / 2.0)
    cc = np.abs(centers) ** 2
    den = 1.0 - r * r * cc
    ecenters = centers * (1.0 - r * r) / den
    eradii = r * (1.0 - cc) / den
    uncovered = np.arange(len(pts))
    for start in range(0, len(centers), 512):
        ec = ecenters[start:start + 512]
        er = eradii[start:start + 512]
        hit = (np.abs(pts[uncovered, None] - ec[None, :]) <= er[None, :] + 1e-12).any(axis=1)
        uncovered = uncovered[~hit]
        if len(uncovered) == 0:
            return True, None, len(cutoff)
    return False, HPoint(complex(pts[uncovered[0]])), len(cutoff)
