"""Named constants of the lab, their invariants, and per-model estimation.

Estimated constants are upper-estimates from deterministic grids, stamped
with the grid density they were computed at; they are monotone nondecreasing
in the density. Everything else is configured. All values travel in run
manifests for reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .models import SingularityModel, eval_field, norm1

__all__ = ["SIGMA0", "ConstantsBundle", "estimate_chart_constants", "desk_bundle"]

# Quasi-round threshold sqrt(sqrt(6) - sqrt(2)) of the four-disk cover.
SIGMA0 = math.sqrt(math.sqrt(6.0) - math.sqrt(2.0))


@dataclass(frozen=True)
class ConstantsBundle:
    """Every named constant of the construction, with provenance.

    Invariants enforced at construction:

    * C4 > C3 + 2 (and C4 > 2 C3 + 2 when ``pd_initial_covering``)
    * hbar = h1 / (3 C8^2)
    * p >= 6 pi C8^2
    * 1 < sigma1 < sigma0 = sqrt(sqrt 6 - sqrt 2)
    * eps in (0, 1/2), eps2 < 2 pi, rho in (0, 1/4)
    """

    C0: float = 2.5
    C1: float = 2.5
    C2: float = 1.0
    C3: float = 2.5
    C4: float = 7.5
    C5: float = 0.25
    C6: float = 4.0
    C7: float = 2.0
    C8: float = 2.0
    C9: float = 6.0
    c0: float = 1.0
    A: float = 1.0
    eps: float = 0.4
    eps0: float = 0.25
    eps1: float = 0.1
    kappa_proj: float = 2.0
    K_proj: float = 8.0
    eps2: float = 6.0
    eps3: float = 0.08
    rho: float = 0.2
    h1: float = 0.3
    hbar: float = 0.3 / 12.0
    K_prime: int = 64
    sigma1: float = 1.01
    p: int = 76
    pd_initial_covering: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("C0", "C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9",
                     "c0", "A", "eps0", "eps1", "kappa_proj", "K_proj", "eps2", "eps3", "h1", "hbar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        if not 0 < self.rho < 0.25:
            raise ValueError("rho must lie in (0, 1/4)")
        floor = (2 * self.C3 + 2) if self.pd_initial_covering else (self.C3 + 2)
        if not self.C4 > floor:
            raise ValueError(f"C4 must exceed {floor} (= {'2C3+2' if self.pd_initial_covering else 'C3+2'})")
        if abs(self.hbar - self.h1 / (3.0 * self.C8 ** 2)) > 1e-12 * self.h1:
            raise ValueError("hbar must equal h1 / (3 C8^2)")
        if self.p < 6.0 * math.pi * self.C8 ** 2:
            raise ValueError("p must be >= 6 pi C8^2")
        if not 1.0 < self.sigma1 < SIGMA0:
            raise ValueError(f"sigma1 must lie in (1, {SIGMA0:.6f})")
        if not self.eps2 < 2 * math.pi:
            raise ValueError("eps2 must be < 2 pi")
        if self.K_prime < 1:
            raise ValueError("K_prime must be a positive integer")

    @property
    def sigma0(self) -> float:
        return SIGMA0

    def with_values(self, **kw) -> "ConstantsBundle":
        prov = dict(self.provenance)
        prov.update(kw.pop("provenance", {}))
        return replace(self, provenance=prov, **kw)


def _sample_grid(grid_density: int):
    """Deterministic bidisk grid: log-spaced radii times angles, per coordinate."""
    n_r = max(4, grid_density // 2)
    n_a = max(4, grid_density)
    radii = np.exp(np.linspace(math.log(1e-6), math.log(0.74), n_r))
    angles = np.exp(2j * np.pi * np.arange(n_a) / n_a)
    vals = (radii[:, None] * angles[None, :]).ravel()
    return vals


def estimate_chart_constants(model: SingularityModel, grid_density: int = 16) -> ConstantsBundle:
    """Estimate C0-C3 for a model on a deterministic grid; the rest stay default.

    C0 bounds the field against the chart norm both ways; C1 is a sampled
    two-point Lipschitz constant; C2 = 1 because the model leaf metric is the
    exact middle of its two-sided bound; C3 = C0 / C with C the sampled lower
    bound of the length-integrand comparison 2 ||X|| |ln ||z||| / eta(z).
    """
    if grid_density < 8:
        raise ValueError("grid_density must be >= 8")
    vals = _sample_grid(grid_density)
    # pair each |z1| sample with each |z2| sample on a thinned product
    thin = vals[:: max(1, len(vals) // (grid_density * 4))]
    z1 = np.repeat(thin, len(thin))
    z2 = np.tile(thin, len(thin))
    # include near-axis points (one coordinate tiny but nonzero)
    z1 = np.concatenate([z1, thin, np.full(len(thin), 1e-12)])
    z2 = np.concatenate([z2, np.full(len(thin), 1e-12), thin])

    f1, f2 = eval_field(model, (z1, z2), check=False)
    nz = norm1(z1, z2)
    nf = norm1(f1, f2)
    ratio = nf / nz
    C0 = float(max(np.max(ratio), np.max(1.0 / ratio)))

    rng = np.random.default_rng(20_240_001)
    idx = rng.integers(0, len(z1), size=(2, 4 * len(z1)))
    a, b = idx
    keep = a != b
    a, b = a[keep], b[keep]
    dz = norm1(z1[a] - z1[b], z2[a] - z2[b])
    df = norm1(f1[a] - f1[b], f2[a] - f2[b])
    ok = dz > 1e-14
    lip = df[ok] / dz[ok]
    # probe the derivative with close pairs as well
    h = 1e-6
    g1, g2 = eval_field(model, (z1 + h, z2), check=False)
    lip_d1 = norm1(g1 - f1, g2 - f2) / h
    g1, g2 = eval_field(model, (z1, z2 + h), check=False)
    lip_d2 = norm1(g1 - f1, g2 - f2) / h
    C1 = float(max(np.max(lip), np.max(lip_d1), np.max(lip_d2), 1.0 / np.min(lip[lip > 0])))

    C2 = 1.0

    eta = nz * (1.0 + np.abs(np.log(nz)))
    f2norm = np.sqrt(np.abs(f1) ** 2 + np.abs(f2) ** 2)
    cmp_low = float(np.min(2.0 * f2norm * np.abs(np.log(nz)) / eta))
    C3 = C0 / cmp_low

    prov = {
        "C0": {"source": "estimated", "grid_density": grid_density},
        "C1": {"source": "estimated", "grid_density": grid_density},
        "C2": {"source": "model-exact"},
        "C3": {"source": "estimated", "grid_density": grid_density},
    }
    base = ConstantsBundle()
    C4 = max(base.C4, (2 * C3 + 2.5) if base.pd_initial_covering else (C3 + 2.5))
    eps3 = 1.0 / (2.0 * C0 * C1)
    return base.with_values(C0=C0, C1=C1, C2=C2, C3=C3, C4=C4, eps3=eps3, provenance=prov)


def desk_bundle(model: SingularityModel | None = None, grid_density: int = 16, **overrides) -> ConstantsBundle:
    """Estimated-constants bundle with desk overrides applied on top."""
    bundle = estimate_chart_constants(model, grid_density) if model is not None else ConstantsBundle()
    if "h1" in overrides or "C8" in overrides:
        h1 = overrides.get("h1", bundle.h1)
        C8 = overrides.get("C8", bundle.C8)
        overrides.setdefault("hbar", h1 / (3.0 * C8 ** 2))
        overrides.setdefault("p", int(math.ceil(6.0 * math.pi * C8 ** 2)))
    if overrides:
        bundle = bundle.with_values(**overrides)
    return bundle
