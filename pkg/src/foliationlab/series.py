"""Finite bivariate power-series tables used for the nonlinear normal forms.

A table maps (i, j) -> complex coefficient of z1^i z2^j. Tables are kept
small (default total degree cap 8) and are evaluated with Horner in z2.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PolyTable",
    "reciprocal_one_plus",
]


class PolyTable:
    """Immutable dense bivariate polynomial sum c[i,j] z1^i z2^j."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        arr = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        self.coeffs = arr
        self.coeffs.setflags(write=False)

    @classmethod
    def zero(cls) -> "PolyTable":
        return cls(np.zeros((1, 1), dtype=complex))

    @classmethod
    def constant(cls, c: complex) -> "PolyTable":
        return cls(np.array([[c]], dtype=complex))

    @classmethod
    def from_monomials(cls, triples) -> "PolyTable":
        """Build from an iterable of (i, j, coefficient)."""
        triples = list(triples)
        if not triples:
            return cls.zero()
        imax = max(int(t[0]) for t in triples)
        jmax = max(int(t[1]) for t in triples)
        arr = np.zeros((imax + 1, jmax + 1), dtype=complex)
        for i, j, c in triples:
            arr[int(i), int(j)] += complex(c)
        return cls(arr)

    def monomials(self):
        out = []
        for i in range(self.coeffs.shape[0]):
            for j in range(self.coeffs.shape[1]):
                c = self.coeffs[i, j]
                if c != 0:
                    out.append((i, j, complex(c)))
        return out

    @property
    def total_degree(self) -> int:
        deg = 0
        for i, j, _ in self.monomials():
            deg = max(deg, i + j)
        return deg

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, z1, z2):
        """Evaluate; broadcasts over numpy array inputs."""
        z1 = np.asarray(z1, dtype=complex)
        z2 = np.asarray(z2, dtype=complex)
        # Horner in z2 of polynomials in z1.
        acc = np.zeros(np.broadcast(z1, z2).shape, dtype=complex)
        for j in range(self.coeffs.shape[1] - 1, -1, -1):
            acc = acc * z2 + np.polyval(self.coeffs[::-1, j], z1)
        if acc.shape == ():
            return complex(acc)
        return acc

    def d_z1(self) -> "PolyTable":
        if self.coeffs.shape[0] == 1:
            return PolyTable.zero()
        rows = np.arange(1, self.coeffs.shape[0])
        return PolyTable(self.coeffs[1:, :] * rows[:, None])

    def d_z2(self) -> "PolyTable":
        if self.coeffs.shape[1] == 1:
            return PolyTable.zero()
        cols = np.arange(1, self.coeffs.shape[1])
        return PolyTable(self.coeffs[:, 1:] * cols[None, :])

    def shifted(self, di: int, dj: int) -> "PolyTable":
        """Multiply by z1^di z2^dj (di, dj >= 0)."""
        a = np.zeros((self.coeffs.shape[0] + di, self.coeffs.shape[1] + dj), dtype=complex)
        a[di:, dj:] = self.coeffs
        return PolyTable(a)

    def unshifted(self, di: int, dj: int) -> "PolyTable":
        """Divide by z1^di z2^dj; requires divisibility."""
        if np.any(self.coeffs[:di, :]) or np.any(self.coeffs[:, :dj]):
            raise ValueError("table is not divisible by the requested monomial")
        return PolyTable(self.coeffs[di:, dj:].copy())

    def swapped(self) -> "PolyTable":
        """Exchange the roles of z1 and z2."""
        return PolyTable(self.coeffs.T.copy())

    def scaled(self, s1: float, s2: float) -> "PolyTable":
        """Coefficients of f(s1*z1, s2*z2)."""
        rows = s1 ** np.arange(self.coeffs.shape[0], dtype=float)
        cols = s2 ** np.arange(self.coeffs.shape[1], dtype=float)
        return PolyTable(self.coeffs * rows[:, None] * cols[None, :])

    def truncated(self, max_total_degree: int) -> "PolyTable":
        a = self.coeffs.copy()
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                if i + j > max_total_degree:
                    a[i, j] = 0.0
        return PolyTable(a)

    def __mul__(self, other):
        if isinstance(other, PolyTable):
            out = np.zeros(
                (self.coeffs.shape[0] + other.coeffs.shape[0] - 1,
                 self.coeffs.shape[1] + other.coeffs.shape[1] - 1),
                dtype=complex,
            )
            for i in range(self.coeffs.shape[0]):
                for j in range(self.coeffs.shape[1]):
                    c = self.coeffs[i, j]
                    if c != 0:
                        out[i:i + other.coeffs.shape[0], j:j + other.coeffs.shape[1]] += c * other.coeffs
            return PolyTable(out)
        return PolyTable(self.coeffs * complex(other))

    __rmul__ = __mul__

    def __add__(self, other: "PolyTable") -> "PolyTable":
        r = max(self.coeffs.shape[0], other.coeffs.shape[0])
        c = max(self.coeffs.shape[1], other.coeffs.shape[1])
        out = np.zeros((r, c), dtype=complex)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        out[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return PolyTable(out)

    def __neg__(self) -> "PolyTable":
        return PolyTable(-self.coeffs)

    def sup_bound(self) -> float:
        """Rigorous upper bound for sup over the closed bidisk: sum |c_ij|."""
        return float(np.sum(np.abs(self.coeffs)))

    def sup_estimate(self, grid: int = 64) -> float:
        """Estimated sup of |f| over the closed bidisk.

        By the maximum principle the sup is attained on the torus
        |z1| = |z2| = 1, which is sampled on a grid x grid angle lattice.
        """
        ang = np.exp(2j * np.pi * np.arange(grid) / grid)
        vals = self(ang[:, None], ang[None, :])
        return float(np.max(np.abs(vals)))

    def __repr__(self):
        return f"PolyTable({self.monomials()!r})"


def reciprocal_one_plus(u: PolyTable, max_total_degree: int) -> PolyTable:
    """Truncated series of (1 + u)^{-1} - 1 = sum_{n>=1} (-u)^n, u(0,0) = 0."""
    if u.coeffs[0, 0] != 0:
        raise ValueError("u must vanish at the origin")
    if u.is_zero():
        return PolyTable.zero()
    acc = PolyTable.zero()
    term = PolyTable.constant(1.0)
    # Lowest total degree of u is >= 1, so u^n dies past max_total_degree.
    for _ in range(max_total_degree):
        term = (term * (-1.0 * u)).truncated(max_total_degree)
        if term.is_zero():
            break
        acc = acc + term
    return acc
