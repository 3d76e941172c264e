"""Exact finite discrete distributions over nonnegative counts."""
from __future__ import annotations

import numpy as np
from scipy import signal, stats
from scipy.special import gammaln, xlogy

__all__ = [
    "JointCounts",
    "ProbVec",
    "binomial",
    "convolve",
    "convolve2",
    "point_mass",
    "split3",
    "thin",
    "truncated_poisson",
]

PRUNE_FLOOR = 1e-15


class ProbVec:
    """Probability mass indexed by count 0..len-1."""

    __slots__ = ("mass",)

    def __init__(self, mass):
        mass = np.asarray(mass, dtype=float)
        if mass.ndim != 1 or mass.size == 0:
            raise ValueError("ProbVec needs a nonempty 1-d mass array")
        if (mass < 0).any():
            raise ValueError("negative probability mass")
        self.mass = mass

    def __len__(self):
        return self.mass.size

    def __getitem__(self, k):
        if 0 <= k < self.mass.size:
            return float(self.mass[k])
        return 0.0

    def total(self) -> float:
        return float(self.mass.sum())

    def mean(self) -> float:
        return float(np.arange(self.mass.size) @ self.mass)

    def allclose(self, other: "ProbVec", atol: float = 1e-12) -> bool:
        n = max(len(self), len(other))
        return np.allclose(_pad(self.mass, n), _pad(other.mass, n), rtol=0, atol=atol)

    def pruned(self, floor: float = PRUNE_FLOOR) -> "ProbVec":
        """Zero out entries below ``floor``, trim the tail, renormalize."""
        m = np.where(self.mass < floor, 0.0, self.mass)
        nz = np.flatnonzero(m)
        m = m[: nz[-1] + 1] if nz.size else np.array([1.0])
        return ProbVec(m / m.sum())

    def __repr__(self):
        return f"ProbVec({np.array2string(self.mass, precision=6, threshold=12)})"


class JointCounts:
    """Joint mass of a pair of counts, ``mass[a, b] = P(A=a, B=b)``."""

    __slots__ = ("mass",)

    def __init__(self, mass):
        mass = np.asarray(mass, dtype=float)
        if mass.ndim != 2:
            raise ValueError("JointCounts needs a 2-d mass array")
        self.mass = mass

    def __getitem__(self, ab):
        a, b = ab
        if 0 <= a < self.mass.shape[0] and 0 <= b < self.mass.shape[1]:
            return float(self.mass[a, b])
        return 0.0

    def total(self) -> float:
        return float(self.mass.sum())

    def marginal(self, axis: int) -> ProbVec:
        return ProbVec(self.mass.sum(axis=1 - axis))

    def as_dict(self, floor: float = 0.0) -> dict[tuple[int, int], float]:
        a, b = np.nonzero(self.mass > floor)
        return {(int(i), int(j)): float(self.mass[i, j]) for i, j in zip(a, b)}


def _pad(m, n):
    return np.pad(m, (0, n - m.size)) if m.size < n else m


def point_mass(k: int = 0) -> ProbVec:
    m = np.zeros(k + 1)
    m[k] = 1.0
    return ProbVec(m)


def binomial(n: int, p: float) -> ProbVec:
    if n < 0 or not (0.0 <= p <= 1.0):
        raise ValueError(f"binomial needs n >= 0 and p in [0, 1], got ({n}, {p})")
    # log-space: scipy's binom.pmf overflows for subnormal p
    k = np.arange(n + 1)
    logp = (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + xlogy(k, p) + xlogy(n - k, 1.0 - p))
    return ProbVec(np.exp(logp))


def truncated_poisson(rate: float, max: int) -> ProbVec:
    """Poisson(rate) with all mass at or above ``max`` lumped onto ``max``."""
    if not rate > 0 or max < 0:
        raise ValueError("truncated_poisson needs rate > 0 and max >= 0")
    k = np.arange(max + 1)
    m = stats.poisson.pmf(k, rate)
    m[max] = stats.poisson.sf(max - 1, rate)
    return ProbVec(m)


def split3(n: int, p_a: float, p_b: float) -> JointCounts:
    """Joint law of (A, B) when each of ``n`` trials lands in A, B or neither."""
    if p_a < 0 or p_b < 0 or p_a + p_b > 1.0 + 1e-15:
        raise ValueError(f"split3 needs p_a, p_b >= 0 and p_a + p_b <= 1, got {p_a} + {p_b}")
    p_c = max(0.0, 1.0 - p_a - p_b)
    a = np.arange(n + 1)[:, None]
    b = np.arange(n + 1)[None, :]
    c = n - a - b
    ok = c >= 0
    cc = np.where(ok, c, 0)
    logp = (gammaln(n + 1) - gammaln(a + 1) - gammaln(b + 1) - gammaln(cc + 1)
            + xlogy(a, p_a) + xlogy(b, p_b) + xlogy(cc, p_c))
    mass = np.where(ok, np.exp(logp), 0.0)
    return JointCounts(mass)


def convolve(d1: ProbVec, d2: ProbVec) -> ProbVec:
    """Law of the sum of two independent counts."""
    return ProbVec(np.convolve(d1.mass, d2.mass))


def convolve2(j1: JointCounts, j2: JointCounts) -> JointCounts:
    """Law of the componentwise sum of two independent count pairs."""
    return JointCounts(signal.convolve2d(j1.mass, j2.mass, mode="full"))


def thin(d: ProbVec, q: float) -> ProbVec:
    """Law of Binomial(K, q) with K ~ d."""
    out = np.zeros(len(d))
    for k, w in enumerate(d.mass):
        if w:
            out[: k + 1] += w * binomial(k, q).mass
    return ProbVec(out)
