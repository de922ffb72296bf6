"""Exact solution of the one-dimensional problem.

In one dimension a curve of length ``L`` covers an interval ``[a, a + L]``
and the distortion is

    Delta(a) = E[(X - a)^2 1{X < a}] + E[(X - a - L)^2 1{X > a + L}],

a convex function of ``a`` with nondecreasing derivative

    Delta'(a) = 2 E[(a - X) 1{X < a}] + 2 E[(a + L - X) 1{X > a + L}].

The minimizer is found by bisection on ``Delta'``. Empirical sources use
exact prefix sums, built-in laws use adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .distributions import PointSource

QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class OneDSolution:
    a: float
    L: float
    delta: float
    lam: float
    derivative_at_a: float
    lam_right: float = 0.0  # the same multiplier from the right tail
    degenerate: bool = False

    @property
    def b(self) -> float:
        return self.a + self.L

    def csv(self) -> str:
        return f"{self.a!r},{self.b!r},{self.delta!r},{self.lam!r}"

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "L": self.L,
            "G": self.delta,
            "lambda": self.lam,
            "lambda_right": self.lam_right,
            "derivative_at_a": self.derivative_at_a,
            "degenerate": self.degenerate,
        }


CSV_HEADER = "a,a_plus_L,G,lambda"


class _Empirical:
    """Tail moments of a finite sample via sorted prefix sums."""

    def __init__(self, x: np.ndarray):
        self.x = np.sort(np.asarray(x, dtype=float).ravel())
        self.n = self.x.shape[0]
        self.s1 = np.concatenate([[0.0], np.cumsum(self.x)])
        self.s2 = np.concatenate([[0.0], np.cumsum(self.x**2)])
        self.lo, self.hi = float(self.x[0]), float(self.x[-1])

    def left(self, a):
        """count, sum, sum of squares of ``x < a``."""
        k = int(np.searchsorted(self.x, a, side="left"))
        return k, self.s1[k], self.s2[k]

    def right(self, b):
        """count, sum, sum of squares of ``x > b``."""
        k = int(np.searchsorted(self.x, b, side="right"))
        return self.n - k, self.s1[-1] - self.s1[k], self.s2[-1] - self.s2[k]

    def moments(self, a, L):
        nl, sl, ql = self.left(a)
        nr, sr, qr = self.right(a + L)
        n = self.n
        b = a + L
        # E[(X - a)^k 1{X < a}] and E[(X - b)^k 1{X > b}] for k = 1, 2
        l1 = (sl - a * nl) / n
        l2 = (ql - 2 * a * sl + a * a * nl) / n
        r1 = (sr - b * nr) / n
        r2 = (qr - 2 * b * sr + b * b * nr) / n
        return l1, max(l2, 0.0), r1, max(r2, 0.0)


class _Density:
    """Tail moments of a built-in law by quadrature."""

    def __init__(self, source: PointSource):
        self.pdf, self.lo, self.hi = source.density_1d()

    def _int(self, f, lo, hi):
        if not hi > lo:
            return 0.0
        return quad(f, lo, hi, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200)[0]

    def moments(self, a, L):
        b = a + L
        pdf = self.pdf
        l1 = self._int(lambda x: (x - a) * pdf(x), self.lo, min(a, self.hi))
        l2 = self._int(lambda x: (x - a) ** 2 * pdf(x), self.lo, min(a, self.hi))
        r1 = self._int(lambda x: (x - b) * pdf(x), max(b, self.lo), self.hi)
        r2 = self._int(lambda x: (x - b) ** 2 * pdf(x), max(b, self.lo), self.hi)
        return l1, l2, r1, r2


def _law(source: PointSource):
    if source.d != 1:
        raise ValueError(f"one-dimensional source required, got d = {source.d}")
    return _Empirical(source.points) if source.is_empirical else _Density(source)


def _check_length(L):
    if not L >= 0 or not math.isfinite(L):
        raise ValueError("L must be finite and nonnegative")


def delta_1d(source: PointSource, a: float, L: float) -> float:
    """Distortion of the interval ``[a, a + L]``."""
    _check_length(L)
    _, l2, _, r2 = _law(source).moments(float(a), float(L))
    return l2 + r2


def derivative(source: PointSource, a: float, L: float) -> float:
    """``Delta'(a)``."""
    _check_length(L)
    l1, _, r1, _ = _law(source).moments(float(a), float(L))
    return -2.0 * (l1 + r1)


def _bracket(law, L):
    lo = law.lo - L if math.isfinite(law.lo) else -1.0 - L
    hi = law.hi if math.isfinite(law.hi) else 1.0
    width = max(hi - lo, 1.0)
    while -(sum(law.moments(lo, L)[0::2])) > 0:
        lo -= width
        width *= 2
    width = max(hi - lo, 1.0)
    while -(sum(law.moments(hi, L)[0::2])) < 0:
        hi += width
        width *= 2
    return lo, hi


def solve_1d(source: PointSource, L: float, tol: float = 1e-12) -> OneDSolution:
    """Optimal interval of length ``L`` for a one-dimensional source.

    When all of the mass fits in an interval of length ``L`` the problem is
    degenerate: the interval starting at the lowest point is returned with
    ``lam = 0`` and ``degenerate = True``.
    """
    _check_length(L)
    L = float(L)
    law = _law(source)
    if math.isfinite(law.lo) and math.isfinite(law.hi) and law.hi - law.lo <= L:
        return OneDSolution(law.lo, L, 0.0, 0.0, 0.0, 0.0, True)

    def dprime(a):
        l1, _, r1, _ = law.moments(a, L)
        return -2.0 * (l1 + r1)

    lo, hi = _bracket(law, L)
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if dprime(mid) < 0:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    if isinstance(law, _Empirical):
        # Delta' is piecewise linear; solve the piece containing the root exactly
        nl, sl, _ = law.left(a)
        nr, sr, _ = law.right(a + L)
        if nl + nr > 0:
            exact = (sl + sr - L * nr) / (nl + nr)
            if law.left(exact)[0] == nl and law.right(exact + L)[0] == nr:
                a = float(exact)
    l1, l2, r1, r2 = law.moments(a, L)
    lam_left = -l1 / L if L > 0 else 0.0
    lam_right = r1 / L if L > 0 else 0.0
    return OneDSolution(float(a), L, float(l2 + r2), float(lam_left), float(-2 * (l1 + r1)), float(lam_right), False)


def closed_form_uniform(L: float, lo: float = 0.0, hi: float = 1.0) -> OneDSolution:
    """Uniform law on ``[lo, hi]``: ``a = lo + (w - L) / 2``, ``G = (w - L)^3 / (12 w)``."""
    w = hi - lo
    if L >= w:
        return OneDSolution(lo, L, 0.0, 0.0, 0.0, 0.0, True)
    gap = 0.5 * (w - L)
    lam = gap**2 / (2 * w * L) if L > 0 else math.inf  # the multiplier blows up as L -> 0
    return OneDSolution(lo + gap, L, (w - L) ** 3 / (12 * w), lam, 0.0, lam, False)
