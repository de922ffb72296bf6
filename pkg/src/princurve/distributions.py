"""Point sources: the law of X as a seeded sampler or an empirical cloud.

Randomness comes from Philox4x64-10, a counter-based generator. A stream
is addressed by ``(seed, stream_id)``: the 128-bit Philox key is
``seed + 2**64 * stream_id``. Raw 64-bit words become doubles in [0, 1) as
``(w >> 11) * 2**-53``. Gaussian draws use Box-Muller on consecutive
uniform pairs ``(u1, u2)``: ``sqrt(-2 log(1 - u1)) * (cos, sin)(2 pi u2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

RNG_ALGORITHM = "Philox4x64-10 (numpy), key = seed + 2^64 * stream"
_MASK64 = (1 << 64) - 1

KINDS = ("uniform_square", "gaussian", "uniform_circle", "uniform_1d", "atom_circle_mixture", "empirical")


def uniform_stream(seed: int, stream: int, count: int) -> np.ndarray:
    """``count`` doubles in [0, 1) from the addressed Philox stream."""
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    bits = np.random.Philox(key=key)
    raw = bits.random_raw(int(count))
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def box_muller(u: np.ndarray) -> np.ndarray:
    """Standard normals from an even-length uniform vector (pairs ``u1, u2``)."""
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.empty(u.shape[0])
    z[0::2] = r * np.cos(2 * math.pi * u2)
    z[1::2] = r * np.sin(2 * math.pi * u2)
    return z


class CsvError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class EmptyFileError(CsvError):
    pass


class RaggedRowError(CsvError):
    pass


class NonNumericError(CsvError):
    pass


@dataclass(frozen=True)
class PointSource:
    """Immutable description of a law on R^d.

    Use the constructors (:meth:`uniform_square`, :meth:`gaussian`, ...)
    rather than filling the fields by hand.
    """

    kind: str
    d: int
    seed: int = 0
    params: tuple = ()
    points: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "empirical":
            pts = np.array(self.points, dtype=float)
            if pts.ndim != 2 or pts.shape[0] < 1:
                raise ValueError("empirical source needs at least one point")
            if not np.all(np.isfinite(pts)):
                raise ValueError("empirical points must be finite")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)

    # constructors

    @classmethod
    def uniform_square(cls, seed=0):
        return cls("uniform_square", 2, seed)

    @classmethod
    def gaussian(cls, d=2, seed=0):
        return cls("gaussian", int(d), seed)

    @classmethod
    def uniform_circle(cls, radius=1.0, seed=0):
        return cls("uniform_circle", 2, seed, (float(radius),))

    @classmethod
    def uniform_1d(cls, a=0.0, b=1.0, seed=0):
        if not b > a:
            raise ValueError("uniform_1d needs a < b")
        return cls("uniform_1d", 1, seed, (float(a), float(b)))

    @classmethod
    def atom_circle_mixture(cls, p=0.5, seed=0):
        if not 0 <= p <= 1:
            raise ValueError("mixture weight must lie in [0, 1]")
        return cls("atom_circle_mixture", 2, seed, (float(p),))

    @classmethod
    def empirical(cls, points, seed=0):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls("empirical", pts.shape[1], seed, (), pts)

    def with_seed(self, seed: int) -> "PointSource":
        return PointSource(self.kind, self.d, seed, self.params, self.points)

    @property
    def is_empirical(self) -> bool:
        return self.kind == "empirical"

    def describe(self) -> dict:
        out = {"kind": self.kind, "d": self.d, "seed": self.seed, "rng": RNG_ALGORITHM}
        if self.params:
            out["params"] = list(self.params)
        if self.is_empirical:
            out["n_points"] = int(self.points.shape[0])
        return out

    def sample(self, count: int, stream: int = 0) -> np.ndarray:
        """``count`` i.i.d. draws, deterministic in ``(seed, stream, count)``."""
        if count < 1:
            raise ValueError("count must be positive")
        seed, k = self.seed, self.kind
        if k == "uniform_square":
            return uniform_stream(seed, stream, 2 * count).reshape(count, 2)
        if k == "uniform_1d":
            a, b = self.params
            return (a + (b - a) * uniform_stream(seed, stream, count))[:, None]
        if k == "gaussian":
            total = count * self.d
            z = box_muller(uniform_stream(seed, stream, total + total % 2))
            return z[:total].reshape(count, self.d)
        if k == "uniform_circle":
            (radius,) = self.params
            ang = 2 * math.pi * uniform_stream(seed, stream, count)
            return radius * np.column_stack([np.cos(ang), np.sin(ang)])
        if k == "atom_circle_mixture":
            (p,) = self.params
            u = uniform_stream(seed, stream, 2 * count).reshape(count, 2)
            ang = 2 * math.pi * u[:, 1]
            pts = np.column_stack([np.cos(ang), np.sin(ang)])
            pts[u[:, 0] < p] = 0.0
            return pts
        idx = np.floor(uniform_stream(seed, stream, count) * self.points.shape[0]).astype(int)
        return self.points[idx].copy()

    def training_points(self, count: int, stream: int = 0) -> np.ndarray:
        """All rows of an empirical source, otherwise ``count`` fresh draws."""
        if self.is_empirical:
            return np.array(self.points)
        return self.sample(count, stream)

    def density_1d(self):
        """``(pdf, lo, hi)`` for one-dimensional built-in laws."""
        if self.kind == "uniform_1d":
            a, b = self.params
            return (lambda x: np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)), a, b
        if self.kind == "gaussian" and self.d == 1:
            return (lambda x: np.exp(-0.5 * np.asarray(x) ** 2) / math.sqrt(2 * math.pi)), -math.inf, math.inf
        raise ValueError(f"{self.kind} (d={self.d}) has no one-dimensional density")


def sample(source: PointSource, count: int, stream: int = 0) -> np.ndarray:
    return source.sample(count, stream)


def moments(source: PointSource, count: int, stream: int = 0):
    """Estimates of ``E[X]`` and ``E[|X|^2]``; exact over the rows for empirical sources."""
    pts = source.training_points(count, stream)
    return pts.mean(axis=0), float(np.mean(np.sum(pts**2, axis=1)))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, seed: int = 0) -> PointSource:
    """Empirical source from a comma-separated file with an optional header row."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            rows.append((lineno, cells))
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    if not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
        if not rows:
            raise EmptyFileError(f"{path}: header only, no data rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for k, (lineno, cells) in enumerate(rows):
        if len(cells) != width:
            raise RaggedRowError(f"expected {width} columns, found {len(cells)}", lineno)
        for j, cell in enumerate(cells):
            try:
                data[k, j] = float(cell)
            except ValueError:
                raise NonNumericError(f"non-numeric cell {cell!r}", lineno) from None
    if not np.all(np.isfinite(data)):
        raise NonNumericError(f"{path}: non-finite value")
    return PointSource.empirical(data, seed)


def from_name(name: str, seed: int = 0, dim: int = 2, radius: float = 1.0, p: float = 0.5,
              a: float = 0.0, b: float = 1.0) -> PointSource:
    """Built-in source by CLI name."""
    name = name.lower()
    if name == "square":
        return PointSource.uniform_square(seed)
    if name == "gaussian":
        return PointSource.gaussian(dim, seed)
    if name == "circle":
        return PointSource.uniform_circle(radius, seed)
    if name in ("uniform1d", "uniform"):
        return PointSource.uniform_1d(a, b, seed)
    if name == "mixture":
        return PointSource.atom_circle_mixture(p, seed)
    raise ValueError(f"unknown distribution {name!r}")
