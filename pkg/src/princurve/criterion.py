"""Distortion of a curve and the smoothed nearest-vertex surrogate.

``empirical_delta`` is the mean squared distance from the points to the
polyline. The surrogate replaces the polyline by its vertices, jitters both
the data (Gaussian, scale ``zeta``) and the vertices (uniform in a ball of
radius ``eta``), and adds ``epsilon * sum |x_i - anchor_i|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import PointSource, box_muller, uniform_stream
from .geometry import PolygonalCurve, nearest_vertices, project_points

SEGMENT = "segment"
VERTEX = "vertex"

# stream ids (high bits) reserved for jitter draws; the low bits carry a counter
JITTER_STREAM = 1 << 40


@dataclass(frozen=True)
class CriterionEstimate:
    value: float
    std_error: float
    count: int
    mode: str = SEGMENT

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "count": self.count, "mode": self.mode}


@dataclass(frozen=True)
class SurrogateConfig:
    """Smoothing of the nearest-vertex objective.

    ``zeta`` and ``eta`` are absolute lengths. ``anchor`` holds one point per
    vertex and is required when ``epsilon > 0``.
    """

    epsilon: float = 0.0
    zeta: float = 0.0
    eta: float = 0.0
    anchor: np.ndarray | None = None

    def __post_init__(self):
        if min(self.epsilon, self.zeta, self.eta) < 0:
            raise ValueError("smoothing parameters must be nonnegative")

    @property
    def smoothing_off(self) -> bool:
        return self.epsilon == 0 and self.zeta == 0 and self.eta == 0


def default_schedule(n: int, length: float, epsilon_coef=0.5, jitter_coef=0.1) -> SurrogateConfig:
    """``epsilon = c / sqrt(n)``, ``zeta = eta = c' * L / n`` (jitter in units of L)."""
    return SurrogateConfig(epsilon_coef / math.sqrt(n), jitter_coef * length / n, jitter_coef * length / n)


def _estimate(values: np.ndarray, mode: str) -> CriterionEstimate:
    count = values.shape[0]
    std = float(np.std(values, ddof=1)) if count > 1 else 0.0
    return CriterionEstimate(float(np.mean(values)), std / math.sqrt(count), count, mode)


def empirical_delta(curve: PolygonalCurve, points) -> CriterionEstimate:
    """Mean squared distance from ``points`` to the polyline."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if curve.d == 1 else pts[None, :]
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    if pts.shape[1] != curve.d:
        raise ValueError(f"points have dimension {pts.shape[1]}, curve has dimension {curve.d}")
    return _estimate(project_points(curve, pts).sq_dist, SEGMENT)


def vertex_delta(vertices, points) -> CriterionEstimate:
    """Mean squared distance from ``points`` to the nearest vertex."""
    _, sq = nearest_vertices(np.asarray(vertices, dtype=float), np.asarray(points, dtype=float))
    return _estimate(sq, VERTEX)


def draw_jitter(n_points: int, n_vertices: int, d: int, cfg: SurrogateConfig, seed: int, counter: int = 0):
    """Input noise ``zeta * Z`` and vertex noise uniform on the ball of radius ``eta``."""
    stream = JITTER_STREAM + int(counter)
    if cfg.zeta > 0:
        total = n_points * d
        z = box_muller(uniform_stream(seed, stream, total + total % 2))[:total]
        noise_x = cfg.zeta * z.reshape(n_points, d)
    else:
        noise_x = np.zeros((n_points, d))
    if cfg.eta > 0:
        total = n_vertices * d
        u = uniform_stream(seed, stream + (1 << 32), total + total % 2 + n_vertices)
        g = box_muller(u[: total + total % 2])[:total].reshape(n_vertices, d)
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        g = g / np.where(norm > 0, norm, 1.0)
        radius = cfg.eta * u[-n_vertices:] ** (1.0 / d)
        noise_v = g * radius[:, None]
    else:
        noise_v = np.zeros((n_vertices, d))
    return noise_x, noise_v


def surrogate_value_and_grad(vertices, points, cfg: SurrogateConfig, jitter=None):
    """Surrogate value, gradient and nearest-vertex assignment for fixed jitters.

    The data-term gradient for vertex ``i`` is ``-2 mean[(X_n - Xhat_n) 1{Xhat_n = x_i + xi_i}]``.
    """
    v = np.asarray(vertices, dtype=float)
    x = np.asarray(points, dtype=float)
    if x.shape[1] != v.shape[1]:
        raise ValueError("dimension mismatch between points and vertices")
    if cfg.epsilon > 0 and cfg.anchor is None:
        raise ValueError("epsilon > 0 requires an anchor")
    if jitter is not None:
        x = x + jitter[0]
        shifted = v + jitter[1]
    else:
        shifted = v
    idx, sq = nearest_vertices(shifted, x)
    n_pts = x.shape[0]
    resid = x - shifted[idx]
    pull = np.column_stack([np.bincount(idx, resid[:, j], v.shape[0]) for j in range(v.shape[1])])
    grad = -2.0 * pull / n_pts
    value = float(np.mean(sq))
    if cfg.epsilon > 0:
        off = v - np.asarray(cfg.anchor, dtype=float)
        value += cfg.epsilon * float(np.sum(off**2))
        grad += 2.0 * cfg.epsilon * off
    return value, grad, idx


def surrogate_objective(vertices, points, cfg: SurrogateConfig, seed: int = 0, counter: int = 0) -> float:
    """Monte Carlo value of the smoothed nearest-vertex objective."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if v.shape[1] == 1 else x[None, :]
    if cfg.epsilon > 0 and cfg.anchor is None:
        raise ValueError("epsilon > 0 requires an anchor")
    jitter = None
    if cfg.zeta > 0 or cfg.eta > 0:
        jitter = draw_jitter(x.shape[0], v.shape[0], v.shape[1], cfg, seed, counter)
    value, _, _ = surrogate_value_and_grad(v, x, cfg, jitter)
    return value


@dataclass(frozen=True)
class ScanRow:
    length: float
    g_hat: float
    std_error: float
    n_vertices: int
    seed: int

    def csv(self) -> str:
        return f"{self.length!r},{self.g_hat!r},{self.std_error!r},{self.n_vertices},{self.seed}"


SCAN_HEADER = "L,G_hat,std_error,n_vertices,seed"


def g_scan(source: PointSource, lengths, fit_config=None, n_samples: int = 20000) -> list[ScanRow]:
    """Best empirical distortion for each length budget, on one shared sample.

    ``fit_config`` is a :class:`princurve.optimizer.FitConfig` whose length
    is overridden per row. ``L = 0`` is the single point at the sample mean.
    """
    from .optimizer import FitConfig, fit

    lengths = [float(x) for x in lengths]
    if any(x < 0 for x in lengths):
        raise ValueError("lengths must be nonnegative")
    if any(b < a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be sorted ascending")
    cfg = fit_config or FitConfig(length=1.0, seed=source.seed, n_samples=n_samples)
    points = source.training_points(cfg.n_samples)
    rows = []
    for length in lengths:
        if length == 0:
            centre = points.mean(axis=0)
            est = _estimate(np.sum((points - centre) ** 2, axis=1), SEGMENT)
            rows.append(ScanRow(0.0, est.value, est.std_error, 1, cfg.seed))
            continue
        res = fit(source, cfg.replace(length=length), points=points)
        rows.append(ScanRow(length, res.delta_hat.value, res.delta_hat.std_error, cfg.n_vertices, cfg.seed))
    return rows


def scan_verdict(rows: list[ScanRow], zero_tol: float = 1e-4):
    """Check that G decreases strictly, by more than two combined standard errors,
    until it reaches zero (values below ``zero_tol`` count as zero).

    Returns ``(passed, messages)``.
    """
    ok, notes = True, []
    for r0, r1 in zip(rows, rows[1:]):
        if r0.g_hat <= zero_tol:
            if r1.g_hat > zero_tol:
                ok = False
                notes.append(f"G rises from 0 at L={r1.length}")
            continue
        gap = r0.g_hat - r1.g_hat
        combined = math.hypot(r0.std_error, r1.std_error)
        if not gap > 2 * combined:
            ok = False
            notes.append(f"gap {gap:.3g} between L={r0.length} and L={r1.length} is within 2 stderr ({combined:.3g})")
    return ok, notes
