"""Length-constrained polygonal principal curves.

The fit minimizes the nearest-vertex surrogate over vertex arrays satisfying
the squared-increment budget ``m * sum |v_{i+1} - v_i|^2 <= L^2`` (``m`` is
``n - 1`` for open curves and ``n`` for closed ones). Each iteration takes a
step along the gradient projected onto the tangent space of the saturated
constraint, preconditioned by ``diag(cell mass) + lambda * m * Laplacian``
(the Lloyd approximation of the Lagrangian Hessian), then rescales the
increments about the centroid so the budget is met exactly.

A polish phase then alternates exact segment projection with the
constrained least-squares update of the vertices for that assignment,
which decreases the reported distortion monotonically.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .criterion import (
    CriterionEstimate,
    SurrogateConfig,
    draw_jitter,
    empirical_delta,
    surrogate_value_and_grad,
)
from .distributions import PointSource, uniform_stream
from .geometry import PolygonalCurve, Topology, nearest_vertices, project_points

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    """Raised when an iterate or gradient stops being finite."""


class DegenerateCurveWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class FitConfig:
    length: float
    n_vertices: int = 16
    topology: Topology = Topology.OPEN
    max_iters: int = 1000
    n_samples: int = 20000
    batch_size: int = 0  # 0 means full batch over the training sample
    step_size: float | None = None  # displacement cap; defaults to 0.5 * L / n
    epsilon_coef: float = 0.5  # epsilon_n = epsilon_coef / sqrt(n)
    jitter_coef: float = 0.1  # zeta_n = eta_n = jitter_coef * L / n
    smoothing: bool = True
    recenter_mean: bool = True
    seed: int = 0
    tolerance: float = 1e-4
    window: int = 50
    restarts: int = 1
    polish_iters: int = 100  # exact segment-projection sweeps after the descent

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.n_vertices < 3:
            raise ValueError("n_vertices must be at least 3")
        if not self.length > 0:
            raise ValueError("length budget must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.polish_iters < 0:
            raise ValueError("polish_iters must be nonnegative")
        if self.window < 1 or self.restarts < 1:
            raise ValueError("window and restarts must be positive")

    @property
    def closed(self) -> bool:
        return self.topology is Topology.CLOSED

    @property
    def segments_factor(self) -> int:
        return self.n_vertices if self.closed else self.n_vertices - 1

    @property
    def cap0(self) -> float:
        return self.step_size if self.step_size is not None else 0.5 * self.length / self.n_vertices

    def replace(self, **changes) -> "FitConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["topology"] = self.topology.value
        out["step_size"] = self.cap0
        out["epsilon_n"] = self.epsilon_coef / math.sqrt(self.n_vertices) if self.smoothing else 0.0
        out["zeta_n"] = out["eta_n"] = self.jitter_coef * self.length / self.n_vertices if self.smoothing else 0.0
        return out


@dataclass
class FitResult:
    curve: PolygonalCurve
    delta_hat: CriterionEstimate
    iterations: int
    constraint_residual: float
    history: list = field(default_factory=list)
    lambda_n: float = 0.0
    converged: bool = False
    config: FitConfig | None = None
    points: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "curve": self.curve.to_dict(),
            "delta_hat": self.delta_hat.to_dict(),
            "iterations": self.iterations,
            "constraint_residual": self.constraint_residual,
            "lambda_n": self.lambda_n,
            "converged": self.converged,
            "config": self.config.to_dict() if self.config else None,
        }


# ---------------------------------------------------------------- constraint


def _increments(v: np.ndarray, closed: bool) -> np.ndarray:
    return (np.roll(v, -1, axis=0) - v) if closed else np.diff(v, axis=0)


def squared_increment_budget(vertices, closed: bool) -> float:
    """``m * sum |v_{i+1} - v_i|^2``; bounds the squared polygonal length."""
    v = np.asarray(vertices, dtype=float)
    m = v.shape[0] if closed else v.shape[0] - 1
    return float(m * np.sum(_increments(v, closed) ** 2))


def _collapsed_curve(p: np.ndarray, n: int, length: float, closed: bool) -> np.ndarray:
    d = p.shape[0]
    if not closed:
        offsets = (np.arange(n) - (n - 1) / 2) * length / (n - 1)
        out = np.tile(p, (n, 1))
        out[:, 0] += offsets
        return out
    if d >= 2:
        r = length / (2 * n * math.sin(math.pi / n))
        ang = 2 * math.pi * np.arange(n) / n
        out = np.tile(p, (n, 1))
        out[:, 0] += r * np.cos(ang)
        out[:, 1] += r * np.sin(ang)
        return out
    # one dimension: walk out and back with steps of L / n
    k = np.arange(n)
    pos = np.minimum(k, n - k) * length / n
    out = np.tile(p, (n, 1))
    out[:, 0] += pos - pos.mean()
    return out


def enforce_constraint(vertices, length: float, topology=Topology.OPEN) -> np.ndarray:
    """Scale the increments about the centroid so the budget equals ``L^2`` exactly.

    A fully collapsed input has no direction to scale; it is replaced by an
    equally spaced curve centred at the collapse point (segment along the
    first axis when open, regular polygon in the first two axes when closed)
    and a :class:`DegenerateCurveWarning` is emitted.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 2:
        raise ValueError("need at least 2 vertices")
    closed = Topology(topology) is Topology.CLOSED
    centroid = v.mean(axis=0)
    current = squared_increment_budget(v, closed)
    if current <= 0 or not math.isfinite(current):
        warnings.warn("collapsed curve replaced by an equally spaced one", DegenerateCurveWarning, stacklevel=2)
        return _collapsed_curve(centroid, v.shape[0], length, closed)
    scale = length / math.sqrt(current)
    return centroid + scale * (v - centroid)


def _laplacian(n: int, closed: bool) -> np.ndarray:
    """Matrix of the quadratic form ``sum |v_{i+1} - v_i|^2`` (times 1/2 of its Hessian)."""
    lap = np.zeros((n, n))
    idx = np.arange(n if closed else n - 1)
    nxt = (idx + 1) % n
    np.add.at(lap, (idx, idx), 1.0)
    np.add.at(lap, (nxt, nxt), 1.0)
    np.add.at(lap, (idx, nxt), -1.0)
    np.add.at(lap, (nxt, idx), -1.0)
    return lap


def curvature_atoms(vertices, closed: bool) -> np.ndarray:
    """Atoms of the second-difference measure for a vertex array."""
    v = np.asarray(vertices, dtype=float)
    m = v.shape[0] if closed else v.shape[0] - 1
    return -m * (_laplacian(v.shape[0], closed) @ v)


# ---------------------------------------------------------------- initialization


def _principal_axes(points: np.ndarray):
    centre = points.mean(axis=0)
    if points.shape[0] < 2:
        return centre, np.zeros(points.shape[1]), np.eye(points.shape[1])
    cov = np.cov(points, rowvar=False, bias=True).reshape(points.shape[1], points.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    # deterministic sign: largest-magnitude component positive
    for j in range(evecs.shape[1]):
        k = np.argmax(np.abs(evecs[:, j]))
        if evecs[k, j] < 0:
            evecs[:, j] = -evecs[:, j]
    return centre, evals, evecs


def initialize(source: PointSource | np.ndarray, cfg: FitConfig) -> np.ndarray:
    """Principal-component start: a segment (open) or an ellipse (closed) of length ``L``."""
    points = source.training_points(cfg.n_samples) if isinstance(source, PointSource) else np.asarray(source, float)
    n, length = cfg.n_vertices, cfg.length
    centre, evals, evecs = _principal_axes(points)
    d = points.shape[1]
    scale = max(float(evals[0]) if evals.size else 0.0, 0.0)
    tiny = 1e-12 * (1.0 + float(np.sum(centre**2)))
    if not cfg.closed:
        direction = evecs[:, 0] if scale > tiny else np.eye(d)[0]
        offsets = (np.arange(n) - (n - 1) / 2) * length / (n - 1)
        return centre + offsets[:, None] * direction[None, :]
    if d == 1:
        return _collapsed_curve(centre, n, length, closed=True)
    if scale > tiny:
        e1, e2 = evecs[:, 0], evecs[:, 1]
        ratio = math.sqrt(evals[1] / evals[0]) if evals[1] > tiny else 0.0
    else:
        e1, e2, ratio = np.eye(d)[0], np.eye(d)[1], 1.0
    # arc-length parameterized ellipse with semi-axes proportional to (1, ratio)
    ratio = max(ratio, 1e-3)
    theta = np.linspace(0.0, 2 * math.pi, 4096, endpoint=False)
    dense = np.column_stack([np.cos(theta), ratio * np.sin(theta)])
    seg = np.linalg.norm(np.roll(dense, -1, axis=0) - dense, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = cum[-1] * np.arange(n) / n
    u = np.interp(targets, cum, np.append(theta, 2 * math.pi))
    planar = np.column_stack([np.cos(u), ratio * np.sin(u)])
    verts = centre + planar[:, :1] * e1[None, :] + planar[:, 1:] * e2[None, :]
    return enforce_constraint(verts, length, Topology.CLOSED)


# ---------------------------------------------------------------- fitting


def _smoothing_at(cfg: FitConfig, k: int, anchor: np.ndarray) -> SurrogateConfig:
    half = max(1, cfg.max_iters // 2)
    if not cfg.smoothing or k >= half:
        return SurrogateConfig()
    w = 1.0 - k / half
    n = cfg.n_vertices
    jitter = cfg.jitter_coef * cfg.length / n
    return SurrogateConfig(w * cfg.epsilon_coef / math.sqrt(n), w * jitter, w * jitter, anchor)


def _direction(v, grad, idx, n_pts, lam, cfg: FitConfig, lap):
    """Preconditioned tangent step and the multiplier it implies."""
    n = v.shape[0]
    m = cfg.segments_factor
    mass = np.bincount(idx, minlength=n) / n_pts
    mass = np.maximum(mass, 1e-3 / n)
    a = np.diag(mass) + lam * m * lap
    h = 2.0 * m * (lap @ v)  # gradient of the budget
    ainv_g = np.linalg.solve(a, grad)
    ainv_h = np.linalg.solve(a, h)
    hh = float(np.sum(h * ainv_h))
    mu = float(np.sum(h * ainv_g)) / hh if hh > 0 else 0.0
    step = 0.5 * (ainv_g - mu * ainv_h)
    return step, -mu


def _fit_once(points: np.ndarray, cfg: FitConfig, init: np.ndarray, stream: int):
    closed = cfg.closed
    n, length = cfg.n_vertices, cfg.length
    n_pts = points.shape[0]
    lap = _laplacian(n, closed)
    v = enforce_constraint(init, length, cfg.topology)
    curve0 = PolygonalCurve(v, cfg.topology)
    history = [(0, empirical_delta(curve0, points).value)]
    anchor = v.copy()
    lam = 0.0
    window_start = math.inf
    k_decay = max(1.0, cfg.max_iters / 4)
    half = max(1, cfg.max_iters // 2) if cfg.smoothing else 0
    converged = False
    k = 0
    for k in range(cfg.max_iters):
        smooth = _smoothing_at(cfg, k, anchor)
        if cfg.batch_size and cfg.batch_size < n_pts:
            u = uniform_stream(cfg.seed, (3 << 40) + stream * (1 << 32) + k, cfg.batch_size)
            batch = points[np.floor(u * n_pts).astype(int)]
        else:
            batch = points
        jitter = None
        if smooth.zeta > 0 or smooth.eta > 0:
            jitter = draw_jitter(batch.shape[0], n, v.shape[1], smooth, cfg.seed, stream * (1 << 32) + k)
        _, grad, idx = surrogate_value_and_grad(v, batch, smooth, jitter)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient at iteration {k}")
        step, lam_new = _direction(v, grad, idx, batch.shape[0], lam, cfg, lap)
        lam = max(lam_new, 0.0)
        cap = cfg.cap0 / (1.0 + k / k_decay)
        biggest = float(np.max(np.linalg.norm(step, axis=1)))
        if biggest > cap:
            step *= cap / biggest
        gap = batch.mean(axis=0) - v[idx].mean(axis=0)
        v = enforce_constraint(v - step, length, cfg.topology)
        if cfg.recenter_mean:
            # mean match, using the assignment of the pre-step iterate
            v = v + gap
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite vertices at iteration {k}")
        if (k + 1) % cfg.window == 0:
            curve = PolygonalCurve(v, cfg.topology)
            delta = empirical_delta(curve, points).value
            history.append((k + 1, delta))
            anchor = v.copy()
            if k + 1 > half:
                if window_start < math.inf and window_start - delta < cfg.tolerance * max(window_start, 1e-300):
                    converged = True
                    break
                window_start = delta
    curve = PolygonalCurve(v, cfg.topology)
    est = empirical_delta(curve, points)
    if not history or history[-1][0] != k + 1:
        history.append((k + 1, est.value))
    return curve, est, k + 1, history, lam, converged


def _assignment(v: np.ndarray, points: np.ndarray, topology: Topology):
    n = v.shape[0]
    proj = project_points(PolygonalCurve(v, topology), points)
    left = proj.segment_index
    right = (left + 1) % n if topology is Topology.CLOSED else left + 1
    return proj, left, right


def _frozen_system(v, points, topology, assignment):
    """Normal equations ``M v = B`` with every point tied to its current segment parameter."""
    n, d = v.shape
    proj, left, right = assignment
    wl, wr = 1.0 - proj.local, proj.local
    n_pts = points.shape[0]
    flat = np.bincount(left * n + left, wl * wl, n * n) + np.bincount(right * n + right, wr * wr, n * n)
    flat += np.bincount(left * n + right, wl * wr, n * n) + np.bincount(right * n + left, wl * wr, n * n)
    b = np.column_stack([np.bincount(left, wl * points[:, j], n) + np.bincount(right, wr * points[:, j], n)
                         for j in range(d)])
    return np.kron(flat.reshape(n, n), np.eye(d)) / n_pts, b.reshape(-1) / n_pts


def _gauss_newton_system(v, points, topology, assignment):
    """Linearized distortion: only the normal part of the residual counts for
    points projecting inside a segment, since the foot slides along it freely."""
    n, d = v.shape
    proj, left, right = assignment
    u = proj.local
    wl, wr = 1.0 - u, u
    n_pts = points.shape[0]
    seg = v[right] - v[left]
    norm = np.linalg.norm(seg, axis=1)
    tangent = seg / np.where(norm > 0, norm, 1.0)[:, None]
    inside = (u > 0) & (u < 1) & (norm > 0)
    tangent[~inside] = 0.0
    normal = np.eye(d)[None, :, :] - tangent[:, :, None] * tangent[:, None, :]  # (N, d, d)
    size = n * d
    flat = np.zeros(size * size)
    b = np.zeros(size)
    nx = np.einsum("pjk,pk->pj", normal, points)
    for ia, wa in ((left, wl), (right, wr)):
        for j in range(d):
            b += np.bincount(ia * d + j, wa * nx[:, j], size)
            for ib, wb in ((left, wl), (right, wr)):
                for k in range(d):
                    flat += np.bincount((ia * d + j) * size + ib * d + k, wa * wb * normal[:, j, k], size * size)
    return flat.reshape(size, size) / n_pts, b / n_pts


def _constrained_solve(mass, b, penalty, length):
    """Minimizer of ``v'Mv - 2 b'v`` on ``v' P v <= L^2`` and its multiplier."""
    size = mass.shape[0]
    ridge = 1e-13 * max(float(np.trace(mass)) / size, 1e-300) * np.eye(size)

    def solve(lam):
        return np.linalg.solve(mass + ridge + lam * penalty, b)

    def excess(lam):
        v = solve(lam)
        return float(v @ penalty @ v) / length**2 - 1.0

    if excess(0.0) <= 0:
        return solve(0.0), 0.0
    hi = 1e-3
    while excess(hi) > 0:
        hi *= 4.0
        if hi > 1e12:
            raise NumericalError("multiplier bracket diverged in polish")
    lam = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return solve(lam), lam


def _polish(points: np.ndarray, v: np.ndarray, cfg: FitConfig):
    """Exact segment-projection descent under the budget.

    Each sweep solves the constrained Gauss-Newton system for the current
    assignment; if that raises the distortion, the frozen-parameter system
    (a majorizer, so never worse) is used instead. Stops when vertices stop
    moving, the distortion would increase, or three sweeps in a row gain
    less than ``1e-9`` relative (slow drift along a near-symmetry).
    """
    n, d = v.shape
    penalty = cfg.segments_factor * np.kron(_laplacian(n, cfg.closed), np.eye(d))
    assignment = _assignment(v, points, cfg.topology)
    current = float(np.mean(assignment[0].sq_dist))
    sweeps = stalled = 0
    for sweeps in range(1, cfg.polish_iters + 1):
        accepted = None
        for system in (_gauss_newton_system, _frozen_system):
            mass, b = system(v, points, cfg.topology, assignment)
            flat, _ = _constrained_solve(mass, b, penalty, cfg.length)
            cand = enforce_constraint(flat.reshape(n, d), cfg.length, cfg.topology)
            if not np.all(np.isfinite(cand)):
                raise NumericalError("non-finite vertices in polish")
            cand_assignment = _assignment(cand, points, cfg.topology)
            value = float(np.mean(cand_assignment[0].sq_dist))
            if value <= current:
                accepted = (cand, cand_assignment, value)
                break
        if accepted is None:
            break
        move = float(np.max(np.abs(accepted[0] - v)))
        stalled = stalled + 1 if current - accepted[2] <= 1e-9 * current else 0
        v, assignment, current = accepted
        if move <= 1e-13 * cfg.length or stalled >= 3:
            break
    return v, sweeps


def fit(source: PointSource, cfg: FitConfig, points: np.ndarray | None = None) -> FitResult:
    """Fit a length-constrained polygonal principal curve to ``source``.

    Sampler sources are represented by ``cfg.n_samples`` draws from stream 0
    of ``cfg.seed``; empirical sources use all their rows. Pass ``points`` to
    fit an explicit sample instead.
    """
    if points is None:
        points = source.with_seed(cfg.seed).training_points(cfg.n_samples) if not source.is_empirical \
            else source.training_points(cfg.n_samples)
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != source.d:
        raise ValueError("training points do not match the source dimension")
    with np.errstate(over="ignore"):
        if not math.isfinite(float(np.max(np.sum(points**2, axis=1)))):
            raise NumericalError("squared norms of the data overflow")
    base = initialize(points, cfg)
    best = None
    for r in range(cfg.restarts):
        init = base
        if r > 0:
            u = uniform_stream(cfg.seed, (5 << 40) + r, 2 * base.size + 2)
            noise = np.sqrt(-2 * np.log1p(-u[0::2])) * np.cos(2 * math.pi * u[1::2])
            init = base + 0.5 * cfg.length / cfg.n_vertices * noise[: base.size].reshape(base.shape)
        curve, est, iters, history, lam, converged = _fit_once(points, cfg, init, r)
        if cfg.polish_iters:
            v, sweeps = _polish(points, curve.vertices, cfg)
            curve = PolygonalCurve(v, cfg.topology)
            est = empirical_delta(curve, points)
            iters += sweeps
            history.append((iters, est.value))
        if best is None or est.value < best[1].value:
            best = (curve, est, iters, history, lam, converged)
    curve, est, iters, history, lam, converged = best
    residual = squared_increment_budget(curve.vertices, cfg.closed) / cfg.length**2 - 1.0
    if not (math.isfinite(est.value) and math.isfinite(residual)):
        raise NumericalError("fit ended with a non-finite distortion or constraint residual")
    log.info("fit done: %d iterations, delta %.6g, lambda_n %.4g", iters, est.value, lam)
    return FitResult(curve, est, iters, residual, history, lam, converged, cfg, points)


# ---------------------------------------------------------------- KKT


@dataclass(frozen=True)
class KKTDetail:
    residuals: np.ndarray  # norm of the KKT left-hand side at each vertex
    std_errors: np.ndarray  # Monte Carlo standard error of the expectation term
    lhs: np.ndarray  # (n, d) left-hand side vectors

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))


def _vertex_pull(vertices, points):
    idx, _ = nearest_vertices(vertices, points)
    n, d = vertices.shape
    n_pts = points.shape[0]
    resid = points - vertices[idx]
    pull = np.column_stack([np.bincount(idx, resid[:, j], n) for j in range(d)])
    sq = np.column_stack([np.bincount(idx, resid[:, j] ** 2, n) for j in range(d)])
    mean = pull / n_pts
    var = np.maximum(sq / n_pts - mean**2, 0.0)
    se = np.sqrt(np.sum(var, axis=1) / max(n_pts - 1, 1))
    return mean, se


def kkt_multiplier(vertices, points, topology=Topology.OPEN) -> float:
    """Least-squares multiplier for the nearest-vertex KKT system."""
    v = np.asarray(vertices, dtype=float)
    closed = Topology(topology) is Topology.CLOSED
    e, _ = _vertex_pull(v, np.asarray(points, dtype=float))
    atoms = curvature_atoms(v, closed)
    denom = float(np.sum(atoms**2))
    return -float(np.sum(e * atoms)) / denom if denom > 0 else 0.0


def kkt_detail(vertices, points, lambda_n: float, cfg: FitConfig, smoothing: SurrogateConfig | None = None) -> KKTDetail:
    if lambda_n < 0:
        raise ValueError("lambda_n must be nonnegative")
    v = np.asarray(vertices, dtype=float)
    x = np.asarray(points, dtype=float)
    e, se = _vertex_pull(v, x)
    lhs = -e - lambda_n * curvature_atoms(v, cfg.closed)
    if smoothing is not None and smoothing.epsilon > 0:
        lhs = lhs + smoothing.epsilon * (v - np.asarray(smoothing.anchor, dtype=float))
    return KKTDetail(np.linalg.norm(lhs, axis=1), se, lhs)


def kkt_residual(vertices, points, lambda_n: float, cfg: FitConfig, smoothing: SurrogateConfig | None = None) -> float:
    """Largest norm over vertices of the KKT left-hand side

    ``-E[(X - Xhat) 1{Xhat = v_i}] + eps (v_i - anchor_i) + lambda_n m (2 v_i - v_{i-1} - v_{i+1})``

    with the one-sided forms at the ends of an open curve.
    """
    return kkt_detail(vertices, points, lambda_n, cfg, smoothing).max_residual
