"""Optimality checks for a fitted curve against a point sample.

Every statistic is a sample mean of per-point terms, so its standard error
is the sample standard deviation of those terms over ``sqrt(N)``. The
projection ``t_hat`` of a point is the max-argmin segment projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criterion import empirical_delta
from .geometry import (
    PolygonalCurve,
    arc_length_positions,
    curve_length,
    project_points,
    second_difference_measure,
    segment_distances,
    self_intersections,
    speed_profile,
    tangency_candidates,
    turning_angles,
)

KNOT_TOL = 1e-9


def _se(values: np.ndarray) -> float:
    n = values.shape[0]
    return float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0


def _prepare(curve: PolygonalCurve, points, proj=None):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if curve.d == 1 else x[None, :]
    if x.shape[1] != curve.d:
        raise ValueError(f"points have dimension {x.shape[1]}, curve has dimension {curve.d}")
    return x, proj if proj is not None else project_points(curve, x)


# ---------------------------------------------------------------- multiplier


def _lambda_terms(curve, x, proj, length):
    centre = x.mean(axis=0)
    return np.einsum("ij,ij->i", x - proj.foot, proj.foot - centre) / length**2


def estimate_lambda(curve: PolygonalCurve, points, length: float | None = None, proj=None):
    """``mean <x - xhat, xhat> / L^2`` and its standard error.

    ``xhat`` is measured from the sample mean so the estimate does not depend
    on the origin; at a stationary curve the mean residual vanishes and the
    two forms agree. ``L`` defaults to the polygonal length.
    """
    total = curve_length(curve)
    if total <= 0:
        raise ValueError("lambda is undefined for a zero-length curve")
    length = total if length is None else length
    x, proj = _prepare(curve, points, proj)
    q = _lambda_terms(curve, x, proj, length)
    return float(q.mean()), _se(q)


def _hat_weights(curve: PolygonalCurve, proj):
    """Vertex indices and weights of the piecewise-linear hat basis at each foot."""
    left = proj.segment_index
    right = (left + 1) % curve.n if curve.closed else left + 1
    return left, right, 1.0 - proj.local, proj.local


def kkt_lambda(curve: PolygonalCurve, points, proj=None):
    """Least-squares multiplier from ``E[(X - Xhat) w_i(t_hat)] = -lambda f''({t_i})``."""
    x, proj = _prepare(curve, points, proj)
    atoms = second_difference_measure(curve).atoms
    denom = float(np.sum(atoms**2))
    if denom == 0:
        return 0.0, 0.0
    left, right, wl, wr = _hat_weights(curve, proj)
    r = x - proj.foot
    q = -(wl * np.einsum("ij,ij->i", r, atoms[left]) + wr * np.einsum("ij,ij->i", r, atoms[right])) / denom
    return float(q.mean()), _se(q)


# ---------------------------------------------------------------- first order


def test_functions(K: int, closed: bool):
    """``(name, k, kind)`` for the trigonometric family; periodic when closed."""
    out = [("const", 0, "const")]
    freq = 2.0 if closed else 1.0
    for k in range(1, K + 1):
        out.append((f"cos{k}", freq * k, "cos"))
        out.append((f"sin{k}", freq * k, "sin"))
    return out


def _evaluate(kind: str, k: float, t):
    if kind == "const":
        return np.ones_like(t)
    if kind == "cos":
        return np.cos(k * math.pi * t)
    return np.sin(k * math.pi * t)


@dataclass(frozen=True)
class Residual:
    name: str
    residual: float
    std_error: float

    @property
    def z(self) -> float:
        return abs(self.residual) / self.std_error if self.std_error > 0 else (0.0 if self.residual == 0 else math.inf)


def first_order_residual(curve: PolygonalCurve, points, lambda_hat: float | None = None, K: int = 4,
                         length: float | None = None, proj=None) -> list[Residual]:
    """Residuals of ``E<X - f(t_hat), g(t_hat)> = lambda * int <g', f'_r> dt``.

    The test functions are ``e_j``, ``e_j cos(k pi t)`` and ``e_j sin(k pi t)``
    for ``k <= K`` (frequencies doubled on closed curves so that ``g`` is
    periodic). The integral is exact on the polygon. When ``lambda_hat`` is
    not given it is estimated from the same points, and its sampling noise is
    folded into each standard error.
    """
    x, proj = _prepare(curve, points, proj)
    length = curve_length(curve) if length is None else length
    if lambda_hat is None:
        q = _lambda_terms(curve, x, proj, length)
        lam = float(q.mean())
    else:
        q, lam = None, float(lambda_hat)
    r = x - proj.foot
    knots_ext = np.arange(curve.n_segments + 1) / curve.n_segments
    inc = curve.n_segments * curve.increments()  # f'_r on each segment
    out = []
    for name, k, kind in test_functions(K, curve.closed):
        g_hat = _evaluate(kind, k, proj.t_hat)
        g_knots = _evaluate(kind, k, knots_ext)
        dg = np.diff(g_knots)  # int of g' over each segment
        for j in range(curve.d):
            integral = float(np.sum(inc[:, j] * dg))
            terms = r[:, j] * g_hat
            if q is not None:
                terms = terms - q * integral
                res = float(terms.mean())
            else:
                res = float(terms.mean()) - lam * integral
            # roundoff floor: g(t) = sin(k pi t) is zero at the endpoints only up to rounding
            floor = 64 * np.finfo(float).eps * (float(np.sqrt(np.mean(r[:, j] ** 2))) + abs(lam) * float(np.sum(np.abs(inc[:, j]))))
            label = f"{name}[{j}]"
            out.append(Residual(label, res, float(max(_se(terms), floor))))
    return out


def mean_gap(curve: PolygonalCurve, points, proj=None):
    """``mean(X) - mean(Xhat)`` and the standard error of its norm."""
    x, proj = _prepare(curve, points, proj)
    r = x - proj.foot
    gap = r.mean(axis=0)
    se = math.sqrt(float(np.sum(np.var(r, axis=0, ddof=1 if r.shape[0] > 1 else 0))) / r.shape[0])
    return gap, se


# ---------------------------------------------------------------- atoms


@dataclass(frozen=True)
class AtomMasses:
    endpoint: tuple[float, float] | None  # P(t_hat = 0), P(t_hat = 1) for open curves
    knot_params: np.ndarray  # knots other than the open endpoints
    knot_masses: np.ndarray
    turning: np.ndarray  # turning angle at each of those knots
    continuous: float  # mass projecting strictly inside segments
    count: int

    def std_error(self, p: float) -> float:
        return math.sqrt(max(p * (1 - p), 0.0) / self.count)


def atom_masses(curve: PolygonalCurve, points, proj=None, tol: float = KNOT_TOL) -> AtomMasses:
    """Empirical mass of ``t_hat`` on each knot, tagged by turning angle."""
    x, proj = _prepare(curve, points, proj)
    n_pts = x.shape[0]
    m = curve.n_segments
    t = proj.t_hat
    nearest = np.rint(t * m).astype(int)
    on_knot = np.abs(t * m - nearest) <= tol * m
    if curve.closed:
        nearest = nearest % curve.n
    counts = np.bincount(nearest[on_knot], minlength=curve.n).astype(float) / n_pts
    angles = turning_angles(curve)
    if curve.closed:
        endpoint = None
        keep = np.arange(curve.n)
    else:
        endpoint = (float(counts[0]), float(counts[-1]))
        keep = np.arange(1, curve.n - 1)
    continuous = float(np.count_nonzero(~on_knot)) / n_pts
    return AtomMasses(endpoint, curve.knots[keep], counts[keep], angles[keep], continuous, n_pts)


# ---------------------------------------------------------------- self-consistency


@dataclass(frozen=True)
class SelfConsistencyProfile:
    counts: np.ndarray
    gaps: np.ndarray  # |mean(x) - mean(xhat)| per arc-length bin
    std_errors: np.ndarray
    empty_bins: list

    @property
    def worst(self) -> int:
        return int(np.nanargmax(self.gaps))

    @property
    def gap(self) -> float:
        return float(self.gaps[self.worst])

    @property
    def std_error(self) -> float:
        return float(self.std_errors[self.worst])


def self_consistency_profile(curve: PolygonalCurve, points, n_bins: int = 16, proj=None) -> SelfConsistencyProfile:
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    x, proj = _prepare(curve, points, proj)
    cum = arc_length_positions(curve)
    total = cum[-1]
    seg_len = np.diff(cum)
    s = (cum[proj.segment_index] + proj.local * seg_len[proj.segment_index]) / (total if total > 0 else 1.0)
    b = np.minimum((s * n_bins).astype(int), n_bins - 1)
    r = x - proj.foot
    counts = np.bincount(b, minlength=n_bins)
    gaps = np.full(n_bins, np.nan)
    ses = np.full(n_bins, np.nan)
    for k in range(n_bins):
        rk = r[b == k]
        if rk.shape[0] == 0:
            continue
        gaps[k] = float(np.linalg.norm(rk.mean(axis=0)))
        var = np.var(rk, axis=0, ddof=1) if rk.shape[0] > 1 else np.zeros(curve.d)
        ses[k] = math.sqrt(float(np.sum(var)) / rk.shape[0])
    empty = [int(k) for k in np.flatnonzero(counts == 0)]
    return SelfConsistencyProfile(counts, gaps, ses, empty)


def self_consistency_gap(curve: PolygonalCurve, points, n_bins: int = 16, proj=None) -> float:
    """Largest ``|mean(x in bin) - mean(xhat in bin)|`` over equal arc-length bins of ``t_hat``."""
    return self_consistency_profile(curve, points, n_bins, proj).gap


# ---------------------------------------------------------------- ambiguity


def ambiguity_fraction(curve: PolygonalCurve, points, tolerances, proj=None) -> list[tuple[float, float]]:
    """Fraction of points with a second projection candidate, at parameter
    distance more than ``2 / n`` from ``t_hat``, whose squared distance is
    within ``tau`` of the minimum."""
    tol = [float(t) for t in tolerances]
    if any(t <= 0 for t in tol) or any(b < a for a, b in zip(tol, tol[1:])):
        raise ValueError("tolerances must be positive and ascending")
    x, proj = _prepare(curve, points, proj)
    sep = 2.0 / curve.n
    excess = np.empty(x.shape[0])
    step = max(1, (1 << 21) // max(1, curve.n_segments * curve.d))
    for i in range(0, x.shape[0], step):
        sq, _, t = segment_distances(curve, x[i : i + step])
        dt = np.abs(t - proj.t_hat[i : i + step, None])
        if curve.closed:
            dt = np.minimum(dt, 1.0 - dt)
        far = np.where(dt > sep, sq, np.inf)
        excess[i : i + step] = far.min(axis=1) - proj.sq_dist[i : i + step]
    n_pts = x.shape[0]
    return [(t, float(np.count_nonzero(excess <= t)) / n_pts) for t in tol]


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class ReportConfig:
    length: float | None = None  # length budget; polygonal length when omitted
    basis_size: int = 4
    n_bins: int = 16
    tolerances: tuple = (1e-2, 1e-4, 1e-6, 1e-8, 1e-12)
    speed_tolerance: float = 0.05
    z: float = 3.0


@dataclass
class DiagnosticsReport:
    lambda_hat: float
    lambda_stderr: float
    lambda_kkt: float
    lambda_kkt_stderr: float
    delta_hat: float
    delta_stderr: float
    first_order_residuals: list
    speed_min: float
    speed_max: float
    speed_mean: float
    length: float
    length_budget: float
    curvature_total_variation: float
    total_turning: float
    mean_gap: float
    mean_gap_stderr: float
    endpoint_atom_masses: tuple | None
    knot_atom_masses: list
    continuous_mass: float
    self_consistency_gap: float
    self_consistency_stderr: float
    ambiguity: list
    injective: bool | None
    crossings: list
    tangencies: list
    t_hat_histogram: list
    degenerate: bool
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def check(self, name: str) -> dict:
        for c in self.checks:
            if c["name"] == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "lambda_stderr": self.lambda_stderr,
            "lambda_kkt": self.lambda_kkt,
            "lambda_kkt_stderr": self.lambda_kkt_stderr,
            "delta_hat": self.delta_hat,
            "delta_stderr": self.delta_stderr,
            "first_order_residuals": [
                {"g": r.name, "residual": r.residual, "std_error": r.std_error} for r in self.first_order_residuals
            ],
            "speed": {"min": self.speed_min, "max": self.speed_max, "mean": self.speed_mean},
            "length": self.length,
            "length_budget": self.length_budget,
            "curvature_total_variation": self.curvature_total_variation,
            "total_turning": self.total_turning,
            "mean_gap": self.mean_gap,
            "mean_gap_stderr": self.mean_gap_stderr,
            "endpoint_atom_masses": list(self.endpoint_atom_masses) if self.endpoint_atom_masses else None,
            "knot_atom_masses": self.knot_atom_masses,
            "continuous_mass": self.continuous_mass,
            "self_consistency_gap": self.self_consistency_gap,
            "self_consistency_stderr": self.self_consistency_stderr,
            "ambiguity_fraction": [{"tau": t, "fraction": f} for t, f in self.ambiguity],
            "injective": self.injective,
            "crossings": self.crossings,
            "tangencies": self.tangencies,
            "t_hat_histogram": self.t_hat_histogram,
            "degenerate": self.degenerate,
            "checks": self.checks,
            "notes": self.notes,
        }


def _check(name, value, threshold, passed):
    return {"name": name, "value": value, "threshold": threshold, "pass": passed}


def full_report(curve: PolygonalCurve, points, cfg: ReportConfig | None = None) -> DiagnosticsReport:
    """Run every diagnostic and grade each optimality property."""
    cfg = cfg or ReportConfig()
    x, proj = _prepare(curve, points)
    z = cfg.z
    length = curve_length(curve)
    budget = cfg.length if cfg.length is not None else length
    notes = []

    delta = empirical_delta(curve, x)
    scale2 = 1.0 + float(np.max(np.sum(curve.vertices**2, axis=1)))
    degenerate = delta.value <= max(z * delta.std_error, 1e-12 * scale2)
    if degenerate:
        notes.append("distortion is statistically zero; multiplier and atom checks do not apply")

    lam, lam_se = estimate_lambda(curve, x, budget, proj) if length > 0 else (0.0, 0.0)
    lam_k, lam_k_se = kkt_lambda(curve, x, proj) if curve.n >= 3 else (0.0, 0.0)
    residuals = first_order_residual(curve, x, None, cfg.basis_size, budget, proj) if length > 0 else []
    speeds = speed_profile(curve)
    measure = second_difference_measure(curve) if curve.n >= 3 else None
    gap_vec, gap_se = mean_gap(curve, x, proj)
    gap = float(np.linalg.norm(gap_vec))
    atoms = atom_masses(curve, x, proj)
    sc = self_consistency_profile(curve, x, cfg.n_bins, proj)
    if sc.empty_bins:
        notes.append(f"empty self-consistency bins: {sc.empty_bins}")
    amb = ambiguity_fraction(curve, x, sorted(cfg.tolerances), proj)
    if curve.d == 2:
        crossings = [{"segments": [c.first, c.second], "point": c.point.tolist()} for c in self_intersections(curve)]
        tangencies = [{"segments": [i, j], "angle": a} for i, j, a in tangency_candidates(curve)]
        injective = not crossings
    else:
        crossings, tangencies, injective = [], [], None
        notes.append(f"injectivity check skipped: d = {curve.d}")
    hist = np.histogram(proj.t_hat, bins=cfg.n_bins, range=(0.0, 1.0))[0] / x.shape[0]

    checks = []
    rel_speed = float(np.max(np.abs(speeds / budget - 1.0)))
    checks.append(_check("length_saturated", length / budget, [1 - cfg.speed_tolerance, 1.0 + 1e-9],
                         abs(length / budget - 1) <= cfg.speed_tolerance and length <= budget * (1 + 1e-9)))
    checks.append(_check("constant_speed", rel_speed, cfg.speed_tolerance, rel_speed <= cfg.speed_tolerance))
    tv = measure.total_variation if measure else 0.0
    checks.append(_check("finite_curvature", tv, "finite", math.isfinite(tv)))
    checks.append(_check("mean_match", gap, z * gap_se, gap <= z * gap_se))
    worst = max(residuals, key=lambda r: r.z) if residuals else None
    checks.append(_check("first_order", worst.z if worst else 0.0, z, worst is None or worst.z <= z))
    if degenerate:
        for name in ("lambda_positive", "lambda_agreement", "endpoint_atoms", "lacks_self_consistency"):
            checks.append(_check(name, None, None, None))
    else:
        checks.append(_check("lambda_positive", lam / lam_se if lam_se > 0 else math.inf, z,
                             lam > z * lam_se))
        comb = math.hypot(lam_se, lam_k_se)
        checks.append(_check("lambda_agreement", abs(lam - lam_k), z * comb, abs(lam - lam_k) <= z * comb))
        if atoms.endpoint is not None:
            p0, p1 = atoms.endpoint
            weakest = min(p0 / max(atoms.std_error(p0), 1e-300), p1 / max(atoms.std_error(p1), 1e-300))
            checks.append(_check("endpoint_atoms", weakest, z, p0 > z * atoms.std_error(p0) and p1 > z * atoms.std_error(p1)))
        else:
            checks.append(_check("endpoint_atoms", None, None, None))
        checks.append(_check("lacks_self_consistency", sc.gap / sc.std_error if sc.std_error > 0 else math.inf, z,
                             sc.gap > z * sc.std_error))
    checks.append(_check("injective", len(crossings) if injective is not None else None, 0, injective))

    return DiagnosticsReport(
        lambda_hat=lam,
        lambda_stderr=lam_se,
        lambda_kkt=lam_k,
        lambda_kkt_stderr=lam_k_se,
        delta_hat=delta.value,
        delta_stderr=delta.std_error,
        first_order_residuals=residuals,
        speed_min=float(speeds.min()),
        speed_max=float(speeds.max()),
        speed_mean=float(speeds.mean()),
        length=length,
        length_budget=budget,
        curvature_total_variation=tv,
        total_turning=float(np.sum(turning_angles(curve))),
        mean_gap=gap,
        mean_gap_stderr=gap_se,
        endpoint_atom_masses=atoms.endpoint,
        knot_atom_masses=[
            {"t": float(t), "mass": float(p), "turning_angle": float(a)}
            for t, p, a in zip(atoms.knot_params, atoms.knot_masses, atoms.turning)
        ],
        continuous_mass=atoms.continuous,
        self_consistency_gap=sc.gap,
        self_consistency_stderr=sc.std_error,
        ambiguity=amb,
        injective=injective,
        crossings=crossings,
        tangencies=tangencies,
        t_hat_histogram=[float(h) for h in hist],
        degenerate=bool(degenerate),
        checks=checks,
        notes=notes,
    )
