"""Polygonal curves on [0, 1]: length, projection, curvature measure.

A curve with ``n`` vertices is parameterized on uniform knots. For an open
curve the knots are ``t_i = i / (n - 1)``; for a closed curve they are
``t_i = i / n`` and the last segment runs from the last vertex back to the
first one, reaching it again at ``t = 1``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

# relative tolerance on squared distance for max-argmin tie breaking
TIE_RTOL = 1e-12
# elements per chunk in the (points x segments x d) projection tensor
_CHUNK_ELEMS = 1 << 22


class Topology(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass(frozen=True)
class PolygonalCurve:
    """Ordered vertices in R^d with open or closed topology."""

    vertices: np.ndarray
    topology: Topology = Topology.OPEN

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("vertices must be an (n, d) array")
        if v.shape[0] < 2:
            raise ValueError("a curve needs at least 2 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "topology", Topology(self.topology))

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def closed(self) -> bool:
        return self.topology is Topology.CLOSED

    @property
    def n_segments(self) -> int:
        return self.n if self.closed else self.n - 1

    @property
    def knots(self) -> np.ndarray:
        """Knot parameter of every vertex."""
        return np.arange(self.n) / self.n_segments

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every segment, in parameter order."""
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    def increments(self) -> np.ndarray:
        a, b = self.segments()
        return b - a

    def point_at(self, t) -> np.ndarray:
        """Evaluate the piecewise linear curve at parameters ``t``."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        m = self.n_segments
        idx = np.minimum(np.floor(t * m).astype(int), m - 1)
        s = t * m - idx
        a, b = self.segments()
        return a[idx] + s[..., None] * (b[idx] - a[idx])

    def scaled(self, factor: float) -> "PolygonalCurve":
        return PolygonalCurve(self.vertices * factor, self.topology)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.value,
            "d": self.d,
            "vertices": self.vertices.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolygonalCurve":
        try:
            topology = Topology(data["topology"])
            vertices = np.asarray(data["vertices"], dtype=float)
            d = int(data.get("d", vertices.shape[-1]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed curve JSON: {exc}") from exc
        if vertices.ndim != 2 or vertices.shape[1] != d:
            raise ValueError("malformed curve JSON: vertex dimension does not match 'd'")
        return cls(vertices, topology)


def save_curve(curve: PolygonalCurve, path) -> None:
    with open(path, "w") as fh:
        json.dump(curve.to_dict(), fh, indent=1)
        fh.write("\n")


def load_curve(path) -> PolygonalCurve:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed curve JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("malformed curve JSON: top level must be an object")
    return PolygonalCurve.from_dict(data)


def curve_length(curve: PolygonalCurve) -> float:
    """Polygonal length, closing segment included for closed curves."""
    return float(np.sum(np.linalg.norm(curve.increments(), axis=1)))


def speed_profile(curve: PolygonalCurve) -> np.ndarray:
    """Per-segment speed ``m * |v_{i+1} - v_i|`` of the uniform-knot parameterization."""
    return curve.n_segments * np.linalg.norm(curve.increments(), axis=1)


# ---------------------------------------------------------------- projection


@dataclass(frozen=True)
class ProjectionResult:
    t_hat: float
    foot: np.ndarray
    sq_dist: float
    segment_index: int


@dataclass(frozen=True)
class ProjectionBatch:
    """Projections of many points; arrays aligned with the input rows."""

    t_hat: np.ndarray
    foot: np.ndarray
    sq_dist: np.ndarray
    segment_index: np.ndarray
    local: np.ndarray  # position within the segment, in [0, 1]

    def __len__(self):
        return self.t_hat.shape[0]

    def __getitem__(self, i) -> ProjectionResult:
        return ProjectionResult(
            float(self.t_hat[i]), self.foot[i].copy(), float(self.sq_dist[i]), int(self.segment_index[i])
        )


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PRINCURVE_THREADS", "1")))
    except ValueError:
        return 1


def _check_points(points, d: int) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if d > 1 or x.size == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"points have dimension {x.shape[-1]}, curve has dimension {d}")
    return x


def segment_distances(curve: PolygonalCurve, points: np.ndarray):
    """Squared distance, local position and parameter of the foot on every segment.

    Returns three ``(N, n_segments)`` arrays. Zero-length segments act as a
    point with local position 1.
    """
    a, b = curve.segments()
    delta = b - a
    dd = np.einsum("ij,ij->i", delta, delta)
    safe = np.where(dd > 0, dd, 1.0)
    rel = points[:, None, :] - a[None, :, :]
    s = np.einsum("nsj,sj->ns", rel, delta) / safe
    s = np.where(dd > 0, np.clip(s, 0.0, 1.0), 1.0)
    diff = rel - s[..., None] * delta
    sq = np.einsum("nsj,nsj->ns", diff, diff)
    t = (np.arange(curve.n_segments)[None, :] + s) / curve.n_segments
    return sq, s, t


def _project_chunk(curve, scale2, points):
    sq, s, t = segment_distances(curve, points)
    best = sq.min(axis=1, keepdims=True)
    tol = TIE_RTOL * best + 1e-24 * scale2
    cand = np.where(sq <= best + tol, t, -1.0)
    seg = np.argmax(cand, axis=1)
    rows = np.arange(points.shape[0])
    loc = s[rows, seg]
    a, b = curve.segments()
    foot = a[seg] + loc[:, None] * (b[seg] - a[seg])
    at_end = loc == 1.0
    foot[at_end] = b[seg[at_end]]
    d2 = points - foot
    return t[rows, seg], foot, np.einsum("ij,ij->i", d2, d2), seg, loc


def project_points(curve: PolygonalCurve, points) -> ProjectionBatch:
    """Exact nearest point on the polyline for every row of ``points``.

    Ties within ``TIE_RTOL`` (relative, on squared distance) resolve to the
    largest parameter. Chunks are evaluated in a thread pool of
    ``PRINCURVE_THREADS`` workers and merged in input order.
    """
    x = _check_points(points, curve.d)
    scale2 = 1.0 + float(np.max(np.sum(curve.vertices**2, axis=1)))
    step = max(1, _CHUNK_ELEMS // max(1, curve.n_segments * curve.d))
    chunks = [x[i : i + step] for i in range(0, x.shape[0], step)] or [x]
    workers = min(_thread_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _project_chunk(curve, scale2, c), chunks))
    else:
        parts = [_project_chunk(curve, scale2, c) for c in chunks]
    t, foot, sq, seg, loc = (np.concatenate(p) for p in zip(*parts))
    return ProjectionBatch(t, foot, sq, seg, loc)


def project_point(curve: PolygonalCurve, x) -> ProjectionResult:
    """Nearest point on the curve to a single point ``x`` (max-argmin on ties)."""
    x = np.asarray(x, dtype=float).reshape(1, curve.d)
    return project_points(curve, x)[0]


def _nearest_brute(v: np.ndarray, x: np.ndarray):
    step = max(1, _CHUNK_ELEMS // max(1, v.shape[0] * v.shape[1]))
    idx = np.empty(x.shape[0], dtype=int)
    sq = np.empty(x.shape[0])
    for i in range(0, x.shape[0], step):
        diff = x[i : i + step, None, :] - v[None, :, :]
        d2 = np.einsum("nkj,nkj->nk", diff, diff)
        best = d2.min(axis=1, keepdims=True)
        tied = d2 <= best * (1.0 + TIE_RTOL)
        k = v.shape[0] - 1 - np.argmax(tied[:, ::-1], axis=1)
        idx[i : i + step] = k
        sq[i : i + step] = d2[np.arange(k.shape[0]), k]
    return idx, sq


def nearest_vertices(vertices: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest vertex (largest index on ties) and its squared distance."""
    v = np.asarray(vertices, dtype=float)
    x = np.asarray(points, dtype=float)
    if v.shape[0] < 3 or x.shape[0] < 64:
        return _nearest_brute(v, x)
    _, cand = cKDTree(v).query(x, k=2, workers=_thread_count())
    diff = x[:, None, :] - v[cand]
    d2 = np.einsum("nkj,nkj->nk", diff, diff)
    first = np.argmin(d2, axis=1)
    rows = np.arange(x.shape[0])
    idx = cand[rows, first]
    sq = d2[rows, first]
    # the tree breaks ties arbitrarily; redo near-tied rows exhaustively
    tied = d2.max(axis=1) <= sq * (1.0 + TIE_RTOL)
    if np.any(tied):
        idx[tied], sq[tied] = _nearest_brute(v, x[tied])
    return idx, sq


def project_to_vertices(curve: PolygonalCurve, x) -> ProjectionResult:
    """Nearest vertex (not segment) with the max-parameter tie rule."""
    x = np.asarray(x, dtype=float).reshape(1, curve.d)
    idx, sq = nearest_vertices(curve.vertices, x)
    i = int(idx[0])
    return ProjectionResult(float(curve.knots[i]), curve.vertices[i].copy(), float(sq[0]), i)


# ---------------------------------------------------------------- curvature


@dataclass(frozen=True)
class CurvatureMeasure:
    """Atomic R^d-valued signed measure carried by the knots."""

    knots: np.ndarray
    atoms: np.ndarray  # (n, d)
    closed: bool = False
    total_variation: float = field(init=False)

    def __post_init__(self):
        tv = np.sqrt(np.sum(np.sum(np.abs(self.atoms), axis=0) ** 2))
        object.__setattr__(self, "total_variation", float(tv))

    @property
    def total_mass(self) -> np.ndarray:
        return self.atoms.sum(axis=0)

    @property
    def atom_norm_sum(self) -> float:
        return float(np.sum(np.linalg.norm(self.atoms, axis=1)))

    def restrict(self, a: float, b: float) -> "CurvatureMeasure":
        """Restriction to the half-open parameter interval ``(a, b]``."""
        keep = (self.knots > a) & (self.knots <= b)
        return CurvatureMeasure(self.knots[keep], self.atoms[keep], self.closed)


def second_difference_measure(curve: PolygonalCurve) -> CurvatureMeasure:
    """Second-derivative measure of the uniform-knot parameterization."""
    if curve.n < 3:
        raise ValueError("second differences need at least 3 vertices")
    v = curve.vertices
    m = curve.n_segments
    if curve.closed:
        atoms = m * (np.roll(v, -1, axis=0) - 2 * v + np.roll(v, 1, axis=0))
    else:
        atoms = np.empty_like(v)
        atoms[1:-1] = m * (v[2:] - 2 * v[1:-1] + v[:-2])
        atoms[0] = m * (v[1] - v[0])
        atoms[-1] = -m * (v[-1] - v[-2])
    return CurvatureMeasure(curve.knots, atoms, curve.closed)


def turning_angles(curve: PolygonalCurve) -> np.ndarray:
    """Angle between consecutive segments at every knot (0 at open endpoints)."""
    inc = curve.increments()
    if curve.closed:
        before, after = np.roll(inc, 1, axis=0), inc
        out = np.zeros(curve.n)
        idx = np.arange(curve.n)
    else:
        before, after = inc[:-1], inc[1:]
        out = np.zeros(curve.n)
        idx = np.arange(1, curve.n - 1)
    nb = np.linalg.norm(before, axis=1)
    na = np.linalg.norm(after, axis=1)
    ok = (nb > 0) & (na > 0)
    cos = np.einsum("ij,ij->i", before, after) / np.where(ok, nb * na, 1.0)
    out[idx] = np.where(ok, np.arccos(np.clip(cos, -1.0, 1.0)), 0.0)
    return out


# ---------------------------------------------------------------- resampling


def arc_length_positions(curve: PolygonalCurve) -> np.ndarray:
    """Cumulative arc length at each segment start, with the total appended."""
    seg = np.linalg.norm(curve.increments(), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_uniform(curve: PolygonalCurve, m: int) -> PolygonalCurve:
    """``m`` vertices at equal arc-length spacing along ``curve``, same topology."""
    if m < 2:
        raise ValueError("m must be at least 2")
    cum = arc_length_positions(curve)
    total = cum[-1]
    if total <= 0:
        raise ValueError("cannot resample a zero-length curve")
    if curve.closed:
        targets = total * np.arange(m) / m
    else:
        targets = total * np.arange(m) / (m - 1)
    a, b = curve.segments()
    seg_len = np.diff(cum)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg_len) - 1)
    # skip zero-length segments: searchsorted already lands on the last segment starting at target
    s = np.where(seg_len[idx] > 0, (targets - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    pts = a[idx] + s[:, None] * (b[idx] - a[idx])
    if not curve.closed:
        pts[-1] = curve.vertices[-1]
    return PolygonalCurve(pts, curve.topology)


# ---------------------------------------------------------------- 2-D tests


def crofton_length(curve: PolygonalCurve, num_lines: int, seed: int) -> float:
    """Monte Carlo Cauchy-Crofton estimate of the length of a planar curve.

    Lines ``x cos(theta) + y sin(theta) = r`` are drawn uniformly from
    ``[-R, R] x [0, 2 pi]`` where ``R`` bounds the vertex norms; the length
    estimate is ``(1/4) * (2R * 2pi) * mean(#crossings)``.
    """
    from .distributions import uniform_stream

    if curve.d != 2:
        raise ValueError("crofton_length needs a planar curve")
    if num_lines < 1:
        raise ValueError("num_lines must be positive")
    radius = float(np.max(np.linalg.norm(curve.vertices, axis=1))) + 1e-9
    if not math.isfinite(radius):
        raise ValueError("degenerate bounding disk")
    a, b = curve.segments()
    u = uniform_stream(seed, 0, 2 * num_lines).reshape(num_lines, 2)
    r = radius * (2 * u[:, 0] - 1)
    theta = 2 * math.pi * u[:, 1]
    total = 0
    step = max(1, _CHUNK_ELEMS // (2 * a.shape[0]))
    for i in range(0, num_lines, step):
        c, s, rr = np.cos(theta[i : i + step]), np.sin(theta[i : i + step]), r[i : i + step]
        ha = a[None, :, 0] * c[:, None] + a[None, :, 1] * s[:, None] - rr[:, None]
        hb = b[None, :, 0] * c[:, None] + b[None, :, 1] * s[:, None] - rr[:, None]
        # half-open rule counts a vertex lying on the line exactly once
        total += int(np.count_nonzero((ha > 0) != (hb > 0)))
    return 0.25 * (2 * radius) * (2 * math.pi) * total / num_lines


@dataclass(frozen=True)
class Crossing:
    first: int
    second: int
    point: np.ndarray


def _orient(p, q, r):
    return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])


def _non_adjacent_pairs(curve: PolygonalCurve):
    m = curve.n_segments
    i, j = np.triu_indices(m, k=2)
    if curve.closed:
        keep = ~((i == 0) & (j == m - 1))
        i, j = i[keep], j[keep]
    return i, j


def self_intersections(curve: PolygonalCurve) -> list[Crossing]:
    """Transversal crossings between non-adjacent segments of a planar curve."""
    crossings, _ = _segment_contacts(curve)
    return crossings


def tangency_candidates(curve: PolygonalCurve, tol: float = 1e-12) -> list[tuple[int, int, float]]:
    """Touching (non-transversal) contacts between non-adjacent segments.

    Each entry is ``(i, j, angle)`` where ``angle`` is the unsigned angle
    between the two segment directions.
    """
    _, touches = _segment_contacts(curve, tol)
    return touches


def _segment_contacts(curve: PolygonalCurve, tol: float = 1e-12):
    if curve.d != 2:
        raise ValueError("self-intersection test is only defined for planar curves")
    a, b = curve.segments()
    i, j = _non_adjacent_pairs(curve)
    if i.size == 0:
        return [], []
    p1, p2, q1, q2 = a[i], b[i], a[j], b[j]
    scale = 1.0 + float(np.max(np.abs(curve.vertices))) ** 2
    o1, o2 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    o3, o4 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    eps = tol * scale
    proper = (o1 * o2 < 0) & (o3 * o4 < 0) & (np.abs(o1) > eps) & (np.abs(o2) > eps) & (np.abs(o3) > eps) & (np.abs(o4) > eps)
    crossings = []
    for k in np.flatnonzero(proper):
        w = o1[k] / (o1[k] - o2[k])
        point = q1[k] + w * (q2[k] - q1[k])
        crossings.append(Crossing(int(i[k]), int(j[k]), point))
    # touching: some orientation vanishes while the bounding boxes overlap
    lo1, hi1 = np.minimum(p1, p2) - 1e-12, np.maximum(p1, p2) + 1e-12
    lo2, hi2 = np.minimum(q1, q2) - 1e-12, np.maximum(q1, q2) + 1e-12
    boxes = np.all((lo1 <= hi2) & (lo2 <= hi1), axis=1)
    degenerate = (np.abs(o1) <= eps) | (np.abs(o2) <= eps) | (np.abs(o3) <= eps) | (np.abs(o4) <= eps)
    straddle = (o1 * o2 <= eps * eps) & (o3 * o4 <= eps * eps)
    touches = []
    for k in np.flatnonzero(boxes & degenerate & straddle & ~proper):
        u, v = p2[k] - p1[k], q2[k] - q1[k]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            angle = 0.0
        else:
            c = abs(float(u @ v)) / (nu * nv)
            angle = math.acos(min(1.0, c))
        touches.append((int(i[k]), int(j[k]), angle))
    return crossings, touches
