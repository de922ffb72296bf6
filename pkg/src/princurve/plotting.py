"""Static figures: a standalone SVG overlay and matplotlib PNG reports.

The SVG draws the sample as ``<circle>`` dots, the curve as one
``<polyline>`` (closed curves repeat the first vertex) and knots carrying
projection mass as larger ``<circle class="atom">`` markers. Curves of
dimension other than two are drawn through their first two coordinates,
one-dimensional curves on the horizontal axis.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import PolygonalCurve, speed_profile  # noqa: E402

SVG_NS = "http://www.w3.org/2000/svg"
CANVAS = 600.0
PNG_META = {"Software": None}


def _planar(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] == 1:
        return np.column_stack([pts[:, 0], np.zeros(pts.shape[0])])
    return pts[:, :2]


def atom_knots(curve: PolygonalCurve, report: dict | None, floor: float = 0.0) -> list[int]:
    """Vertex indices whose projection mass in a diagnostics report exceeds ``floor``."""
    if not report:
        return []
    out = []
    m = curve.n_segments
    ends = report.get("endpoint_atom_masses")
    if ends and not curve.closed:
        if ends[0] and ends[0] > floor:
            out.append(0)
        if ends[1] and ends[1] > floor:
            out.append(curve.n - 1)
    for atom in report.get("knot_atom_masses", []):
        if atom.get("mass") and atom["mass"] > floor:
            out.append(int(round(atom["t"] * m)) % curve.n)
    return sorted(set(out))


def svg_document(curve: PolygonalCurve, points=None, atoms=(), max_points: int | None = None) -> str:
    verts = _planar(curve.vertices)
    pts = _planar(points) if points is not None else np.zeros((0, 2))
    if max_points is not None:
        pts = pts[:max_points]
    allp = np.vstack([verts, pts]) if pts.size else verts
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
    pad = 0.05 * span
    scale = CANVAS / (span + 2 * pad)

    def xy(p):
        # flip y so the picture has the usual orientation
        return (p[0] - lo[0] + pad) * scale, (hi[1] - p[1] + pad) * scale

    width = (hi[0] - lo[0] + 2 * pad) * scale
    height = (hi[1] - lo[1] + 2 * pad) * scale
    ET.register_namespace("", SVG_NS)
    root = ET.Element(f"{{{SVG_NS}}}svg", {
        "version": "1.1",
        "width": f"{width:.2f}",
        "height": f"{height:.2f}",
        "viewBox": f"0 0 {width:.2f} {height:.2f}",
    })
    ET.SubElement(root, f"{{{SVG_NS}}}rect", {"width": "100%", "height": "100%", "fill": "white"})
    dots = ET.SubElement(root, f"{{{SVG_NS}}}g", {"id": "points", "fill": "#7f7f7f", "fill-opacity": "0.5"})
    for p in pts:
        cx, cy = xy(p)
        ET.SubElement(dots, f"{{{SVG_NS}}}circle", {"cx": f"{cx:.2f}", "cy": f"{cy:.2f}", "r": "1.2"})
    path = verts if not curve.closed else np.vstack([verts, verts[:1]])
    coords = " ".join("{:.3f},{:.3f}".format(*xy(p)) for p in path)
    ET.SubElement(root, f"{{{SVG_NS}}}polyline", {
        "id": "curve", "points": coords, "fill": "none", "stroke": "#1f4e9c", "stroke-width": "2",
    })
    marks = ET.SubElement(root, f"{{{SVG_NS}}}g", {"id": "atoms", "fill": "#c0392b"})
    for i in atoms:
        cx, cy = xy(verts[i])
        ET.SubElement(marks, f"{{{SVG_NS}}}circle", {"class": "atom", "cx": f"{cx:.2f}", "cy": f"{cy:.2f}", "r": "5"})
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_svg(path, curve: PolygonalCurve, points=None, atoms=(), max_points: int | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(svg_document(curve, points, atoms, max_points))


def curve_figure(path, curve: PolygonalCurve, points=None, length: float | None = None, title: str = "",
                 max_points: int = 5000) -> None:
    """Curve over the sample beside its speed profile relative to the budget."""
    fig, (ax, ax_speed) = plt.subplots(1, 2, figsize=(9, 4.2), gridspec_kw={"width_ratios": [1.3, 1]})
    verts = _planar(curve.vertices)
    if points is not None:
        pts = _planar(points)[:max_points]
        ax.scatter(pts[:, 0], pts[:, 1], s=2, c="0.6", lw=0, rasterized=True)
    path_pts = np.vstack([verts, verts[:1]]) if curve.closed else verts
    ax.plot(path_pts[:, 0], path_pts[:, 1], "-o", color="#1f4e9c", ms=2.5, lw=1.5)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title or "fitted curve")
    speeds = speed_profile(curve)
    ref = length if length else float(np.mean(speeds))
    ax_speed.plot(np.arange(speeds.shape[0]), speeds / ref, ".-", color="k")
    ax_speed.axhspan(0.95, 1.05, color="#2ca02c", alpha=0.15, lw=0)
    ax_speed.set_xlabel("segment")
    ax_speed.set_ylabel("speed / L")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)


def scan_figure(path, lengths, values, errors, reference=None) -> None:
    """Empirical G(L) with two-standard-error bars, optionally over a reference curve."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.errorbar(lengths, values, yerr=2 * np.asarray(errors), fmt="o", color="k", capsize=3, label="fitted")
    if reference is not None:
        grid = np.linspace(min(lengths), max(lengths), 200)
        ax.plot(grid, [reference(x) for x in grid], "-", color="#1f4e9c", label="exact")
        ax.legend(frameon=False)
    ax.set_xlabel("L")
    ax.set_ylabel("G(L)")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)
