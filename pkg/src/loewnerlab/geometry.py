"""Geometry of sampled traces: double points, boundary hits, hull bases, bubbles."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from ._validation import LoewnerLabError
from .bessel import besq_pathwise
from .excursions import decompose, filter_macroscopic
from .loewner import boundary_images, build_chain, shifted_chain, trace

__all__ = [
    "DoublePointRecord",
    "HullBase",
    "HullReport",
    "BubbleRecord",
    "segment_distance",
    "default_contact_tol",
    "detect_double_points",
    "detect_real_hits",
    "hull_base",
    "excursion_hull_experiment",
    "extract_bubble",
    "squared_trace",
    "polygon_area",
    "render_svg",
]

ALL_PAIRS_LIMIT = 1000


@dataclass(frozen=True)
class DoublePointRecord:
    """Closest approach of two time-separated segments ``seg1 < seg2``."""

    t1: float
    t2: float
    point: complex
    gap: float
    seg1: int
    seg2: int


def _dot(a, b):
    return a.real * b.real + a.imag * b.imag


def segment_distance(p1, q1, p2, q2):
    """Distance between segments ``[p1, q1]`` and ``[p2, q2]`` (complex arrays).

    Returns ``(dist, s, t)`` where ``p1 + s (q1 - p1)`` and
    ``p2 + t (q2 - p2)`` are closest points.
    """
    p1, q1, p2, q2 = (np.asarray(x, dtype=np.complex128) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    tiny = 1e-300
    safe_a = np.where(a > tiny, a, 1.0)
    safe_e = np.where(e > tiny, e, 1.0)
    denom = a * e - b * b
    s = np.where(denom > 1e-14 * np.maximum(a * e, tiny),
                 np.clip((b * f - c * e) / np.where(denom != 0, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / safe_e
    lo = t < 0
    hi = t > 1
    s = np.where(lo, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(hi, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    # degenerate segments
    s = np.where(a <= tiny, 0.0, s)
    t = np.where((a <= tiny) & (e > tiny), np.clip(f / safe_e, 0.0, 1.0), t)
    t = np.where(e <= tiny, 0.0, t)
    s = np.where((e <= tiny) & (a > tiny), np.clip(-c / safe_a, 0.0, 1.0), s)
    c1 = p1 + s * d1
    c2 = p2 + t * d2
    return np.abs(c1 - c2), s, t


def default_contact_tol(poly):
    """Three times the median segment length."""
    seg = np.abs(np.diff(poly.points))
    seg = seg[seg > 0]
    return 3.0 * float(np.median(seg)) if seg.size else 0.0


def _pairs_all(n_seg, times, m):
    i, j = np.triu_indices(n_seg, k=2)
    keep = np.abs(times[j] - times[i]) >= m
    return i[keep], j[keep]


def _pairs_hash(pts, times, m, tol):
    p = pts[:-1]
    q = pts[1:]
    xs0 = np.minimum(p.real, q.real) - 0.5 * tol
    xs1 = np.maximum(p.real, q.real) + 0.5 * tol
    ys0 = np.minimum(p.imag, q.imag) - 0.5 * tol
    ys1 = np.maximum(p.imag, q.imag) + 0.5 * tol
    seg_len = np.abs(q - p)
    cell = max(tol, float(np.median(seg_len)) if seg_len.size else tol, 1e-12)
    ix0 = np.floor(xs0 / cell).astype(np.int64)
    ix1 = np.floor(xs1 / cell).astype(np.int64)
    iy0 = np.floor(ys0 / cell).astype(np.int64)
    iy1 = np.floor(ys1 / cell).astype(np.int64)
    buckets = defaultdict(list)
    for s in range(p.shape[0]):
        for cx in range(ix0[s], ix1[s] + 1):
            for cy in range(iy0[s], iy1[s] + 1):
                buckets[(cx, cy)].append(s)
    cand = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        arr = np.asarray(members)
        a, b = np.triu_indices(arr.shape[0], k=1)
        ia, ib = arr[a], arr[b]
        lo = np.minimum(ia, ib)
        hi = np.maximum(ia, ib)
        ok = (hi - lo >= 2) & (np.abs(times[hi] - times[lo]) >= m)
        cand.update(zip(lo[ok].tolist(), hi[ok].tolist()))
    if not cand:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    arr = np.array(sorted(cand), dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def _cluster(i, j):
    """Group contact pairs whose indices differ by at most one step."""
    parent = list(range(len(i)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    index = {(int(a), int(b)): n for n, (a, b) in enumerate(zip(i, j))}
    for n, (a, b) in enumerate(zip(i, j)):
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                o = index.get((int(a) + da, int(b) + db))
                if o is not None:
                    ra, rb = find(n), find(o)
                    if ra != rb:
                        parent[ra] = rb
    groups = defaultdict(list)
    for n in range(len(i)):
        groups[find(n)].append(n)
    return list(groups.values())


def detect_double_points(poly, m, tol_contact=None, method="auto"):
    """Pairs of segments at least ``m`` apart in time that come within ``tol_contact``.

    Segments ``i`` and ``j`` (``|t_j - t_i| >= m``, not adjacent) are in
    contact when their distance is at most ``tol_contact`` (default: three
    times the median segment length).  Contacts whose segment indices differ
    by at most one step are merged and reported once, at their closest
    approach.  ``method`` is ``"hash"``, ``"all_pairs"`` or ``"auto"``
    (all pairs up to 1000 segments).
    """
    if not m > 0:
        raise LoewnerLabError("m must be > 0")
    pts = poly.points
    n_seg = pts.shape[0] - 1
    if n_seg < 3:
        return []
    tol = default_contact_tol(poly) if tol_contact is None else float(tol_contact)
    if not tol > 0:
        raise LoewnerLabError("tol_contact must be > 0")
    if method == "auto":
        method = "all_pairs" if n_seg <= ALL_PAIRS_LIMIT else "hash"
    if method == "all_pairs":
        i, j = _pairs_all(n_seg, poly.times, m)
    elif method == "hash":
        i, j = _pairs_hash(pts, poly.times, m, tol)
    else:
        raise LoewnerLabError(f"unknown method {method!r}")
    if i.size == 0:
        return []
    dist, s, t = segment_distance(pts[i], pts[i + 1], pts[j], pts[j + 1])
    times = poly.times
    t1 = times[i] + s * (times[i + 1] - times[i])
    t2 = times[j] + t * (times[j + 1] - times[j])
    # separation is checked again at the closest points, not the segment starts
    hit = (dist <= tol) & (t2 - t1 >= m)
    i, j, dist, s, t, t1, t2 = i[hit], j[hit], dist[hit], s[hit], t[hit], t1[hit], t2[hit]
    out = []
    for group in _cluster(i, j):
        g = min(group, key=lambda n: (dist[n], i[n], j[n]))
        a, b = int(i[g]), int(j[g])
        c1 = pts[a] + s[g] * (pts[a + 1] - pts[a])
        c2 = pts[b] + t[g] * (pts[b + 1] - pts[b])
        out.append(DoublePointRecord(float(t1[g]), float(t2[g]), complex(0.5 * (c1 + c2)), float(dist[g]), a, b))
    out.sort(key=lambda r: (r.t1, r.t2))
    return out


def detect_real_hits(poly, tol_height, exclude_radius):
    """Times at which the curve touches the real line away from its root.

    A sample counts when ``Im <= tol_height`` and it lies farther than
    ``exclude_radius`` from the root; slit attachments recorded in
    ``poly.contact_points`` count under the same distance rule.
    """
    if tol_height < 0 or exclude_radius < 0:
        raise LoewnerLabError("tolerances must be >= 0")
    pts = poly.points
    mask = (pts.imag <= tol_height) & (np.abs(pts - poly.root) > exclude_radius)
    hits = list(poly.times[mask])
    if poly.contact_points.size:
        cm = np.abs(poly.contact_points - poly.root) > exclude_radius
        hits.extend(poly.contact_times[cm])
    return np.unique(np.asarray(hits, dtype=float))


@dataclass
class HullBase:
    """Real interval ``[left, right]`` at the base of a backward hull."""

    left: float
    right: float
    k: int
    eps: list = field(default_factory=list)
    lefts: list = field(default_factory=list)
    rights: list = field(default_factory=list)

    @property
    def length(self):
        return self.right - self.left


def _extrapolate(eps, vals):
    if len(vals) == 1 or vals[-1] == vals[-2]:
        return vals[-1]
    e1, e2 = eps[-2], eps[-1]
    return vals[-1] + (vals[-1] - vals[-2]) * e2 / (e1 - e2)


def hull_base(chain, k, eps_sequence=(1e-2, 1e-3, 1e-4)):
    """Base of the hull of ``h_{t_k}`` from the images of ``-eps`` and ``+eps``.

    The limit ``eps -> 0`` is taken by linear extrapolation from the two
    smallest ``eps``; the per-``eps`` values are kept for inspection.
    """
    eps = sorted((float(e) for e in eps_sequence), reverse=True)
    if not eps or eps[-1] <= 0:
        raise LoewnerLabError("eps_sequence must hold positive values")
    imgs = [boundary_images(chain, k, e) for e in eps]
    lefts = [b.left for b in imgs]
    rights = [b.right for b in imgs]
    left = _extrapolate(eps, lefts)
    right = _extrapolate(eps, rights)
    if left > right:
        left = right = 0.5 * (left + right)
    return HullBase(left, right, k, eps, lefts, rights)


@dataclass
class HullReport:
    """Hull base after a restart at ``excursion_start`` and run for ``duration``.

    ``closes_at_end`` records whether the restarted trace comes back within
    the contact tolerance of the real line (or attaches a slit to it) near
    the end of the excursion; it is reported, not required.
    """

    seed: int
    kappa: float
    excursion_start: float
    excursion_end: float
    duration: float
    base_left: float
    base_right: float
    base_length: float
    double_point_found: bool
    n_double_points: int
    closes_at_end: bool

    def to_dict(self):
        return asdict(self)


def _closes_near(poly, t_end, window, tol):
    near = np.abs(poly.times - t_end) <= window
    if np.any(poly.points.imag[near] <= tol):
        return True
    if poly.contact_times.size:
        return bool(np.any(np.abs(poly.contact_times - t_end) <= window))
    return False


def excursion_hull_experiment(driver, m, zero_threshold=1e-4, every=10,
                              eps_sequence=(1e-2, 1e-3, 1e-4), tol_contact=None):
    """Hull base and double points after each macroscopic excursion start.

    The squared Bessel process of dimension ``d`` driven by the same
    Brownian motion marks the excursions lasting at least ``m``.  For each
    start ``r`` with ``r + m`` inside the horizon, the chain restarted at
    ``r`` is run for time ``m`` to measure the hull base, and its trace up
    to the horizon is searched for double points at least ``m`` apart in
    time.
    """
    kappa = driver.kappa
    if not kappa > 4:
        raise LoewnerLabError("the excursion-hull experiment needs kappa > 4")
    d = 1.0 - 4.0 / kappa
    grid = driver.grid
    z = besq_pathwise(0.0, d, driver.base, "upper")
    chain = build_chain(driver)
    m_steps = round(m / grid.dt)
    out = []
    for rec in filter_macroscopic(decompose(z, zero_threshold), m):
        r = rec.start_idx
        if r + m_steps > grid.n_steps or r >= grid.n_steps:
            continue
        sub = shifted_chain(chain, r)
        base = hull_base(sub, m_steps, eps_sequence)
        poly = trace(sub, every, contacts=True)
        tol = default_contact_tol(poly) if tol_contact is None else float(tol_contact)
        dps = detect_double_points(poly, m, tol)
        t_close = (rec.end_idx - r) * grid.dt
        closes = _closes_near(poly, t_close, every * grid.dt, tol)
        out.append(HullReport(driver.base.seed, kappa, r * grid.dt, rec.end_idx * grid.dt, m, base.left,
                              base.right, base.length, bool(dps), len(dps), closes))
    return out


@dataclass
class BubbleRecord:
    loop: np.ndarray
    area: float
    record: DoublePointRecord


def polygon_area(pts):
    """Shoelace area of a closed polygon given by complex vertices."""
    x = pts.real
    y = pts.imag
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def extract_bubble(poly, record, tol_contact=None):
    """Closed loop of the trace between the two times of a double point."""
    tol = default_contact_tol(poly) if tol_contact is None else float(tol_contact)
    if record.gap > tol:
        raise LoewnerLabError(f"contact gap {record.gap} exceeds tolerance {tol}")
    a, b = record.seg1, record.seg2
    loop = np.concatenate([[record.point], poly.points[a + 1:b + 1]])
    if np.unique(np.round(loop, 15)).shape[0] < 3:
        raise LoewnerLabError("loop has fewer than 3 distinct points")
    return BubbleRecord(loop, polygon_area(loop), record)


def squared_trace(chain, every=1):
    """Trace with every point squared (the half-plane unfolded onto the slit plane)."""
    return trace(chain, every).map_points(lambda p: p * p)


def render_svg(poly, file, width=800, height=400, hull=None, bubbles=(), title=None):
    """Write the polyline as SVG, optionally marking a hull base and shading bubbles.

    ``hull`` is a :class:`HullBase`, a :class:`HullReport` or a ``(left, right)`` pair.
    """
    if isinstance(hull, HullBase):
        hull = (hull.left, hull.right)
    elif isinstance(hull, HullReport):
        hull = (hull.base_left, hull.base_right)
    pts = [poly.points]
    if hull is not None:
        pts.append(np.array(hull, dtype=complex))
    for bub in bubbles:
        pts.append(bub.loop)
    allp = np.concatenate(pts)
    x0, x1 = allp.real.min(), allp.real.max()
    y0, y1 = min(0.0, allp.imag.min()), allp.imag.max()
    pad = 0.05 * max(x1 - x0, y1 - y0, 1e-9)
    x0, x1, y0, y1 = x0 - pad, x1 + pad, y0 - pad, y1 + pad
    scale = min(width / (x1 - x0), height / (y1 - y0))

    def xy(p):
        return f"{(p.real - x0) * scale:.3f},{(y1 - p.imag) * scale:.3f}"

    def path(arr):
        return " ".join(xy(p) for p in arr)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {(x1 - x0) * scale:.3f} {(y1 - y0) * scale:.3f}">',
    ]
    if title:
        lines.append(f"<title>{escape(str(title))}</title>")
    axis_y = (y1 - 0.0) * scale
    lines.append(f'<line x1="0" y1="{axis_y:.3f}" x2="{(x1 - x0) * scale:.3f}" y2="{axis_y:.3f}" '
                 'stroke="#999" stroke-width="1"/>')
    for bub in bubbles:
        lines.append(f'<polygon points="{path(bub.loop)}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>')
    lines.append(f'<polyline points="{path(poly.points)}" fill="none" stroke="#08306b" stroke-width="1"/>')
    if hull is not None:
        a, b = complex(hull[0]), complex(hull[1])
        lines.append(f'<line x1="{xy(a).split(",")[0]}" y1="{axis_y:.3f}" x2="{xy(b).split(",")[0]}" '
                     f'y2="{axis_y:.3f}" stroke="#d62728" stroke-width="3"/>')
    lines.append("</svg>")
    with open(file, "w") as fh:
        fh.write("\n".join(lines) + "\n")

