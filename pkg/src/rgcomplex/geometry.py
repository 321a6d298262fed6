"""Metric primitives: smallest enclosing balls, range graphs, vacancy grids.

The smallest enclosing ball routine is the geometric kernel of the whole
package: a point set spans a simplex of the radius-r complex exactly when its
smallest enclosing ball has radius <= r (closed comparison, so ties are
included). Inputs of up to three points use closed forms; larger sets use
Welzl's move-to-front algorithm with circumcenters solved from the Gram
system, falling back to exact rational arithmetic when that system is badly
conditioned.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Ball:
    """Closed ball with the (<= d+1)-point support set that determines it."""

    center: np.ndarray
    radius: float
    support: tuple[int, ...] = ()

    def contains(self, point: np.ndarray, slack: float = 1e-9) -> bool:
        gap = float(np.dot(self.center - point, self.center - point))
        return gap <= (self.radius * (1.0 + slack)) ** 2 + slack**2


def _circumball(points: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Smallest ball with all given affinely independent points on its boundary.

    Solves the Gram system G a = rhs with rhs_i = |p_i - p_0|^2 / 2 and
    center = p_0 + sum_i a_i (p_i - p_0). When the float solve is rejected by
    its residual, the system is re-solved in exact rational arithmetic.
    Returns None when the points are affinely dependent (singular system even
    in exact arithmetic).
    """
    p0 = points[0]
    diffs = points[1:] - p0
    m = len(diffs)
    if m == 0:
        return p0.copy(), 0.0
    gram = diffs @ diffs.T
    rhs = 0.5 * np.einsum("ij,ij->i", diffs, diffs)
    alpha = None
    try:
        cand = np.linalg.solve(gram, rhs)
        resid = gram @ cand - rhs
        scale = float(np.abs(gram).sum() * (1.0 + np.abs(cand).max()) + np.abs(rhs).sum())
        if float(np.abs(resid).max()) <= 1e-9 * scale:
            alpha = cand
    except np.linalg.LinAlgError:
        alpha = None
    if alpha is None:
        sol = _solve_exact(gram, rhs)
        if sol is None:
            return None
        alpha = np.asarray([float(x) for x in sol])
    center = p0 + alpha @ diffs
    radius = math.sqrt(float(np.dot(center - p0, center - p0)))
    return center, radius


def _solve_exact(gram: np.ndarray, rhs: np.ndarray):
    """Gaussian elimination over Fractions; None when singular."""
    m = len(rhs)
    a = [[Fraction(gram[i, j]) for j in range(m)] + [Fraction(rhs[i])] for i in range(m)]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv = a[col][col]
        for r in range(m):
            if r != col and a[r][col] != 0:
                factor = a[r][col] / inv
                for c in range(col, m + 1):
                    a[r][c] -= factor * a[col][c]
    return [a[i][m] / a[i][i] for i in range(m)]


def triangle_circumradius_sq(a2, b2, c2):
    """Squared smallest-enclosing-ball radius of a triangle, elementwise.

    Arguments are the three squared side lengths in any order. If the largest
    squared side dominates the sum of the others (right or obtuse triangle,
    including collinear degenerations), the ball spans the longest side;
    otherwise it is the circumscribed ball with
    R^2 = a2*b2*c2 / (2(a2*b2 + b2*c2 + c2*a2) - a2^2 - b2^2 - c2^2).
    """
    a2 = np.asarray(a2, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    hi = np.maximum(a2, np.maximum(b2, c2))
    rest = a2 + b2 + c2 - hi
    obtuse = hi >= rest
    denom = 2.0 * (a2 * b2 + b2 * c2 + c2 * a2) - (a2 * a2 + b2 * b2 + c2 * c2)
    safe = np.where(obtuse, 1.0, denom)
    return np.where(obtuse, hi / 4.0, a2 * b2 * c2 / safe)


def _triangle_meb_center_radius_sq(A, B, C, a2, b2, c2):
    """Vectorized triangle MEB: (center, radius^2) for stacked triangles.

    a2 is the squared side opposite A (that is, |B-C|^2), and cyclically.
    Obtuse triangles take the midpoint of their longest side; acute ones the
    circumcenter from barycentric weights a2(b2+c2-a2) : b2(c2+a2-b2) :
    c2(a2+b2-c2).
    """
    hi = np.maximum(a2, np.maximum(b2, c2))
    obtuse = hi >= a2 + b2 + c2 - hi
    r2 = triangle_circumradius_sq(a2, b2, c2)
    mid_a = 0.5 * (B + C)
    mid_b = 0.5 * (A + C)
    mid_c = 0.5 * (A + B)
    long_mid = np.where(
        (a2 >= b2)[..., None] & (a2 >= c2)[..., None],
        mid_a,
        np.where((b2 >= c2)[..., None], mid_b, mid_c),
    )
    wa = a2 * (b2 + c2 - a2)
    wb = b2 * (c2 + a2 - b2)
    wc = c2 * (a2 + b2 - c2)
    wsum = wa + wb + wc
    safe = np.where(obtuse, 1.0, wsum)
    bary = (wa[..., None] * A + wb[..., None] * B + wc[..., None] * C) / safe[..., None]
    center = np.where(obtuse[..., None], long_mid, bary)
    return center, r2


def tetra_meb_radius_sq(quads: np.ndarray) -> np.ndarray:
    """Squared MEB radius for stacked 4-point sets, shape (N, 4, dim).

    The MEB of four points is the smallest among the candidate balls that
    enclose all four: the three-point MEBs of each facet (checked against the
    remaining point), the diameter balls of each pair (checked against the
    other two), and the circumscribed sphere of the quadruple. Degenerate
    quadruples lack a circumsphere but are always covered by a facet or pair
    candidate.
    """
    quads = np.asarray(quads, dtype=float)
    n = len(quads)
    if n == 0:
        return np.zeros(0)
    d2 = {}
    for i in range(4):
        for j in range(i + 1, 4):
            diff = quads[:, i] - quads[:, j]
            d2[(i, j)] = np.einsum("nd,nd->n", diff, diff)
    best = np.full(n, np.inf)
    for i, j in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)):
        others = [t for t in range(4) if t not in (i, j)]
        center = 0.5 * (quads[:, i] + quads[:, j])
        r2 = 0.25 * d2[(i, j)]
        ok = np.ones(n, dtype=bool)
        for t in others:
            gap = quads[:, t] - center
            ok &= np.einsum("nd,nd->n", gap, gap) <= r2 * (1.0 + 1e-12) + 1e-30
        best = np.where(ok & (r2 < best), r2, best)
    for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        rest = next(t for t in range(4) if t not in tri)
        ta, tb, tc = tri
        a2 = d2[(min(tb, tc), max(tb, tc))]
        b2 = d2[(min(ta, tc), max(ta, tc))]
        c2 = d2[(min(ta, tb), max(ta, tb))]
        center, r2 = _triangle_meb_center_radius_sq(
            quads[:, ta], quads[:, tb], quads[:, tc], a2, b2, c2
        )
        gap = quads[:, rest] - center
        ok = np.einsum("nd,nd->n", gap, gap) <= r2 * (1.0 + 1e-12) + 1e-30
        best = np.where(ok & (r2 < best), r2, best)
    # Circumsphere of all four via the 3x3 Gram system, solved by Cramer.
    e = quads[:, 1:] - quads[:, :1]
    g = np.einsum("nid,njd->nij", e, e)
    rhs = 0.5 * np.einsum("nid,nid->ni", e, e)
    det = (
        g[:, 0, 0] * (g[:, 1, 1] * g[:, 2, 2] - g[:, 1, 2] * g[:, 2, 1])
        - g[:, 0, 1] * (g[:, 1, 0] * g[:, 2, 2] - g[:, 1, 2] * g[:, 2, 0])
        + g[:, 0, 2] * (g[:, 1, 0] * g[:, 2, 1] - g[:, 1, 1] * g[:, 2, 0])
    )
    scale = np.einsum("nii->n", g) + 1e-300
    nondeg = np.abs(det) > 1e-12 * scale**3
    alpha = np.zeros((n, 3))
    for col in range(3):
        gc = g.copy()
        gc[:, :, col] = rhs
        dc = (
            gc[:, 0, 0] * (gc[:, 1, 1] * gc[:, 2, 2] - gc[:, 1, 2] * gc[:, 2, 1])
            - gc[:, 0, 1] * (gc[:, 1, 0] * gc[:, 2, 2] - gc[:, 1, 2] * gc[:, 2, 0])
            + gc[:, 0, 2] * (gc[:, 1, 0] * gc[:, 2, 1] - gc[:, 1, 1] * gc[:, 2, 0])
        )
        alpha[:, col] = np.where(nondeg, dc / np.where(nondeg, det, 1.0), 0.0)
    offset = np.einsum("ni,nid->nd", alpha, e)
    r2c = np.einsum("nd,nd->n", offset, offset)
    best = np.where(nondeg & (r2c < best), r2c, best)
    return best


def _meb_three(points: np.ndarray, idx: tuple[int, int, int]) -> Ball:
    p, q, s = points
    a2 = float(np.dot(q - s, q - s))
    b2 = float(np.dot(p - s, p - s))
    c2 = float(np.dot(p - q, p - q))
    hi = max(a2, b2, c2)
    if hi >= a2 + b2 + c2 - hi:
        if hi == a2:
            pair, others = (q, s), (idx[1], idx[2])
        elif hi == b2:
            pair, others = (p, s), (idx[0], idx[2])
        else:
            pair, others = (p, q), (idx[0], idx[1])
        center = 0.5 * (pair[0] + pair[1])
        return Ball(center=center, radius=math.sqrt(hi) / 2.0, support=others)
    rad2 = float(triangle_circumradius_sq(a2, b2, c2))
    # Circumcenter via barycentric weights a2(b2+c2-a2) : b2(a2+c2-b2) : c2(a2+b2-c2),
    # where a2 is opposite p, b2 opposite q, c2 opposite s.
    wa = a2 * (b2 + c2 - a2)
    wb = b2 * (a2 + c2 - b2)
    wc = c2 * (a2 + b2 - c2)
    center = (wa * p + wb * q + wc * s) / (wa + wb + wc)
    return Ball(center=center, radius=math.sqrt(rad2), support=idx)


def _ball_with_boundary(points: np.ndarray, order: list[int], boundary: list[int]) -> Ball:
    """Welzl recursion: MEB of points[order] with points[boundary] on the sphere."""
    d = points.shape[1]
    ball = _boundary_ball(points, boundary)
    if len(boundary) == d + 1:
        return ball
    for pos in range(len(order)):
        i = order[pos]
        if ball is not None and ball.contains(points[i]):
            continue
        ball = _ball_with_boundary(points, order[:pos], boundary + [i])
        # Move-to-front keeps hard points early in later passes.
        order.insert(0, order.pop(pos))
    return ball


def _boundary_ball(points: np.ndarray, boundary: list[int]) -> Ball | None:
    if not boundary:
        return None
    if len(boundary) == 1:
        return Ball(center=points[boundary[0]].copy(), radius=0.0, support=(boundary[0],))
    sub = points[boundary]
    res = _circumball(sub)
    if res is None:
        # Affinely dependent boundary set: fall back to its own MEB.
        return _brute_force_meb(sub, tuple(boundary))
    center, radius = res
    return Ball(center=center, radius=radius, support=tuple(boundary))


def _brute_force_meb(points: np.ndarray, idx: tuple[int, ...]) -> Ball:
    """MEB by subset enumeration; only used on tiny degenerate inputs."""
    n, d = points.shape
    best = None
    for size in range(1, min(n, d + 1) + 1):
        for sub in itertools.combinations(range(n), size):
            if size == 1:
                center, radius = points[sub[0]].copy(), 0.0
            elif size == 2:
                center = 0.5 * (points[sub[0]] + points[sub[1]])
                radius = 0.5 * math.dist(points[sub[0]], points[sub[1]])
            else:
                res = _circumball(points[list(sub)])
                if res is None:
                    continue
                center, radius = res
            dist2 = np.einsum("ij,ij->i", points - center, points - center)
            if np.all(dist2 <= (radius + 1e-12 * (1.0 + radius)) ** 2):
                if best is None or radius < best.radius:
                    best = Ball(center=center, radius=radius, support=tuple(idx[j] for j in sub))
        if best is not None:
            return best
    raise RuntimeError("enclosing ball search failed")


def min_enclosing_ball(points: np.ndarray) -> Ball:
    """Smallest closed ball containing all points, with its support set.

    Deterministic: no shuffling, so identical input arrays give identical
    output bits. One- and two-point inputs are immediate, three-point inputs
    use the shared closed-form triangle radius, and larger inputs run Welzl's
    move-to-front recursion.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("empty point set has no enclosing ball")
    if n == 1:
        return Ball(center=pts[0].copy(), radius=0.0, support=(0,))
    if n == 2:
        center = 0.5 * (pts[0] + pts[1])
        return Ball(center=center, radius=0.5 * math.dist(pts[0], pts[1]), support=(0, 1))
    if n == 3:
        return _meb_three(pts, (0, 1, 2))
    ball = None
    order: list[int] = []
    for i in range(n):
        if ball is not None and ball.contains(pts[i]):
            order.append(i)
            continue
        ball = _ball_with_boundary(pts, order, [i])
        order.insert(0, i)
    return ball


def cech_simplex_test(points: np.ndarray, r: float) -> bool:
    """True when the smallest enclosing ball radius is <= r (ties included)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    n = len(pts)
    if n == 1:
        return r >= 0.0
    if n == 2:
        return float(np.dot(pts[0] - pts[1], pts[0] - pts[1])) <= (2.0 * r) ** 2
    if n == 3:
        a2 = float(np.dot(pts[1] - pts[2], pts[1] - pts[2]))
        b2 = float(np.dot(pts[0] - pts[2], pts[0] - pts[2]))
        c2 = float(np.dot(pts[0] - pts[1], pts[0] - pts[1]))
        return float(triangle_circumradius_sq(a2, b2, c2)) <= r * r
    return min_enclosing_ball(pts).radius <= r


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected range graph: edge (i, j) iff |p_i - p_j| <= cutoff, i < j."""

    n: int
    cutoff: float
    edges: np.ndarray  # (m, 2) int64, lexicographically sorted

    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency(self) -> list[np.ndarray]:
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return [np.asarray(sorted(a), dtype=np.int64) for a in adj]

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("i,j\n")
            for i, j in self.edges:
                fh.write(f"{i},{j}\n")


def _positive_offsets(dim: int) -> list[tuple[int, ...]]:
    """Half of the nonzero {-1,0,1}^d offsets: first nonzero entry positive."""
    out = []
    for off in itertools.product((-1, 0, 1), repeat=dim):
        nz = next((v for v in off if v != 0), 0)
        if nz > 0:
            out.append(off)
    return out


def build_neighbor_graph(points, cutoff: float) -> NeighborGraph:
    """All pairs at distance <= cutoff via uniform spatial hashing.

    Cells have side exactly `cutoff`, so candidate pairs live in the same or
    adjacent cells; each unordered cell pair is scanned once.
    """
    pts = points.points if hasattr(points, "points") else np.asarray(points, dtype=float)
    pts = np.atleast_2d(pts)
    n, d = pts.shape if pts.size else (0, 1)
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if n < 2:
        return NeighborGraph(n=n, cutoff=cutoff, edges=np.empty((0, 2), dtype=np.int64))
    if cutoff == 0:
        # Degenerate hash cells: the only pairs within reach are exact duplicates.
        _, inverse = np.unique(pts, axis=0, return_inverse=True)
        chunks = []
        for g in np.unique(inverse):
            idx = np.nonzero(inverse == g)[0]
            if len(idx) > 1:
                ii, jj = np.triu_indices(len(idx), k=1)
                chunks.append(np.column_stack([idx[ii], idx[jj]]))
        if chunks:
            edges = np.concatenate(chunks, axis=0)
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
        else:
            edges = np.empty((0, 2), dtype=np.int64)
        return NeighborGraph(n=n, cutoff=cutoff, edges=edges)
    cells = np.floor(pts / cutoff).astype(np.int64)
    buckets: dict[tuple[int, ...], list[int]] = {}
    for i, key in enumerate(map(tuple, cells)):
        buckets.setdefault(key, []).append(i)
    buckets = {k: np.asarray(v, dtype=np.int64) for k, v in buckets.items()}
    offsets = _positive_offsets(d)
    cut2 = cutoff * cutoff
    chunks = []
    for key, idx in buckets.items():
        a = pts[idx]
        if len(idx) > 1:
            ii, jj = np.triu_indices(len(idx), k=1)
            diff = a[ii] - a[jj]
            keep = np.einsum("ij,ij->i", diff, diff) <= cut2
            if keep.any():
                pair = np.column_stack([idx[ii[keep]], idx[jj[keep]]])
                chunks.append(np.sort(pair, axis=1))
        for off in offsets:
            other = buckets.get(tuple(k + o for k, o in zip(key, off)))
            if other is None:
                continue
            diff = a[:, None, :] - pts[other][None, :, :]
            keep = np.einsum("ijk,ijk->ij", diff, diff) <= cut2
            if keep.any():
                ai, bj = np.nonzero(keep)
                pair = np.column_stack([idx[ai], other[bj]])
                chunks.append(np.sort(pair, axis=1))
    if chunks:
        edges = np.concatenate(chunks, axis=0)
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return NeighborGraph(n=n, cutoff=cutoff, edges=edges)


@dataclass(frozen=True)
class VacancyGrid:
    """Occupancy raster of the union of r-balls over a box window."""

    window_kind: str
    origin: np.ndarray
    cell_size: np.ndarray
    occupied: np.ndarray  # boolean, True where covered

    def vacant_fraction(self) -> float:
        return float(1.0 - self.occupied.mean())

    def save_pgm(self, path) -> None:
        """2-d occupancy as a portable graymap (occupied black)."""
        if self.occupied.ndim != 2:
            raise ValueError("graymap dump needs a 2-d grid")
        img = np.where(self.occupied.T[::-1], 0, 255).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5 {img.shape[1]} {img.shape[0]} 255\n".encode())
            fh.write(img.tobytes())


def build_vacancy_grid(sample, r: float, w, resolution: float) -> VacancyGrid:
    """Raster cover test: a cell is occupied iff its center is within r of a point."""
    if w.kind == "ball":
        raise ValueError("vacancy rasters need a box or cube window")
    if w.dim > 3:
        raise ValueError("vacancy rasters support dimensions 1..3")
    if resolution * r < 8.0 - 1e-9:
        raise ValueError("resolution too coarse: need at least 8 cells per radius r")
    pts = sample.points if hasattr(sample, "points") else np.asarray(sample, dtype=float)
    lo, hi = w.bounding_box()
    counts = [max(1, int(round((hi[i] - lo[i]) * resolution))) for i in range(w.dim)]
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(counts[i]) + 0.5) / counts[i] for i in range(w.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    if len(pts):
        dist, _ = cKDTree(pts).query(centers, k=1)
        occ = (dist <= r).reshape(counts)
    else:
        occ = np.zeros(counts, dtype=bool)
    cell = np.asarray([(hi[i] - lo[i]) / counts[i] for i in range(w.dim)])
    return VacancyGrid(window_kind=w.kind, origin=lo, cell_size=cell, occupied=occ)


def vacant_component_count(sample, r: float, w, resolution: float) -> tuple[int, int]:
    """(bounded, boundary-touching) face-connected components of the vacant set."""
    grid = build_vacancy_grid(sample, r, w, resolution)
    vacant = ~grid.occupied
    structure = ndimage.generate_binary_structure(vacant.ndim, 1)
    labels, total = ndimage.label(vacant, structure=structure)
    if total == 0:
        return 0, 0
    border = np.zeros_like(labels, dtype=bool)
    for axis in range(labels.ndim):
        sl = [slice(None)] * labels.ndim
        sl[axis] = 0
        border[tuple(sl)] = True
        sl[axis] = -1
        border[tuple(sl)] = True
    touching = np.unique(labels[border & (labels > 0)])
    return total - len(touching), len(touching)


def packing_lower_bound(d: int) -> tuple[int, np.ndarray]:
    """Certified count of points in the closed 2-ball with pairwise gaps >= 2.

    Returns (count, configuration). The configurations are explicit: in the
    plane, a center plus a hexagonal ring of six at distance exactly 2; in
    dimension 3, a center plus the twelve nearest-neighbor directions of the
    face-centered cubic lattice scaled to length 2. Certification re-checks
    the norm and pairwise-distance constraints with a 1e-9 slack.
    """
    if d == 2:
        ring = [(2.0 * math.cos(k * math.pi / 3.0), 2.0 * math.sin(k * math.pi / 3.0)) for k in range(6)]
        pts = np.asarray([(0.0, 0.0)] + ring)
    elif d == 3:
        base = []
        s = math.sqrt(2.0)
        for i, j in itertools.permutations(range(3), 2):
            for si, sj in itertools.product((1.0, -1.0), repeat=2):
                v = [0.0, 0.0, 0.0]
                v[i], v[j] = si * s, sj * s
                if i < j:
                    base.append(tuple(v))
        pts = np.asarray([(0.0, 0.0, 0.0)] + sorted(set(base)))
    else:
        raise ValueError("packing bound implemented for dimensions 2 and 3")
    norms = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    if np.any(norms > 2.0 + 1e-9):
        raise AssertionError("packing certificate: point outside the 2-ball")
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if d2.min() < (2.0 - 1e-9) ** 2:
        raise AssertionError("packing certificate: pair closer than 2")
    return len(pts), pts
