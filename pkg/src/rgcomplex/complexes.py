"""Radius-r complexes on point configurations, as explicit simplex lists.

A simplex is a strictly increasing tuple of vertex indices into the point
array of the complex it belongs to. A set of vertices spans a simplex exactly
when its smallest enclosing ball has radius <= r; the complex keeps all
simplices up to a dimension cap. Since that test depends only on the vertices
of the simplex, the complex of a subset of points is the induced subcomplex
on those vertices, which keeps vertex universes aligned across restriction,
union, and intersection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    build_neighbor_graph,
    min_enclosing_ball,
    tetra_meb_radius_sq,
    triangle_circumradius_sq,
)

Simplex = tuple[int, ...]


@dataclass
class SimplexCounts:
    """Simplex counts by dimension: S[j] is the number of j-simplices."""

    S: list[int]

    def __getitem__(self, j: int) -> int:
        return self.S[j] if 0 <= j < len(self.S) else 0

    def __len__(self) -> int:
        return len(self.S)

    def euler(self) -> int:
        return sum((-1) ** j * s for j, s in enumerate(self.S))


@dataclass
class SimplicialComplex:
    """Simplices grouped by dimension, lexicographically sorted within each.

    simplices[j] lists the j-simplices. Vertex indices refer to rows of
    `points` when it is present; complexes sharing one `points` array (or
    both lacking one) share a vertex universe.
    """

    simplices: list[list[Simplex]]
    k_cap: int
    points: np.ndarray | None = None
    r: float | None = None
    provenance: str = ""
    _index: list[dict] = field(default_factory=list, repr=False)

    def counts(self) -> SimplexCounts:
        return SimplexCounts(S=[len(level) for level in self.simplices])

    def top_dim(self) -> int:
        for j in range(len(self.simplices) - 1, -1, -1):
            if self.simplices[j]:
                return j
        return -1

    def index(self, j: int) -> dict:
        """Simplex tuple -> position map for dimension j, built lazily."""
        while len(self._index) <= j:
            lvl = len(self._index)
            self._index.append({s: i for i, s in enumerate(self.simplices[lvl])})
        return self._index[j]

    def has_simplex(self, simplex: Simplex) -> bool:
        j = len(simplex) - 1
        if j >= len(self.simplices):
            return False
        return tuple(simplex) in self.index(j)

    def verify_closure(self) -> None:
        """Assert every face of every simplex is present."""
        for j in range(1, len(self.simplices)):
            lower = self.index(j - 1)
            for s in self.simplices[j]:
                for drop in range(len(s)):
                    face = s[:drop] + s[drop + 1 :]
                    if face not in lower:
                        raise AssertionError(f"missing face {face} of {s}")

    def save_text(self, path) -> None:
        """One simplex per line, vertices space-separated, dimension order."""
        with open(path, "w", encoding="utf-8") as fh:
            for level in self.simplices:
                for s in level:
                    fh.write(" ".join(map(str, s)) + "\n")

    @staticmethod
    def load_text(path, k_cap: int | None = None) -> "SimplicialComplex":
        levels: dict[int, list[Simplex]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                s = tuple(int(tok) for tok in line.split())
                levels.setdefault(len(s) - 1, []).append(s)
        cap = k_cap if k_cap is not None else (max(levels) if levels else 0)
        simplices = [sorted(levels.get(j, [])) for j in range(cap + 1)]
        return SimplicialComplex(simplices=simplices, k_cap=cap)


def _pairwise_sq(points: np.ndarray, simplices: np.ndarray, a: int, b: int) -> np.ndarray:
    diff = points[simplices[:, a]] - points[simplices[:, b]]
    return np.einsum("ij,ij->i", diff, diff)


def build_cech(sample, r: float, k_cap: int | None = None) -> SimplicialComplex:
    """Radius-r complex on a sample, up to dimension k_cap (default: ambient d).

    Expansion never re-tests pairwise distances beyond the range graph: a
    candidate (j+1)-simplex is formed from a j-simplex plus a common neighbor
    above its maximum vertex, kept only if all of its facets are present, and
    then only if its smallest enclosing ball fits. Triangles use the closed
    form radius in a vectorized batch; higher dimensions test per simplex.
    """
    if hasattr(sample, "points"):
        pts = np.asarray(sample.points, dtype=float)
        dim = sample.window.dim
        prov = f"seed={sample.seed} kind={sample.process_tag.get('kind', '?')}"
    else:
        pts = np.atleast_2d(np.asarray(sample, dtype=float))
        dim = pts.shape[1]
        prov = "points"
    if r < 0:
        raise ValueError("radius must be >= 0")
    if k_cap is None:
        k_cap = dim
    if k_cap < 0:
        raise ValueError("dimension cap must be >= 0")
    n = len(pts)
    levels: list[list[Simplex]] = [[(i,) for i in range(n)]]
    if k_cap == 0 or n == 0:
        return SimplicialComplex(
            simplices=levels + [[] for _ in range(k_cap)], k_cap=k_cap, points=pts, r=r, provenance=prov
        )
    graph = build_neighbor_graph(pts, cutoff=2.0 * r)
    edges = [tuple(e) for e in graph.edges]
    levels.append(edges)
    nbrs_above: list[list[int]] = [[] for _ in range(n)]
    adj: list[set] = [set() for _ in range(n)]
    for i, j in edges:
        nbrs_above[i].append(j)
        adj[i].add(j)
        adj[j].add(i)
    for j_dim in range(1, k_cap):
        prev = levels[j_dim]
        if not prev:
            levels.append([])
            continue
        prev_set = set(prev)
        candidates: list[Simplex] = []
        for s in prev:
            common = set(nbrs_above[s[-1]])
            for v in s[:-1]:
                common &= adj[v]
                if not common:
                    break
            for u in sorted(common):
                t = s + (u,)
                ok = True
                for drop in range(len(s) - 1):
                    if t[:drop] + t[drop + 1 :] not in prev_set:
                        ok = False
                        break
                if ok:
                    candidates.append(t)
        if not candidates:
            levels.append([])
            continue
        arr = np.asarray(candidates, dtype=np.int64)
        if j_dim == 1:
            rad2 = triangle_circumradius_sq(
                _pairwise_sq(pts, arr, 1, 2), _pairwise_sq(pts, arr, 0, 2), _pairwise_sq(pts, arr, 0, 1)
            )
            keep = rad2 <= r * r
            levels.append([candidates[i] for i in np.nonzero(keep)[0]])
        elif j_dim == 2:
            rad2 = tetra_meb_radius_sq(pts[arr])
            keep = rad2 <= r * r
            levels.append([candidates[i] for i in np.nonzero(keep)[0]])
        else:
            kept = [t for t in candidates if min_enclosing_ball(pts[list(t)]).radius <= r]
            levels.append(kept)
    return SimplicialComplex(simplices=levels, k_cap=k_cap, points=pts, r=r, provenance=prov)


def count_simplices(c: SimplicialComplex) -> SimplexCounts:
    return c.counts()


def count_simplices_in_region(c: SimplicialComplex, sample, region) -> SimplexCounts:
    """Counts of simplices with at least one vertex whose point lies in region."""
    pts = sample.points if hasattr(sample, "points") else np.asarray(sample, dtype=float)
    if len(pts) == 0:
        return SimplexCounts(S=[0] * len(c.simplices))
    mask = region.contains(pts)
    return count_simplices_touching(c, mask)


def count_simplices_touching(c: SimplicialComplex, vertex_mask: np.ndarray) -> SimplexCounts:
    """Counts of simplices with at least one vertex flagged in the mask."""
    mask = np.asarray(vertex_mask, dtype=bool)
    out = []
    for level in c.simplices:
        if not level:
            out.append(0)
            continue
        arr = np.asarray(level, dtype=np.int64)
        out.append(int(mask[arr].any(axis=1).sum()))
    return SimplexCounts(S=out)


def restrict_to_vertices(c: SimplicialComplex, keep) -> SimplicialComplex:
    """Induced subcomplex on a vertex subset, keeping the vertex universe."""
    keep_set = set(int(v) for v in keep)
    levels = []
    for j, level in enumerate(c.simplices):
        if j == 0:
            levels.append([s for s in level if s[0] in keep_set])
        else:
            levels.append([s for s in level if all(v in keep_set for v in s)])
    return SimplicialComplex(simplices=levels, k_cap=c.k_cap, points=c.points, r=c.r, provenance=c.provenance)


def _check_compatible(a: SimplicialComplex, b: SimplicialComplex) -> None:
    if a.points is not None and b.points is not None:
        if a.points.shape != b.points.shape or not np.array_equal(a.points, b.points):
            raise ValueError("complexes do not share a vertex universe")


def complex_union(a: SimplicialComplex, b: SimplicialComplex) -> SimplicialComplex:
    _check_compatible(a, b)
    cap = max(a.k_cap, b.k_cap)
    levels = []
    for j in range(cap + 1):
        la = a.simplices[j] if j < len(a.simplices) else []
        lb = b.simplices[j] if j < len(b.simplices) else []
        levels.append(sorted(set(la) | set(lb)))
    pts = a.points if a.points is not None else b.points
    return SimplicialComplex(simplices=levels, k_cap=cap, points=pts, r=None, provenance="union")


def complex_intersection(a: SimplicialComplex, b: SimplicialComplex) -> SimplicialComplex:
    _check_compatible(a, b)
    cap = min(a.k_cap, b.k_cap)
    levels = []
    for j in range(cap + 1):
        la = a.simplices[j] if j < len(a.simplices) else []
        lb = b.simplices[j] if j < len(b.simplices) else []
        levels.append(sorted(set(la) & set(lb)))
    pts = a.points if a.points is not None else b.points
    return SimplicialComplex(simplices=levels, k_cap=cap, points=pts, r=None, provenance="intersection")
