"""Simplicial homology over small prime fields by column reduction.

Boundary matrices are stored column-sparse and reduced left to right; the
pivot of a column is its largest remaining row index, and a column that
reduces to zero is a cycle. Betti numbers come from rank-nullity:
beta_k = S_k - rank d_k - rank d_{k+1}. Over GF(2) columns are Python
integers used as bit vectors, which keeps the inner loop in machine-word
XORs; other primes use dict-of-row sparse columns.

For complexes with no simplices above dimension 2 there is a rank fast path
that first cancels free pairs (an edge contained in exactly one live
triangle, removed together with it). Each cancellation is an elementary
collapse, which preserves every Betti number and removes one edge and one
triangle, so it accounts for exactly one unit of rank d_2; the reduced
residual supplies the rest. The fast path is cross-checked against plain
reduction in the test suite.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .complexes import SimplexCounts, SimplicialComplex

log = logging.getLogger(__name__)

# When set (the test suite turns it on), every boundary build verifies that
# consecutive boundary maps compose to zero.
VERIFY_CHAIN = False


def _check_prime(p: int) -> int:
    p = int(p)
    if p < 2 or any(p % q == 0 for q in range(2, int(p**0.5) + 1)):
        raise ValueError("field order must be a prime")
    return p


@dataclass
class BoundaryMatrix:
    """Signed k-th boundary map, column-sparse, entries reduced mod p."""

    k: int
    p: int
    n_rows: int
    n_cols: int
    columns: list[list[tuple[int, int]]]  # per column: (row, coeff), rows ascending


def boundary_matrix(c: SimplicialComplex, k: int, p: int = 2) -> BoundaryMatrix:
    """Boundary map from k-chains to (k-1)-chains in lexicographic bases.

    The face obtained by dropping vertex position i carries sign (-1)^i.
    """
    p = _check_prime(p)
    if k < 1 or k >= len(c.simplices):
        n_rows = len(c.simplices[k - 1]) if 0 <= k - 1 < len(c.simplices) else 0
        return BoundaryMatrix(k=k, p=p, n_rows=n_rows, n_cols=0, columns=[])
    rows = c.index(k - 1)
    cols = []
    for s in c.simplices[k]:
        entries = []
        for drop in range(len(s)):
            face = s[:drop] + s[drop + 1 :]
            coeff = (1 if drop % 2 == 0 else p - 1) % p
            if coeff:
                entries.append((rows[face], coeff))
        entries.sort()
        cols.append(entries)
    mat = BoundaryMatrix(k=k, p=p, n_rows=len(c.simplices[k - 1]), n_cols=len(c.simplices[k]), columns=cols)
    if VERIFY_CHAIN and k >= 2:
        _verify_composition(c, mat)
    return mat


def _verify_composition(c: SimplicialComplex, upper: BoundaryMatrix) -> None:
    """Assert d_{k-1} o d_k = 0 by symbolic composition."""
    p = upper.p
    rows = c.index(upper.k - 2)
    mid = c.simplices[upper.k - 1]
    for col in upper.columns:
        acc: dict[int, int] = {}
        for row, coeff in col:
            s = mid[row]
            for drop in range(len(s)):
                face = s[:drop] + s[drop + 1 :]
                sign = 1 if drop % 2 == 0 else p - 1
                acc[rows[face]] = (acc.get(rows[face], 0) + coeff * sign) % p
        if any(v % p for v in acc.values()):
            raise AssertionError("boundary maps do not compose to zero")


def _rank_gf2(cols: list[int]) -> int:
    """Rank of a set of bit-vector columns by elimination on max set bit."""
    pivots: dict[int, int] = {}
    rank = 0
    for col in cols:
        while col:
            low = col.bit_length() - 1
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                rank += 1
                break
            col ^= other
    return rank


def _columns_to_bits(mat: BoundaryMatrix) -> list[int]:
    out = []
    for col in mat.columns:
        word = 0
        for row, coeff in col:
            if coeff % 2:
                word |= 1 << row
        out.append(word)
    return out


def _rank_modp(columns: list[dict[int, int]], p: int) -> int:
    pivots: dict[int, dict[int, int]] = {}
    rank = 0
    for col in columns:
        col = {r: v % p for r, v in col.items() if v % p}
        while col:
            low = max(col)
            other = pivots.get(low)
            if other is None:
                inv = pow(col[low], p - 2, p)
                col = {r: (v * inv) % p for r, v in col.items()}
                pivots[low] = col
                rank += 1
                break
            factor = col[low]
            for r, v in other.items():
                nv = (col.get(r, 0) - factor * v) % p
                if nv:
                    col[r] = nv
                else:
                    col.pop(r, None)
        # empty column: a cycle, contributes nothing to rank
    return rank


def _boundary_rank(c: SimplicialComplex, k: int, p: int) -> int:
    mat = boundary_matrix(c, k, p)
    if mat.n_cols == 0 or mat.n_rows == 0:
        return 0
    if p == 2:
        return _rank_gf2(_columns_to_bits(mat))
    return _rank_modp([dict(col) for col in mat.columns], p)


def _collapse_rank2(n_edges: int, edge_index: dict, triangles: list) -> int:
    """rank d_2 of a 2-dimensional complex via free-pair cancellation.

    Every removed (edge, triangle) pair is an elementary collapse and
    contributes exactly one rank unit; the surviving triangles are reduced
    over GF(2) on the surviving edges.
    """
    tri_edges = []
    incident: list[list[int]] = [[] for _ in range(n_edges)]
    for ti, t in enumerate(triangles):
        a, b, cc = t
        es = (edge_index[(a, b)], edge_index[(a, cc)], edge_index[(b, cc)])
        tri_edges.append(es)
        for e in es:
            incident[e].append(ti)
    tri_live = [True] * len(triangles)
    edge_live = [True] * n_edges
    count = [len(x) for x in incident]
    queue = deque(e for e in range(n_edges) if count[e] == 1)
    pairs = 0
    while queue:
        e = queue.popleft()
        if not edge_live[e] or count[e] != 1:
            continue
        ti = next(t for t in incident[e] if tri_live[t])
        edge_live[e] = False
        tri_live[ti] = False
        pairs += 1
        for e2 in tri_edges[ti]:
            if e2 != e and edge_live[e2]:
                count[e2] -= 1
                if count[e2] == 1:
                    queue.append(e2)
    cols = []
    for ti, live in enumerate(tri_live):
        if live:
            word = 0
            for e in tri_edges[ti]:
                word |= 1 << e
            cols.append(word)
    return pairs + _rank_gf2(cols)


def _component_count(vertex_ids: list, edges: list) -> int:
    """Connected components of the 1-skeleton by union-find."""
    parent = {v[0]: v[0] for v in vertex_ids}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    comps = len(parent)
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            comps -= 1
    return comps


@dataclass
class BettiVector:
    """Betti numbers with the ranks and counts they came from.

    beta[j] for j < k_cap is the true j-th Betti number of the underlying
    space. beta_top is the k_cap-th Betti number of the truncated complex
    (it can overcount the space, since (k_cap+1)-simplices were never built);
    it is carried so that the Euler identity chi = sum (-1)^j beta_j holds
    exactly for the complex as stored.
    """

    beta: tuple[int, ...]
    beta_top: int
    ranks: tuple[int, ...]  # rank of d_1 .. d_{k_cap}
    counts: SimplexCounts
    chi: int
    p: int

    def __getitem__(self, j: int) -> int:
        if 0 <= j < len(self.beta):
            return self.beta[j]
        if j == len(self.beta):
            return self.beta_top
        return 0

    def all_betti(self) -> tuple[int, ...]:
        return self.beta + (self.beta_top,)


def euler_characteristic(c: SimplicialComplex) -> int:
    return c.counts().euler()


def betti_numbers(c: SimplicialComplex, p: int = 2) -> BettiVector:
    """Betti numbers of c over GF(p) by column reduction of each boundary map."""
    p = _check_prime(p)
    counts = c.counts()
    kmax = len(c.simplices) - 1
    ranks = [_boundary_rank(c, k, p) for k in range(1, kmax + 1)]
    full = []
    for j in range(kmax + 1):
        r_j = ranks[j - 1] if j >= 1 else 0
        r_j1 = ranks[j] if j < kmax else 0
        full.append(counts[j] - r_j - r_j1)
    chi = counts.euler()
    alt = sum((-1) ** j * b for j, b in enumerate(full))
    if alt != chi:
        raise AssertionError("Euler characteristic mismatch against Betti numbers")
    return BettiVector(
        beta=tuple(full[:kmax]), beta_top=full[kmax], ranks=tuple(ranks), counts=counts, chi=chi, p=p
    )


def betti_numbers_fast2d(c: SimplicialComplex) -> BettiVector:
    """GF(2) Betti numbers of a complex with no simplices above dimension 2.

    Uses union-find for rank d_1 and free-pair cancellation for rank d_2.
    Output is identical to betti_numbers(c, 2) restricted to such complexes.
    """
    counts = c.counts()
    kmax = len(c.simplices) - 1
    if kmax > 2 and any(counts[j] for j in range(3, kmax + 1)):
        raise ValueError("fast path needs a complex with no simplices above dimension 2")
    verts = c.simplices[0]
    edges = c.simplices[1] if kmax >= 1 else []
    tris = c.simplices[2] if kmax >= 2 else []
    beta0 = _component_count(verts, edges)
    rank1 = counts[0] - beta0
    rank2 = _collapse_rank2(len(edges), c.index(1), tris) if tris else 0
    ranks = [rank1, rank2][: max(kmax, 0)]
    full = [beta0]
    if kmax >= 1:
        full.append(counts[1] - rank1 - rank2)
    if kmax >= 2:
        full.append(counts[2] - rank2)
    for j in range(3, kmax + 1):
        full.append(0)
        ranks.append(0)
    chi = counts.euler()
    alt = sum((-1) ** j * b for j, b in enumerate(full))
    if alt != chi:
        raise AssertionError("Euler characteristic mismatch against Betti numbers")
    return BettiVector(
        beta=tuple(full[:kmax]) if kmax else tuple(),
        beta_top=full[kmax],
        ranks=tuple(ranks),
        counts=counts,
        chi=chi,
        p=2,
    )


def _reduce_with_witness(columns: list[dict[int, int]], p: int):
    """Column reduction tracking the combination that produced each column.

    Returns (pivot map low -> reduced column, list of (witness, None) for
    zero columns). Witnesses are dicts over original column indices.
    """
    pivots: dict[int, tuple[dict[int, int], dict[int, int]]] = {}
    cycles: list[dict[int, int]] = []
    for ci, col in enumerate(columns):
        col = {r: v % p for r, v in col.items() if v % p}
        wit = {ci: 1}
        while col:
            low = max(col)
            hit = pivots.get(low)
            if hit is None:
                break
            ocol, owit = hit
            factor = (col[low] * pow(ocol[low], p - 2, p)) % p
            for r, v in ocol.items():
                nv = (col.get(r, 0) - factor * v) % p
                if nv:
                    col[r] = nv
                else:
                    col.pop(r, None)
            for r, v in owit.items():
                nv = (wit.get(r, 0) - factor * v) % p
                if nv:
                    wit[r] = nv
                else:
                    wit.pop(r, None)
        if col:
            pivots[max(col)] = (col, wit)
        else:
            cycles.append(wit)
    return pivots, cycles


@dataclass
class HomologyBasis:
    """Cycle representatives of H_k, as chains keyed by simplex tuples."""

    k: int
    p: int
    reps: list[dict[tuple, int]]


def _cycle_space(c: SimplicialComplex, k: int, p: int) -> list[dict[int, int]]:
    """Basis of ker d_k, as sparse chains indexed by k-simplex position.

    A column of d_k that reduces to zero certifies that the recorded
    combination of k-simplices has zero boundary; that combination (the
    reduction witness) is the cycle. Witnesses always keep a unit entry at
    their own column index, so they are nonzero and independent.
    """
    if k == 0:
        return [{i: 1} for i in range(len(c.simplices[0]))]
    mat = boundary_matrix(c, k, p)
    cols = [dict(col) for col in mat.columns]
    _, witnesses = _reduce_with_witness(cols, p)
    return witnesses


def _boundary_pivots(c: SimplicialComplex, k: int, p: int) -> dict[int, dict[int, int]]:
    """Echelon basis of im d_{k+1} (the k-boundaries), keyed by pivot row."""
    if k + 1 >= len(c.simplices):
        return {}
    mat = boundary_matrix(c, k + 1, p)
    pivots, _ = _reduce_with_witness([dict(col) for col in mat.columns], p)
    return {low: col for low, (col, _) in pivots.items()}


def _eliminate(chain: dict[int, int], pivots: dict[int, dict[int, int]], p: int) -> dict[int, int]:
    """Reduce a chain against echelon columns keyed by their pivot row."""
    chain = dict(chain)
    while chain:
        low = max(chain)
        piv = pivots.get(low)
        if piv is None:
            break
        factor = (chain[low] * pow(piv[low], p - 2, p)) % p
        for r, v in piv.items():
            nv = (chain.get(r, 0) - factor * v) % p
            if nv:
                chain[r] = nv
            else:
                chain.pop(r, None)
    return chain


def _homology_pivot_reps(c: SimplicialComplex, k: int, p: int):
    """(boundary echelon, representative echelon) for H_k, pivot-disjoint.

    Candidate cycles are reduced against one merged pivot map: reducing
    against an accepted representative can reintroduce rows that carry
    boundary pivots, so the two echelons must be eliminated together, not in
    sequence. Survivors get fresh pivot rows, so exactly beta_k are accepted.
    """
    bnd = _boundary_pivots(c, k, p)
    pivots = dict(bnd)
    reps: dict[int, dict[int, int]] = {}
    for cyc in _cycle_space(c, k, p):
        resid = _eliminate(cyc, pivots, p)
        if resid:
            low = max(resid)
            reps[low] = resid
            pivots[low] = resid
    return bnd, reps


def homology_basis(c: SimplicialComplex, k: int, p: int = 2) -> HomologyBasis:
    """Representative cycles for H_k(c; GF(p)), one per Betti class."""
    p = _check_prime(p)
    if k < 0 or k >= len(c.simplices):
        return HomologyBasis(k=k, p=p, reps=[])
    _, reps = _homology_pivot_reps(c, k, p)
    simpl = c.simplices[k]
    chains = [{simpl[r]: v for r, v in col.items()} for _, col in sorted(reps.items())]
    return HomologyBasis(k=k, p=p, reps=chains)


def _assert_subcomplex(sub: SimplicialComplex, sup: SimplicialComplex) -> None:
    for j, level in enumerate(sub.simplices):
        if not level:
            continue
        if j >= len(sup.simplices):
            raise ValueError("inclusion violated: target lacks dimension {}".format(j))
        idx = sup.index(j)
        for s in level:
            if s not in idx:
                raise ValueError(f"inclusion violated: {s} missing from target")


def induced_map_kernel_rank(sub: SimplicialComplex, targets, k: int, p: int = 2) -> int:
    """Dimension of the common kernel of H_k(sub) -> H_k(target_i).

    Every representative cycle of the subcomplex is carried into each target
    (same vertex universe), written in that target's homology coordinates by
    elimination against its boundary echelon and representative echelon, and
    the kernel rank is the nullity of the stacked coordinate matrix.
    Dimension k < 0 returns 0 by the reduced-homology convention used in the
    union decomposition identity.
    """
    p = _check_prime(p)
    if k < 0:
        return 0
    if isinstance(targets, SimplicialComplex):
        targets = [targets]
    for t in targets:
        _assert_subcomplex(sub, t)
    if k >= len(sub.simplices):
        return 0
    _, sub_reps = _homology_pivot_reps(sub, k, p)
    beta_sub = len(sub_reps)
    if beta_sub == 0:
        return 0
    sub_simpl = sub.simplices[k]
    rep_chains = [col for _, col in sorted(sub_reps.items())]

    stacked: list[dict[int, int]] = [{} for _ in rep_chains]
    row_base = 0
    for t in targets:
        t_idx = t.index(k)
        bnd_t, t_reps = _homology_pivot_reps(t, k, p)
        rep_order = {low: i for i, low in enumerate(sorted(t_reps))}
        for rj, chain in enumerate(rep_chains):
            mapped = {t_idx[sub_simpl[r]]: v for r, v in chain.items()}
            coords: dict[int, int] = {}
            work = dict(mapped)
            while work:
                low = max(work)
                if low in bnd_t:
                    piv = bnd_t[low]
                    is_rep = False
                elif low in t_reps:
                    piv = t_reps[low]
                    is_rep = True
                else:
                    raise AssertionError("cycle fell outside the target cycle space")
                factor = (work[low] * pow(piv[low], p - 2, p)) % p
                if is_rep:
                    coords[rep_order[low]] = factor
                for r, v in piv.items():
                    nv = (work.get(r, 0) - factor * v) % p
                    if nv:
                        work[r] = nv
                    else:
                        work.pop(r, None)
            for ri, vv in coords.items():
                if vv:
                    stacked[rj][row_base + ri] = vv
        row_base += len(t_reps)
    rank = _rank_modp(stacked, p)
    return beta_sub - rank


@dataclass
class BoundCheckResult:
    """Outcome of the simplex-count bound on a Betti difference."""

    ok: bool
    difference: int
    bound: int

    @property
    def slack(self) -> int:
        return self.bound - self.difference

    def __bool__(self) -> bool:
        return self.ok


def betti_difference_bound_check(inner: SimplicialComplex, outer: SimplicialComplex, k: int, p: int = 2) -> BoundCheckResult:
    """Check |beta_k(outer) - beta_k(inner)| <= #added k- plus (k+1)-simplices.

    Requires inner to be a subcomplex of outer. Returns the verdict together
    with the difference and the bound, so callers can inspect the slack.
    """
    _assert_subcomplex(inner, outer)
    if k < 0:
        raise ValueError("dimension must be >= 0")
    diff_count = 0
    for j in (k, k + 1):
        outer_level = outer.simplices[j] if j < len(outer.simplices) else []
        inner_level = set(inner.simplices[j]) if j < len(inner.simplices) else set()
        diff_count += sum(1 for s in outer_level if s not in inner_level)
    b_in = betti_numbers(inner, p)[k]
    b_out = betti_numbers(outer, p)[k]
    difference = abs(b_out - b_in)
    return BoundCheckResult(ok=difference <= diff_count, difference=difference, bound=diff_count)
