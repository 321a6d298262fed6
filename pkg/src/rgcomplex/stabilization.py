"""Add-one cost of a point at the origin and its stabilization diagnostics.

The add-one cost of a point x in a configuration is the change in a Betti
number when x joins the complex. Everything here exploits locality: a simplex
containing x has all vertices within 2r of x, so the cost is driven by the
geometry near x. The weak trace watches the cost of the origin as the
observation radius grows and decomposes it exactly through a union splitting;
the strong probe certifies a radius S beyond which no configuration outside
B_O(S) can change the cost at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .complexes import SimplicialComplex, build_cech, restrict_to_vertices
from .geometry import build_neighbor_graph
from .homology import (
    _rank_gf2,
    _rank_modp,
    betti_numbers,
    induced_map_kernel_rank,
)
from .point_process import Window, derived_rng, sample_homogeneous_poisson

# When set (the test suite turns it on), incremental add-one ranks are
# recomputed from scratch and compared.
VERIFY_INCREMENTAL = False

_JITTER_SEED = 90210


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass
class AddOneCostRecord:
    """Betti change caused by adding one point, with its locality bound."""

    k: int
    r: float
    cost: int
    beta_without: int
    beta_with: int
    local_count: int
    bound: int | None  # 2 * local_count^(k+1), defined for k >= 1
    bound_ok: bool | None


def _split_rank(c_with: SimplicialComplex, j: int, new_vertex: int, p: int) -> tuple[int, int]:
    """(rank d_j without the new vertex, rank d_j of the whole complex).

    Rows and columns are ordered with simplices avoiding the new vertex
    first. Since reduction pivots are maximal row indices, the reduced
    columns of the old complex are untouched by appending the star rows and
    columns, so the old rank is read off the same elimination run.
    """
    if j < 1 or j >= len(c_with.simplices) or not c_with.simplices[j]:
        return 0, 0
    rows_old: dict = {}
    rows_star: dict = {}
    for s in c_with.simplices[j - 1]:
        if s[-1] == new_vertex:
            rows_star[s] = len(rows_star)
        else:
            rows_old[s] = len(rows_old)
    offset = len(rows_old)

    def row_id(face) -> int:
        if face[-1] == new_vertex:
            return offset + rows_star[face]
        return rows_old[face]

    cols_old = []
    cols_star = []
    for s in c_with.simplices[j]:
        entries = []
        for drop in range(len(s)):
            face = s[:drop] + s[drop + 1 :]
            coeff = 1 if drop % 2 == 0 else p - 1
            entries.append((row_id(face), coeff))
        (cols_star if s[-1] == new_vertex else cols_old).append(entries)
    if p == 2:
        bits_old = [sum(1 << rr for rr, _ in col) for col in cols_old]
        bits_star = [sum(1 << rr for rr, _ in col) for col in cols_star]
        rank_old = 0
        pivots: dict[int, int] = {}
        for word in bits_old:
            while word:
                low = word.bit_length() - 1
                other = pivots.get(low)
                if other is None:
                    pivots[low] = word
                    rank_old += 1
                    break
                word ^= other
        rank_all = rank_old
        for word in bits_star:
            while word:
                low = word.bit_length() - 1
                other = pivots.get(low)
                if other is None:
                    pivots[low] = word
                    rank_all += 1
                    break
                word ^= other
        return rank_old, rank_all
    rank_old = _rank_modp([dict(col) for col in cols_old], p)
    rank_all = _rank_modp([dict(col) for col in cols_old] + [dict(col) for col in cols_star], p)
    return rank_old, rank_all


def add_one_cost(points, x, r: float, k: int, p: int = 2) -> AddOneCostRecord:
    """Change in beta_k when point x is added to the configuration.

    Builds the complex on points + x once; simplices avoiding x form the
    complex without x, and the star columns extend the same elimination, so
    both Betti numbers come from a single pass per dimension.
    """
    pts = points.points if hasattr(points, "points") else np.atleast_2d(np.asarray(points, dtype=float))
    x = np.asarray(x, dtype=float).reshape(-1)
    if k < 0:
        raise ValueError("dimension must be >= 0")
    if len(pts) and np.any(np.all(pts == x, axis=1)):
        raise ValueError("the added point coincides with an existing point")
    allpts = np.vstack([pts, x[None, :]]) if len(pts) else x[None, :]
    new_vertex = len(pts)
    c_with = build_cech(allpts, r, k_cap=k + 1)
    counts_with = c_with.counts()
    counts_without = [
        sum(1 for s in level if s[-1] != new_vertex) for level in c_with.simplices
    ]
    ranks_old = []
    ranks_all = []
    for j in range(1, k + 2):
        ro, ra = _split_rank(c_with, j, new_vertex, p)
        ranks_old.append(ro)
        ranks_all.append(ra)
    r_k_old = ranks_old[k - 1] if k >= 1 else 0
    r_k_all = ranks_all[k - 1] if k >= 1 else 0
    beta_without = counts_without[k] - r_k_old - ranks_old[k]
    beta_with = counts_with[k] - r_k_all - ranks_all[k]
    if VERIFY_INCREMENTAL:
        ref_with = betti_numbers(c_with, p)[k]
        sub = restrict_to_vertices(c_with, range(new_vertex))
        ref_without = betti_numbers(sub, p)[k]
        if (ref_without, ref_with) != (beta_without, beta_with):
            raise AssertionError("incremental add-one rank disagrees with recomputation")
    diff = allpts[:-1] - x if len(pts) else np.zeros((0, len(x)))
    local_count = int(np.sum(np.einsum("ij,ij->i", diff, diff) <= (2.0 * r) ** 2))
    cost = beta_with - beta_without
    if k >= 1:
        bound = 2 * local_count ** (k + 1)
        bound_ok = abs(cost) <= bound
    else:
        bound, bound_ok = None, None
    return AddOneCostRecord(
        k=k, r=r, cost=cost, beta_without=beta_without, beta_with=beta_with,
        local_count=local_count, bound=bound, bound_ok=bound_ok,
    )


@dataclass
class WeakStabilizationTrace:
    """Add-one cost of the origin against growing observation radii.

    For each radius rho, the cost of the origin in the complex of the points
    within rho decomposes exactly as
    cost = beta_k(K2) + kernel_k + kernel_km1 - beta_k(L), where K2 is the
    complex of the core points within 2r plus the origin, L the same without
    the origin, and the kernel terms count classes of L dying both in the
    rho-complex and in K2. Kernel dimensions never decrease with rho.
    """

    seed: int
    lam: float
    r: float
    k: int
    rho: tuple[float, ...]
    costs: tuple[int, ...]
    kernel_k: tuple[int, ...]
    kernel_km1: tuple[int, ...]
    identity_ok: bool
    monotone_ok: bool
    stabilized: bool
    r_hat: float | None
    terminal_value: int

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("seed,rho,cost,kernel_k,kernel_km1\n")
            for i, rho in enumerate(self.rho):
                fh.write(f"{self.seed},{rho!r},{self.costs[i]},{self.kernel_k[i]},{self.kernel_km1[i]}\n")


def weak_stabilization_trace(seed: int, lam: float, r: float, k: int, rho_list, p: int = 2, d: int = 2) -> WeakStabilizationTrace:
    """Cost of the origin under nested observation balls B_O(rho).

    rho_list must be ascending with rho_list[0] >= 2r, so the core complex is
    a subcomplex of every rho-complex. One complex is built on all points of
    the largest ball plus the origin; every stage is an induced subcomplex of
    it, which keeps a common vertex universe for the inclusion maps.
    """
    rho = [float(x) for x in rho_list]
    if len(rho) < 2 or any(b <= a for a, b in zip(rho, rho[1:])):
        raise ValueError("rho_list must be strictly ascending with at least two entries")
    if rho[0] < 2.0 * r:
        raise ValueError("rho_list must start at or above 2r")
    sample = sample_homogeneous_poisson(lam, Window.ball(rho[-1], d), seed)
    pts = sample.points
    norms = np.sqrt(np.einsum("ij,ij->i", pts, pts)) if len(pts) else np.zeros(0)
    origin_index = len(pts)
    allpts = np.vstack([pts, np.zeros((1, d))])
    full = build_cech(allpts, r, k_cap=k + 1)
    core = [int(i) for i in np.nonzero(norms <= 2.0 * r)[0]]
    ell = restrict_to_vertices(full, core)
    k2 = restrict_to_vertices(full, core + [origin_index])
    beta_l = betti_numbers(ell, p)[k]
    beta_k2 = betti_numbers(k2, p)[k]
    costs = []
    kern_k = []
    kern_km1 = []
    identity_ok = True
    for bound in rho:
        inside = [int(i) for i in np.nonzero(norms <= bound)[0]]
        k_rho = restrict_to_vertices(full, inside)
        k_rho_o = restrict_to_vertices(full, inside + [origin_index])
        cost = betti_numbers(k_rho_o, p)[k] - betti_numbers(k_rho, p)[k]
        nk = induced_map_kernel_rank(ell, [k_rho, k2], k, p)
        nkm1 = induced_map_kernel_rank(ell, [k_rho, k2], k - 1, p)
        if cost != beta_k2 + nk + nkm1 - beta_l:
            identity_ok = False
        costs.append(int(cost))
        kern_k.append(int(nk))
        kern_km1.append(int(nkm1))
    monotone_ok = all(a <= b for a, b in zip(kern_k, kern_k[1:])) and all(
        a <= b for a, b in zip(kern_km1, kern_km1[1:])
    )
    stabilized = len(costs) >= 2 and costs[-1] == costs[-2]
    r_hat = None
    if stabilized:
        first = len(costs) - 1
        while first > 0 and costs[first - 1] == costs[-1]:
            first -= 1
        r_hat = rho[first]
    return WeakStabilizationTrace(
        seed=seed, lam=lam, r=r, k=k, rho=tuple(rho), costs=tuple(costs),
        kernel_k=tuple(kern_k), kernel_km1=tuple(kern_km1), identity_ok=identity_ok,
        monotone_ok=monotone_ok, stabilized=stabilized, r_hat=r_hat,
        terminal_value=costs[-1],
    )


@dataclass
class StrongStabilizationRecord:
    """Certified screening radius for the add-one cost at the origin.

    Points at distance greater than S from the origin cannot share a simplex
    with anything the origin touches: the origin's star lives in the clusters
    of the 2r-connectivity graph that meet B_O(2r), and S exceeds their reach
    by 2r twice over.
    """

    seed: int
    lam: float
    r: float
    k: int
    radius: float
    window_radius: float
    n_points: int
    n_cluster_points: int
    cluster_count: int
    prediction: int
    cost_baseline: int
    adversarial_costs: tuple[int, ...]
    agreed: bool


def strong_stabilization_probe(
    seed: int, lam: float, r: float, k: int, adversarial_sets=(), d: int = 2,
    p: int = 2, subcritical: bool = True,
) -> StrongStabilizationRecord:
    """Screening radius S and the origin's cost under far-field interference.

    The probe is meaningful in the subcritical connectivity regime, where the
    clusters of the 2r graph near the origin are finite; the caller asserts
    that via the flag (at intensity 1 in the plane, radii up to 0.5 are safe
    defaults). Adversarial point sets must lie strictly outside B_O(S); the
    recorded costs must then all equal the cluster prediction.
    """
    if not subcritical:
        raise ValueError("the probe requires the subcritical connectivity regime")
    window_radius = 25.0 * r
    for attempt in range(4):
        sample = sample_homogeneous_poisson(lam, Window.ball(window_radius, d), seed + attempt)
        pts = sample.points
        norms = np.sqrt(np.einsum("ij,ij->i", pts, pts)) if len(pts) else np.zeros(0)
        graph = build_neighbor_graph(pts, cutoff=2.0 * r)
        parent = list(range(len(pts)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in graph.edges:
            ri, rj = find(int(i)), find(int(j))
            if ri != rj:
                parent[ri] = rj
        seed_roots = {find(int(i)) for i in np.nonzero(norms <= 2.0 * r)[0]}
        in_cluster = np.asarray([find(i) in seed_roots for i in range(len(pts))], dtype=bool)
        cluster_count = len(seed_roots)
        if in_cluster.any():
            reach = float(norms[in_cluster].max())
        else:
            reach = 2.0 * r
        radius = reach + 4.0 * r + 1e-9
        if radius + 2.0 * r < window_radius:
            break
        window_radius *= 1.6
    else:
        raise RuntimeError("clusters kept reaching the window edge; not subcritical?")
    cluster_pts = pts[in_cluster]
    origin = np.zeros(d)
    prediction = add_one_cost(cluster_pts, origin, r, k, p).cost
    base_pts = pts[norms <= radius]
    cost_baseline = add_one_cost(base_pts, origin, r, k, p).cost
    adv_costs = []
    for ad in adversarial_sets:
        ad = np.atleast_2d(np.asarray(ad, dtype=float))
        if ad.shape[1] != d:
            raise ValueError("adversarial points have the wrong dimension")
        ad_norms = np.sqrt(np.einsum("ij,ij->i", ad, ad))
        if np.any(ad_norms <= radius):
            raise ValueError("adversarial points must lie strictly outside the screening radius")
        pts_case = np.vstack([base_pts, ad])
        adv_costs.append(add_one_cost(pts_case, origin, r, k, p).cost)
    agreed = cost_baseline == prediction and all(c == prediction for c in adv_costs)
    return StrongStabilizationRecord(
        seed=seed, lam=lam, r=r, k=k, radius=radius, window_radius=window_radius,
        n_points=len(pts), n_cluster_points=int(in_cluster.sum()), cluster_count=cluster_count,
        prediction=prediction, cost_baseline=cost_baseline,
        adversarial_costs=tuple(adv_costs), agreed=agreed,
    )


@dataclass
class SphereConfiguration:
    """Finite point set whose radius-r complex is a homology k-sphere.

    The points sit on the sphere of radius 1.5 r inside B_O(2r), keep every
    point farther than 1.25 r from the origin (so the union of r-balls avoids
    B_O(r/4)), and realize the Betti pattern of S^k in dimensions 0..d-1.
    c_star is the largest tested jitter fraction of r that every seeded
    perturbation survived; eps is the covering radius of the net on its
    carrier sphere, in units of r.
    """

    k: int
    d: int
    r: float
    points: np.ndarray
    m: int
    eps: float
    c_star: float
    betti: tuple[int, ...]

    def manifest(self) -> dict:
        return {
            "k": self.k, "d": self.d, "r": self.r, "m": self.m,
            "eps": self.eps, "c_star": self.c_star, "betti": list(self.betti),
        }

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"x{i}" for i in range(self.d)) + "\n")
            for row in self.points:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _circle_net(m: int, d: int, r: float) -> np.ndarray:
    ang = 2.0 * math.pi * np.arange(m) / m
    pts = np.zeros((m, d))
    pts[:, 0] = 1.5 * r * np.cos(ang)
    pts[:, 1] = 1.5 * r * np.sin(ang)
    return pts


def _sphere2_net(n_lat: int, n_lon: int, d: int, r: float) -> np.ndarray:
    rows = [np.array([0.0, 0.0, 1.5 * r]), np.array([0.0, 0.0, -1.5 * r])]
    for j in range(1, n_lat + 1):
        phi = math.pi * j / (n_lat + 1)
        for i in range(n_lon):
            theta = 2.0 * math.pi * (i + 0.5 * (j % 2)) / n_lon
            rows.append(
                1.5 * r * np.array([
                    math.sin(phi) * math.cos(theta),
                    math.sin(phi) * math.sin(theta),
                    math.cos(phi),
                ])
            )
    pts = np.zeros((len(rows), d))
    pts[:, :3] = np.asarray(rows)
    return pts


def _sphere_pattern(k: int, d: int) -> tuple[int, ...]:
    return tuple(1 if j in (0, k) else 0 for j in range(d))


def _net_invariants_ok(pts: np.ndarray, k: int, d: int, r: float, p: int = 2) -> bool:
    norms2 = np.einsum("ij,ij->i", pts, pts)
    if np.any(norms2 <= (1.25 * r) ** 2) or np.any(norms2 > (2.0 * r) ** 2):
        return False
    bv = betti_numbers(build_cech(pts, r, k_cap=d), p)
    return tuple(bv.all_betti()[:d]) == _sphere_pattern(k, d)


def _probe_sphere(k: int, count: int) -> np.ndarray:
    """Roughly uniform probe points on the unit k-sphere (k = 1 or 2)."""
    if k == 1:
        ang = 2.0 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    idx = np.arange(count) + 0.5
    phi = np.arccos(1.0 - 2.0 * idx / count)
    theta = math.pi * (1.0 + math.sqrt(5.0)) * idx
    return np.column_stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)])


def build_sphere_configuration(k: int, d: int, r: float, p: int = 2) -> SphereConfiguration:
    """Net on the 1.5r sphere whose radius-r complex is a homology k-sphere.

    Starts from a fixed coarse net (8 points for a circle; a staggered
    latitude grid with poles for a 2-sphere) and refines by doubling until
    the three invariants hold. The jitter tolerance c_star is bisected over
    [0, 0.25] against 20 seeded perturbations per level; 0.25 is a hard
    ceiling because a point at 1.5r jittered by more than 0.25r can cross
    the 1.25r floor.
    """
    if d < 2 or k < 1 or k > d - 1:
        raise ValueError("need d >= 2 and 1 <= k <= d-1")
    if r <= 0:
        raise ValueError("radius must be > 0")
    if k > 2:
        raise ValueError("sphere nets implemented for k = 1 and k = 2")
    pts = None
    if k == 1:
        m = 8
        for _ in range(5):
            cand = _circle_net(m, d, r)
            if _net_invariants_ok(cand, k, d, r, p):
                pts = cand
                break
            m *= 2
    else:
        n_lat, n_lon = 5, 12
        for _ in range(4):
            cand = _sphere2_net(n_lat, n_lon, d, r)
            if _net_invariants_ok(cand, k, d, r, p):
                pts = cand
                break
            n_lat, n_lon = 2 * n_lat, 2 * n_lon
    if pts is None:
        raise RuntimeError("sphere net failed to stabilize under refinement")

    def feasible(c: float) -> bool:
        for trial in range(20):
            rng = derived_rng(_JITTER_SEED, k, d, trial)
            shift = rng.standard_normal(pts.shape)
            shift /= np.maximum(np.sqrt(np.einsum("ij,ij->i", shift, shift)), 1e-300)[:, None]
            radii = rng.random(len(pts)) ** (1.0 / d)
            jittered = pts + c * r * radii[:, None] * shift
            if not _net_invariants_ok(jittered, k, d, r, p):
                return False
        return True

    lo, hi = 0.0, 0.25
    if feasible(hi):
        lo = hi
    else:
        for _ in range(8):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
    probes = 1.5 * r * _probe_sphere(k, 4096 if k == 1 else 8192)
    full = np.zeros((len(probes), d))
    full[:, : probes.shape[1]] = probes
    d2 = ((full[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    eps = float(np.sqrt(d2.min(axis=1).max())) / r
    bv = betti_numbers(build_cech(pts, r, k_cap=d), p)
    return SphereConfiguration(
        k=k, d=d, r=r, points=pts, m=len(pts), eps=eps, c_star=lo,
        betti=tuple(bv.all_betti()[:d]),
    )


@dataclass
class VarianceHypothesisRecord:
    """Empirical audit of the add-one cost at a planted homology sphere."""

    n: int
    k: int
    d: int
    r: float
    r_n: float
    num_seeds: int
    mean_cost: float
    se_cost: float
    abs_mean: float
    freq_le_minus1: float
    void_count: int
    void_freq: float
    void_prob_bound: float
    cond_violations: int
    sign_violations: int | None


def variance_lowerbound_hypothesis_check(n: int, f, k: int, seeds, r: float = 1.0, p: int = 2) -> VarianceHypothesisRecord:
    """Audit the planted-sphere add-one construction at thermodynamic radius.

    A k-sphere configuration is planted around the support center x, the
    process is sampled, and the cost of adding x is recorded per seed. On the
    event that no process point lands in B_x(2 r_n), the cost must be <= -1;
    for k = d-1 the cost must be <= 0 on every seed. The void probability is
    bounded below by exp(-f_max * n * omega_d * (2 r_n)^d), a constant in n
    under thermodynamic scaling.
    """
    d = f.support.dim
    if not 1 <= k <= d - 1:
        raise ValueError("need 1 <= k <= d-1")
    r_n = (r / n) ** (1.0 / d)
    lo, hi = f.support.bounding_box()
    x = 0.5 * (lo + hi)
    margin = float(np.minimum(hi - x, x - lo).min())
    if margin <= 3.0 * r_n:
        raise ValueError("support too small: need B_x(3 r_n) inside the support")
    config = build_sphere_configuration(k, d, r_n, p)
    planted = x + config.points
    costs = []
    void_flags = []
    cond_violations = 0
    sign_violations = 0 if k == d - 1 else None
    from .point_process import sample_inhomogeneous_poisson

    for s in seeds:
        smp = sample_inhomogeneous_poisson(n, f, seed=int(s))
        pp = smp.points
        if len(pp):
            dist2 = np.einsum("ij,ij->i", pp - x, pp - x)
            void = bool(dist2.min() > (2.0 * r_n) ** 2)
        else:
            void = True
        pts = np.vstack([pp, planted]) if len(pp) else planted
        cost = add_one_cost(pts, x, r_n, k, p).cost
        costs.append(cost)
        void_flags.append(void)
        if void and cost > -1:
            cond_violations += 1
        if k == d - 1 and cost > 0:
            sign_violations += 1
    costs_arr = np.asarray(costs, dtype=float)
    mean = float(costs_arr.mean())
    se = float(costs_arr.std(ddof=1) / math.sqrt(len(costs_arr))) if len(costs_arr) > 1 else 0.0
    omega = _unit_ball_volume(d)
    bound = math.exp(-f.f_max * n * omega * (2.0 * r_n) ** d)
    return VarianceHypothesisRecord(
        n=n, k=k, d=d, r=r, r_n=r_n, num_seeds=len(costs), mean_cost=mean,
        se_cost=se, abs_mean=abs(mean), freq_le_minus1=float(np.mean(costs_arr <= -1)),
        void_count=int(sum(void_flags)), void_freq=float(np.mean(void_flags)),
        void_prob_bound=bound, cond_violations=cond_violations, sign_violations=sign_violations,
    )
