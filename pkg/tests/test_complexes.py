"""Radius-complex construction, counting, restriction, union, intersection."""

import math

import numpy as np
import pytest

from rgcomplex.complexes import (
    SimplicialComplex,
    build_cech,
    complex_intersection,
    complex_union,
    count_simplices,
    count_simplices_in_region,
    count_simplices_touching,
    restrict_to_vertices,
)
from rgcomplex.geometry import build_neighbor_graph
from rgcomplex.point_process import Window, sample_homogeneous_poisson

from oracles import brute_cech_2d

EQUILATERAL = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def triangle_complex(v0, v1, v2, points=None):
    tri = tuple(sorted((v0, v1, v2)))
    return SimplicialComplex(
        simplices=[
            [(v,) for v in tri],
            [(tri[0], tri[1]), (tri[0], tri[2]), (tri[1], tri[2])],
            [tri],
        ],
        k_cap=2,
        points=points,
    )


# ---------------------------------------------------------------- construction


def test_equilateral_below_circumradius_has_no_triangle():
    c = build_cech(EQUILATERAL, 0.5, k_cap=2)
    assert c.counts().S == [3, 3, 0]


def test_equilateral_above_circumradius_has_triangle():
    c = build_cech(EQUILATERAL, 0.58, k_cap=2)
    assert c.counts().S == [3, 3, 1]


def test_cech_matches_exhaustive_enumeration():
    rng = np.random.default_rng(808)
    pts = rng.uniform(0.0, 10.0, size=(50, 2))
    c = build_cech(pts, 1.0, k_cap=2)
    edges, triangles = brute_cech_2d(pts, 1.0)
    assert set(c.simplices[1]) == set(edges)
    assert set(c.simplices[2]) == set(triangles)
    assert c.simplices[0] == [(i,) for i in range(50)]


def test_cech_lists_are_sorted_and_closed():
    rng = np.random.default_rng(33)
    pts = rng.uniform(0.0, 6.0, size=(40, 2))
    c = build_cech(pts, 0.8, k_cap=2)
    for level in c.simplices:
        assert level == sorted(level)
        assert len(level) == len(set(level))
    c.verify_closure()


def test_cech_respects_dimension_cap():
    c = build_cech(EQUILATERAL, 5.0, k_cap=1)
    assert len(c.simplices) == 2
    assert c.counts().S == [3, 3]


def test_cech_simplices_are_cliques_of_the_range_graph():
    # One-sided containment: the converse fails for triangles, witnessed by
    # the equilateral example whose edges form a clique at cutoff 2r but
    # whose enclosing-ball radius exceeds r.
    rng = np.random.default_rng(11)
    pts = rng.uniform(0.0, 8.0, size=(60, 2))
    r = 0.7
    c = build_cech(pts, r, k_cap=2)
    edge_set = set(map(tuple, build_neighbor_graph(pts, 2 * r).edges))
    for level in c.simplices[1:]:
        for s in level:
            for a in range(len(s)):
                for b in range(a + 1, len(s)):
                    assert (s[a], s[b]) in edge_set
    rips_only = build_cech(EQUILATERAL, 0.5, k_cap=2)
    assert set(map(tuple, build_neighbor_graph(EQUILATERAL, 1.0).edges)) == {
        (0, 1),
        (0, 2),
        (1, 2),
    }
    assert rips_only.counts()[2] == 0


def test_cech_monotone_in_radius():
    rng = np.random.default_rng(21)
    pts = rng.uniform(0.0, 5.0, size=(35, 2))
    for r1, r2 in [(0.4, 0.6), (0.6, 0.9), (0.9, 1.4)]:
        small = build_cech(pts, r1, k_cap=2)
        big = build_cech(pts, r2, k_cap=2)
        for j in range(3):
            assert set(small.simplices[j]) <= set(big.simplices[j])


def test_cech_translation_invariant():
    rng = np.random.default_rng(40)
    pts = rng.uniform(0.0, 5.0, size=(30, 2))
    base = build_cech(pts, 0.8, k_cap=2)
    moved = build_cech(pts + np.array([113.0, -27.5]), 0.8, k_cap=2)
    assert base.simplices == moved.simplices


def test_cech_accepts_point_sample():
    s = sample_homogeneous_poisson(1.0, Window.cube(6.0, 2), seed=3)
    c = build_cech(s, 0.9, k_cap=2)
    assert c.counts()[0] == len(s)
    assert c.points is s.points


def test_simplex_density_stable_across_seed_batches():
    # Mean simplex counts per unit area from two disjoint seed batches agree
    # to within 5% relative spread.
    w = Window.cube(10.0, 2)
    area = w.volume()

    def batch_mean(seeds):
        totals = np.zeros(3)
        for s in seeds:
            counts = build_cech(sample_homogeneous_poisson(1.0, w, seed=s), 1.0, k_cap=2).counts()
            totals += np.array(counts.S, dtype=float)
        return totals / (len(seeds) * area)

    m1 = batch_mean(range(100))
    m2 = batch_mean(range(100, 200))
    for j in range(3):
        pair = np.array([m1[j], m2[j]])
        assert pair.std(ddof=1) / pair.mean() < 0.05
        assert np.isfinite(pair).all()


# ---------------------------------------------------------------- counts


def test_counts_empty_complex():
    c = SimplicialComplex(simplices=[[], [], []], k_cap=2)
    assert count_simplices(c).S == [0, 0, 0]
    assert c.top_dim() == -1


def test_counts_full_simplex_on_four_vertices():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    c = build_cech(pts, 2.0, k_cap=3)
    assert count_simplices(c).S == [4, 6, 4, 1]


def test_counts_match_list_lengths():
    rng = np.random.default_rng(17)
    pts = rng.uniform(0.0, 6.0, size=(45, 2))
    c = build_cech(pts, 0.9, k_cap=2)
    assert count_simplices(c).S == [len(level) for level in c.simplices]


def test_euler_from_counts():
    assert SimplicialComplex(simplices=[[(0,)], [], []], k_cap=2).counts().euler() == 1
    c = build_cech(EQUILATERAL, 0.5, k_cap=2)
    assert c.counts().euler() == 0  # one loop


def test_region_counts_whole_window_equals_totals():
    s = sample_homogeneous_poisson(1.5, Window.cube(5.0, 2), seed=8)
    c = build_cech(s, 0.8, k_cap=2)
    region = Window.cube(20.0, 2)
    assert count_simplices_in_region(c, s, region).S == count_simplices(c).S


def test_region_counts_disjoint_region_is_zero():
    s = sample_homogeneous_poisson(1.5, Window.cube(5.0, 2), seed=8)
    c = build_cech(s, 0.8, k_cap=2)
    region = Window.box([(100.0, 101.0), (100.0, 101.0)])
    assert count_simplices_in_region(c, s, region).S == [0, 0, 0]


def test_region_counts_halves_overcount_by_straddlers():
    s = sample_homogeneous_poisson(2.0, Window.cube(6.0, 2), seed=12)
    c = build_cech(s, 0.9, k_cap=2)
    left = Window.box([(-3.0, 0.0), (-3.0, 3.0)])
    right = Window.box([(0.0, 3.0), (-3.0, 3.0)])
    total = np.array(count_simplices(c).S)
    a = np.array(count_simplices_in_region(c, s, left).S)
    b = np.array(count_simplices_in_region(c, s, right).S)
    lmask = left.contains(s.points)
    rmask = right.contains(s.points)
    straddle = np.array(
        [
            sum(1 for t in level if any(lmask[v] for v in t) and any(rmask[v] for v in t))
            for level in c.simplices
        ]
    )
    assert np.array_equal(a + b, total + straddle)


def test_touching_counts_empty_mask():
    c = build_cech(EQUILATERAL, 0.58, k_cap=2)
    assert count_simplices_touching(c, np.zeros(3, dtype=bool)).S == [0, 0, 0]


# ---------------------------------------------------------------- restriction


def test_restrict_to_all_vertices_is_identity():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.0, 4.0, size=(25, 2))
    c = build_cech(pts, 0.9, k_cap=2)
    assert restrict_to_vertices(c, range(25)).simplices == c.simplices


def test_restrict_to_nothing_is_empty():
    c = build_cech(EQUILATERAL, 0.58, k_cap=2)
    assert restrict_to_vertices(c, []).counts().S == [0, 0, 0]


def test_restrict_triangle_to_edge():
    c = build_cech(EQUILATERAL, 0.58, k_cap=2)
    sub = restrict_to_vertices(c, [0, 2])
    assert sub.counts().S == [2, 1, 0]
    assert sub.simplices[1] == [(0, 2)]


def test_restriction_equals_rebuild_on_subset():
    # The simplex test depends only on the vertices involved, so the induced
    # subcomplex must equal the complex built from the subset alone (up to
    # the index relabeling).
    rng = np.random.default_rng(77)
    pts = rng.uniform(0.0, 6.0, size=(40, 2))
    c = build_cech(pts, 0.8, k_cap=2)
    keep = sorted(rng.choice(40, size=22, replace=False).tolist())
    relabel = {v: i for i, v in enumerate(keep)}
    sub = restrict_to_vertices(c, keep)
    rebuilt = build_cech(pts[keep], 0.8, k_cap=2)
    for j in range(3):
        mapped = sorted(tuple(relabel[v] for v in s) for s in sub.simplices[j])
        assert mapped == rebuilt.simplices[j]


# ---------------------------------------------------------------- union/intersection


def test_union_intersection_idempotent():
    c = build_cech(EQUILATERAL, 0.58, k_cap=2)
    assert complex_union(c, c).simplices == c.simplices
    assert complex_intersection(c, c).simplices == c.simplices


def test_union_intersection_of_two_triangles_sharing_a_vertex():
    a = triangle_complex(0, 1, 2)
    b = triangle_complex(0, 3, 4)
    u = complex_union(a, b)
    i = complex_intersection(a, b)
    assert u.counts().S == [5, 6, 2]
    assert i.counts().S == [1, 0, 0]
    u.verify_closure()


def test_union_intersection_inclusion_exclusion():
    rng = np.random.default_rng(55)
    pts = rng.uniform(0.0, 6.0, size=(35, 2))
    c = build_cech(pts, 0.9, k_cap=2)
    for trial in range(10):
        ka = rng.choice(35, size=20, replace=False)
        kb = rng.choice(35, size=20, replace=False)
        a = restrict_to_vertices(c, ka)
        b = restrict_to_vertices(c, kb)
        u = complex_union(a, b)
        i = complex_intersection(a, b)
        for j in range(3):
            assert len(u.simplices[j]) + len(i.simplices[j]) == len(a.simplices[j]) + len(
                b.simplices[j]
            )
        u.verify_closure()
        i.verify_closure()


def test_union_rejects_different_vertex_universes():
    a = build_cech(EQUILATERAL, 0.58, k_cap=2)
    b = build_cech(EQUILATERAL + 1.0, 0.58, k_cap=2)
    with pytest.raises(ValueError, match="universe"):
        complex_union(a, b)


# ---------------------------------------------------------------- serialization


def test_text_roundtrip(tmp_path):
    rng = np.random.default_rng(44)
    pts = rng.uniform(0.0, 5.0, size=(30, 2))
    c = build_cech(pts, 0.9, k_cap=2)
    path = tmp_path / "complex.txt"
    c.save_text(path)
    back = SimplicialComplex.load_text(path, k_cap=2)
    assert back.simplices == c.simplices
