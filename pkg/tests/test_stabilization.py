"""Add-one costs, stabilization traces and probes, planted sphere patterns."""

import math

import numpy as np
import pytest

from rgcomplex.complexes import build_cech
from rgcomplex.homology import betti_numbers
from rgcomplex.point_process import DensitySpec, Window, sample_homogeneous_poisson
from rgcomplex.stabilization import (
    add_one_cost,
    build_sphere_configuration,
    strong_stabilization_probe,
    variance_lowerbound_hypothesis_check,
    weak_stabilization_trace,
)

EQUILATERAL = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


# ---------------------------------------------------------------- add-one cost


def test_first_point_creates_a_component():
    rec0 = add_one_cost(np.empty((0, 2)), np.array([0.3, 0.4]), 1.0, 0)
    assert rec0.cost == 1
    rec1 = add_one_cost(np.empty((0, 2)), np.array([0.3, 0.4]), 1.0, 1)
    assert rec1.cost == 0


def test_closing_the_ring_creates_a_cycle():
    ring = build_sphere_configuration(1, 2, 1.0).points
    rec = add_one_cost(ring[:-1], ring[-1], 1.0, 1)
    assert rec.cost == 1
    assert rec.beta_without == 0 and rec.beta_with == 1


def test_coning_kills_the_cycle():
    # r below the circumradius keeps the triangle hollow; the centroid cones
    # every edge pair, filling it.
    center = EQUILATERAL.mean(axis=0)
    rec = add_one_cost(EQUILATERAL, center, 0.55, 1)
    assert rec.beta_without == 1
    assert rec.cost == -1


def test_duplicate_point_rejected():
    with pytest.raises(ValueError, match="coincides"):
        add_one_cost(EQUILATERAL, EQUILATERAL[0], 0.5, 1)


def test_cost_matches_from_scratch_and_respects_local_bound():
    rng = np.random.default_rng(616)
    for trial in range(100):
        n = int(rng.integers(0, 30))
        pts = rng.uniform(0.0, 4.0, size=(n, 2))
        x = rng.uniform(0.5, 3.5, size=2)
        r = float(rng.uniform(0.3, 0.9))
        k = int(rng.integers(0, 2))
        rec = add_one_cost(pts, x, r, k)
        with_x = betti_numbers(build_cech(np.vstack([pts, x]), r, k_cap=2))[k]
        without = betti_numbers(build_cech(pts, r, k_cap=2))[k] if n else (0 if k else 0)
        assert rec.cost == with_x - without
        near = 0
        if n:
            near = int(np.sum(np.einsum("ij,ij->i", pts - x, pts - x) <= (2 * r) ** 2))
        assert rec.local_count == near
        if k >= 1:
            assert rec.bound == 2 * near ** (k + 1)
            assert rec.bound_ok and abs(rec.cost) <= rec.bound


# ---------------------------------------------------------------- weak traces


def test_trace_on_an_empty_realization_is_flat():
    rho = [1.0, 1.5, 2.0, 2.5]
    t0 = weak_stabilization_trace(seed=4, lam=1e-9, r=0.5, k=0, rho_list=rho)
    assert t0.costs == (1, 1, 1, 1)
    assert t0.stabilized and t0.r_hat == 1.0 and t0.terminal_value == 1
    t1 = weak_stabilization_trace(seed=4, lam=1e-9, r=0.5, k=1, rho_list=rho)
    assert t1.costs == (0, 0, 0, 0)


def test_trace_input_validation():
    with pytest.raises(ValueError, match="ascending"):
        weak_stabilization_trace(0, 1.0, 0.5, 1, [2.0, 1.5])
    with pytest.raises(ValueError, match="2r"):
        weak_stabilization_trace(0, 1.0, 0.5, 1, [0.5, 1.5])


def test_traces_decompose_exactly_and_kernels_grow():
    rho = [1.0 + 0.5 * i for i in range(9)]  # up to 5.0
    stabilized = 0
    for seed in range(10):
        t = weak_stabilization_trace(seed=seed, lam=1.0, r=0.5, k=1, rho_list=rho)
        assert t.identity_ok
        assert t.monotone_ok
        assert t.kernel_k == tuple(sorted(t.kernel_k))
        assert t.kernel_km1 == tuple(sorted(t.kernel_km1))
        if t.stabilized:
            stabilized += 1
            assert t.r_hat in t.rho
            assert t.costs[-1] == t.terminal_value
    assert stabilized >= 8


def test_trace_is_a_function_of_the_seed():
    rho = [1.0, 2.0, 3.0]
    a = weak_stabilization_trace(seed=9, lam=1.0, r=0.5, k=1, rho_list=rho)
    b = weak_stabilization_trace(seed=9, lam=1.0, r=0.5, k=1, rho_list=rho)
    assert a.costs == b.costs and a.kernel_k == b.kernel_k


def test_trace_csv_layout(tmp_path):
    t = weak_stabilization_trace(seed=2, lam=1.0, r=0.5, k=1, rho_list=[1.0, 2.0, 3.0])
    path = tmp_path / "trace.csv"
    t.save_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "seed,rho,cost,kernel_k,kernel_km1"
    assert len(lines) == 4
    assert all(line.startswith("2,") for line in lines[1:])


# ---------------------------------------------------------------- strong probes


def test_probe_with_no_interference_agrees():
    rec = strong_stabilization_probe(seed=1, lam=1.0, r=0.3, k=1)
    assert rec.agreed
    assert rec.adversarial_costs == ()
    assert rec.cost_baseline == rec.prediction


def test_probe_is_immune_to_far_field_points():
    for seed in range(8):
        base = strong_stabilization_probe(seed=seed, lam=1.0, r=0.3, k=1)
        rings = []
        for extra in (0.5, 1.0, 2.0):
            ang = np.linspace(0.0, 2 * np.pi, 12, endpoint=False)
            rad = base.radius + extra
            rings.append(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]))
        rec = strong_stabilization_probe(
            seed=seed, lam=1.0, r=0.3, k=1, adversarial_sets=rings
        )
        assert rec.radius == base.radius
        assert rec.agreed, f"seed {seed}: {rec.adversarial_costs} vs {rec.prediction}"


def test_probe_rejects_points_inside_the_screen():
    base = strong_stabilization_probe(seed=3, lam=1.0, r=0.3, k=1)
    inside = np.array([[0.5 * base.radius, 0.0]])
    with pytest.raises(ValueError, match="outside"):
        strong_stabilization_probe(seed=3, lam=1.0, r=0.3, k=1, adversarial_sets=[inside])


def test_probe_requires_subcritical_flag():
    with pytest.raises(ValueError, match="subcritical"):
        strong_stabilization_probe(seed=0, lam=1.0, r=0.3, k=1, subcritical=False)


# ---------------------------------------------------------------- sphere patterns


def test_circle_configuration_in_the_plane():
    cfg = build_sphere_configuration(1, 2, 1.0)
    assert cfg.betti == (1, 1)
    assert cfg.m == 8 and len(cfg.points) == 8
    norms = np.linalg.norm(cfg.points, axis=1)
    assert np.allclose(norms, 1.5)
    assert np.all(norms >= 1.25)  # union of unit balls avoids B_O(1/4)
    assert np.all(norms <= 2.0)
    assert 0.0 < cfg.eps < 1.0  # covering radius below r keeps the cover faithful
    assert cfg.c_star > 0.0


def test_equatorial_circle_in_space():
    cfg = build_sphere_configuration(1, 3, 1.0)
    assert cfg.betti == (1, 1, 0)
    assert np.allclose(np.linalg.norm(cfg.points, axis=1), 1.5)


def test_two_sphere_in_space():
    cfg = build_sphere_configuration(2, 3, 1.0)
    assert cfg.betti == (1, 0, 1)
    assert np.allclose(np.linalg.norm(cfg.points, axis=1), 1.5)
    assert cfg.c_star > 0.0


def test_sphere_configuration_scales_with_r():
    small = build_sphere_configuration(1, 2, 0.25)
    assert np.allclose(np.linalg.norm(small.points, axis=1), 1.5 * 0.25)
    b = betti_numbers(build_cech(small.points, 0.25, k_cap=2))
    assert (b[0], b[1]) == (1, 1)


def test_sphere_configuration_validation():
    for k, d in [(0, 2), (2, 2), (3, 3), (1, 1)]:
        with pytest.raises(ValueError):
            build_sphere_configuration(k, d, 1.0)
    with pytest.raises(ValueError):
        build_sphere_configuration(1, 2, 0.0)


def test_sphere_configuration_serialization(tmp_path):
    cfg = build_sphere_configuration(1, 2, 1.0)
    man = cfg.manifest()
    assert set(man) == {"k", "d", "r", "m", "eps", "c_star", "betti"}
    path = tmp_path / "net.csv"
    cfg.save_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x0,x1"
    assert len(lines) == 1 + cfg.m


# ---------------------------------------------------------------- planted-sphere audit


def test_variance_hypothesis_audit_small_radius():
    # r small enough that the void event has visible probability; every void
    # realization must cost -1 or less, and k = d-1 forbids positive costs.
    f = DensitySpec(support=Window.cube(1.0, 2))
    rec = variance_lowerbound_hypothesis_check(300, f, 1, seeds=range(150), r=0.1)
    assert rec.cond_violations == 0
    assert rec.sign_violations == 0
    assert rec.void_count > 0
    se_void = math.sqrt(rec.void_freq * (1 - rec.void_freq) / rec.num_seeds) or 1.0 / rec.num_seeds
    assert rec.void_freq >= rec.void_prob_bound - 3.0 * se_void
    assert rec.freq_le_minus1 >= rec.void_freq - 1e-12
    assert rec.abs_mean == abs(rec.mean_cost)
    assert rec.mean_cost <= 0.0


def test_variance_hypothesis_needs_room_for_the_sphere():
    f = DensitySpec(support=Window.cube(0.1, 2))
    with pytest.raises(ValueError, match="support"):
        variance_lowerbound_hypothesis_check(300, f, 1, seeds=range(3), r=1.0)
