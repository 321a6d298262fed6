"""Experiment harness: configs, seeding, statistics, replication, summaries."""

import math

import numpy as np
import pytest
import scipy.stats

from rgcomplex.experiments import (
    KINDS,
    ConfigError,
    StreamingMoments,
    bundled_config_path,
    canonical_config_text,
    config_from_dict,
    derive_seed,
    expected_edge_count_square,
    ginibre_order_for_window,
    ks_normal_statistic,
    load_config,
    parse_config_text,
    run_clt,
    run_coupling,
    run_duality_audit,
    run_experiment,
    run_replications,
    run_simplex_law,
    run_strong_law,
    summarize,
)

from oracles import edge_count_square_numeric


def small_strong_law(**overrides):
    vals = {
        "kind": "strong_law", "d": 2, "lam": 1.0, "r": 1.0,
        "l_grid": [4.0, 6.0], "k_list": [0, 1], "reps": 4, "master_seed": 7,
    }
    vals.update(overrides)
    return config_from_dict(vals)


# ---------------------------------------------------------------- parsing


def test_parse_minimal_config():
    cfg = parse_config_text(
        "kind = strong_law\nd = 2\nlam = 1.0\nr = 0.5\n"
        "l_grid = 4.0, 8.0\nk_list = 0, 1\nreps = 10\nmaster_seed = 3\n"
    )
    assert cfg.kind == "strong_law"
    assert cfg.l_grid == [4.0, 8.0]
    assert cfg.k_list == [0, 1]
    assert cfg.reps == 10 and cfg.master_seed == 3


def test_parse_skips_comments_and_blanks():
    cfg = parse_config_text(
        "# header\n\nkind = duality_audit  # trailing\nl = 12.0\nlam = 1.0\n"
        "r = 0.6\nclearance = 1.2\nres_per_r = 32.0\nreps = 2\nmaster_seed = 1\n"
    )
    assert cfg.kind == "duality_audit" and cfg.r == 0.6


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("kind = strong_law\nbogus\n", "line 2"),
        ("kind = strong_law\nwhat = 3\n", "unknown key"),
        ("kind = strong_law\nd = 2\nd = 3\n", "duplicate"),
        ("d = 2\n", "missing required key 'kind'"),
        ("kind = sorcery\n", "unknown experiment kind"),
        ("kind = strong_law\nreps = 5\nmaster_seed = 1\n", "requires key"),
        ("kind = strong_law\nd = 2\nlam = 1\nr = 1\nl_grid = 4\nk_list = 0\nreps = 1\nmaster_seed = 1\n", "reps"),
        ("kind = strong_law\nd = 2\nlam = 1\nr = 1\nl_grid = 8, 4\nk_list = 0\nreps = 4\nmaster_seed = 1\n", "increasing"),
        ("kind = clt\nd = 2\nr = 1\nn_grid = 100\nk_list = 1\nvariants = martian\nreps = 4\nmaster_seed = 1\n", "variants"),
        ("kind = strong_law\nd = 2\nlam = 1\nr = 1\nl_grid = 4\nk_list = 0, 2\nreps = 4\nmaster_seed = 1\n", "k_list"),
        ("kind = duality_audit\nl = 2.0\nlam = 1\nr = 0.6\nclearance = 0.5\nres_per_r = 32\nreps = 4\nmaster_seed = 1\n", "clearance"),
        ("kind = strong_law\nd = 2\nr = not_a_number\nlam = 1\nl_grid = 4\nk_list = 0\nreps = 4\nmaster_seed = 1\n", "line 3"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text)


def test_config_error_carries_line_number():
    try:
        parse_config_text("kind = strong_law\n???\n")
    except ConfigError as exc:
        assert exc.line == 2
    else:
        pytest.fail("no error raised")


def test_canonical_text_and_hash_are_stable():
    vals = {
        "kind": "strong_law", "d": 2, "lam": 1.0, "r": 1.0,
        "l_grid": [4.0, 6.0], "k_list": [0, 1], "reps": 4, "master_seed": 7,
    }
    assert canonical_config_text(vals) == (
        "d = 2\nk_list = 0, 1\nkind = strong_law\nl_grid = 4.0, 6.0\n"
        "lam = 1.0\nmaster_seed = 7\nr = 1.0\nreps = 4\n"
    )
    cfg = config_from_dict(vals)
    assert cfg.config_hash() == "8ca86184d1eba0bfb2ea54fb9c122ec74c8759fc5a183ffbb8284c538e8d1361"


def test_bundled_configs_all_parse():
    names = {
        "strong_law_d2.cfg": "strong_law",
        "simplex_law_d2.cfg": "simplex_law",
        "variance_d2.cfg": "variance_scaling",
        "clt_d2.cfg": "clt",
        "concentration_d2.cfg": "concentration",
        "coupling_d2.cfg": "coupling",
        "dpp_l12.cfg": "dpp_concentration",
        "duality_cube12.cfg": "duality_audit",
    }
    seen = set()
    for name, kind in names.items():
        cfg = load_config(bundled_config_path(name))
        assert cfg.kind == kind
        assert cfg.reps >= 2
        seen.add(kind)
    assert seen == set(KINDS)


# ---------------------------------------------------------------- seeding


def test_derive_seed_frozen_values():
    assert derive_seed(20260817, "clt", 0, 0, 0) == 7400902589505550328
    assert derive_seed(20260817, "clt", 1, 0, 1) == 7039792363606717321
    assert derive_seed(777, "duality_audit", 0, 0, 0) == 11034893462390109774
    assert derive_seed(42, "strong_law", 7, 2, 0) == 5768076588911295771


def test_derive_seed_separates_coordinates():
    base = derive_seed(1, "clt", 0, 0, 0)
    assert derive_seed(1, "clt", 1, 0, 0) != base
    assert derive_seed(1, "clt", 0, 1, 0) != base
    assert derive_seed(1, "clt", 0, 0, 1) != base
    assert derive_seed(1, "concentration", 0, 0, 0) != base
    assert derive_seed(2, "clt", 0, 0, 0) != base


# ---------------------------------------------------------------- statistics


def test_streaming_moments_match_offline():
    rng = np.random.default_rng(12)
    xs = rng.normal(3.0, 2.0, size=37)
    mom = StreamingMoments()
    for x in xs:
        mom.push(float(x))
    assert mom.n == 37
    assert mom.mean == pytest.approx(xs.mean(), abs=1e-12)
    assert mom.variance() == pytest.approx(xs.var(ddof=1), rel=1e-11)
    dev = xs - xs.mean()
    m2, m3, m4 = (dev**2).sum(), (dev**3).sum(), (dev**4).sum()
    assert mom.skewness() == pytest.approx(math.sqrt(len(xs)) * m3 / m2**1.5, rel=1e-9)
    assert mom.excess_kurtosis() == pytest.approx(len(xs) * m4 / m2**2 - 3.0, rel=1e-9)
    assert mom.central_moment4() == pytest.approx(m4 / len(xs), rel=1e-9)
    assert mom.se_mean() == pytest.approx(xs.std(ddof=1) / math.sqrt(len(xs)), rel=1e-11)


def test_streaming_moments_degenerate_inputs():
    mom = StreamingMoments()
    assert mom.variance() == 0.0 and mom.se_mean() == 0.0
    mom.push(5.0)
    assert mom.mean == 5.0 and mom.variance() == 0.0
    for _ in range(10):
        mom.push(5.0)
    assert mom.variance() == 0.0 and mom.skewness() == 0.0


def test_ks_statistic_matches_reference():
    rng = np.random.default_rng(9)
    for size in (20, 80, 300):
        xs = rng.normal(0.0, 1.0, size=size)
        z = (xs - xs.mean()) / xs.std(ddof=1)
        ref = scipy.stats.kstest(z, "norm").statistic
        assert ks_normal_statistic(xs) == pytest.approx(ref, abs=1e-12)


def test_ks_statistic_flags_constant_input():
    assert ks_normal_statistic([2.0, 2.0, 2.0]) == 1.0


def test_edge_count_formula_against_quadrature():
    for lam, side, r in [(1.0, 8.0, 1.0), (2.0, 6.0, 0.5), (0.7, 10.0, 1.5)]:
        exact = expected_edge_count_square(lam, side, r)
        approx = edge_count_square_numeric(lam, side, r, steps=2000)
        assert exact == pytest.approx(approx, rel=5e-5)


def test_edge_count_density_limit():
    # At unit intensity and radius the edge density tends to 2*pi as the
    # window grows.
    for side, tol in [(100.0, 0.02), (1e6, 1e-5)]:
        density = expected_edge_count_square(1.0, side, 1.0) / side**2
        assert density == pytest.approx(2.0 * math.pi, rel=tol)
    with pytest.raises(ValueError):
        expected_edge_count_square(1.0, 1.0, 1.0)


def test_ginibre_order_for_window_values():
    assert ginibre_order_for_window(6.0) == 87
    orders = [ginibre_order_for_window(s) for s in (4.0, 6.0, 8.0, 12.0)]
    assert orders == sorted(orders)
    # Bulk radius covers the window corner.
    for s, order in zip((4.0, 6.0, 8.0, 12.0), orders):
        assert math.sqrt(order / math.pi) >= s / math.sqrt(2.0)


# ---------------------------------------------------------------- replication


def test_replications_are_deterministic_across_workers():
    cfg = small_strong_law()
    rows1, _ = run_replications(cfg, workers=1)
    rows2, _ = run_replications(cfg, workers=1)
    rows_par, _ = run_replications(cfg, workers=2)
    assert rows1 == rows2
    assert rows1 == rows_par
    assert {row["rep"] for row in rows1} == {0, 1, 2, 3}


def test_records_file_is_byte_identical_across_runs(tmp_path):
    cfg = small_strong_law()
    res1 = run_experiment(cfg, tmp_path / "a", workers=1)
    res2 = run_experiment(cfg, tmp_path / "b", workers=2)
    a = (tmp_path / "a" / "records.csv").read_bytes()
    b = (tmp_path / "b" / "records.csv").read_bytes()
    assert a == b
    assert res1.manifest.config_hash == res2.manifest.config_hash
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_run_wrappers_guard_their_kind():
    cfg = small_strong_law()
    with pytest.raises(ValueError, match="kind"):
        run_clt(cfg)
    stats = run_strong_law(cfg)
    assert stats.kind == "strong_law"
    assert stats.config_hash == cfg.config_hash()
    assert len(stats.rows) == 4  # two window sides x two dimensions


def test_summary_stats_row_lookup():
    stats = run_strong_law(small_strong_law())
    row = stats.row(grid=4.0, k=0)
    assert row["reps"] == 4
    with pytest.raises(KeyError):
        stats.row(grid=99.0, k=0)
    with pytest.raises(KeyError):
        stats.row(k=0)  # two grids match


def test_summarize_is_pure():
    cfg = small_strong_law()
    rows, _ = run_replications(cfg, workers=1)
    assert summarize(cfg, rows) == summarize(cfg, rows)


# ---------------------------------------------------------------- behavior spot checks


def test_betti_density_mean_spread_shrinks_with_window():
    cfg = config_from_dict({
        "kind": "strong_law", "d": 2, "lam": 1.0, "r": 1.0,
        "l_grid": [5.0, 10.0], "k_list": [1], "reps": 30, "master_seed": 11,
    })
    stats = run_strong_law(cfg)
    small = stats.row(grid=5.0, k=1)
    big = stats.row(grid=10.0, k=1)
    # The density concentrates: coefficient of variation drops with volume,
    # with one standard error of slack on each side.
    cv_small = small["cv"]
    cv_big = big["cv"]
    assert cv_big < cv_small
    # Densities from the two windows agree within 3 pooled standard errors.
    se_pool = math.hypot(small["se_mean"] / 25.0, big["se_mean"] / 100.0)
    assert abs(small["mean_per_volume"] - big["mean_per_volume"]) < 3.0 * se_pool


def test_dust_regime_recovers_the_intensity():
    # At r far below the typical spacing every point is its own component.
    cfg = config_from_dict({
        "kind": "strong_law", "d": 2, "lam": 1.0, "r": 0.01,
        "l_grid": [8.0], "k_list": [0], "reps": 30, "master_seed": 5,
    })
    row = run_strong_law(cfg).row(grid=8.0, k=0)
    se = row["se_mean"] / 64.0
    assert abs(row["mean_per_volume"] - 1.0) < 2.0 * max(se, 1e-9)


def test_simplex_law_matches_the_exact_edge_mean():
    cfg = config_from_dict({
        "kind": "simplex_law", "d": 2, "lam": 1.0, "r": 1.0,
        "l_grid": [8.0], "j_list": [0, 1], "reps": 40, "master_seed": 9,
    })
    stats = run_simplex_law(cfg)
    vertices = stats.row(grid=8.0, k=0)
    assert abs(vertices["mean"] - 1.0) < 2.0 * vertices["se_mean"]
    assert vertices["sandwich_all_ok"]
    edges = stats.row(grid=8.0, k=1)
    assert abs(edges["mean"] - edges["exact_mean_per_volume"]) < 3.0 * edges["se_mean"]


def test_coupled_differences_stay_under_their_majorant():
    cfg = config_from_dict({
        "kind": "coupling", "d": 2, "r": 1.0, "n_grid": [60, 120],
        "k_list": [1], "reps": 10, "master_seed": 13,
    })
    stats = run_coupling(cfg)
    for grid in (60, 120):
        row = stats.row(grid=grid, k=1)
        assert row["dominated_all"]
        assert row["mean"] <= row["mean_majorant_per_n"]


def test_duality_audit_on_an_empty_process():
    cfg = config_from_dict({
        "kind": "duality_audit", "l": 12.0, "lam": 1e-6, "r": 0.6,
        "clearance": 1.2, "res_per_r": 32.0, "reps": 2, "master_seed": 3,
    })
    stats = run_duality_audit(cfg)
    row = stats.row(grid=12.0, k=1)
    assert row["agree_count"] == 2
    assert row["mean"] == 0.0
    assert row["all_resolved_2x"]
