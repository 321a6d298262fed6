"""Replicated experiments over seeds and grids, with deterministic outputs.

An experiment is a config (kind, grids, replication count, master seed), a
replication function mapping one derived seed to one or more records, and a
summarizer. Records go to records.csv, one row per replication per homology
dimension; summaries per grid point go to summary.csv; diagnostic figures go
to plots/.

Determinism contract: the seed of every replication is derived from
(master_seed, kind tag, replication index, grid index, variant index) alone,
worker processes only decide who computes which replication, and rows are
assembled in replication order. records.csv is therefore byte-identical
across reruns and across worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from time import perf_counter

import numpy as np

from . import __version__
from .complexes import build_cech, count_simplices_in_region, count_simplices_touching, restrict_to_vertices
from .geometry import packing_lower_bound, vacant_component_count
from .homology import betti_numbers, betti_numbers_fast2d
from .point_process import (
    GINIBRE_MAX_ORDER,
    DensitySpec,
    Window,
    WindowSequence,
    derived_rng,
    restrict,
    sample_binomial,
    sample_coupled_poisson_binomial,
    sample_extended_binomial,
    sample_ginibre,
    sample_homogeneous_poisson,
    sample_inhomogeneous_poisson,
)

KINDS = (
    "strong_law",
    "simplex_law",
    "variance_scaling",
    "clt",
    "concentration",
    "coupling",
    "dpp_concentration",
    "duality_audit",
)

# Seed-derivation tags, one per experiment kind. Never reorder or reuse.
_KIND_TAGS = {kind: 11 + i for i, kind in enumerate(KINDS)}


class ConfigError(ValueError):
    """Config file problem, with a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_INT_FIELDS = {"d", "reps", "master_seed", "field_p"}
_FLOAT_FIELDS = {"r", "lam", "a", "eps", "l", "clearance", "res_per_r"}
_INT_LIST_FIELDS = {"k_list", "j_list", "n_grid", "gin_orders"}
_FLOAT_LIST_FIELDS = {"l_grid"}
_STR_LIST_FIELDS = {"variants"}
_ALL_FIELDS = (
    {"kind"} | _INT_FIELDS | _FLOAT_FIELDS | _INT_LIST_FIELDS | _FLOAT_LIST_FIELDS | _STR_LIST_FIELDS
)

_REQUIRED = {
    "strong_law": ["d", "lam", "r", "l_grid", "k_list", "reps", "master_seed"],
    "simplex_law": ["d", "lam", "r", "l_grid", "j_list", "reps", "master_seed"],
    "variance_scaling": ["d", "r", "n_grid", "k_list", "reps", "master_seed"],
    "clt": ["d", "r", "n_grid", "k_list", "variants", "reps", "master_seed"],
    "concentration": ["d", "r", "n_grid", "k_list", "a", "eps", "reps", "master_seed"],
    "coupling": ["d", "r", "n_grid", "k_list", "reps", "master_seed"],
    "dpp_concentration": ["l_grid", "r", "a", "eps", "reps", "master_seed"],
    "duality_audit": ["l", "lam", "r", "clearance", "res_per_r", "reps", "master_seed"],
}


@dataclass
class ExperimentConfig:
    """Parsed experiment description; raw_text is what the hash covers."""

    kind: str
    reps: int
    master_seed: int
    d: int = 2
    r: float = 1.0
    lam: float = 1.0
    field_p: int = 2
    k_list: list = field(default_factory=lambda: [1])
    j_list: list = field(default_factory=lambda: [0, 1, 2])
    l_grid: list = field(default_factory=list)
    n_grid: list = field(default_factory=list)
    gin_orders: list = field(default_factory=list)
    variants: list = field(default_factory=list)
    a: float = 1.0
    eps: float = 0.1
    l: float = 12.0
    clearance: float = 1.2
    res_per_r: float = 32.0
    raw_text: str = ""

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode("utf-8")).hexdigest()


def canonical_config_text(values: dict) -> str:
    lines = [f"{key} = {_render_value(values[key])}" for key in sorted(values)]
    return "\n".join(lines) + "\n"


def _render_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ", ".join(_render_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse `key = value` lines; # comments and blank lines are skipped."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _ALL_FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ConfigError(str(exc), lineno) from None
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    kind = values["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    for req in _REQUIRED[kind]:
        if req not in values:
            raise ConfigError(f"{kind} requires key {req!r}")
    cfg = ExperimentConfig(kind=kind, reps=values["reps"], master_seed=values["master_seed"], raw_text=text)
    for key, val in values.items():
        setattr(cfg, key, val)
    if cfg.reps < 2:
        raise ConfigError("reps must be >= 2")
    for grid_name in ("l_grid", "n_grid"):
        grid = getattr(cfg, grid_name)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"{grid_name} must be strictly increasing")
    if kind == "clt" and not set(cfg.variants) <= {"poisson", "extended_binomial"}:
        raise ConfigError("clt variants must be among poisson, extended_binomial")
    if any(k < 0 or k >= cfg.d for k in cfg.k_list) and kind in (
        "variance_scaling", "clt", "concentration", "coupling", "strong_law",
    ):
        raise ConfigError("k_list entries must satisfy 0 <= k < d")
    if kind == "dpp_concentration":
        if cfg.gin_orders and len(cfg.gin_orders) != len(cfg.l_grid):
            raise ConfigError("gin_orders must pair one truncation order with each l_grid entry")
        for i, side in enumerate(cfg.l_grid):
            order = cfg.gin_orders[i] if cfg.gin_orders else ginibre_order_for_window(side)
            if math.sqrt(order / math.pi) < side / math.sqrt(2.0):
                raise ConfigError(f"truncation order {order} leaves the bulk smaller than the window l={side}")
            if order > GINIBRE_MAX_ORDER:
                raise ConfigError(f"window l={side} needs truncation order {order} above the cap {GINIBRE_MAX_ORDER}")
    if kind == "duality_audit" and cfg.l - 2.0 * cfg.clearance <= 2.0 * cfg.r:
        raise ConfigError("duality_audit needs l - 2*clearance > 2r")
    return cfg


def ginibre_order_for_window(side: float) -> int:
    """Smallest truncation order whose bulk disk covers the centered cube
    of the given side with one unit of radial clearance.

    The truncated intensity at distance delta inside the bulk edge is
    about Phi(2 sqrt(pi) delta), so one unit of clearance keeps the
    deficit below 2e-4 everywhere in the window.
    """
    return math.ceil(math.pi * (side / math.sqrt(2.0) + 1.0) ** 2)


def _parse_value(key: str, val: str):
    if key == "kind":
        return val
    if key in _INT_FIELDS:
        return int(val)
    if key in _FLOAT_FIELDS:
        return float(val)
    if key in _INT_LIST_FIELDS:
        return [int(x.strip()) for x in val.split(",") if x.strip()]
    if key in _FLOAT_LIST_FIELDS:
        return [float(x.strip()) for x in val.split(",") if x.strip()]
    if key in _STR_LIST_FIELDS:
        return [x.strip() for x in val.split(",") if x.strip()]
    raise ValueError(f"unhandled key {key!r}")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def bundled_config_path(name: str):
    """Filesystem path of a config shipped with the package."""
    from importlib.resources import files

    return files("rgcomplex").joinpath("configs", name)


def config_from_dict(values: dict) -> ExperimentConfig:
    """Config from a mapping; the hash covers its canonical rendering."""
    text = canonical_config_text(values)
    return parse_config_text(text)


def derive_seed(master_seed: int, kind: str, rep: int, grid_idx: int = 0, variant_idx: int = 0) -> int:
    """64-bit replication seed; a pure function of its arguments."""
    ss = np.random.SeedSequence((int(master_seed), _KIND_TAGS[kind], int(rep), int(grid_idx), int(variant_idx)))
    state = ss.generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


class StreamingMoments:
    """One-pass mean and central moments up to order four."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.m3 = 0.0
        self.m4 = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        n = self.n
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        term1 = delta * dn * (n - 1)
        self.mean += dn
        self.m4 += term1 * dn2 * (n * n - 3 * n + 3) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3
        self.m3 += term1 * dn * (n - 2) - 3.0 * dn * self.m2
        self.m2 += term1

    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def skewness(self) -> float:
        if self.n < 2 or self.m2 <= 0:
            return 0.0
        return math.sqrt(self.n) * self.m3 / self.m2**1.5

    def excess_kurtosis(self) -> float:
        if self.n < 2 or self.m2 <= 0:
            return 0.0
        return self.n * self.m4 / (self.m2 * self.m2) - 3.0

    def central_moment4(self) -> float:
        return self.m4 / self.n if self.n else 0.0

    def se_mean(self) -> float:
        return math.sqrt(self.variance() / self.n) if self.n > 1 else 0.0

    def se_variance(self) -> float:
        """Standard error of the sample variance from the fourth moment."""
        if self.n < 4:
            return float("inf")
        n = self.n
        s2 = self.variance()
        m4 = self.central_moment4()
        inner = (m4 - s2 * s2 * (n - 3) / (n - 1)) / n
        return math.sqrt(max(inner, 0.0))


def _std_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def ks_normal_statistic(values) -> float:
    """Kolmogorov-Smirnov distance of standardized values to a standard normal."""
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2:
        return 0.0
    sd = arr.std(ddof=1)
    if sd == 0:
        return 1.0
    z = np.sort((arr - arr.mean()) / sd)
    n = len(z)
    d = 0.0
    for i, zi in enumerate(z):
        cdf = _std_normal_cdf(float(zi))
        d = max(d, abs((i + 1) / n - cdf), abs(cdf - i / n))
    return d


def _thermo_radius(r: float, n: int, d: int) -> float:
    return (r / n) ** (1.0 / d)


def _betti_for(points: np.ndarray, r: float, d: int, k_cap: int, p: int):
    c = build_cech(points, r, k_cap=k_cap)
    if p == 2 and k_cap <= 2:
        return betti_numbers_fast2d(c), c
    return betti_numbers(c, p), c


def _s_counts_str(counts) -> str:
    return ";".join(str(v) for v in counts.S)


# ---------------------------------------------------------------------------
# Replication functions: one (rep) -> list of record dicts.


def _rep_strong_law(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rows = []
    k_cap = min(max(cfg.k_list) + 1, cfg.d)
    for gi, side in enumerate(cfg.l_grid):
        seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi)
        sample = sample_homogeneous_poisson(cfg.lam, Window.cube(side, cfg.d), seed)
        bv, c = _betti_for(sample.points, cfg.r, cfg.d, k_cap, cfg.field_p)
        for k in cfg.k_list:
            rows.append({
                "rep": rep, "seed": seed, "variant": "poisson", "grid": side, "k": k,
                "beta": bv[k], "s_counts": _s_counts_str(bv.counts), "chi": bv.chi,
                "n_points": len(sample),
            })
    return rows


def _rep_simplex_law(cfg: ExperimentConfig, rep: int) -> list[dict]:
    # One sample on the padded window W_{l+2r+1} per grid point; the three
    # sandwich terms are the induced complex on W_l, the simplices of the big
    # complex touching W_l, and the whole big complex.
    rows = []
    k_cap = max(cfg.j_list)
    pad = 2.0 * cfg.r + 1.0
    for gi, side in enumerate(cfg.l_grid):
        seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi)
        big_window = Window.cube(side + pad, cfg.d)
        inner = Window.cube(side, cfg.d)
        sample = sample_homogeneous_poisson(cfg.lam, big_window, seed)
        big = build_cech(sample.points, cfg.r, k_cap=k_cap)
        mask = inner.contains(sample.points) if len(sample) else np.zeros(0, dtype=bool)
        window_counts = restrict_to_vertices(big, np.nonzero(mask)[0]).counts()
        touching = count_simplices_touching(big, mask)
        total = big.counts()
        for j in cfg.j_list:
            rows.append({
                "rep": rep, "seed": seed, "variant": "poisson", "grid": side, "k": j,
                "s_window": window_counts[j], "s_touching": touching[j], "s_big": total[j],
                "sandwich_ok": window_counts[j] <= touching[j] <= total[j],
                "n_points": len(sample),
            })
    return rows


def _rep_variance_scaling(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rows = []
    k_cap = min(max(cfg.k_list) + 1, cfg.d)
    density = DensitySpec.uniform(Window.cube(1.0, cfg.d))
    variants = cfg.variants or ["poisson", "binomial"]
    for gi, n in enumerate(cfg.n_grid):
        r_n = _thermo_radius(cfg.r, n, cfg.d)
        for vi, variant in enumerate(variants):
            seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi, vi)
            if variant == "poisson":
                sample = sample_inhomogeneous_poisson(n, density, seed)
            else:
                sample = sample_binomial(n, density, seed)
            bv, _ = _betti_for(sample.points, r_n, cfg.d, k_cap, cfg.field_p)
            for k in cfg.k_list:
                rows.append({
                    "rep": rep, "seed": seed, "variant": variant, "grid": n, "k": k,
                    "beta": bv[k], "s_counts": _s_counts_str(bv.counts), "chi": bv.chi,
                    "n_points": len(sample),
                })
    return rows


def _rep_clt(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rows = []
    k_cap = min(max(cfg.k_list) + 1, cfg.d)
    seq = WindowSequence(dim=cfg.d)
    for gi, n in enumerate(cfg.n_grid):
        for vi, variant in enumerate(cfg.variants):
            seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi, vi)
            if variant == "poisson":
                sample = sample_homogeneous_poisson(1.0, seq.window(n), seed)
            else:
                sample = sample_extended_binomial(n, seq, seed)
            bv, _ = _betti_for(sample.points, cfg.r, cfg.d, k_cap, cfg.field_p)
            for k in cfg.k_list:
                rows.append({
                    "rep": rep, "seed": seed, "variant": variant, "grid": n, "k": k,
                    "beta": bv[k], "s_counts": _s_counts_str(bv.counts), "chi": bv.chi,
                    "n_points": len(sample),
                })
    return rows


def _rep_concentration(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rows = []
    k_cap = min(max(cfg.k_list) + 1, cfg.d)
    density = DensitySpec.uniform(Window.cube(1.0, cfg.d))
    for gi, n in enumerate(cfg.n_grid):
        r_n = _thermo_radius(cfg.r, n, cfg.d)
        seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi)
        sample = sample_binomial(n, density, seed)
        bv, _ = _betti_for(sample.points, r_n, cfg.d, k_cap, cfg.field_p)
        for k in cfg.k_list:
            rows.append({
                "rep": rep, "seed": seed, "variant": "binomial", "grid": n, "k": k,
                "beta": bv[k], "s_counts": _s_counts_str(bv.counts), "chi": bv.chi,
                "n_points": len(sample),
            })
    return rows


def _rep_coupling(cfg: ExperimentConfig, rep: int) -> list[dict]:
    rows = []
    kmax = max(cfg.k_list)
    k_cap = min(kmax + 2, cfg.d)
    density = DensitySpec.uniform(Window.cube(1.0, cfg.d))
    for gi, n in enumerate(cfg.n_grid):
        r_n = _thermo_radius(cfg.r, n, cfg.d)
        seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi)
        poisson_part, binomial_part = sample_coupled_poisson_binomial(n, density, seed)
        count_p = len(poisson_part)
        hi = max(count_p, n)
        lo = min(count_p, n)
        union_pts = poisson_part.points if count_p >= n else binomial_part.points
        union = build_cech(union_pts, r_n, k_cap=k_cap)
        sub = restrict_to_vertices(union, range(lo))
        if cfg.field_p == 2 and k_cap <= 2:
            bv_union = betti_numbers_fast2d(union)
            bv_sub = betti_numbers_fast2d(sub)
        else:
            bv_union = betti_numbers(union, cfg.field_p)
            bv_sub = betti_numbers(sub, cfg.field_p)
        delta_mask = np.zeros(hi, dtype=bool)
        delta_mask[lo:] = True
        touching = count_simplices_touching(union, delta_mask)
        bv_p, bv_b = (bv_union, bv_sub) if count_p >= n else (bv_sub, bv_union)
        for k in cfg.k_list:
            majorant = touching[k] + touching[k + 1]
            absdiff = abs(bv_p[k] - bv_b[k])
            rows.append({
                "rep": rep, "seed": seed, "variant": "coupled", "grid": n, "k": k,
                "beta_poisson": bv_p[k], "beta_binomial": bv_b[k], "abs_diff": absdiff,
                "majorant": majorant, "dominated": absdiff <= majorant,
                "n_poisson": count_p,
            })
    return rows


def _rep_dpp(cfg: ExperimentConfig, rep: int) -> list[dict]:
    # Cube window of side l inside the Ginibre bulk; the Poisson variant is
    # the matched unit-intensity process on the same window. The removal
    # check exercises the one-point Lipschitz bound for component counts.
    rows = []
    khat, _ = packing_lower_bound(2)
    for gi, side in enumerate(cfg.l_grid):
        order = cfg.gin_orders[gi] if cfg.gin_orders else ginibre_order_for_window(side)
        window = Window.cube(side, 2)
        for vi, variant in enumerate(("ginibre", "poisson")):
            seed = derive_seed(cfg.master_seed, cfg.kind, rep, gi, vi)
            if variant == "ginibre":
                sample = restrict(sample_ginibre(order, seed), window)
            else:
                sample = sample_homogeneous_poisson(1.0, window, seed)
            pts = sample.points
            bv = betti_numbers_fast2d(build_cech(pts, cfg.r, k_cap=1))
            beta0 = bv[0]
            delta_remove = 0
            lipschitz_ok = True
            if len(pts) > 1:
                rng = derived_rng(seed, 99)
                drop = int(rng.integers(len(pts)))
                keep = np.ones(len(pts), dtype=bool)
                keep[drop] = False
                bv2 = betti_numbers_fast2d(build_cech(pts[keep], cfg.r, k_cap=1))
                delta_remove = bv2[0] - beta0
                lipschitz_ok = -1 <= delta_remove <= khat
            rows.append({
                "rep": rep, "seed": seed, "variant": variant, "grid": side, "k": 0,
                "beta": beta0, "n_points": len(pts), "gin_order": order,
                "delta_remove": delta_remove, "lipschitz_ok": lipschitz_ok,
            })
    return rows


def _rep_duality(cfg: ExperimentConfig, rep: int) -> list[dict]:
    seed = derive_seed(cfg.master_seed, cfg.kind, rep)
    outer = Window.cube(cfg.l, 2)
    inner = Window.cube(cfg.l - 2.0 * cfg.clearance, 2)
    sample = sample_homogeneous_poisson(cfg.lam, outer, seed)
    restricted = restrict(sample, inner)
    bv = betti_numbers_fast2d(build_cech(restricted.points, cfg.r, k_cap=2))
    beta1 = bv[1]
    resolution = cfg.res_per_r / cfg.r
    bounded, touching = vacant_component_count(restricted.points, cfg.r, outer, resolution)
    agree = beta1 == bounded
    resolved = agree
    bounded2 = bounded
    if not agree:
        bounded2, _ = vacant_component_count(restricted.points, cfg.r, outer, 2.0 * resolution)
        resolved = beta1 == bounded2
    return [{
        "rep": rep, "seed": seed, "variant": "poisson", "grid": cfg.l, "k": 1,
        "beta": beta1, "bounded_vacant": bounded, "touching_vacant": touching,
        "agree": agree, "bounded_vacant_2x": bounded2, "resolved_2x": resolved,
        "n_points": len(restricted),
    }]


_REPLICATORS = {
    "strong_law": _rep_strong_law,
    "simplex_law": _rep_simplex_law,
    "variance_scaling": _rep_variance_scaling,
    "clt": _rep_clt,
    "concentration": _rep_concentration,
    "coupling": _rep_coupling,
    "dpp_concentration": _rep_dpp,
    "duality_audit": _rep_duality,
}

_RECORD_COLUMNS = {
    "strong_law": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "s_counts", "chi", "n_points"],
    "simplex_law": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "s_window", "s_touching", "s_big", "sandwich_ok", "n_points"],
    "variance_scaling": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "s_counts", "chi", "n_points"],
    "clt": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "s_counts", "chi", "n_points"],
    "concentration": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "s_counts", "chi", "n_points"],
    "coupling": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta_poisson", "beta_binomial", "abs_diff", "majorant", "dominated", "n_poisson"],
    "dpp_concentration": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "n_points", "gin_order", "delta_remove", "lipschitz_ok"],
    "duality_audit": ["config_hash", "kind", "rep", "seed", "variant", "grid", "k", "beta", "bounded_vacant", "touching_vacant", "agree", "bounded_vacant_2x", "resolved_2x", "n_points"],
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


@dataclass
class ReplicationRecord:
    """One replication's row, plus the wall time it took on this run.

    The wall time is runtime telemetry and never enters records.csv, so
    reruns stay byte-identical; everything else is a pure function of
    (config hash, replication index).
    """

    config_hash: str
    kind: str
    rep: int
    seed: int
    variant: str
    grid: float
    k: int
    metrics: dict
    wall_time: float | None = None

    @staticmethod
    def from_row(row: dict, wall_time: float | None = None) -> "ReplicationRecord":
        head = {"config_hash", "kind", "rep", "seed", "variant", "grid", "k"}
        metrics = {key: v for key, v in row.items() if key not in head}
        return ReplicationRecord(
            config_hash=row["config_hash"], kind=row["kind"], rep=row["rep"],
            seed=row["seed"], variant=row["variant"], grid=row["grid"], k=row["k"],
            metrics=metrics, wall_time=wall_time,
        )


def _replicate_task(args) -> tuple[int, list[dict], float]:
    cfg_values, rep = args
    cfg = config_from_dict(cfg_values)
    t0 = perf_counter()
    rows = _REPLICATORS[cfg.kind](cfg, rep)
    return rep, rows, perf_counter() - t0


def _config_values(cfg: ExperimentConfig) -> dict:
    skip = {"raw_text"}
    values = {k: v for k, v in asdict(cfg).items() if k not in skip}
    return values


def run_replications(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[dict], dict]:
    """(rows in replication order, wall time per replication).

    Rows are independent of the worker count; wall times are telemetry.
    """
    reps = range(cfg.reps)
    results = {}
    walls = {}
    if workers <= 1:
        for rep in reps:
            t0 = perf_counter()
            results[rep] = _REPLICATORS[cfg.kind](cfg, rep)
            walls[rep] = perf_counter() - t0
    else:
        values = _config_values(cfg)
        tasks = [(values, rep) for rep in reps]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, rows, dt in pool.map(_replicate_task, tasks, chunksize=max(1, cfg.reps // (4 * workers))):
                results[rep] = rows
                walls[rep] = dt
    out = []
    chash = cfg.config_hash()
    for rep in reps:
        for row in results[rep]:
            row = dict(row)
            row["config_hash"] = chash
            row["kind"] = cfg.kind
            out.append(row)
    return out, walls


# ---------------------------------------------------------------------------
# Summaries.


def _group(rows: list[dict], keys: tuple[str, ...]) -> dict:
    grouped: dict = {}
    for row in rows:
        grouped.setdefault(tuple(row[k] for k in keys), []).append(row)
    return grouped


def _moment_summary(values) -> dict:
    mom = StreamingMoments()
    for v in values:
        mom.push(float(v))
    return {
        "reps": mom.n,
        "mean": mom.mean,
        "variance": mom.variance(),
        "se_mean": mom.se_mean(),
        "skewness": mom.skewness(),
        "excess_kurtosis": mom.excess_kurtosis(),
        "se_variance": mom.se_variance(),
    }


def summarize(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    """Per grid point summary rows; kind decides the extra columns."""
    kind = cfg.kind
    out = []
    if kind in ("strong_law", "variance_scaling", "clt", "concentration"):
        for (variant, grid, k), grp in sorted(_group(rows, ("variant", "grid", "k")).items()):
            betas = [g["beta"] for g in grp]
            s = _moment_summary(betas)
            s.update({"kind": kind, "variant": variant, "grid": grid, "k": k})
            if kind == "strong_law":
                vol = float(grid) ** cfg.d
                s["mean_per_volume"] = s["mean"] / vol
                s["cv"] = math.sqrt(s["variance"]) / s["mean"] if s["mean"] else float("inf")
            if kind == "variance_scaling":
                s["var_per_n"] = s["variance"] / float(grid)
                s["se_var_per_n"] = s["se_variance"] / float(grid)
                s["var_positive_3se"] = s["variance"] - 3.0 * s["se_variance"] > 0.0
            if kind == "clt":
                s["ks"] = ks_normal_statistic(betas)
                s["conditional"] = cfg.d >= 3 and variant == "extended_binomial"
            if kind == "concentration":
                thr = cfg.eps * float(grid) ** cfg.a
                mean = s["mean"]
                s["tail_threshold"] = thr
                s["tail_freq"] = float(np.mean([abs(b - mean) >= thr for b in betas]))
                gamma = (2.0 * cfg.a - 1.0) / (4.0 * k) if k >= 1 else float("nan")
                s["gamma"] = gamma
            out.append(s)
        if kind == "strong_law":
            # Deviation between consecutive grid means of beta_k per volume.
            by_series: dict = {}
            for s in out:
                by_series.setdefault((s["variant"], s["k"]), []).append(s)
            for series in by_series.values():
                series.sort(key=lambda s: s["grid"])
                for prev, cur in zip(series, series[1:]):
                    cur["consec_mean_dev"] = abs(cur["mean_per_volume"] - prev["mean_per_volume"])
        if kind == "concentration":
            # Envelope calibrated at the smallest grid point per k.
            for k in cfg.k_list:
                per_k = [s for s in out if s["k"] == k]
                per_k.sort(key=lambda s: s["grid"])
                base = per_k[0]
                n0 = float(base["grid"])
                gamma = base["gamma"]
                tail0 = max(base["tail_freq"], 1.0 / base["reps"])
                cconst = tail0 * cfg.eps * n0 ** (cfg.a - 2.0 * k - 2.0) * math.exp(n0**gamma)
                for s in per_k:
                    n = float(s["grid"])
                    s["envelope"] = (cconst / cfg.eps) * n ** (2.0 * k + 2.0 - cfg.a) * math.exp(-(n**gamma))
                    s["envelope_dominates"] = s["tail_freq"] <= s["envelope"] + 1e-12
    elif kind == "simplex_law":
        for (grid, j), grp in sorted(_group(rows, ("grid", "k")).items()):
            vol = float(grid) ** cfg.d
            s = _moment_summary([g["s_window"] / vol for g in grp])
            s.update({
                "kind": kind, "variant": "poisson", "grid": grid, "k": j,
                "sandwich_all_ok": all(g["sandwich_ok"] for g in grp),
            })
            if cfg.d == 2 and j == 1:
                s["exact_mean_per_volume"] = expected_edge_count_square(cfg.lam, float(grid), cfg.r) / vol
            out.append(s)
    elif kind == "coupling":
        for (grid, k), grp in sorted(_group(rows, ("grid", "k")).items()):
            n = float(grid)
            s = _moment_summary([g["abs_diff"] / n for g in grp])
            s.update({
                "kind": kind, "variant": "coupled", "grid": grid, "k": k,
                "dominated_all": all(g["dominated"] for g in grp),
                "mean_majorant_per_n": float(np.mean([g["majorant"] / n for g in grp])),
            })
            out.append(s)
    elif kind == "dpp_concentration":
        for (variant, grid), grp in sorted(_group(rows, ("variant", "grid")).items()):
            betas = [g["beta"] for g in grp]
            s = _moment_summary(betas)
            thr = cfg.eps * float(grid) ** cfg.a
            mean = s["mean"]
            s.update({
                "kind": kind, "variant": variant, "grid": grid, "k": 0,
                "tail_threshold": thr,
                "tail_freq": float(np.mean([abs(b - mean) >= thr for b in betas])),
                "lipschitz_all_ok": all(g["lipschitz_ok"] for g in grp),
            })
            out.append(s)
        gin = {s["grid"]: s for s in out if s["variant"] == "ginibre"}
        poi = {s["grid"]: s for s in out if s["variant"] == "poisson"}
        for grid, s in gin.items():
            if grid in poi:
                s["variance_below_poisson"] = s["variance"] <= poi[grid]["variance"]
    elif kind == "duality_audit":
        agree = sum(1 for g in rows if g["agree"])
        s = {
            "kind": kind, "variant": "poisson", "grid": cfg.l, "k": 1,
            "reps": len(rows), "agree_count": agree,
            "agree_frac": agree / len(rows) if rows else 0.0,
            "all_resolved_2x": all(g["resolved_2x"] for g in rows),
            "mean": float(np.mean([g["beta"] for g in rows])) if rows else 0.0,
        }
        out.append(s)
    return out


def expected_edge_count_square(lam: float, side: float, r: float) -> float:
    """Exact mean edge count on a square window of the given side.

    Integrates the pair intensity over the square for the cutoff R = 2r,
    valid for R <= side:
    (lam^2 / 2) * (side^2 pi R^2 - (8/3) side R^3 + R^4 / 2).
    """
    R = 2.0 * r
    if R > side:
        raise ValueError("closed form requires 2r <= side")
    return 0.5 * lam * lam * (side * side * math.pi * R * R - (8.0 / 3.0) * side * R**3 + 0.5 * R**4)


# ---------------------------------------------------------------------------
# Output writing.


def _write_csv(path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


_SUMMARY_BASE = ["kind", "variant", "grid", "k", "reps", "mean", "variance", "se_mean", "skewness", "excess_kurtosis", "se_variance", "ks"]

_SUMMARY_EXTRAS = {
    "strong_law": ["mean_per_volume", "cv", "consec_mean_dev"],
    "simplex_law": ["sandwich_all_ok", "exact_mean_per_volume"],
    "variance_scaling": ["var_per_n", "se_var_per_n", "var_positive_3se"],
    "clt": ["conditional"],
    "concentration": ["tail_threshold", "tail_freq", "gamma", "envelope", "envelope_dominates"],
    "coupling": ["dominated_all", "mean_majorant_per_n"],
    "dpp_concentration": ["tail_threshold", "tail_freq", "lipschitz_all_ok", "variance_below_poisson"],
    "duality_audit": ["agree_count", "agree_frac", "all_resolved_2x"],
}


def _plot(cfg: ExperimentConfig, rows: list[dict], summaries: list[dict], plot_dir: str) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "rgcomplex"
    written = []

    def save(fig, name: str) -> None:
        path = os.path.join(plot_dir, name)
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    kind = cfg.kind
    if kind in ("strong_law", "variance_scaling", "clt", "concentration", "coupling", "simplex_law", "dpp_concentration"):
        fig, ax = plt.subplots(figsize=(6, 4))
        series: dict = {}
        for s in summaries:
            label = f"{s['variant']} k={s['k']}"
            key = {
                "strong_law": "mean_per_volume",
                "simplex_law": "mean",
                "variance_scaling": "var_per_n",
                "clt": "mean",
                "concentration": "tail_freq",
                "coupling": "mean",
                "dpp_concentration": "variance",
            }[kind]
            series.setdefault(label, []).append((s["grid"], s[key], s.get("se_mean", 0.0)))
        for label, pts in sorted(series.items()):
            pts.sort()
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            es = [p[2] for p in pts]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=label)
        ax.set_xlabel("grid")
        ax.set_ylabel(kind)
        ax.legend(fontsize=8)
        fig.tight_layout()
        save(fig, "trajectory.svg")
    if kind == "clt":
        from scipy.special import ndtri

        grid = max(cfg.n_grid)
        fig, ax = plt.subplots(figsize=(5, 5))
        for variant in cfg.variants:
            for k in cfg.k_list:
                vals = np.asarray([
                    row["beta"] for row in rows
                    if row["variant"] == variant and row["grid"] == grid and row["k"] == k
                ], dtype=float)
                if len(vals) < 3 or vals.std(ddof=1) == 0:
                    continue
                z = np.sort((vals - vals.mean()) / vals.std(ddof=1))
                q = ndtri((np.arange(len(z)) + 0.5) / len(z))
                ax.plot(q, z, marker=".", linestyle="none", label=f"{variant} k={k}")
        lim = ax.get_xlim()
        ax.plot(lim, lim, color="gray", linewidth=0.8)
        ax.set_xlabel("normal quantiles")
        ax.set_ylabel("standardized beta quantiles")
        ax.legend(fontsize=8)
        fig.tight_layout()
        save(fig, "qq.svg")
    if kind == "duality_audit":
        fig, ax = plt.subplots(figsize=(5, 5))
        xs = [row["beta"] for row in rows]
        ys = [row["bounded_vacant"] for row in rows]
        hi = max(xs + ys + [1])
        ax.plot([0, hi], [0, hi], color="gray", linewidth=0.8)
        ax.plot(xs, ys, marker=".", linestyle="none", alpha=0.5)
        ax.set_xlabel("beta_1")
        ax.set_ylabel("bounded vacant components")
        fig.tight_layout()
        save(fig, "duality.svg")
    return written


@dataclass
class RunManifest:
    """Provenance for one experiment run directory."""

    version: str
    kind: str
    config_hash: str
    master_seed: int
    workers: int
    started_utc: str
    finished_utc: str
    records_path: str
    summary_path: str
    plot_paths: list[str]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict]
    summaries: list[dict]
    out_dir: str
    manifest: RunManifest
    wall_times: dict = field(default_factory=dict)

    def replication_records(self) -> list[ReplicationRecord]:
        return [ReplicationRecord.from_row(row, self.wall_times.get(row["rep"])) for row in self.records]


def run_experiment(cfg: ExperimentConfig, out_dir, workers: int = 1) -> ExperimentResult:
    """Run all replications, then write records.csv, summary.csv, and plots."""
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    plot_dir = os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    rows, walls = run_replications(cfg, workers=workers)
    summaries = summarize(cfg, rows)
    records_path = os.path.join(out_dir, "records.csv")
    _write_csv(records_path, _RECORD_COLUMNS[cfg.kind], rows)
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_csv(summary_path, _SUMMARY_BASE + _SUMMARY_EXTRAS[cfg.kind], summaries)
    plot_paths = _plot(cfg, rows, summaries, plot_dir)
    finished = datetime.now(timezone.utc).isoformat()
    manifest = RunManifest(
        version=__version__, kind=cfg.kind, config_hash=cfg.config_hash(),
        master_seed=cfg.master_seed, workers=workers, started_utc=started,
        finished_utc=finished, records_path=records_path, summary_path=summary_path,
        plot_paths=plot_paths,
    )
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return ExperimentResult(
        config=cfg, records=rows, summaries=summaries, out_dir=out_dir,
        manifest=manifest, wall_times=walls,
    )


@dataclass(frozen=True)
class SummaryStats:
    """Summary rows of one experiment, one row per grid point and k."""

    kind: str
    config_hash: str
    rows: tuple

    def row(self, **keys) -> dict:
        hits = [r for r in self.rows if all(r.get(f) == v for f, v in keys.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} summary rows match {keys!r}")
        return hits[0]


def _run_kind(cfg: ExperimentConfig, kind: str, workers: int = 1) -> SummaryStats:
    if cfg.kind != kind:
        raise ValueError(f"config kind is {cfg.kind!r}, expected {kind!r}")
    rows, _ = run_replications(cfg, workers=workers)
    return SummaryStats(kind=kind, config_hash=cfg.config_hash(), rows=tuple(summarize(cfg, rows)))


def run_strong_law(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Betti densities beta_k/l^d over an ascending window grid."""
    return _run_kind(cfg, "strong_law", workers)


def run_simplex_law(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Simplex-count densities with the per-replication window sandwich."""
    return _run_kind(cfg, "simplex_law", workers)


def run_variance_scaling(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Var(beta_k)/n across an n-grid under thermodynamic scaling."""
    return _run_kind(cfg, "variance_scaling", workers)


def run_clt(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Normality diagnostics for standardized beta_k replications."""
    return _run_kind(cfg, "clt", workers)


def run_concentration(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Empirical tail frequencies at eps*n^a thresholds over an n-grid."""
    return _run_kind(cfg, "concentration", workers)


def run_coupling(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Coupled Poisson/binomial beta_k differences against their majorant."""
    return _run_kind(cfg, "coupling", workers)


def run_dpp_concentration(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """beta_0 concentration for truncated Ginibre against matched Poisson."""
    return _run_kind(cfg, "dpp_concentration", workers)


def run_duality_audit(cfg: ExperimentConfig, workers: int = 1) -> SummaryStats:
    """Agreement of beta_1 with bounded vacant components per replication."""
    return _run_kind(cfg, "duality_audit", workers)
