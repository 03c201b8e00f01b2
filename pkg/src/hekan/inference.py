"""Encrypted KAN inference pipeline.

Wires the pieces together per layer: the activation-polynomial branch and
the packed B-spline branch, joined by baby-step/giant-step matrix-vector
products. The lazy path applies permutation-fused weights directly to the
basis layout; the naive path first reorders homomorphically via a
permutation-matrix product. A static depth planner predicts the exact level
consumption before anything runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .approx import build_composite_sign, eval_poly_he, poly_eval_depth
from .backend import BackendConfig, CipherText, HeBackend, make_backend
from .bspline import (
    EXACT_COMPARATOR,
    basis_depth,
    bspline_basis_he,
    default_bsgs_split,
    gen_permutation,
    repeat_pack,
)
from .errors import DepthBudgetInfeasible, DimensionMismatch, ShapeMismatch
from .model import KanLayer, KanModel


# ---------------------------------------------------------------------------
# configuration and statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """How to run the encrypted pipeline."""

    comparator_mode: str = "composite"   # "composite" | "exact"
    path: str = "lazy"                   # "lazy" | "naive"
    backend: BackendConfig | None = None
    bsgs_split: tuple | None = None
    alpha: float = 7.0                   # comparator separation 2^-alpha
    target_eps: float = 2.0 ** -10
    check_range: bool = False
    label: str = ""

    def __post_init__(self):
        if self.comparator_mode not in ("composite", "exact"):
            raise ValueError(f"unknown comparator_mode {self.comparator_mode!r}")
        if self.path not in ("lazy", "naive"):
            raise ValueError(f"unknown path {self.path!r}")

    def comparator(self):
        if self.comparator_mode == "exact":
            return EXACT_COMPARATOR
        return build_composite_sign(self.alpha, self.target_eps)

    def describe(self) -> str:
        return self.label or f"{self.path}/{self.comparator_mode}"


@dataclass
class LayerStats:
    rotations: int = 0
    ct_mults: int = 0
    pt_mults: int = 0
    adds: int = 0
    depth_consumed: int = 0
    wall_time_ms: float = 0.0

    @property
    def count_total(self) -> int:
        """Rotations plus all multiplications: the portable cost metric."""
        return self.rotations + self.ct_mults + self.pt_mults


@dataclass
class InferenceStats:
    per_layer: list = field(default_factory=list)

    @property
    def total(self) -> LayerStats:
        tot = LayerStats()
        for ls in self.per_layer:
            tot.rotations += ls.rotations
            tot.ct_mults += ls.ct_mults
            tot.pt_mults += ls.pt_mults
            tot.adds += ls.adds
            tot.depth_consumed += ls.depth_consumed
            tot.wall_time_ms += ls.wall_time_ms
        return tot

    def to_json(self) -> dict:
        def row(ls):
            return {"rotations": ls.rotations, "ct_mults": ls.ct_mults,
                    "pt_mults": ls.pt_mults, "adds": ls.adds,
                    "depth_consumed": ls.depth_consumed,
                    "wall_time_ms": ls.wall_time_ms}
        return {"per_layer": [row(l) for l in self.per_layer], "total": row(self.total)}


# ---------------------------------------------------------------------------
# input encoding
# ---------------------------------------------------------------------------


def raster_flatten(tensor) -> np.ndarray:
    """Raster-scan order: index (y * w + x) * c + ch."""
    return np.asarray(tensor, dtype=float).reshape(-1)


def encrypt_input(tensor, model: KanModel, backend: HeBackend) -> CipherText:
    arr = np.asarray(tensor, dtype=float)
    expect = tuple(model.input_shape)
    if arr.shape != expect:
        if arr.ndim == 1 and arr.size == model.n_in:
            pass  # already rastered
        else:
            raise ShapeMismatch(f"input shape {arr.shape}, model expects {expect}")
    flat = raster_flatten(arr)
    return backend.encrypt(flat)


# ---------------------------------------------------------------------------
# BSGS matrix-vector product
# ---------------------------------------------------------------------------


def bsgs_matvec(W: np.ndarray, v: CipherText, split: tuple | None = None) -> CipherText:
    """Diagonal-method matrix-vector product with baby/giant rotation steps.

    W is n_o x n_in (cleartext); v holds the operand in its first n_in slots
    with zeros elsewhere. The matrix is zero-padded square, so the result
    occupies exactly the first n_o slots (zeros elsewhere). Consumes one
    level; rotations <= babies + giants - 1 including the wraparound
    duplication.
    """
    be = v.backend
    S = be.config.slot_count
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n_o, n_in = W.shape
    m = max(n_o, n_in)
    if m > S:
        raise DimensionMismatch(f"matrix dimension {m} exceeds {S} slots")
    if m > 1 and 2 * m > S:
        raise DimensionMismatch(
            f"diagonal wraparound needs 2 * {m} <= {S} slots (single-ciphertext scope)")
    wsq = np.zeros((m, m))
    wsq[:n_o, :n_in] = W

    if split is None:
        split = default_bsgs_split(m)
    b, gs = split
    if b < 1 or gs < 1 or b * gs < m:
        raise DimensionMismatch(f"split {split} cannot cover dimension {m}")

    # duplicated operand so rotations read wrapped coordinates correctly
    vfull = be.add(v, be.rotate(v, -m)) if m > 1 else v
    babies = [be.rotate(vfull, i) for i in range(min(b, m))]

    rows = np.arange(m)
    acc = None
    for j in range(gs):
        base = j * b
        if base >= m:
            break
        block = None
        for i in range(min(b, m - base)):
            d = base + i
            diag = wsq[rows, (rows + d) % m]
            pt = np.zeros(S)
            pt[:m] = diag
            pt = np.roll(pt, base)
            term = be.mul(babies[i], pt)
            block = term if block is None else be.add(block, term)
        rotated = be.rotate(block, base)
        acc = rotated if acc is None else be.add(acc, rotated)
    return acc


def bsgs_rotation_bound(n: int, split: tuple | None = None) -> int:
    """Upper bound on rotations used by bsgs_matvec for dimension n."""
    if n <= 1:
        return 0
    b, gs = split if split is not None else default_bsgs_split(n)
    return b + gs - 1


# ---------------------------------------------------------------------------
# depth planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerPlan:
    stages: dict
    silu_branch: int
    spline_branch: int

    @property
    def total(self) -> int:
        return max(self.silu_branch, self.spline_branch)


@dataclass(frozen=True)
class ModelPlan:
    layers: tuple

    @property
    def total(self) -> int:
        return sum(lp.total for lp in self.layers)

    def describe(self) -> str:
        lines = []
        for idx, lp in enumerate(self.layers):
            items = ", ".join(f"{k}={v}" for k, v in lp.stages.items())
            lines.append(f"layer {idx}: {items} | silu branch {lp.silu_branch}, "
                         f"spline branch {lp.spline_branch}, layer {lp.total}")
        lines.append(f"total depth {self.total}")
        return "\n".join(lines)


def plan_layer(layer: KanLayer, cfg: PipelineConfig) -> LayerPlan:
    comp = cfg.comparator()
    d_poly = poly_eval_depth(layer.silu_poly)
    stages = {
        "silu_poly": d_poly,
        "silu_mask": 1,
        "base_matvec": 1,
        "repeat_pack": 1,
        "comparator_scale": 1,
        "comparator": comp.depth(),
        "basis_order0": 1,
        "basis_recursion": layer.k,
        "spline_matvec": 1 if cfg.path == "lazy" else 2,
    }
    silu_branch = d_poly + 2
    spline_branch = 1 + basis_depth(layer.k, comp) + stages["spline_matvec"]
    return LayerPlan(stages=stages, silu_branch=silu_branch, spline_branch=spline_branch)


def plan_model(model: KanModel, cfg: PipelineConfig) -> ModelPlan:
    return ModelPlan(tuple(plan_layer(layer, cfg) for layer in model.layers))


def check_depth_budget(model: KanModel, cfg: PipelineConfig, available: int) -> ModelPlan:
    plan = plan_model(model, cfg)
    if plan.total > available:
        raise DepthBudgetInfeasible(
            f"planned depth {plan.total} exceeds available level {available}\n"
            + plan.describe(), plan=plan)
    return plan


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def layer_forward_he(layer: KanLayer, ct: CipherText, cfg: PipelineConfig) -> CipherText:
    be = ct.backend
    comp = cfg.comparator()
    S = be.config.slot_count

    # activation branch: polynomial on the raw input, masked, then W_b
    base = eval_poly_he(ct, layer.silu_poly)
    mask = np.zeros(S)
    mask[: layer.n_i] = 1.0
    base = be.mul(base, mask)
    base_out = bsgs_matvec(layer.W_b, base, cfg.bsgs_split)

    # spline branch: packed basis then the (fused or two-step) linear map
    xp = repeat_pack(ct, layer.g, layer.k, layer.n_i)
    bv = bspline_basis_he(xp, layer.grid, comp, check_range=cfg.check_range)
    if cfg.path == "lazy":
        spline_out = bsgs_matvec(layer.w_fused, bv.ct, cfg.bsgs_split)
    else:
        perm = gen_permutation(layer.n_i, layer.grid.n_basis).as_matrix()
        repacked = bsgs_matvec(perm, bv.ct, cfg.bsgs_split)
        spline_out = bsgs_matvec(layer.w_prime, repacked, cfg.bsgs_split)

    return be.add(base_out, spline_out)


def model_forward_he(model: KanModel, ct: CipherText,
                     cfg: PipelineConfig) -> tuple:
    """Run the whole model; returns (ciphertext, InferenceStats).

    Depth feasibility is checked statically against the input level before
    any homomorphic work happens.
    """
    be = ct.backend
    check_depth_budget(model, cfg, ct.level)
    stats = InferenceStats()
    out = ct
    for layer in model.layers:
        before = be.counter.copy()
        level_in = out.level
        t0 = time.perf_counter()
        out = layer_forward_he(layer, out, cfg)
        dt = (time.perf_counter() - t0) * 1e3
        delta = be.counter.since(before)
        stats.per_layer.append(LayerStats(
            rotations=delta.rotations,
            ct_mults=delta.ct_mults,
            pt_mults=delta.pt_mults,
            adds=delta.adds + delta.subs,
            depth_consumed=level_in - out.level,
            wall_time_ms=dt,
        ))
    return out, stats


# ---------------------------------------------------------------------------
# benchmarking
# ---------------------------------------------------------------------------

BENCH_CSV_COLUMNS = ("config", "path", "rotations", "ct_mults", "pt_mults",
                     "depth", "wall_ms", "speedup_vs_naive_counts")


def bench_compare(model: KanModel, inputs, cfgs) -> list:
    """Run each config over the inputs; returns one row dict per config.

    Counts are summed across inputs; depth is per inference. Lazy rows carry
    the rotation+multiplication count ratio of their naive twin (same config
    apart from the path); naive rows carry 1.0.
    """
    inputs = list(inputs)
    if not inputs:
        raise ValueError("bench_compare needs at least one input")
    rows = []
    for cfg in cfgs:
        if cfg.backend is None:
            raise ValueError(f"config {cfg.describe()} has no backend settings")
        backend = make_backend(cfg.backend)
        agg = LayerStats()
        depth = 0
        for x in inputs:
            ct = encrypt_input(np.asarray(x), model, backend)
            _, stats = model_forward_he(model, ct, cfg)
            tot = stats.total
            agg.rotations += tot.rotations
            agg.ct_mults += tot.ct_mults
            agg.pt_mults += tot.pt_mults
            agg.adds += tot.adds
            agg.wall_time_ms += tot.wall_time_ms
            depth = tot.depth_consumed
        rows.append({
            "config": cfg.describe(), "path": cfg.path,
            "rotations": agg.rotations, "ct_mults": agg.ct_mults,
            "pt_mults": agg.pt_mults, "depth": depth,
            "wall_ms": round(agg.wall_time_ms, 3),
            "speedup_vs_naive_counts": 1.0,
            "_twin": (cfg.label, cfg.comparator_mode, cfg.alpha, cfg.backend.slot_count),
        })
    by_twin = {}
    for row, cfg in zip(rows, cfgs):
        by_twin.setdefault(row["_twin"], {})[cfg.path] = row
    for pair in by_twin.values():
        if "lazy" in pair and "naive" in pair:
            lazy_counts = (pair["lazy"]["rotations"] + pair["lazy"]["ct_mults"]
                           + pair["lazy"]["pt_mults"])
            naive_counts = (pair["naive"]["rotations"] + pair["naive"]["ct_mults"]
                            + pair["naive"]["pt_mults"])
            pair["lazy"]["speedup_vs_naive_counts"] = round(naive_counts / lazy_counts, 4)
    for row in rows:
        row.pop("_twin")
    return rows


def write_bench_csv(rows, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in BENCH_CSV_COLUMNS})


def bench_lazy_vs_naive(shape_configs, slot_count: int = 2 ** 15,
                        depth_budget: int = 32, n_o: int = 10,
                        comparator_mode: str = "composite",
                        seed: int = 0) -> list:
    """Table-style sweep: one random single-layer model per (n_i, g, k),
    both paths, with paired count ratios."""
    from .model import random_model

    all_rows = []
    bcfg = BackendConfig(slot_count=slot_count, depth_budget=depth_budget)
    rng = np.random.default_rng(seed)
    for n_i, g, k in shape_configs:
        mdl = random_model([n_i, n_o], g=g, k=k, seed=seed)
        x = rng.uniform(-1, 1, n_i)
        label = f"({n_i},{g},{k})"
        cfgs = [
            PipelineConfig(path="lazy", comparator_mode=comparator_mode,
                           backend=bcfg, label=label),
            PipelineConfig(path="naive", comparator_mode=comparator_mode,
                           backend=bcfg, label=label),
        ]
        all_rows.extend(bench_compare(mdl, [x], cfgs))
    return all_rows
