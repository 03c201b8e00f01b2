"""Plaintext KAN reference model, desk-scale layer fitting, and model JSON.

The exact forward pass is the ground-truth oracle; the mirrored forward
substitutes the fitted activation polynomial and the comparator emulation so
it predicts the encrypted pipeline on the arithmetic backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .approx import (
    Polynomial,
    WeightScheme,
    estimate_range,
    eval_poly_clear,
    fit_weighted_ls,
)
from .bspline import (
    GridMatrix,
    basis_clear,
    bspline_basis_plain,
    default_bsgs_split,
    fuse_weights,
    gen_permutation,
)
from .errors import (
    CorruptFile,
    DimensionMismatch,
    SchemaMismatch,
    SingularSystem,
)

SCHEMA_VERSION = 1


def silu(x):
    """x * sigmoid(x)."""
    x = np.asarray(x, dtype=float)
    out = x * expit(x)
    return float(out) if out.ndim == 0 else out


def phi(x: float, w_b: float, w_s: float, spline_coeffs, knots, k: int) -> float:
    """Single edge activation: w_b * silu(x) + w_s * sum_m c_m B_{m,k}(x)."""
    basis = bspline_basis_plain(x, knots, k)
    coeffs = np.asarray(spline_coeffs, dtype=float)
    if coeffs.size != basis.size:
        raise DimensionMismatch(f"{coeffs.size} coefficients for {basis.size} basis functions")
    return w_b * silu(x) + w_s * float(coeffs @ basis)


@dataclass(eq=False)
class KanLayer:
    """One KAN layer: base weights, spline coefficient tensor, grid,
    fitted activation polynomial, and the activation input moments."""

    W_b: np.ndarray          # (n_o, n_i)
    S: np.ndarray            # (n_o, n_i, g + k)
    grid: GridMatrix
    silu_poly: Polynomial
    act_stats: tuple = (0.0, 1.0)

    def __post_init__(self):
        self.W_b = np.asarray(self.W_b, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.W_b.ndim != 2:
            raise DimensionMismatch("W_b must be 2-D")
        n_o, n_i = self.W_b.shape
        if self.S.shape != (n_o, n_i, self.grid.n_basis):
            raise DimensionMismatch(
                f"S shape {self.S.shape} != {(n_o, n_i, self.grid.n_basis)}")
        if self.grid.n_i != n_i:
            raise DimensionMismatch(f"grid has {self.grid.n_i} rows for n_i = {n_i}")

    @property
    def n_i(self) -> int:
        return self.W_b.shape[1]

    @property
    def n_o(self) -> int:
        return self.W_b.shape[0]

    @property
    def g(self) -> int:
        return self.grid.g

    @property
    def k(self) -> int:
        return self.grid.k

    @cached_property
    def w_prime(self) -> np.ndarray:
        """Combined spline weights, row-major over (feature, basis) pairs."""
        return self.S.reshape(self.n_o, self.n_i * self.grid.n_basis)

    @cached_property
    def w_fused(self) -> np.ndarray:
        """W' folded with the column-tile permutation: applies directly to
        the encrypted basis layout."""
        perm = gen_permutation(self.n_i, self.grid.n_basis)
        return fuse_weights(self.w_prime, perm)


@dataclass(eq=False)
class KanModel:
    layers: list
    input_shape: tuple  # (h, w, c)

    def __post_init__(self):
        if not self.layers:
            raise DimensionMismatch("model needs at least one layer")
        h, w, c = self.input_shape
        if h * w * c != self.layers[0].n_i:
            raise DimensionMismatch(
                f"input shape {self.input_shape} gives {h * w * c} features, "
                f"first layer expects {self.layers[0].n_i}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_o != b.n_i:
                raise DimensionMismatch(f"layer widths {a.n_o} -> {b.n_i} do not chain")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_i

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_o


@dataclass
class Dataset:
    inputs: np.ndarray   # (n_samples, n_features)
    targets: np.ndarray  # (n_samples, n_targets)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionMismatch("inputs and targets have different lengths")


def load_dataset_csv(path, n_targets: int = 1) -> Dataset:
    """CSV rows are samples; the trailing n_targets columns are targets."""
    data = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    if data.shape[1] <= n_targets:
        raise DimensionMismatch(f"{data.shape[1]} columns cannot hold {n_targets} targets")
    return Dataset(data[:, :-n_targets], data[:, -n_targets:])


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def _basis_matrix_exact(layer: KanLayer, x: np.ndarray) -> np.ndarray:
    rows = [bspline_basis_plain(xi, layer.grid.entries[i], layer.k)
            for i, xi in enumerate(x)]
    return np.asarray(rows)


def _matvec_schedule(W: np.ndarray, v: np.ndarray, split: tuple | None = None) -> np.ndarray:
    """W @ v summed in the diagonal baby/giant order of the encrypted
    matvec, so the mirrored forward accumulates bit-for-bit like the
    pipeline. Returns the padded square dimension (first n_o slots valid)."""
    W = np.atleast_2d(W)
    n_o, n_in = W.shape
    m = max(n_o, n_in)
    wsq = np.zeros((m, m))
    wsq[:n_o, :n_in] = W
    vp = np.zeros(m)
    vp[: v.size] = v
    b, gs = split if split is not None else default_bsgs_split(m)
    rows = np.arange(m)
    acc = None
    for j in range(gs):
        base = j * b
        if base >= m:
            break
        block = None
        for i in range(min(b, m - base)):
            cols = (rows + base + i) % m
            term = wsq[rows, cols] * vp[cols]
            block = term if block is None else block + term
        acc = block if acc is None else acc + block
    return acc[:n_o]


def layer_forward_plain(layer: KanLayer, x, mode: str = "exact",
                        comparator=None, path: str = "lazy",
                        bsgs_split: tuple | None = None) -> np.ndarray:
    """Evaluate one layer.

    exact: true silu and exact Cox-de Boor basis values, plain matvecs.
    mirrored: the fitted activation polynomial, the comparator emulation,
    and the encrypted pipeline's combination schedule (same comparator,
    path, and split as the pipeline), so it predicts the encrypted result
    exactly on the arithmetic backend.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != layer.n_i:
        raise DimensionMismatch(f"input length {x.size} != n_i {layer.n_i}")
    if mode == "exact":
        base = silu(x)
        bvals = _basis_matrix_exact(layer, x)
        return layer.W_b @ base + layer.w_prime @ bvals.ravel()
    if mode != "mirrored":
        raise ValueError(f"unknown mode {mode!r}")
    if comparator is None:
        raise ValueError("mirrored mode needs the pipeline's comparator")
    base = eval_poly_clear(layer.silu_poly, x)
    base_out = _matvec_schedule(layer.W_b, base, bsgs_split)
    bvals = basis_clear(x, layer.grid, comparator)
    coltile = bvals.T.ravel()  # slot m * n_i + i holds B_m(x_i)
    if path == "lazy":
        spline_out = _matvec_schedule(layer.w_fused, coltile, bsgs_split)
    elif path == "naive":
        perm = gen_permutation(layer.n_i, layer.grid.n_basis).as_matrix()
        repacked = _matvec_schedule(perm, coltile, bsgs_split)
        spline_out = _matvec_schedule(layer.w_prime, repacked, bsgs_split)
    else:
        raise ValueError(f"unknown path {path!r}")
    return base_out + spline_out


def model_forward_plain(model: KanModel, x, mode: str = "exact",
                        comparator=None, path: str = "lazy",
                        bsgs_split: tuple | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise DimensionMismatch("empty input")
    out = x
    for layer in model.layers:
        out = layer_forward_plain(layer, out, mode=mode, comparator=comparator,
                                  path=path, bsgs_split=bsgs_split)
    return out


# ---------------------------------------------------------------------------
# desk-scale fitting
# ---------------------------------------------------------------------------


def fit_layer_ls(dataset: Dataset, n_o: int, grid: GridMatrix,
                 w_b_mode: str = "fitted", ridge: float = 1e-8,
                 silu_degree: int = 10):
    """Fit one layer by ridge-regularized linear least squares.

    The edge activations are linear in the spline coefficients and (when
    w_b_mode is "fitted") in the base weights, so a single solve over the
    stacked basis/silu features recovers both. Returns (layer, train_rmse).
    """
    X, Y = dataset.inputs, dataset.targets
    n_samples, n_i = X.shape
    if grid.n_i != n_i:
        raise DimensionMismatch(f"grid rows {grid.n_i} != data features {n_i}")
    if Y.shape[1] != n_o:
        raise DimensionMismatch(f"targets have {Y.shape[1]} columns, n_o = {n_o}")
    if w_b_mode not in ("fitted", "fixed"):
        raise ValueError(f"unknown w_b_mode {w_b_mode!r}")
    nb = grid.n_basis

    basis_feats = np.empty((n_samples, n_i * nb))
    for s in range(n_samples):
        for i in range(n_i):
            basis_feats[s, i * nb:(i + 1) * nb] = bspline_basis_plain(
                X[s, i], grid.entries[i], grid.k)
    silu_feats = silu(X)

    if w_b_mode == "fitted":
        feats = np.hstack([basis_feats, silu_feats])
        target = Y
    else:
        feats = basis_feats
        target = Y  # W_b stays zero; splines carry everything

    n_feat = feats.shape[1]
    if ridge > 0:
        a = np.vstack([feats, np.sqrt(ridge) * np.eye(n_feat)])
        b = np.vstack([target, np.zeros((n_feat, target.shape[1]))])
    else:
        a, b = feats, target
    theta, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n_feat:
        raise SingularSystem(
            f"feature rank {rank} < {n_feat}: grid too fine for the data")

    S = theta[:n_i * nb].T.reshape(n_o, n_i, nb)
    if w_b_mode == "fitted":
        W_b = theta[n_i * nb:].T
    else:
        W_b = np.zeros((n_o, n_i))

    resid = feats @ theta - target
    rmse = float(np.sqrt(np.mean(resid ** 2)))

    act = estimate_range(X.ravel())
    weights = WeightScheme.from_moments(act.mu, act.sigma)
    silu_poly = fit_weighted_ls(silu, act, silu_degree, w=weights)
    layer = KanLayer(W_b=W_b, S=S, grid=grid, silu_poly=silu_poly,
                     act_stats=(act.mu, act.sigma))
    return layer, rmse


def random_model(dims, g: int, k: int, seed: int = 0, lo: float = -1.0,
                 hi: float = 1.0, silu_degree: int = 7) -> KanModel:
    """Deterministic random model for tests and benchmarks.

    Weights are scaled so layer outputs stay roughly inside the grid span.
    """
    rng = np.random.default_rng(seed)
    act = estimate_range(np.linspace(lo, hi, 64))
    layers = []
    for n_i, n_o in zip(dims, dims[1:]):
        grid = GridMatrix.uniform(n_i, g, k, lo, hi)
        scale = 1.0 / np.sqrt(n_i * (grid.n_basis + 1))
        W_b = rng.uniform(-1, 1, (n_o, n_i)) * scale
        S = rng.uniform(-1, 1, (n_o, n_i, grid.n_basis)) * scale
        silu_poly = fit_weighted_ls(silu, act, silu_degree)
        layers.append(KanLayer(W_b=W_b, S=S, grid=grid, silu_poly=silu_poly,
                               act_stats=(act.mu, act.sigma)))
    return KanModel(layers=layers, input_shape=(1, 1, dims[0]))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _grid_to_json(grid: GridMatrix) -> dict:
    # uniform iff rebuilding from the span endpoints reproduces it bit-exactly
    lo = float(grid.entries[0][grid.k])
    hi = float(grid.entries[0][grid.k + grid.g])
    rebuilt = GridMatrix.uniform(grid.n_i, grid.g, grid.k, lo, hi, R=grid.R)
    if np.array_equal(rebuilt.entries, grid.entries):
        return {"uniform_grid": {"lo": lo, "hi": hi, "g": grid.g, "k": grid.k}}
    return {"grid": grid.entries.tolist()}


def _layer_to_json(layer: KanLayer) -> dict:
    doc = {
        "n_i": layer.n_i,
        "n_o": layer.n_o,
        "g": layer.g,
        "k": layer.k,
        "R": layer.grid.R,
        "W_b": layer.W_b.tolist(),
        "S": layer.S.tolist(),
        "silu_poly": layer.silu_poly.to_json(),
        "act_stats": {"mu": layer.act_stats[0], "sigma": layer.act_stats[1]},
    }
    doc.update(_grid_to_json(layer.grid))
    return doc


def save_model(model: KanModel, path) -> None:
    doc = {
        "version": SCHEMA_VERSION,
        "input_shape": list(model.input_shape),
        "layers": [_layer_to_json(layer) for layer in model.layers],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise SchemaMismatch(f"missing {key!r} in {where}")
    return doc[key]


def _layer_from_json(doc: dict, idx: int) -> KanLayer:
    where = f"layer {idx}"
    n_i = _require(doc, "n_i", where)
    n_o = _require(doc, "n_o", where)
    g = _require(doc, "g", where)
    k = _require(doc, "k", where)
    R = _require(doc, "R", where)

    if "grid" in doc:
        grid = GridMatrix(np.asarray(doc["grid"], dtype=float), g, k, R)
    elif "uniform_grid" in doc:
        u = doc["uniform_grid"]
        if u.get("g", g) != g or u.get("k", k) != k:
            raise SchemaMismatch(f"{where}: uniform_grid (g, k) disagrees with the layer")
        grid = GridMatrix.uniform(n_i, g, k, _require(u, "lo", where),
                                  _require(u, "hi", where), R=R)
    else:
        raise SchemaMismatch(f"{where}: needs 'grid' or 'uniform_grid'")

    if "S" in doc:
        S = np.asarray(doc["S"], dtype=float)
    elif "W_s" in doc and "C" in doc:
        W_s = np.asarray(doc["W_s"], dtype=float)
        C = np.asarray(doc["C"], dtype=float)
        if W_s.shape != (n_o, n_i) or C.shape != (n_i, g + k):
            raise SchemaMismatch(f"{where}: factored shapes {W_s.shape}, {C.shape} invalid")
        S = W_s[:, :, None] * C[None, :, :]
    else:
        raise SchemaMismatch(f"{where}: needs 'S' or factored 'W_s' + 'C'")

    stats = _require(doc, "act_stats", where)
    return KanLayer(
        W_b=np.asarray(_require(doc, "W_b", where), dtype=float),
        S=S,
        grid=grid,
        silu_poly=Polynomial.from_json(_require(doc, "silu_poly", where)),
        act_stats=(float(stats["mu"]), float(stats["sigma"])),
    )


def load_model(path) -> KanModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaMismatch("model document must be a JSON object")
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema version {doc.get('version')!r}")
    layers = [_layer_from_json(ld, i) for i, ld in enumerate(_require(doc, "layers", "model"))]
    shape = tuple(_require(doc, "input_shape", "model"))
    return KanModel(layers=layers, input_shape=shape)
