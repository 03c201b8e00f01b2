"""Encrypted B-spline machinery.

Packs an input vector in repeat layout with logarithmically many rotations,
evaluates all B-spline basis functions in parallel through comparator-based
interval tests and the Cox-de Boor recursion, and provides the permutation /
weight-fusion algebra that lets the basis output feed a linear layer without
any homomorphic reordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import CipherText, CleartextBackend
from .approx import poly_comp, poly_comp_clear
from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InputOutOfRange,
    InsufficientKnots,
    PackingOverflow,
)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMatrix:
    """Per-input-feature knot matrix: n_i rows of g + 2k + 1 knots.

    Rows must be strictly increasing; repeated knots would put a zero in the
    recursion denominators and are rejected up front. R bounds |input| and
    |knot| for the comparator's [-1, 1] scaling.
    """

    entries: np.ndarray
    g: int
    k: int
    R: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        entries.setflags(write=False)
        if entries.ndim != 2 or entries.shape[1] != self.g + 2 * self.k + 1:
            raise DimensionMismatch(
                f"grid needs shape (n_i, {self.g + 2 * self.k + 1}), got {entries.shape}")
        if np.any(np.diff(entries, axis=1) <= 0):
            raise InsufficientKnots("knot rows must be strictly increasing (no repeats)")
        if self.R <= 0:
            raise ValueError("R must be positive")

    @property
    def n_i(self) -> int:
        return self.entries.shape[0]

    @property
    def n_basis(self) -> int:
        """Basis functions per feature: g + k."""
        return self.g + self.k

    @classmethod
    def uniform(cls, n_i: int, g: int, k: int, lo: float, hi: float,
                R: float | None = None) -> "GridMatrix":
        """Uniform grid on [lo, hi] with k extra intervals on each side."""
        if hi <= lo:
            raise ValueError("need hi > lo")
        h = (hi - lo) / g
        knots = lo + h * (np.arange(g + 2 * k + 1) - k)
        if R is None:
            R = 1.2 * float(np.max(np.abs(knots)))
        return cls(np.tile(knots, (n_i, 1)), g, k, R)


@dataclass(frozen=True)
class PackedInput:
    """Ciphertext holding g + 2k copies of the input vector back to back."""

    ct: CipherText
    n_i: int
    g: int
    k: int

    @property
    def copies(self) -> int:
        return self.g + 2 * self.k


@dataclass(frozen=True)
class BasisVector:
    """Basis values in column-tile order: slot m*n_i + i holds B_m(x_i)."""

    ct: CipherText
    n_i: int
    n_basis: int

    @property
    def length(self) -> int:
        return self.n_i * self.n_basis


@dataclass(frozen=True)
class PermutationSpec:
    """Column-major to row-major reordering of an n_r x n_c value matrix.

    `source_of[t] = s` means output slot t reads input slot s (0-indexed).
    """

    n_r: int
    n_c: int
    source_of: np.ndarray

    @property
    def size(self) -> int:
        return self.n_r * self.n_c

    def as_matrix(self) -> np.ndarray:
        p = np.zeros((self.size, self.size))
        p[np.arange(self.size), self.source_of] = 1.0
        return p

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.size:
            raise DimensionMismatch(f"vector length {v.shape[0]} != {self.size}")
        return v[self.source_of]

    def transpose(self) -> "PermutationSpec":
        inverse = np.empty_like(self.source_of)
        inverse[self.source_of] = np.arange(self.size)
        return PermutationSpec(self.n_c, self.n_r, inverse)


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------


def pack_rotations(g: int, k: int) -> int:
    """Rotations the fast packing consumes: ceil(log2(g + 2k))."""
    copies = g + 2 * k
    return 0 if copies <= 1 else math.ceil(math.log2(copies))


def _check_packing(slot_count: int, n_i: int, copies: int) -> None:
    if n_i * copies > slot_count:
        raise PackingOverflow(
            f"n_i * (g + 2k) = {n_i * copies} exceeds {slot_count} slots")


def repeat_pack(ct: CipherText, g: int, k: int, n_i: int) -> PackedInput:
    """Fast repeat packing: one mask multiply plus doubling rotations.

    The doubling loop produces 2^ceil(log2(g+2k)) copies, so that power of
    two must also fit in the slot vector or the final shift would wrap onto
    the front copies.
    """
    be = ct.backend
    copies = g + 2 * k
    _check_packing(be.config.slot_count, n_i, copies)
    reps = pack_rotations(g, k)
    if n_i * (1 << reps) > be.config.slot_count:
        raise PackingOverflow(
            f"doubling to {1 << reps} copies of {n_i} slots wraps past "
            f"{be.config.slot_count}; the fast packing needs power-of-two headroom")
    mask = np.zeros(be.config.slot_count)
    mask[:n_i] = 1.0
    packed = be.mul(ct, mask)
    for j in range(reps):
        packed = be.add(be.rotate(packed, -(n_i << j)), packed)
    return PackedInput(packed, n_i, g, k)


def repeat_pack_naive(ct: CipherText, g: int, k: int, n_i: int) -> PackedInput:
    """Reference packing: one rotation per extra copy (g + 2k - 1 total)."""
    be = ct.backend
    copies = g + 2 * k
    _check_packing(be.config.slot_count, n_i, copies)
    mask = np.zeros(be.config.slot_count)
    mask[:n_i] = 1.0
    base = be.mul(ct, mask)
    packed = base
    for j in range(1, copies):
        packed = be.add(packed, be.rotate(base, -n_i * j))
    return PackedInput(packed, n_i, g, k)


# ---------------------------------------------------------------------------
# column tiling
# ---------------------------------------------------------------------------


def col_tile(matrix, l: int, r: int) -> np.ndarray:
    """Concatenate columns l to r-1 (1-indexed, half-open) into one vector.

    Output slot (j - l) * n_i + i holds matrix[i][j]. Accepts a GridMatrix
    or any 2-D array.
    """
    a = matrix.entries if isinstance(matrix, GridMatrix) else np.asarray(matrix)
    n_cols = a.shape[1]
    if not 1 <= l < r <= n_cols + 1:
        raise IndexOutOfRange(f"need 1 <= l < r <= {n_cols + 1}, got l={l}, r={r}")
    return a[:, l - 1:r - 1].T.ravel()


# ---------------------------------------------------------------------------
# comparators
# ---------------------------------------------------------------------------


class ExactComparator:
    """Step-function oracle with the composite comparator's dataflow.

    Reads slots directly, so it is only meaningful on the arithmetic
    simulator; it consumes no depth and counts no operations. Useful to
    isolate comparator error from the rest of the pipeline.
    """

    def depth(self) -> int:
        return 0

    def compare_he(self, scaled: CipherText) -> CipherText:
        be = scaled.backend
        return be.encrypt(step_clear(scaled.slots), scaled.level)

    @staticmethod
    def compare_clear(d: np.ndarray) -> np.ndarray:
        return step_clear(d)


EXACT_COMPARATOR = ExactComparator()


def step_clear(d: np.ndarray) -> np.ndarray:
    """1 for d > 0, 0 for d < 0, 1/2 at d = 0."""
    d = np.asarray(d)
    return np.where(d > 0, 1.0, np.where(d < 0, 0.0, 0.5))


def basis_depth(k: int, comparator) -> int:
    """Levels bspline_basis_he consumes from the packed input.

    Scale multiply, comparator (stages plus output map), the order-0
    product, then one ciphertext multiply per recursion step.
    """
    return 1 + comparator.depth() + 1 + k


# ---------------------------------------------------------------------------
# encrypted basis evaluation
# ---------------------------------------------------------------------------


def _compare(scaled: CipherText, comparator, check_range: bool):
    if isinstance(comparator, ExactComparator):
        return comparator.compare_he(scaled)
    zero = np.zeros(scaled.backend.config.slot_count)
    return poly_comp(scaled, zero, comparator, check_range=check_range)


def bspline_basis_he(xp: PackedInput, G: GridMatrix, comparator,
                     check_range: bool = False) -> BasisVector:
    """All-basis evaluation on a repeat-packed input.

    Interval membership comes from two comparator calls on the knot
    endpoints (column-tiled across the copies); the Cox-de Boor recursion
    then runs slot-parallel, one rotation per order. Plaintext knot factors
    are zero beyond the shrinking valid region, which keeps the wrapped-in
    tail slots at zero with no extra masking.
    """
    be = xp.ct.backend
    if G.n_i != xp.n_i or G.g != xp.g or G.k != xp.k:
        raise DimensionMismatch("grid and packed input disagree on (n_i, g, k)")
    g, k, n_i = G.g, G.k, G.n_i
    r = g + 2 * k + 1
    S = be.config.slot_count
    inv2R = 1.0 / (2.0 * G.R)

    if check_range and isinstance(be, CleartextBackend):
        x_vals = xp.ct.slots[:n_i]
        if np.max(np.abs(x_vals)) > G.R:
            raise InputOutOfRange(f"input exceeds [-R, R] with R = {G.R}")
        if not isinstance(comparator, ExactComparator):
            gap = np.min(np.abs(x_vals[:, None] - G.entries), axis=1)
            margin = comparator.delta * 2.0 * G.R
            if np.any(gap < margin):
                raise InputOutOfRange(
                    f"input within delta*2R = {margin:.3g} of a knot; "
                    "comparator accuracy is not certified there")

    def pad(values: np.ndarray) -> np.ndarray:
        out = np.zeros(S)
        out[: values.size] = values
        return out

    g1 = pad(col_tile(G, 1, r))
    g2 = pad(col_tile(G, 2, r + 1))
    x1 = _compare(be.mul(be.sub(xp.ct, g1), inv2R), comparator, check_range)
    x2 = _compare(be.mul(be.sub(xp.ct, g2), -inv2R), comparator, check_range)
    b = be.mul(x1, x2)

    for j in range(1, k + 1):
        t1 = col_tile(G, 1, r - j)
        t2 = col_tile(G, j + 1, r)
        t3 = col_tile(G, j + 2, r + 1)
        t4 = col_tile(G, 2, r - j + 1)
        recip1 = pad(1.0 / (t2 - t1))
        neg_recip2 = pad(-1.0 / (t3 - t4))
        b1 = be.mul(be.mul(be.sub(xp.ct, pad(t1)), recip1), b)
        b2 = be.mul(be.mul(be.sub(xp.ct, pad(t3)), neg_recip2), be.rotate(b, n_i))
        b = be.add(b1, b2)
    return BasisVector(b, n_i, g + k)


def basis_clear(x: np.ndarray, G: GridMatrix, comparator) -> np.ndarray:
    """Cleartext twin of bspline_basis_he: same factors, same op order.

    Returns an (n_i, g + k) array of comparator-approximated basis values;
    row i column m matches slot m * n_i + i of the encrypted result.
    """
    g, k = G.g, G.k
    r = g + 2 * k + 1
    x = np.asarray(x, dtype=float)
    inv2R = 1.0 / (2.0 * G.R)
    compare = (comparator.compare_clear if isinstance(comparator, ExactComparator)
               else lambda d: poly_comp_clear(d, comparator))

    def tile(l, rr):
        return col_tile(G, l, rr).reshape(-1, G.n_i)  # (cols, n_i)

    xs = x[None, :]
    g1 = tile(1, r)
    g2 = tile(2, r + 1)
    x1 = compare((xs - g1) * inv2R)
    x2 = compare((xs - g2) * -inv2R)
    b = x1 * x2
    for j in range(1, k + 1):
        t1 = tile(1, r - j)
        t2 = tile(j + 1, r)
        t3 = tile(j + 2, r + 1)
        t4 = tile(2, r - j + 1)
        width = t1.shape[0]
        shifted = np.vstack([b[1:width + 1]])
        b1 = (xs - t1) * (1.0 / (t2 - t1)) * b[:width]
        b2 = (xs - t3) * (-1.0 / (t3 - t4)) * shifted
        b = b1 + b2
    return b[:g + k].T


# ---------------------------------------------------------------------------
# plain Cox-de Boor oracle
# ---------------------------------------------------------------------------


def bspline_basis_plain(x: float, knots, k: int) -> np.ndarray:
    """Exact basis values B_{m,k}(x) by the Cox-de Boor recursion.

    Order-0 uses half-open intervals [t_m, t_{m+1}); 0/0 at repeated knots
    is taken as 0.
    """
    t = np.asarray(knots, dtype=float)
    if t.ndim != 1 or t.size < k + 2:
        raise InsufficientKnots(f"need at least {k + 2} knots for degree {k}")
    if np.any(np.diff(t) < 0):
        raise InsufficientKnots("knots must be non-decreasing")
    b = np.where((t[:-1] <= x) & (x < t[1:]), 1.0, 0.0)
    for j in range(1, k + 1):
        nb = t.size - 1 - j
        num1 = (x - t[:nb]) * b[:nb]
        den1 = t[j:j + nb] - t[:nb]
        num2 = (t[j + 1:j + 1 + nb] - x) * b[1:nb + 1]
        den2 = t[j + 1:j + 1 + nb] - t[1:nb + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(den1 > 0, num1 / np.where(den1 > 0, den1, 1.0), 0.0)
            right = np.where(den2 > 0, num2 / np.where(den2 > 0, den2, 1.0), 0.0)
        b = left + right
    return b


# ---------------------------------------------------------------------------
# permutation and weight fusion
# ---------------------------------------------------------------------------


def default_bsgs_split(n: int) -> tuple:
    """Baby/giant split (ceil(sqrt(n)), ceil(n / ceil(sqrt(n))))."""
    b = math.isqrt(n)
    if b * b < n:
        b += 1
    return b, math.ceil(n / b)


def gen_permutation(n_r: int, n_c: int) -> PermutationSpec:
    """Permutation sending column-major index (c-1)*n_r + r to row-major
    (r-1)*n_c + c (both 1-indexed)."""
    if n_r < 1 or n_c < 1:
        raise ValueError("n_r and n_c must be >= 1")
    source_of = np.empty(n_r * n_c, dtype=np.int64)
    for row in range(n_r):
        for col in range(n_c):
            src = col * n_r + row
            dst = row * n_c + col
            source_of[dst] = src
    return PermutationSpec(n_r, n_c, source_of)


def fuse_weights(wprime: np.ndarray, P: PermutationSpec) -> np.ndarray:
    """Fused linear weights: W_f = W' x P, so W_f v = W' (P v).

    Right-multiplying by the permutation matrix is a column gather:
    W_f[:, s] = W'[:, t] whenever P maps source s to target t.
    """
    wprime = np.asarray(wprime, dtype=float)
    if wprime.ndim != 2 or wprime.shape[1] != P.size:
        raise DimensionMismatch(
            f"W' has {wprime.shape} columns, permutation expects {P.size}")
    fused = np.empty_like(wprime)
    fused[:, P.source_of] = wprime
    return fused
