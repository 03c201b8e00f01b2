"""Functional model of a leveled SIMD homomorphic-encryption scheme.

Ciphertexts are fixed-width slot vectors with a remaining multiplicative
level. All arithmetic is slot-wise; rotation is cyclic. Two backends ship:
:class:`CleartextBackend` (exact arithmetic) and :class:`NoisyBackend`
(additive Gaussian perturbation per operation). The backend is a swappable
contract so a real scheme can be substituted behind the same semantics.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DepthExhausted, InputTooLong, LengthMismatch

OP_KINDS = ("add", "sub", "mul_ct", "mul_pt")


@dataclass(frozen=True)
class BackendConfig:
    """Static parameters of the simulated scheme.

    slot_count models half the polynomial-modulus degree of a real SIMD
    scheme; depth_budget is the multiplicative depth of a fresh ciphertext.
    """

    slot_count: int
    depth_budget: int
    noise_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.slot_count <= 0 or (self.slot_count & (self.slot_count - 1)) != 0:
            raise ValueError(f"slot_count must be a positive power of two, got {self.slot_count}")
        if self.depth_budget < 0:
            raise ValueError("depth_budget must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @classmethod
    def from_json(cls, source) -> "BackendConfig":
        """Load a config from a dict, a JSON string, or a file path."""
        if isinstance(source, dict):
            doc = source
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            doc = json.loads(source)
        else:
            with open(source) as fh:
                doc = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown BackendConfig keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> dict:
        return {
            "slot_count": self.slot_count,
            "depth_budget": self.depth_budget,
            "noise_std": self.noise_std,
            "rng_seed": self.rng_seed,
        }


@dataclass
class OpCounter:
    """Tally of homomorphic operations for one evaluation."""

    adds: int = 0
    subs: int = 0
    ct_mults: int = 0
    pt_mults: int = 0
    rotations: int = 0
    max_depth_consumed: int = 0

    def copy(self) -> "OpCounter":
        return replace(self)

    def merge(self, other: "OpCounter") -> None:
        """Fold another evaluation's tallies into this one (join point)."""
        self.adds += other.adds
        self.subs += other.subs
        self.ct_mults += other.ct_mults
        self.pt_mults += other.pt_mults
        self.rotations += other.rotations
        self.max_depth_consumed = max(self.max_depth_consumed, other.max_depth_consumed)

    def since(self, earlier: "OpCounter") -> "OpCounter":
        """Per-field difference against an earlier snapshot."""
        return OpCounter(
            adds=self.adds - earlier.adds,
            subs=self.subs - earlier.subs,
            ct_mults=self.ct_mults - earlier.ct_mults,
            pt_mults=self.pt_mults - earlier.pt_mults,
            rotations=self.rotations - earlier.rotations,
            max_depth_consumed=self.max_depth_consumed,
        )

    @property
    def mults(self) -> int:
        return self.ct_mults + self.pt_mults


@dataclass(frozen=True)
class PlainVector:
    """Unencrypted slot vector, the right-hand operand of plaintext ops."""

    slots: np.ndarray


@dataclass(frozen=True)
class CipherText:
    """Slot vector plus remaining multiplicative level.

    Immutable: every operation returns a new ciphertext. `tag` is an opaque
    identifier for counter attribution.
    """

    slots: np.ndarray = field(repr=False)
    level: int
    tag: str
    backend: "HeBackend" = field(repr=False, compare=False)

    def __post_init__(self):
        self.slots.setflags(write=False)


class HeBackend:
    """Backend contract: slot-wise arithmetic, rotation, depth accounting.

    Subclasses control the per-operation perturbation via `_perturb`.
    Each backend owns one active :class:`OpCounter`; evaluations that need a
    private tally snapshot it before and diff after (see OpCounter.since).
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self.counter = OpCounter()
        self._tags = itertools.count()

    # ------------------------------------------------------------------
    # boundary plumbing
    # ------------------------------------------------------------------

    def encode(self, values) -> PlainVector:
        """Zero-pad a vector (or broadcast a scalar) to the slot count."""
        if np.isscalar(values):
            return PlainVector(np.full(self.config.slot_count, float(values)))
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size > self.config.slot_count:
            raise InputTooLong(f"{arr.size} values > {self.config.slot_count} slots")
        out = np.zeros(self.config.slot_count)
        out[: arr.size] = arr
        return PlainVector(out)

    def encrypt(self, values, level: int | None = None) -> CipherText:
        if level is None:
            level = self.config.depth_budget
        if not 0 <= level <= self.config.depth_budget:
            raise ValueError(f"level {level} outside [0, {self.config.depth_budget}]")
        slots = self._perturb(self.encode(values).slots.copy())
        return self._wrap(slots, level)

    def decrypt(self, a: CipherText) -> np.ndarray:
        self._check_ours(a)
        return a.slots.copy()

    def refresh(self, a: CipherText, level: int | None = None) -> CipherText:
        """Reset a ciphertext's level (bootstrapping stand-in, zero cost).

        Extension point only; no pipeline stage invokes it implicitly.
        """
        if level is None:
            level = self.config.depth_budget
        self._check_ours(a)
        return self._wrap(a.slots.copy(), level)

    def reset_counter(self) -> OpCounter:
        """Install a fresh counter; returns the retired one."""
        old = self.counter
        self.counter = OpCounter()
        return old

    # ------------------------------------------------------------------
    # homomorphic operations
    # ------------------------------------------------------------------

    def slotwise(self, op_kind: str, a: CipherText, b) -> CipherText:
        """Element-wise add/sub/mul of a ciphertext with a cipher or plain operand."""
        if op_kind not in OP_KINDS:
            raise ValueError(f"unknown op_kind {op_kind!r}")
        self._check_ours(a)
        is_ct = isinstance(b, CipherText)
        if op_kind == "mul_ct" and not is_ct:
            raise LengthMismatch("mul_ct requires a ciphertext right operand")
        if op_kind == "mul_pt" and is_ct:
            raise LengthMismatch("mul_pt requires a plaintext right operand")
        if is_ct:
            self._check_ours(b)
            b_slots, level = b.slots, min(a.level, b.level)
        else:
            b_slots = self._plain_slots(b)
            level = a.level

        if op_kind == "add":
            out = a.slots + b_slots
            self.counter.adds += 1
        elif op_kind == "sub":
            out = a.slots - b_slots
            self.counter.subs += 1
        else:
            if level < 1:
                raise DepthExhausted(f"multiplication at level {level} (tag {a.tag})")
            out = a.slots * b_slots
            level -= 1
            if op_kind == "mul_ct":
                self.counter.ct_mults += 1
            else:
                self.counter.pt_mults += 1
        return self._wrap(self._perturb(out), level)

    def add(self, a: CipherText, b) -> CipherText:
        return self.slotwise("add", a, b)

    def sub(self, a: CipherText, b) -> CipherText:
        return self.slotwise("sub", a, b)

    def mul(self, a: CipherText, b) -> CipherText:
        """Multiply, dispatching on the operand kind (ct x ct or ct x plain)."""
        kind = "mul_ct" if isinstance(b, CipherText) else "mul_pt"
        return self.slotwise(kind, a, b)

    def rotate(self, a: CipherText, t: int) -> CipherText:
        """Cyclic shift: left for t > 0, right for t < 0. Level unchanged."""
        self._check_ours(a)
        if abs(t) >= self.config.slot_count:
            raise ValueError(f"|t| = {abs(t)} must be < slot_count {self.config.slot_count}")
        if t == 0:
            return a
        self.counter.rotations += 1
        return self._wrap(np.roll(a.slots, -t), a.level)

    # ------------------------------------------------------------------
    # internals
    # ------------------------------------------------------------------

    def _plain_slots(self, b) -> np.ndarray:
        if isinstance(b, PlainVector):
            if b.slots.size != self.config.slot_count:
                raise LengthMismatch(
                    f"plain operand has {b.slots.size} slots, backend {self.config.slot_count}")
            return b.slots
        return self.encode(b).slots

    def _check_ours(self, a: CipherText) -> None:
        if a.backend is not self:
            raise LengthMismatch("ciphertext belongs to a different backend")

    def _wrap(self, slots: np.ndarray, level: int) -> CipherText:
        consumed = self.config.depth_budget - level
        if consumed > self.counter.max_depth_consumed:
            self.counter.max_depth_consumed = consumed
        return CipherText(slots=slots, level=level, tag=f"ct{next(self._tags)}", backend=self)

    def _perturb(self, slots: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class CleartextBackend(HeBackend):
    """Exact backend: arithmetic model with no perturbation."""

    def _perturb(self, slots: np.ndarray) -> np.ndarray:
        return slots


class NoisyBackend(HeBackend):
    """Adds N(0, noise_std) per slot after every operation and at encryption."""

    def __init__(self, config: BackendConfig):
        super().__init__(config)
        self._rng = np.random.default_rng(config.rng_seed)

    def _perturb(self, slots: np.ndarray) -> np.ndarray:
        if self.config.noise_std == 0.0:
            return slots
        return slots + self._rng.normal(0.0, self.config.noise_std, slots.shape)


def make_backend(config: BackendConfig) -> HeBackend:
    """Cleartext when noise_std is zero, Noisy otherwise."""
    if config.noise_std > 0:
        return NoisyBackend(config)
    return CleartextBackend(config)


def slotwise(op_kind: str, a: CipherText, b) -> CipherText:
    return a.backend.slotwise(op_kind, a, b)


def rotate(a: CipherText, t: int) -> CipherText:
    return a.backend.rotate(a, t)


def decrypt(a: CipherText) -> np.ndarray:
    return a.backend.decrypt(a)
