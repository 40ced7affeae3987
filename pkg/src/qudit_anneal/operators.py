"""Many-qubit operators as weighted sums of X/Z Pauli strings.

All Hamiltonians in this package are real-symmetric in the computational
basis, so only X and Z factors are supported and state vectors are real.
Sign convention: Z|0> = -|0>, Z|1> = +|1>; X flips the bit.  Basis state k
assigns qubit q the bit (k >> q) & 1.

The matrix-vector product is matrix-free: terms are grouped by their X
flip-mask and applied as gather/add passes, so 16-qubit operators never
materialize a dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "PauliTerm",
    "HamiltonianOperator",
    "apply_term",
    "matvec",
    "to_dense",
]

_VALID_AXES = frozenset({"X", "Z"})

DENSE_DIM_CAP = 8192


def _normalize_factors(factors) -> tuple[tuple[int, str], ...]:
    if isinstance(factors, Mapping):
        items = list(factors.items())
    else:
        items = [(int(q), a) for q, a in factors]
    seen = set()
    out = []
    for q, axis in items:
        q = int(q)
        axis = str(axis).upper()
        if axis not in _VALID_AXES:
            raise ValueError(
                f"unsupported Pauli axis {axis!r} on qubit {q}: only X and Z "
                "factors are representable (operators are real-symmetric)"
            )
        if q < 0:
            raise ValueError(f"negative qubit index {q}")
        if q in seen:
            raise ValueError(f"qubit index {q} repeated in Pauli term")
        seen.add(q)
        out.append((q, axis))
    out.sort()
    return tuple(out)


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string: coefficient (GHz) times a product of X/Z
    factors on distinct qubits (identity elsewhere)."""

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __init__(self, coefficient: float, factors=()):
        object.__setattr__(self, "coefficient", float(coefficient))
        object.__setattr__(self, "factors", _normalize_factors(factors))
        if not np.isfinite(self.coefficient):
            raise ValueError("non-finite coefficient")

    @property
    def max_index(self) -> int:
        return self.factors[-1][0] if self.factors else -1

    @property
    def flip_mask(self) -> int:
        m = 0
        for q, axis in self.factors:
            if axis == "X":
                m |= 1 << q
        return m

    def z_indices(self) -> tuple[int, ...]:
        return tuple(q for q, axis in self.factors if axis == "Z")


def _check_state(v: np.ndarray) -> int:
    """Validate a state vector and return its qubit count."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("state vector must be one-dimensional")
    dim = v.shape[0]
    n = dim.bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def _z_signs(dim: int, z_indices: Iterable[int]) -> np.ndarray:
    """Product of Z eigenvalues over basis states: -1 for bit 0, +1 for bit 1."""
    k = np.arange(dim)
    s = np.ones(dim)
    for q in z_indices:
        s *= np.where((k >> q) & 1, 1.0, -1.0)
    return s


def apply_term(term: PauliTerm, v: np.ndarray) -> np.ndarray:
    """Apply coefficient x (tensor-product Pauli action) to v; v unmodified."""
    n = _check_state(v)
    if term.max_index >= n:
        raise ValueError(
            f"term acts on qubit {term.max_index} but state has only {n} qubits"
        )
    v = np.asarray(v, dtype=float)
    dim = v.shape[0]
    w = term.coefficient * _z_signs(dim, term.z_indices()) * v
    mask = term.flip_mask
    if mask == 0:
        return w
    # out[k ^ mask] = w[k]  <=>  out[j] = w[j ^ mask]
    return w[np.arange(dim) ^ mask]


class _CompiledOperator:
    """Mask-grouped form of an operator: one diagonal pass plus one
    gather/add pass per distinct X flip-mask."""

    __slots__ = ("diag", "groups")

    def __init__(self, n_qubits: int, terms: tuple[PauliTerm, ...]):
        dim = 1 << n_qubits
        diag = np.zeros(dim)
        weights: dict[int, object] = {}
        for t in terms:
            mask = t.flip_mask
            zq = t.z_indices()
            if mask == 0:
                diag += t.coefficient * _z_signs(dim, zq)
                continue
            if zq:
                w = t.coefficient * _z_signs(dim, zq)
            else:
                w = t.coefficient
            prev = weights.get(mask)
            if prev is None:
                weights[mask] = w
            else:
                weights[mask] = prev + w  # scalar+scalar or broadcasts to array
        self.diag = diag
        idx = np.arange(dim)
        self.groups = [
            (mask, weights[mask], idx ^ mask) for mask in sorted(weights)
        ]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        for _mask, w, perm in self.groups:
            if isinstance(w, np.ndarray):
                out += (w * v)[perm]
            else:
                out += w * v[perm]
        return out


@dataclass(frozen=True)
class HamiltonianOperator:
    """Immutable weighted sum of Pauli terms on n_qubits qubits.

    Hermitian (real-symmetric) by construction.  Terms are stored in a fixed
    ascending order so floating-point summation is reproducible.
    """

    n_qubits: int
    terms: tuple[PauliTerm, ...]

    def __init__(self, n_qubits: int, terms: Iterable[PauliTerm] = ()):
        n_qubits = int(n_qubits)
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        terms = tuple(terms)
        for t in terms:
            if not isinstance(t, PauliTerm):
                raise TypeError(f"expected PauliTerm, got {type(t).__name__}")
            if t.max_index >= n_qubits:
                raise ValueError(
                    f"term acts on qubit {t.max_index} but operator has "
                    f"{n_qubits} qubits"
                )
        terms = tuple(sorted(terms, key=lambda t: (t.factors, t.coefficient)))
        object.__setattr__(self, "n_qubits", n_qubits)
        object.__setattr__(self, "terms", terms)

    @property
    def dimension(self) -> int:
        return 1 << self.n_qubits

    def coefficient_scale(self) -> float:
        """Sum of |coefficients|: a cheap upper bound on the spectral norm."""
        return float(sum(abs(t.coefficient) for t in self.terms))

    @cached_property
    def _compiled(self) -> _CompiledOperator:
        return _CompiledOperator(self.n_qubits, self.terms)

    def __reduce__(self):
        # drop the compiled cache when pickling (workers rebuild it)
        return (HamiltonianOperator, (self.n_qubits, self.terms))


def matvec(h: HamiltonianOperator, v: np.ndarray) -> np.ndarray:
    """Matrix-free H @ v.  Pure function; deterministic for a fixed operator."""
    v = np.asarray(v, dtype=float)
    _check_state(v)
    if v.shape[0] != h.dimension:
        raise ValueError(
            f"dimension mismatch: operator {h.dimension}, vector {v.shape[0]}"
        )
    return h._compiled.matvec(v)


def to_dense(h: HamiltonianOperator, max_dim: int = DENSE_DIM_CAP) -> np.ndarray:
    """Materialize the real-symmetric matrix (small dimensions only)."""
    dim = h.dimension
    if dim > max_dim:
        raise ValueError(f"dimension {dim} exceeds dense cap {max_dim}")
    comp = h._compiled
    m = np.zeros((dim, dim))
    np.fill_diagonal(m, comp.diag)
    rows = np.arange(dim)
    for mask, w, perm in comp.groups:
        # row j couples to column j ^ mask with weight w[j ^ mask]
        if isinstance(w, np.ndarray):
            m[rows, perm] += w[perm]
        else:
            m[rows, perm] += w
    return m
