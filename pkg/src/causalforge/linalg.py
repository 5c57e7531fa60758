"""Dense complex linear algebra over named tensor factors.

Operators and vectors carry an ordered tuple of :class:`FactorLabel`.
The composite index is row-major in factor order, so the first factor is
the most significant digit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import unitary_group

from .errors import FactorError, NotHermitianError

HERMITIAN_TOL = 1e-9


class Role(str, Enum):
    P = "P"
    F = "F"
    C = "C"
    A_I = "A_I"
    A_O = "A_O"
    B_I = "B_I"
    B_O = "B_O"
    A_I_PRIME = "A_I'"
    A_O_PRIME = "A_O'"
    B_I_PRIME = "B_I'"
    B_O_PRIME = "B_O'"
    C_PRIME = "C'"
    ANCILLA = "ancilla"
    COPY = "copy"

    @classmethod
    def infer(cls, name: str) -> "Role":
        """Role whose tag equals ``name``; ancilla otherwise."""
        try:
            return cls(name)
        except ValueError:
            return cls.ANCILLA


@dataclass(frozen=True)
class FactorLabel:
    name: str
    dim: int
    role: Role | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise FactorError(f"factor {self.name!r} has invalid dim {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.role is None:
            object.__setattr__(self, "role", Role.infer(self.name))
        else:
            object.__setattr__(self, "role", Role(self.role))

    def renamed(self, name: str) -> "FactorLabel":
        return FactorLabel(name, self.dim, Role.infer(name))


def factors(*spec: tuple[str, int]) -> tuple[FactorLabel, ...]:
    """Shorthand: ``factors(("P", 2), ("F", 2))``."""
    return tuple(FactorLabel(n, d) for n, d in spec)


def _check_factors(fs: Sequence[FactorLabel]) -> tuple[FactorLabel, ...]:
    fs = tuple(fs)
    names = [f.name for f in fs]
    if len(set(names)) != len(names):
        raise FactorError(f"duplicate factor names in {names}")
    return fs


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


class _Labeled:
    factors: tuple[FactorLabel, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def factor(self, name: str) -> FactorLabel:
        for f in self.factors:
            if f.name == name:
                return f
        raise FactorError(f"unknown factor {name!r}; have {self.names}")

    def _axes(self, names: Iterable[str]) -> list[int]:
        idx = {n: i for i, n in enumerate(self.names)}
        out = []
        for n in names:
            if n not in idx:
                raise FactorError(f"unknown factor {n!r}; have {self.names}")
            out.append(idx[n])
        return out

    def _renamed_factors(self, mapping: dict[str, str]) -> tuple[FactorLabel, ...]:
        self._axes(mapping)
        return _check_factors(f.renamed(mapping[f.name]) if f.name in mapping else f
                              for f in self.factors)


@dataclass(frozen=True, eq=False)
class LabeledOperator(_Labeled):
    """Square complex matrix over an ordered list of factors."""

    factors: tuple[FactorLabel, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        fs = _check_factors(self.factors)
        object.__setattr__(self, "factors", fs)
        data = _frozen(self.data)
        D = self.dim
        if data.shape != (D, D):
            raise FactorError(f"data shape {data.shape} does not match factor dims {self.dims}")
        object.__setattr__(self, "data", data)

    @classmethod
    def identity(cls, fs: Sequence[FactorLabel]) -> "LabeledOperator":
        fs = tuple(fs)
        return cls(fs, np.eye(int(np.prod([f.dim for f in fs], dtype=np.int64))))

    def as_tensor(self) -> np.ndarray:
        return self.data.reshape(self.dims + self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def dagger(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.data.conj().T)

    def renamed(self, mapping: dict[str, str]) -> "LabeledOperator":
        return LabeledOperator(self._renamed_factors(mapping), self.data)

    def scaled(self, c: complex) -> "LabeledOperator":
        return LabeledOperator(self.factors, c * self.data)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T))) / 2 if self.data.size else 0.0

    def __add__(self, other: "LabeledOperator") -> "LabeledOperator":
        other = permute_factors(other, self.names)
        if other.dims != self.dims:
            raise FactorError("dimension mismatch in sum")
        return LabeledOperator(self.factors, self.data + other.data)

    def __sub__(self, other: "LabeledOperator") -> "LabeledOperator":
        return self + other.scaled(-1)


@dataclass(frozen=True, eq=False)
class PureProcess(_Labeled):
    """Complex vector over labeled factors."""

    factors: tuple[FactorLabel, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        fs = _check_factors(self.factors)
        object.__setattr__(self, "factors", fs)
        data = _frozen(self.data).reshape(-1)
        if data.shape != (self.dim,):
            raise FactorError(f"vector length {data.size} does not match factor dims {self.dims}")
        object.__setattr__(self, "data", data)

    def as_tensor(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    def norm_sq(self) -> float:
        return float(np.vdot(self.data, self.data).real)

    def outer(self) -> LabeledOperator:
        return LabeledOperator(self.factors, np.outer(self.data, self.data.conj()))

    def renamed(self, mapping: dict[str, str]) -> "PureProcess":
        return PureProcess(self._renamed_factors(mapping), self.data)

    def scaled(self, c: complex) -> "PureProcess":
        return PureProcess(self.factors, c * self.data)

    def permuted(self, order: Sequence[str]) -> "PureProcess":
        axes = _permutation(self, order)
        t = np.transpose(self.as_tensor(), axes)
        return PureProcess(tuple(self.factors[a] for a in axes), t.reshape(-1))

    def inner(self, other: "PureProcess") -> complex:
        """<self|other>, matching factors by name."""
        other = other.permuted(self.names)
        if other.dims != self.dims:
            raise FactorError("dimension mismatch in inner product")
        return complex(np.vdot(self.data, other.data))

    def __add__(self, other: "PureProcess") -> "PureProcess":
        other = other.permuted(self.names)
        if other.dims != self.dims:
            raise FactorError("dimension mismatch in sum")
        return PureProcess(self.factors, self.data + other.data)


def fidelity(a: PureProcess, b: PureProcess) -> float:
    """|<a|b>|^2 / (|a|^2 |b|^2); global phase and norm are quotiented out."""
    return abs(a.inner(b)) ** 2 / (a.norm_sq() * b.norm_sq())


def _permutation(x: _Labeled, order: Sequence[str]) -> list[int]:
    order = list(order)
    if sorted(order) != sorted(x.names) or len(set(order)) != len(order):
        raise FactorError(f"{order} is not a permutation of {list(x.names)}")
    return x._axes(order)


def tensor(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Kronecker product; factors of ``a`` come first."""
    return LabeledOperator(a.factors + b.factors, np.kron(a.data, b.data))


def tensor_vectors(a: PureProcess, b: PureProcess) -> PureProcess:
    return PureProcess(a.factors + b.factors, np.kron(a.data, b.data))


def partial_trace(op: LabeledOperator, names: Iterable[str]) -> LabeledOperator:
    names = set(names)
    traced = op._axes(sorted(names))
    n = len(op.factors)
    keep = [i for i in range(n) if i not in traced]
    rows = list(range(n))
    cols = [n + i if i not in traced else i for i in range(n)]
    out = [rows[i] for i in keep] + [cols[i] for i in keep]
    t = np.einsum(op.as_tensor(), rows + cols, out)
    kept = tuple(op.factors[i] for i in keep)
    D = int(np.prod([f.dim for f in kept], dtype=np.int64))
    return LabeledOperator(kept, t.reshape(D, D))


def partial_transpose(op: LabeledOperator, names: Iterable[str]) -> LabeledOperator:
    """Transpose in the computational basis on the named factors only."""
    ax = op._axes(sorted(set(names)))
    n = len(op.factors)
    perm = list(range(2 * n))
    for i in ax:
        perm[i], perm[n + i] = n + i, i
    return LabeledOperator(op.factors, np.transpose(op.as_tensor(), perm).reshape(op.dim, op.dim))


def permute_factors(op: LabeledOperator, order: Sequence[str]) -> LabeledOperator:
    axes = _permutation(op, order)
    n = len(op.factors)
    t = np.transpose(op.as_tensor(), axes + [n + a for a in axes])
    return LabeledOperator(tuple(op.factors[a] for a in axes), t.reshape(op.dim, op.dim))


def hermitian_eigenvalues(op: LabeledOperator, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian operator.

    Raises NotHermitianError when the anti-Hermitian part exceeds ``tol``
    (scaled by the largest entry when that exceeds one).
    """
    defect = op.hermiticity_defect()
    if defect > tol * max(1.0, op.max_abs()):
        raise NotHermitianError(f"anti-Hermitian part {defect:.3e} exceeds {tol:.1e}")
    h = 0.5 * (op.data + op.data.conj().T)
    return np.linalg.eigvalsh(h)


def subindex(op: LabeledOperator, names: Iterable[str]) -> LabeledOperator:
    """Replace the marginal on ``names`` by the maximally mixed state.

    Returns ``(1/d_X) 1_X (x) Tr_X op`` in the factor order of ``op``.
    """
    names = set(names)
    ax = op._axes(sorted(names))
    if not ax:
        return op
    n = len(op.factors)
    rest = [i for i in range(n) if i not in ax]
    reduced = partial_trace(op, names).as_tensor()
    dX = int(np.prod([op.factors[i].dim for i in ax], dtype=np.int64))
    # broadcast reduced tensor against delta functions on the traced axes
    shape = [1] * (2 * n)
    for pos, i in enumerate(rest):
        shape[i] = op.factors[i].dim
        shape[n + i] = op.factors[i].dim
    t = reduced.reshape(shape)
    for i in ax:
        d = op.factors[i].dim
        s = [1] * (2 * n)
        s[i] = s[n + i] = d
        t = t * np.eye(d).reshape(s)
    return LabeledOperator(op.factors, t.reshape(op.dim, op.dim) / dX)


def max_abs_diff(a: LabeledOperator, b: LabeledOperator) -> float:
    b = permute_factors(b, a.names)
    return float(np.max(np.abs(a.data - b.data)))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(d, random_state=rng)


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(d_out, rng)[:, :d_in]


def random_hermitian(D: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    return (z + z.conj().T) / 2
