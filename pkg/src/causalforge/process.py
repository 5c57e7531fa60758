"""Choi states, link products and checks on process matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FactorError, NotIsometryError
from .linalg import (
    FactorLabel,
    LabeledOperator,
    PureProcess,
    hermitian_eigenvalues,
    partial_trace,
    partial_transpose,
    permute_factors,
    subindex,
)

PROCESS_ORDER = ("P", "A_I", "A_O", "B_I", "B_O", "F", "C")
LABS = ("A_I", "A_O", "B_I", "B_O")
A_TO_B = "A->B"
B_TO_A = "B->A"
DEFAULT_TOL = 1e-9


def process_factors(d: int, control_dim: int = 2) -> tuple[FactorLabel, ...]:
    return tuple(FactorLabel(n, control_dim if n == "C" else d) for n in PROCESS_ORDER)


def _isometry_check(m: np.ndarray, tol: float) -> None:
    gram = m.conj().T @ m
    err = float(np.max(np.abs(gram - np.eye(m.shape[1]))))
    if err > tol:
        raise NotIsometryError(f"V^dag V deviates from identity by {err:.3e}")


def cj_vector(matrix: np.ndarray, inputs: Sequence[FactorLabel],
              outputs: Sequence[FactorLabel], tol: float = DEFAULT_TOL,
              check: bool = True) -> PureProcess:
    """Vector sum_j |j>_in (x) M|j>_out over ``inputs + outputs``.

    The input copy reuses the input labels.  With ``check=False`` any
    matrix is accepted (Kraus operators of an instrument, for instance).
    """
    inputs, outputs = tuple(inputs), tuple(outputs)
    m = np.asarray(matrix, dtype=complex)
    d_in = int(np.prod([f.dim for f in inputs], dtype=np.int64))
    d_out = int(np.prod([f.dim for f in outputs], dtype=np.int64))
    if m.shape != (d_out, d_in):
        raise FactorError(f"matrix shape {m.shape} does not match {d_in} -> {d_out}")
    if check:
        _isometry_check(m, tol)
    return PureProcess(inputs + outputs, m.T.reshape(-1))


def cj_state(matrix: np.ndarray, inputs: Sequence[FactorLabel],
             outputs: Sequence[FactorLabel], tol: float = DEFAULT_TOL) -> LabeledOperator:
    """Choi operator of the isometry ``matrix`` mapping ``inputs`` to ``outputs``."""
    return cj_vector(matrix, inputs, outputs, tol).outer()


def cj_of_kraus(kraus: Sequence[np.ndarray], inputs: Sequence[FactorLabel],
                outputs: Sequence[FactorLabel]) -> LabeledOperator:
    """Choi operator of the map rho -> sum_k K rho K^dag (no normalization check)."""
    ops = [cj_vector(k, inputs, outputs, check=False).outer() for k in kraus]
    total = ops[0].data.copy()
    for o in ops[1:]:
        total += o.data
    return LabeledOperator(ops[0].factors, total)


def _shared(a, b) -> list[str]:
    shared = [n for n in a.names if n in set(b.names)]
    for n in shared:
        if a.factor(n).dim != b.factor(n).dim:
            raise FactorError(f"shared factor {n!r} has dims {a.factor(n).dim} vs {b.factor(n).dim}")
    return shared


def link_product(d: LabeledOperator, e: LabeledOperator) -> LabeledOperator:
    """Link product ``Tr_S[(E (x) 1)(1 (x) D^{T_S})]`` over the shared factors S.

    Entry-wise, row indices of shared factors are contracted with row
    indices and column with column.  Result factors: the unshared factors
    of ``d`` followed by those of ``e``.
    """
    shared = set(_shared(d, e))
    nd = len(d.factors)
    label = iter(range(10 ** 6))
    d_rows = [next(label) for _ in range(nd)]
    d_cols = [next(label) for _ in range(nd)]
    e_rows, e_cols = [], []
    for f in e.factors:
        if f.name in shared:
            i = d.names.index(f.name)
            e_rows.append(d_rows[i])
            e_cols.append(d_cols[i])
        else:
            e_rows.append(next(label))
            e_cols.append(next(label))
    kd = [i for i, n in enumerate(d.names) if n not in shared]
    ke = [i for i, n in enumerate(e.names) if n not in shared]
    out = ([d_rows[i] for i in kd] + [e_rows[i] for i in ke]
           + [d_cols[i] for i in kd] + [e_cols[i] for i in ke])
    t = np.einsum(d.as_tensor(), d_rows + d_cols, e.as_tensor(), e_rows + e_cols, out,
                  optimize=True)
    fs = tuple(d.factors[i] for i in kd) + tuple(e.factors[i] for i in ke)
    D = int(np.prod([f.dim for f in fs], dtype=np.int64))
    return LabeledOperator(fs, t.reshape(D, D))


def link_vectors(a: PureProcess, b: PureProcess) -> PureProcess:
    """Link product of pure vectors: plain contraction over shared factors.

    ``link_vectors(a, b).outer()`` equals ``link_product(a.outer(), b.outer())``.
    """
    shared = set(_shared(a, b))
    na = len(a.factors)
    la = list(range(na))
    lb, nxt = [], na
    for f in b.factors:
        if f.name in shared:
            lb.append(a.names.index(f.name))
        else:
            lb.append(nxt)
            nxt += 1
    ka = [i for i, n in enumerate(a.names) if n not in shared]
    kb = [i for i, n in enumerate(b.names) if n not in shared]
    out = [la[i] for i in ka] + [lb[i] for i in kb]
    t = np.einsum(a.as_tensor(), la, b.as_tensor(), lb, out, optimize=True)
    fs = tuple(a.factors[i] for i in ka) + tuple(b.factors[i] for i in kb)
    return PureProcess(fs, t.reshape(-1))


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Operator on P, A_I, A_O, B_I, B_O, F, C, stored in that factor order."""

    op: LabeledOperator
    target_dim: int = field(init=False)
    control_dim: int = field(init=False)

    def __post_init__(self):
        names = set(self.op.names)
        if names != set(PROCESS_ORDER) or len(self.op.names) != len(PROCESS_ORDER):
            raise FactorError(f"process needs factors {PROCESS_ORDER}, got {self.op.names}")
        op = permute_factors(self.op, PROCESS_ORDER)
        dims = {f.name: f.dim for f in op.factors}
        d = dims["P"]
        if any(dims[n] != d for n in PROCESS_ORDER if n != "C"):
            raise FactorError(f"target wires must share one dimension, got {dims}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "target_dim", d)
        object.__setattr__(self, "control_dim", dims["C"])

    @classmethod
    def from_pure(cls, w: PureProcess) -> "ProcessMatrix":
        return cls(w.outer())

    @property
    def data(self) -> np.ndarray:
        return self.op.data

    def trace(self) -> float:
        return self.op.trace().real

    def expected_trace(self) -> int:
        return self.target_dim ** 3


def as_process(w) -> ProcessMatrix:
    if isinstance(w, ProcessMatrix):
        return w
    if isinstance(w, PureProcess):
        return ProcessMatrix.from_pure(w)
    if isinstance(w, LabeledOperator):
        return ProcessMatrix(w)
    raise TypeError(f"cannot interpret {type(w).__name__} as a process")


@dataclass(frozen=True)
class ValidityReport:
    positivity_defect: float
    trace_value: float
    trace_expected: float
    residuals: dict[str, float]
    tolerance: float
    passed: bool

    @property
    def pass_(self) -> bool:
        return self.passed

    def checks(self) -> list[tuple[str, float]]:
        """(name, residual) pairs covering every condition, positivity first."""
        return [("positivity", self.positivity_defect)] + sorted(self.residuals.items())


def _scaled_diff(a: LabeledOperator, b: LabeledOperator, scale: float) -> float:
    return float(np.max(np.abs(a.data - b.data))) / scale


def is_valid_process(w, tol: float = DEFAULT_TOL) -> ValidityReport:
    """Evaluate positivity and normalization together with the four subindex conditions.

    Residuals are max-abs deviations divided by the largest entry of W.
    """
    w = as_process(w)
    W = w.op
    scale = W.max_abs() or 1.0
    sub = subindex
    box = set(LABS)
    eig = hermitian_eigenvalues(W, tol=max(tol, 1e-9))
    positivity = max(0.0, -float(eig[0])) / scale
    tr = W.trace().real
    expected = float(w.expected_trace())
    cf = {"C", "F"}
    w_cf = sub(W, cf)
    res = {
        "trace": abs(tr - expected) / expected,
        "A_O_signal": _scaled_diff(sub(W, {"B_I", "B_O", "C", "F"}),
                                   sub(W, {"A_O", "B_I", "B_O", "C", "F"}), scale),
        "B_O_signal": _scaled_diff(sub(W, {"A_I", "A_O", "C", "F"}),
                                   sub(W, {"B_O", "A_I", "A_O", "C", "F"}), scale),
        "normalization": _scaled_diff(
            w_cf,
            sub(W, {"A_O"} | cf) + sub(W, {"B_O"} | cf) - sub(W, {"A_O", "B_O"} | cf),
            scale),
        "global_past": _scaled_diff(sub(W, box | cf), sub(W, box | cf | {"P"}), scale),
    }
    ok = positivity <= tol and all(v <= tol for v in res.values())
    return ValidityReport(positivity, tr, expected, res, tol, ok)


def order_residual(w, order: str) -> float:
    """Unnormalized max-abs deviation from the fixed-order condition."""
    W = as_process(w).op
    if order == A_TO_B:
        other = "B_O"
    elif order == B_TO_A:
        other = "A_O"
    else:
        raise ValueError(f"order must be {A_TO_B!r} or {B_TO_A!r}, got {order!r}")
    return float(np.max(np.abs(subindex(W, {"F"}).data - subindex(W, {other, "F"}).data)))


def is_compatible_order(w, order: str, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """Check ``_F W = _{B_O F} W`` (A->B) or ``_F W = _{A_O F} W`` (B->A).

    The residual is returned unnormalized; the decision scales ``tol`` by
    the largest entry of W.
    """
    w = as_process(w)
    r = order_residual(w, order)
    return r <= tol * (w.op.max_abs() or 1.0), r


def is_entangled_control_target(w, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """PPT witness across control vs. lab wires after tracing P and F.

    True certifies entanglement; False is inconclusive.
    """
    W = as_process(w).op
    r = partial_trace(W, {"P", "F"})
    r = r.scaled(1.0 / r.trace().real)
    lam = float(hermitian_eigenvalues(partial_transpose(r, {"C"}))[0])
    return lam < -tol, lam
