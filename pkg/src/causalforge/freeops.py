"""Free operations on bipartite processes and their condition checks.

A free operation is a CJ operator V on the ten factors of ``V_ORDER``.
Unprimed lab names are the wires shared with the process; primed ones
connect to the new labs.  Inputs of the map are A_I, A_O', B_I, B_O', C;
outputs are A_I', A_O, B_I', B_O, C'.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ._parallel import max_workers
from .errors import FactorError, InstrumentError, NotIsometryError
from .linalg import (
    FactorLabel,
    LabeledOperator,
    PureProcess,
    hermitian_eigenvalues,
    partial_trace,
    permute_factors,
    random_isometry,
    random_unitary,
    subindex,
    tensor,
    tensor_vectors,
)
from .process import (
    A_TO_B,
    B_TO_A,
    DEFAULT_TOL,
    PROCESS_ORDER,
    ProcessMatrix,
    as_process,
    cj_of_kraus,
    cj_vector,
    is_valid_process,
    link_product,
    link_vectors,
    order_residual,
)

AB_ORDER = ("A_I", "A_I'", "A_O", "A_O'", "B_I", "B_I'", "B_O", "B_O'")
V_ORDER = AB_ORDER + ("C", "C'")
AB_INPUTS = ("A_I", "A_O'", "B_I", "B_O'")
AB_OUTPUTS = ("A_I'", "A_O", "B_I'", "B_O")
INPUTS = AB_INPUTS + ("C",)
OUTPUTS = AB_OUTPUTS + ("C'",)
UNPRIME = {"A_I'": "A_I", "A_O'": "A_O", "B_I'": "B_I", "B_O'": "B_O", "C'": "C"}

LOAE = "LOAE"
PLS = "PLS"
NSO = "NSO-checked"
MIXED = "mixed-sequence"

PRESERVE = "preserve"
INVERT = "invert"


def ab_factors(d: int) -> tuple[FactorLabel, ...]:
    return tuple(FactorLabel(n, d) for n in AB_ORDER)


def control_factors(dc: int = 2) -> tuple[FactorLabel, ...]:
    return (FactorLabel("C", dc), FactorLabel("C'", dc))


def wire_vector(links: Sequence[tuple], d: int,
                order: Sequence[str] = AB_ORDER) -> PureProcess:
    """Product of channel vectors |u>> over (input, output[, unitary]) links.

    Links without a unitary carry the identity.
    """
    v = None
    for link in links:
        a, b = link[:2]
        u = link[2] if len(link) > 2 else np.eye(d)
        x = cj_vector(u, [FactorLabel(a, d)], [FactorLabel(b, d)])
        v = x if v is None else tensor_vectors(v, x)
    return v.permuted(order)


def local_unitary_vector(u_ai, u_ao, u_bi, u_bo) -> PureProcess:
    """Lab operation inserting one unitary on each of the four lab wires."""
    d = np.asarray(u_ai).shape[0]
    return wire_vector([("A_I", "A_I'", u_ai), ("A_O'", "A_O", u_ao),
                        ("B_I", "B_I'", u_bi), ("B_O'", "B_O", u_bo)], d)


def identity_ab_vector(d: int) -> PureProcess:
    return wire_vector([("A_I", "A_I'"), ("B_I", "B_I'"), ("A_O'", "A_O"), ("B_O'", "B_O")], d)


def swap_ab_vector(d: int) -> PureProcess:
    return wire_vector([("A_I", "B_I'"), ("B_I", "A_I'"), ("A_O'", "B_O"), ("B_O'", "A_O")], d)


def control_vector(kraus: np.ndarray) -> PureProcess:
    """CJ vector over [C, C'] of a single control Kraus operator."""
    dc = np.asarray(kraus).shape[1]
    return cj_vector(kraus, [FactorLabel("C", dc)], [FactorLabel("C'", dc)], check=False)


def identity_control(dc: int = 2) -> LabeledOperator:
    return control_vector(np.eye(dc)).outer()


def _psd_defect(op: LabeledOperator) -> float:
    return max(0.0, -float(hermitian_eigenvalues(op)[0]))


def _tp_defect(op: LabeledOperator, outputs: Sequence[str]) -> float:
    red = partial_trace(op, outputs)
    return float(np.max(np.abs(red.data - np.eye(red.dim))))


@dataclass(frozen=True, eq=False)
class FreeOperation:
    """Separable decomposition V = sum_j V_C^j (x) V_AB^j.

    ``terms`` holds pairs (V_C over [C, C'], V_AB over ``AB_ORDER``).
    """

    terms: tuple[tuple[LabeledOperator, LabeledOperator], ...]
    class_tag: str = NSO

    def __post_init__(self):
        if not self.terms:
            raise InstrumentError("a free operation needs at least one term")
        norm = []
        for vc, vab in self.terms:
            vc = permute_factors(vc, ("C", "C'"))
            vab = permute_factors(vab, AB_ORDER)
            norm.append((vc, vab))
        dims = {(vc.dims, vab.dims) for vc, vab in norm}
        if len(dims) != 1:
            raise FactorError("terms disagree on factor dimensions")
        ab = norm[0][1].dims
        if len(set(ab)) != 1:
            raise FactorError(f"lab wires must share one dimension, got {ab}")
        object.__setattr__(self, "terms", tuple(norm))

    @property
    def target_dim(self) -> int:
        return self.terms[0][1].dims[0]

    @property
    def control_dim(self) -> int:
        return self.terms[0][0].dims[0]

    def term_operator(self, j: int) -> LabeledOperator:
        vc, vab = self.terms[j]
        return tensor(vab, vc)

    @cached_property
    def assembled(self) -> LabeledOperator:
        data = sum(np.kron(vab.data, vc.data) for vc, vab in self.terms)
        return LabeledOperator(self.terms[0][1].factors + self.terms[0][0].factors, data)

    def validate(self, tol: float = DEFAULT_TOL) -> None:
        """Raise InstrumentError unless the decomposition is normalized.

        Checks that the control terms sum to a CP-TP map on C -> C' and that
        every lab term is positive and trace preserving.
        """
        total = self.terms[0][0]
        for vc, _ in self.terms[1:]:
            total = total + vc
        for j, (vc, vab) in enumerate(self.terms):
            if _psd_defect(vc) > tol:
                raise InstrumentError(f"control term {j} is not positive")
            if _psd_defect(vab) > tol * max(1.0, vab.max_abs()):
                raise InstrumentError(f"lab term {j} is not positive")
            if _tp_defect(vab, AB_OUTPUTS) > tol:
                raise InstrumentError(f"lab term {j} is not trace preserving")
        if _tp_defect(total, ("C'",)) > tol:
            raise InstrumentError("control instrument does not sum to a trace-preserving map")

    def v_conditions(self) -> dict[str, float]:
        return v_conditions(self.assembled)


def v_conditions(V: LabeledOperator) -> dict[str, float]:
    """Residuals of the four structural identities of an assembled V, keyed by name.

    The control rule ``_{C'}V = _{CC'}V`` only holds when every control
    term is itself proportional to a trace-preserving map.
    """
    V = _operator(V)
    scale = V.max_abs() or 1.0
    expected = float(np.prod([V.factor(n).dim for n in INPUTS]))

    def diff(a, b):
        return float(np.max(np.abs(subindex(V, a).data - subindex(V, b).data))) / scale

    outs, ins = set(OUTPUTS), set(INPUTS)
    return {
        "trace": abs(V.trace().real - expected) / expected,
        "inputs_outputs": diff(outs, ins | outs),
        "control_separate": diff({"C'"}, {"C", "C'"}),
        "labs_separate": diff(set(AB_OUTPUTS), set(AB_INPUTS) | set(AB_OUTPUTS)),
    }


def _subindex_pairs(V: LabeledOperator, pairs) -> tuple[float, ...]:
    scale = V.max_abs() or 1.0
    return tuple(float(np.max(np.abs(subindex(V, a).data - subindex(V, b).data))) / scale
                 for a, b in pairs)


NSO_PAIRS = (
    ({"A_O"}, {"A_O'", "A_O"}),
    ({"B_O"}, {"B_O'", "B_O"}),
    ({"A_I'", "A_O"}, {"A_I", "A_I'", "A_O"}),
    ({"B_I'", "B_O"}, {"B_I", "B_I'", "B_O"}),
)
SWAPPED_PAIRS = (
    ({"A_O"}, {"B_O'", "A_O"}),
    ({"B_O"}, {"A_O'", "B_O"}),
    ({"B_I'", "A_O"}, {"A_I", "B_I'", "A_O"}),
    ({"A_I'", "B_O"}, {"B_I", "A_I'", "B_O"}),
)


def _operator(v) -> LabeledOperator:
    if isinstance(v, FreeOperation):
        return v.assembled
    if isinstance(v, PureProcess):
        return v.outer()
    return v


def check_nso(v, tol: float = DEFAULT_TOL) -> tuple[bool, tuple[float, ...]]:
    """Four nonsignaling identities; accepts a FreeOperation or a bare lab operator."""
    r = _subindex_pairs(_operator(v), NSO_PAIRS)
    return max(r) <= tol, r


def check_swapped_conditions(v, tol: float = DEFAULT_TOL) -> tuple[bool, tuple[float, ...]]:
    """The nonsignaling identities with A and B exchanged on the primed side."""
    r = _subindex_pairs(_operator(v), SWAPPED_PAIRS)
    return max(r) <= tol, r


# --- builders ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LoaeTerm:
    """Ancilla state over (A~, B~) and the four local unitaries.

    Each unitary acts on (system (x) ancilla) with the system as the most
    significant factor: ``u_ai`` maps A_I (x) A~ to A_I' (x) A~ and is
    applied before ``u_ao``, which maps A_O' (x) A~ to A_O (x) A~.
    """

    ancilla: np.ndarray
    u_ai: np.ndarray
    u_ao: np.ndarray
    u_bi: np.ndarray
    u_bo: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.ancilla, dtype=complex)
        if psi.ndim != 2:
            raise FactorError("ancilla state must be a (dim A~, dim B~) array")
        if abs(np.linalg.norm(psi) - 1) > 1e-9:
            raise NotIsometryError("ancilla state is not normalized")
        object.__setattr__(self, "ancilla", psi)
        da, db = psi.shape
        for name, anc in (("u_ai", da), ("u_ao", da), ("u_bi", db), ("u_bo", db)):
            u = np.asarray(getattr(self, name), dtype=complex)
            n = u.shape[0]
            if u.shape != (n, n) or n % anc:
                raise FactorError(f"{name} of shape {u.shape} does not fit ancilla dim {anc}")
            if np.max(np.abs(u.conj().T @ u - np.eye(n))) > 1e-9:
                raise NotIsometryError(f"{name} is not unitary")
            object.__setattr__(self, name, u)
        dims = {self.u_ai.shape[0] // da, self.u_ao.shape[0] // da,
                self.u_bi.shape[0] // db, self.u_bo.shape[0] // db}
        if len(dims) != 1:
            raise FactorError("unitaries disagree on the target dimension")

    @property
    def d(self) -> int:
        return self.u_ai.shape[0] // self.ancilla.shape[0]

    @classmethod
    def local(cls, u_ai, u_ao, u_bi, u_bo) -> "LoaeTerm":
        """Plain local unitaries with trivial ancillas."""
        return cls(np.ones((1, 1)), u_ai, u_ao, u_bi, u_bo)

    @classmethod
    def random(cls, d: int, rng: np.random.Generator,
               ancilla_dim: int | None = None) -> "LoaeTerm":
        da = ancilla_dim or 2 * d * d
        psi = rng.standard_normal((da, da)) + 1j * rng.standard_normal((da, da))
        psi /= np.linalg.norm(psi)
        us = [random_unitary(d * da, rng) for _ in range(4)]
        return cls(psi, *us)

    def vector(self) -> np.ndarray:
        """Purification of V_AB: array of shape (d**8, dim A~ * dim B~)."""
        d = self.d
        da, db = self.ancilla.shape
        uai = self.u_ai.reshape(d, da, d, da)
        uao = self.u_ao.reshape(d, da, d, da)
        ubi = self.u_bi.reshape(d, db, d, db)
        ubo = self.u_bo.reshape(d, db, d, db)
        # a=A_I b=A_I' c=A_O' e=A_O, l=B_I m=B_I' n=B_O' q=B_O; g,h,k / r,s,t ancilla steps
        chi = np.einsum("bhag,ekch,mslr,qtns,gr->abeclmqnkt",
                        uai, uao, ubi, ubo, self.ancilla, optimize=True)
        return chi.reshape(d ** 8, da * db)


@dataclass(frozen=True, eq=False)
class LoaeSpec:
    terms: tuple[LoaeTerm, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise InstrumentError("LOAE spec needs at least one term")
        if len({t.d for t in self.terms}) != 1:
            raise FactorError("terms disagree on the target dimension")

    @property
    def d(self) -> int:
        return self.terms[0].d


def loae_lab_operator(term: LoaeTerm) -> LabeledOperator:
    x = term.vector()
    return LabeledOperator(ab_factors(term.d), x @ x.conj().T)


def build_loae(spec: LoaeSpec, control_instrument: Sequence[LabeledOperator] | None = None,
               tol: float = DEFAULT_TOL) -> FreeOperation:
    """Free operation with one lab term per spec term.

    ``control_instrument`` defaults to the identity channel on C when the
    spec has a single term.
    """
    if control_instrument is None:
        if len(spec.terms) != 1:
            raise InstrumentError("multi-term LOAE needs an explicit control instrument")
        control_instrument = [identity_control()]
    if len(control_instrument) != len(spec.terms):
        raise InstrumentError("control instrument and spec have different lengths")
    op = FreeOperation(tuple((vc, loae_lab_operator(t))
                             for vc, t in zip(control_instrument, spec.terms)), LOAE)
    op.validate(tol)
    return op


def build_pls(distribution: Sequence[tuple[float, bool]],
              control_kraus: Sequence[LabeledOperator] | None = None,
              d: int = 2, tol: float = DEFAULT_TOL) -> FreeOperation:
    """Classically controlled identity or lab swap.

    Without ``control_kraus`` the control terms are ``p_j cj(1)``; with it the
    probabilities are carried by the given control terms and ``prob_j`` is
    ignored apart from validation.
    """
    distribution = list(distribution)
    if not distribution:
        raise InstrumentError("empty distribution")
    probs = np.array([float(p) for p, _ in distribution])
    ident = identity_ab_vector(d).outer()
    swap = swap_ab_vector(d).outer()
    if control_kraus is None:
        if probs.min() < 0 or abs(probs.sum() - 1) > 1e-12:
            raise InstrumentError(f"{probs.tolist()} is not a probability distribution")
        base = identity_control()
        control_kraus = [base.scaled(p) for p in probs]
    if len(control_kraus) != len(distribution):
        raise InstrumentError("control terms and distribution have different lengths")
    terms = tuple((vc, swap if s else ident) for vc, (_, s) in zip(control_kraus, distribution))
    op = FreeOperation(terms, PLS)
    op.validate(tol)
    return op


def random_control_instrument(n: int, rng: np.random.Generator,
                              dc: int = 2) -> list[LabeledOperator]:
    """n-outcome instrument from a random isometry C -> C' (x) J."""
    iso = random_isometry(dc, dc * n, rng).reshape(dc, n, dc)
    c, cp = FactorLabel("C", dc), FactorLabel("C'", dc)
    return [cj_of_kraus([iso[:, j, :]], [c], [cp]) for j in range(n)]


def random_loae(d: int, n_terms: int, rng: np.random.Generator,
                ancilla_dim: int | None = None) -> FreeOperation:
    spec = LoaeSpec(tuple(LoaeTerm.random(d, rng, ancilla_dim) for _ in range(n_terms)))
    inst = random_control_instrument(n_terms, rng) if n_terms > 1 else None
    return build_loae(spec, inst)


def random_pls(d: int, n_terms: int, rng: np.random.Generator) -> FreeOperation:
    swaps = [bool(rng.integers(2)) for _ in range(n_terms)]
    inst = random_control_instrument(n_terms, rng)
    probs = [vc.trace().real / 2 for vc in inst]
    return build_pls(list(zip(probs, swaps)), inst, d=d)


# --- application ------------------------------------------------------------

def _output_process(r: LabeledOperator) -> ProcessMatrix:
    return ProcessMatrix(r.renamed({k: v for k, v in UNPRIME.items() if k in r.names}))


def apply_operator(V: LabeledOperator, w) -> ProcessMatrix:
    """Link an assembled V with a process and unprime the result."""
    W = as_process(w).op
    for n in ("A_I", "A_O", "B_I", "B_O", "C"):
        if V.factor(n).dim != W.factor(n).dim:
            raise FactorError(f"dimension mismatch on {n}")
    return _output_process(link_product(V, W))


def apply(v: FreeOperation, w) -> ProcessMatrix:
    return apply_operator(v.assembled, w)


def apply_vector(v: PureProcess, w: PureProcess) -> PureProcess:
    """Pure-vector analogue of :func:`apply` for a rank-one V over ``V_ORDER``."""
    for n in ("A_I", "A_O", "B_I", "B_O", "C"):
        if v.factor(n).dim != w.factor(n).dim:
            raise FactorError(f"dimension mismatch on {n}")
    r = link_vectors(v, w)
    return r.renamed({k: x for k, x in UNPRIME.items() if k in r.names}).permuted(PROCESS_ORDER)


@dataclass(frozen=True)
class FreeSequence:
    ops: tuple[FreeOperation, ...]

    def __call__(self, w) -> ProcessMatrix:
        return self.apply(w)

    def apply(self, w) -> ProcessMatrix:
        w = as_process(w)
        for op in self.ops:
            w = apply(op, w)
        return w


def sequence(ops: Sequence[FreeOperation]) -> FreeSequence:
    ops = tuple(ops)
    if not ops:
        raise InstrumentError("empty sequence")
    d = {op.target_dim for op in ops}
    if len(d) != 1:
        raise FactorError(f"operations act on different target dimensions {sorted(d)}")
    return FreeSequence(ops)


# --- random causal processes --------------------------------------------------

def random_causal_process(d: int, order: str, rng: np.random.Generator,
                          memory_dim: int | None = None) -> ProcessMatrix:
    """Random comb compatible with ``order``.

    Three random isometries feed P to the first lab (emitting the control
    qubit and a memory), the first lab's output plus memory to the second
    lab, and the second lab's output to F plus an environment that is
    traced out.
    """
    if order not in (A_TO_B, B_TO_A):
        raise ValueError(f"unknown order {order!r}")
    first, second = ("A", "B") if order == A_TO_B else ("B", "A")
    m = memory_dim or d
    P, F, C = FactorLabel("P", d), FactorLabel("F", d), FactorLabel("C", 2)
    M, M2, E = FactorLabel("M", m), FactorLabel("M2", m), FactorLabel("E", d * m)
    x_in, x_out = FactorLabel(f"{first}_I", d), FactorLabel(f"{first}_O", d)
    y_in, y_out = FactorLabel(f"{second}_I", d), FactorLabel(f"{second}_O", d)
    v1 = cj_vector(random_isometry(d, d * m * 2, rng), [P], [x_in, M, C])
    v2 = cj_vector(random_unitary(d * m, rng), [x_out, M], [y_in, M2])
    v3 = cj_vector(random_isometry(d * m, d * d * m, rng), [y_out, M2], [F, E])
    v = link_vectors(link_vectors(v1, v2), v3).permuted(PROCESS_ORDER + ("E",))
    x = v.data.reshape(-1, d * m)
    return ProcessMatrix(LabeledOperator(v.factors[:-1], x @ x.conj().T))


def random_separable_mixture(d: int, rng: np.random.Generator) -> tuple[ProcessMatrix, float]:
    q = float(rng.random())
    a = random_causal_process(d, A_TO_B, rng).op
    b = random_causal_process(d, B_TO_A, rng).op
    return ProcessMatrix(a.scaled(q) + b.scaled(1 - q)), q


# --- preservation harness ---------------------------------------------------------

def term_behaviour(vab: LabeledOperator, tol: float = DEFAULT_TOL) -> str | None:
    """``PRESERVE`` for nonsignaling lab terms, ``INVERT`` for swapped ones."""
    if check_nso(vab, tol)[0]:
        return PRESERVE
    if check_swapped_conditions(vab, tol)[0]:
        return INVERT
    return None


def _flip(order: str) -> str:
    return B_TO_A if order == A_TO_B else A_TO_B


@dataclass
class SampleResult:
    order: str
    validity: float
    trace: float
    order_residual: float
    decomposition: float
    behaviours: tuple


@dataclass
class PreservationReport:
    samples: int
    tolerance: float
    max_validity_residual: float
    max_trace_residual: float
    max_order_residual: float
    max_decomposition_residual: float
    behaviours: tuple
    failures: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.failures == 0

    def worst(self) -> float:
        return max(self.max_validity_residual, self.max_trace_residual,
                   self.max_order_residual, self.max_decomposition_residual)


def _check_sample(v: FreeOperation, behaviours, w: ProcessMatrix, order: str) -> SampleResult:
    out = apply(v, w)
    rep = is_valid_process(out)
    validity = max(r for _, r in rep.checks())
    scale = out.op.max_abs() or 1.0
    total = None
    order_res = 0.0
    for j, b in enumerate(behaviours):
        part = apply_operator(v.term_operator(j), w)
        total = part.op if total is None else total + part.op
        if b is not None:
            target = order if b == PRESERVE else _flip(order)
            order_res = max(order_res, order_residual(part, target) / scale)
    if len(set(behaviours)) == 1 and behaviours[0] is not None:
        target = order if behaviours[0] == PRESERVE else _flip(order)
        order_res = max(order_res, order_residual(out, target) / scale)
    decomposition = float(np.max(np.abs(total.data - out.op.data))) / scale
    return SampleResult(order, validity, rep.residuals["trace"], order_res, decomposition,
                        tuple(behaviours))


def preservation_suite(v: FreeOperation, samples: int, seed: int,
                       tol: float = 1e-8,
                       process_sampler: Callable | None = None) -> PreservationReport:
    """Apply ``v`` to random causal processes of both orders and collect residuals.

    Sample ``i`` uses its own generator seeded by ``(seed, i)`` and has order
    A->B for even ``i`` and B->A for odd ``i``.  Lab terms are classified as
    order preserving or inverting; every term's output is checked for the
    matching order and the term outputs must sum to the full output.
    """
    d = v.target_dim
    behaviours = tuple(term_behaviour(vab) for _, vab in v.terms)
    sampler = process_sampler or random_causal_process

    def one(i: int) -> SampleResult:
        rng = np.random.default_rng([seed, i])
        order = A_TO_B if i % 2 == 0 else B_TO_A
        return _check_sample(v, behaviours, sampler(d, order, rng), order)

    with ThreadPoolExecutor(max_workers()) as ex:
        results = list(ex.map(one, range(samples)))
    fails = sum(1 for r in results
                if max(r.validity, r.trace, r.order_residual, r.decomposition) > tol)
    return PreservationReport(
        samples, tol,
        max((r.validity for r in results), default=0.0),
        max((r.trace for r in results), default=0.0),
        max((r.order_residual for r in results), default=0.0),
        max((r.decomposition for r in results), default=0.0),
        behaviours, fails)
