"""Distillation of quantum switches from many copies of a generalized switch.

Multi-copy states are kept in the switch basis: an amplitude per bit string
``s`` (copy 0 is the most significant bit) plus, per copy, the pair of
branch vectors the two bit values stand for.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._parallel import max_workers
from .conversion import as_distribution, canonicalizing_unitaries, filter_parameters
from .covering import CoveringDesign, bit_at, build_covering_design, is_bijective, pattern
from .errors import ConstraintError, FactorError, SupportError
from .freeops import AB_ORDER, apply_vector, control_vector, local_unitary_vector, wire_vector
from .linalg import (
    FactorLabel,
    LabeledOperator,
    PureProcess,
    Role,
    permute_factors,
    tensor_vectors,
)
from .switches import (
    GeneralizedSwitchSpec,
    check_switch_constraints,
    make_fixed_order,
    make_generalized_switch,
    make_quantum_switch,
)

AMP_TOL = 1e-12


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _weights(N: int) -> np.ndarray:
    return np.array([bin(s).count("1") for s in range(1 << N)])


@dataclass(frozen=True, eq=False)
class SwitchBasisState:
    amplitudes: np.ndarray
    branches: tuple[tuple[PureProcess, PureProcess], ...]

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).reshape(-1)
        N = len(self.branches)
        if a.size != 1 << N:
            raise FactorError(f"{a.size} amplitudes for {N} copies")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "branches", tuple(tuple(b) for b in self.branches))

    @property
    def n_copies(self) -> int:
        return len(self.branches)

    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "SwitchBasisState":
        return SwitchBasisState(self.amplitudes / np.sqrt(self.norm_sq()), self.branches)

    def support(self, tol: float = AMP_TOL) -> list[int]:
        return [int(s) for s in np.flatnonzero(np.abs(self.amplitudes) > tol)]

    @classmethod
    def from_spec(cls, spec: GeneralizedSwitchSpec, N: int) -> "SwitchBasisState":
        """N independent copies: amplitudes are products of sqrt(p_b)."""
        amps = np.ones(1)
        for _ in range(N):
            amps = np.kron(amps, np.sqrt(np.array(spec.p)))
        b = (make_generalized_switch(spec.replace(p=(1.0, 0.0))),
             make_generalized_switch(spec.replace(p=(0.0, 1.0))))
        return cls(amps, (b,) * N)

    def expand(self, max_size: int = 1 << 22) -> PureProcess:
        """Full vector sum_s a_s (x)_i branch_i[s_i]; factors get a ``.i`` suffix."""
        sizes = [b[0].dim for b in self.branches]
        if math.prod(sizes) > max_size:
            raise ValueError("expansion too large")
        t = self.amplitudes.reshape((2,) * self.n_copies) if self.n_copies else self.amplitudes
        fs = []
        for i, (b0, b1) in enumerate(self.branches):
            if b0.names != b1.names:
                b1 = b1.permuted(b0.names)
            m = np.stack([b0.data, b1.data])
            t = np.tensordot(t, m, axes=([0], [0]))
            fs += [FactorLabel(f"{f.name}.{i}", f.dim, Role.COPY) for f in b0.factors]
        return PureProcess(tuple(fs), t.reshape(-1))


def from_single_vector(v: PureProcess, branches: tuple[PureProcess, PureProcess]) -> SwitchBasisState:
    """Amplitudes of a one-copy vector in the span of ``branches`` (least squares)."""
    m = np.stack([b.permuted(v.names).data for b in branches], axis=1)
    amps, *_ = np.linalg.lstsq(m, v.data, rcond=None)
    return SwitchBasisState(amps, (tuple(branches),))


def canonical_branches(d: int) -> tuple[PureProcess, PureProcess]:
    return make_fixed_order(0, d), make_fixed_order(1, d)


def step1_vector(spec: GeneralizedSwitchSpec) -> PureProcess:
    """Lab unitaries plus the control rotation |Phi_b> -> |b>."""
    us = canonicalizing_unitaries(spec)
    labs = local_unitary_vector(us["A_I"], us["A_O"], us["B_I"], us["B_O"])
    return tensor_vectors(labs, control_vector(spec.control_basis.conj().T))


def apply_step1_unitaries(state: SwitchBasisState, spec: GeneralizedSwitchSpec) -> SwitchBasisState:
    """Rotate every copy's branch vectors to |0>|1_0> and |1>|1_1>; amplitudes untouched."""
    ok, r = check_switch_constraints(spec)
    if not ok:
        raise ConstraintError(f"spec violates the unitary constraints (residuals {r})")
    v = step1_vector(spec)
    cache: dict[int, tuple[PureProcess, PureProcess]] = {}
    new = []
    for pair in state.branches:
        key = id(pair)
        if key not in cache:
            cache[key] = tuple(apply_vector(v, b) for b in pair)
        new.append(cache[key])
    return SwitchBasisState(state.amplitudes, tuple(new))


def type_class_measure(state: SwitchBasisState, seed=None) -> tuple[int, SwitchBasisState]:
    """Sample the Hamming weight j and project onto weight-j strings."""
    rng = _rng(seed)
    N = state.n_copies
    w = _weights(N)
    probs = np.bincount(w, weights=np.abs(state.amplitudes) ** 2, minlength=N + 1)
    probs = probs / probs.sum()
    j = int(rng.choice(N + 1, p=probs))
    post = np.where(w == j, state.amplitudes, 0)
    return j, SwitchBasisState(post, state.branches).normalized()


def povm_completeness_residual(design: CoveringDesign) -> float:
    """max |sum_l E_l^dag E_l - Pi_j| on the diagonal of the weight-j subspace."""
    total = np.zeros(1 << design.N)
    for block in design.sets:
        total[list(block)] += 1.0 / design.n
    proj = (_weights(design.N) == design.j).astype(float)
    return float(np.max(np.abs(total - proj)))


def subproject_measure(state: SwitchBasisState, design: CoveringDesign,
                       seed=None) -> tuple[int, SwitchBasisState]:
    """Sample set index l with probability (1/n) sum_{s in R_l} |a_s|^2.

    Returns the 0-based index and the renormalized restriction to R_l.
    """
    rng = _rng(seed)
    if state.n_copies != design.N:
        raise SupportError("design and state have different numbers of copies")
    w = _weights(design.N)
    outside = np.abs(state.amplitudes[w != design.j])
    if outside.size and outside.max() > AMP_TOL:
        raise SupportError(f"state has support outside weight {design.j}")
    a2 = np.abs(state.amplitudes) ** 2
    probs = np.array([a2[list(b)].sum() for b in design.sets]) / design.n
    probs = probs / probs.sum()
    ell = int(rng.choice(len(probs), p=probs))
    mask = np.zeros(1 << design.N, dtype=bool)
    mask[list(design.sets[ell])] = True
    post = np.where(mask, state.amplitudes, 0)
    return ell, SwitchBasisState(post, state.branches).normalized()


def bypass_operation(d: int, phi: np.ndarray | None = None) -> LabeledOperator:
    """Lab operation that wires A_I to A_O and B_I to B_O, feeds |phi> to the
    new labs and discards their outputs."""
    phi = np.eye(d)[0] if phi is None else np.asarray(phi, dtype=complex)
    short = wire_vector([("A_I", "A_O"), ("B_I", "B_O")], d, ("A_I", "A_O", "B_I", "B_O"))
    dummy = np.kron(np.outer(phi, phi.conj()), np.eye(d))
    fs = tuple(FactorLabel(n, d) for n in
               ("A_I", "A_O", "B_I", "B_O", "A_I'", "A_O'", "B_I'", "B_O'"))
    op = LabeledOperator(fs, np.kron(short.outer().data, np.kron(dummy, dummy)))
    return permute_factors(op, AB_ORDER)


def bypassed_content(d: int, phi: np.ndarray | None = None) -> PureProcess:
    """Pure part of a bypassed copy: identity P->F and |phi> into both labs.

    The lab outputs A_O, B_O are ignored (identity operator) and carry no
    vector factor.
    """
    phi = np.eye(d)[0] if phi is None else np.asarray(phi, dtype=complex)
    pf = np.eye(d).reshape(-1)  # sum_j |j>_P |j>_F
    t = np.einsum("pf,a,b->pabf", pf.reshape(d, d), phi, phi)
    fs = tuple(FactorLabel(n, d) for n in ("P", "A_I", "B_I", "F"))
    return PureProcess(fs, t.reshape(-1))


def bypassed_branches(d: int) -> tuple[PureProcess, PureProcess]:
    x = bypassed_content(d)
    c = FactorLabel("C", 2)
    return tuple(tensor_vectors(x, PureProcess((c,), np.eye(2)[b])) for b in (0, 1))


@dataclass
class ExtractionStep:
    copy: int
    outcome: str
    probability: float
    corrected: bool


def disentangle_and_extract(state: SwitchBasisState, design_entry, seed=None,
                            outcomes: str | None = None
                            ) -> tuple[SwitchBasisState, list[ExtractionStep]]:
    """Bypass and measure every copy outside ``kept_positions``.

    ``design_entry`` is ``(l, kept_positions)``.  Each discarded copy is
    bypassed, its control measured in the |+>,|-> basis, and a - outcome is
    undone by the phase (-1)^{f(kept bits)} on the kept controls, where f
    reads the discarded bit off the kept pattern.  ``outcomes`` forces the
    measurement results (one "+" or "-" per discarded copy, in copy order).
    """
    rng = _rng(seed)
    _, kept = design_entry
    kept = tuple(kept)
    N = state.n_copies
    support = state.support()
    if not is_bijective(support, kept, N):
        raise SupportError(f"support is not bijective on copies {kept}")
    if outcomes is not None and (len(outcomes) != N - len(kept) or set(outcomes) - {"+", "-"}):
        raise ValueError(f"need {N - len(kept)} forced outcomes from '+' and '-', got {outcomes!r}")
    copies = list(range(N))  # original index of each remaining axis
    amps = state.amplitudes.reshape((2,) * N) if N else state.amplitudes
    branches = list(state.branches)
    d = state.branches[0][0].factor("P").dim if N else 2
    # discarded bit as a function of the kept pattern
    f = {i: {pattern(s, kept, N): bit_at(s, i, N) for s in support}
         for i in range(N) if i not in kept}
    log = []
    for i in sorted(f):
        axis = copies.index(i)
        branches[axis] = bypassed_branches(d)
        a0 = np.take(amps, 0, axis=axis)
        a1 = np.take(amps, 1, axis=axis)
        plus, minus = (a0 + a1) / np.sqrt(2), (a0 - a1) / np.sqrt(2)
        p_plus = float(np.vdot(plus, plus).real) / float(np.vdot(amps, amps).real)
        if outcomes is None:
            sign = "+" if rng.random() < p_plus else "-"
        else:
            sign = outcomes[len(log)]
        amps = plus if sign == "+" else minus
        copies.pop(axis)
        branches.pop(axis)
        if sign == "-":
            # remaining axes still include other discarded copies; f only reads kept ones
            flat = amps.reshape(-1)
            n_rem = len(copies)
            phases = np.ones(flat.size)
            for idx in range(flat.size):
                kp = 0
                for c in kept:
                    kp = (kp << 1) | ((idx >> (n_rem - 1 - copies.index(c))) & 1)
                if f[i].get(kp, 0):
                    phases[idx] = -1
            amps = (flat * phases).reshape(amps.shape)
        log.append(ExtractionStep(i, sign, p_plus if sign == "+" else 1 - p_plus, sign == "-"))
    out = SwitchBasisState(amps.reshape(-1), tuple(branches)).normalized()
    return out, log


def fidelity_to_switch_power(state: SwitchBasisState) -> float:
    """Fidelity of the expanded state with the k-fold product of quantum switches.

    Computed from per-copy overlaps and Gram matrices, so it is exact for
    arbitrary branch vectors and never forms the full vector.
    """
    k = state.n_copies
    if k == 0:
        return 1.0
    c = np.ones(1, dtype=complex)
    gram = np.ones((1, 1), dtype=complex)
    ws = None
    for b0, b1 in state.branches:
        if ws is None or ws.factors[0].dim != b0.factor("P").dim:
            ws = make_quantum_switch(b0.factor("P").dim)
        if set(b0.names) != set(ws.names):
            return 0.0
        bs = (b0.permuted(ws.names), b1.permuted(ws.names))
        ci = np.array([np.vdot(ws.data, b.data) for b in bs]) / np.sqrt(ws.norm_sq())
        gi = np.array([[np.vdot(x.data, y.data) for y in bs] for x in bs])
        c, gram = np.kron(c, ci), np.kron(gram, gi)
    a = state.amplitudes
    overlap = np.dot(c, a)
    norm = np.vdot(a, gram @ a).real
    return float(abs(overlap) ** 2 / norm)


# --- rates -------------------------------------------------------------------

def filter_distill_rate(p) -> float:
    return 2 * as_distribution(p).min


def filter_distill_mc(p, n_copies: int, trials: int, seed: int) -> tuple[float, float]:
    """Mean fraction of heralded filter successes and its standard error.

    Trial t draws ``n_copies`` Bernoulli outcomes from the generator seeded
    by ``(seed, t)``.
    """
    if n_copies < 1 or trials < 1:
        raise ValueError("n_copies and trials must be positive")
    ps = filter_parameters(p, (0.5, 0.5))[2]
    rates = np.array([
        np.count_nonzero(np.random.default_rng([seed, t]).random(n_copies) < ps) / n_copies
        for t in range(trials)])
    err = float(rates.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return float(rates.mean()), err


def expected_multicopy_rate(p, N: int) -> float:
    """E[min(j, N-j)] / N with j ~ Binomial(N, p1)."""
    p0, p1 = as_distribution(p)
    return sum(math.comb(N, j) * p1 ** j * p0 ** (N - j) * min(j, N - j)
               for j in range(N + 1)) / N


@dataclass
class TrialResult:
    j: int
    ell: int
    k: int
    kept: tuple
    fidelity: float
    outcomes: str


@dataclass
class MulticopyReport:
    N: int
    trials: int
    seed: int
    rate: float
    std_err: float
    expected_rate: float
    min_fidelity: float
    j_histogram: dict
    results: list = field(repr=False)


def run_trial(state: SwitchBasisState, rng: np.random.Generator) -> TrialResult:
    """Steps 2 to 4 on a state whose branches are already canonical."""
    N = state.n_copies
    j, s = type_class_measure(state, rng)
    design = build_covering_design(N, j)
    ell, s = subproject_measure(s, design, rng)
    kept = design.kept_positions[ell]
    out, log = disentangle_and_extract(s, (ell, kept), rng)
    return TrialResult(j, ell, len(kept), kept, fidelity_to_switch_power(out),
                       "".join(x.outcome for x in log))


def multicopy_distill(spec: GeneralizedSwitchSpec, N: int, trials: int,
                      seed: int) -> tuple[float, MulticopyReport]:
    """Run the full protocol ``trials`` times on N copies of ``spec``.

    Trial t uses the generator seeded by ``(seed, t)``; results are merged
    in trial order.
    """
    if N < 1 or trials < 1:
        raise ValueError("N and trials must be positive")
    state = apply_step1_unitaries(SwitchBasisState.from_spec(spec, N), spec)
    for jj in range(N + 1):
        build_covering_design(N, jj)

    def one(t):
        return run_trial(state, np.random.default_rng([seed, t]))

    with ThreadPoolExecutor(max_workers()) as ex:
        results = list(ex.map(one, range(trials)))
    rates = np.array([r.k / N for r in results])
    err = float(rates.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    hist = dict(sorted(Counter(r.j for r in results).items()))
    report = MulticopyReport(N, trials, seed, float(rates.mean()), err,
                             expected_multicopy_rate(spec.p, N),
                             min(r.fidelity for r in results), hist, results)
    return report.rate, report
