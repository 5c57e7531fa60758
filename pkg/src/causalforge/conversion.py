"""Deterministic and filtered conversion between generalized switches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DistributionError, MajorizationError, SpecMismatchError
from .freeops import (
    LOAE,
    PLS,
    FreeOperation,
    FreeSequence,
    apply_vector,
    control_vector,
    identity_ab_vector,
    identity_control,
    local_unitary_vector,
    sequence,
    swap_ab_vector,
)
from .linalg import LabeledOperator, PureProcess, fidelity, tensor_vectors
from .process import PROCESS_ORDER, ProcessMatrix, link_vectors
from .switches import GeneralizedSwitchSpec, check_switch_constraints, make_generalized_switch

DIST_TOL = 1e-12
MATCH_TOL = 1e-9


@dataclass(frozen=True)
class BinaryDistribution:
    p0: float
    p1: float

    def __post_init__(self):
        p0, p1 = float(self.p0), float(self.p1)
        if not (np.isfinite(p0) and np.isfinite(p1)) or min(p0, p1) < -DIST_TOL \
                or abs(p0 + p1 - 1) > DIST_TOL:
            raise DistributionError(f"({p0}, {p1}) is not a binary probability distribution")
        object.__setattr__(self, "p0", max(p0, 0.0))
        object.__setattr__(self, "p1", max(p1, 0.0))

    def __iter__(self):
        return iter((self.p0, self.p1))

    def __getitem__(self, i: int) -> float:
        return (self.p0, self.p1)[i]

    @property
    def max(self) -> float:
        return max(self.p0, self.p1)

    @property
    def min(self) -> float:
        return min(self.p0, self.p1)

    def swapped(self) -> "BinaryDistribution":
        return BinaryDistribution(self.p1, self.p0)


def as_distribution(p) -> BinaryDistribution:
    if isinstance(p, BinaryDistribution):
        return p
    p = tuple(p)
    if len(p) != 2:
        raise DistributionError(f"expected two probabilities, got {len(p)}")
    return BinaryDistribution(*p)


def majorizes(q, p) -> bool:
    """True iff p is majorized by q, i.e. max(p) <= max(q)."""
    return as_distribution(p).max <= as_distribution(q).max + DIST_TOL


def solve_lambda(p, p_prime) -> tuple[float, float]:
    """Weights with lambda_id * p' + lambda_sw * swap(p') = p."""
    p, pp = as_distribution(p), as_distribution(p_prime)
    if not majorizes(pp, p):
        raise MajorizationError(f"{tuple(p)} is not majorized by {tuple(pp)}")
    gap = pp.p0 - pp.p1
    if abs(gap) < DIST_TOL:
        return 1.0, 0.0
    lam = (p.p0 - pp.p1) / gap
    lam = min(1.0, max(0.0, lam))
    return lam, 1.0 - lam


def canonicalizing_unitaries(spec: GeneralizedSwitchSpec) -> dict[str, np.ndarray]:
    """Lab unitaries turning both branches of ``spec`` into identity wires."""
    dag = lambda u: u.conj().T  # noqa: E731
    return {"A_I": dag(spec.u_PA), "A_O": dag(spec.u_AB) @ spec.u_PB,
            "B_I": dag(spec.u_PB), "B_O": dag(spec.u_BF)}


def dressing_unitaries(spec: GeneralizedSwitchSpec) -> dict[str, np.ndarray]:
    """Lab unitaries turning identity wires into the branches of ``spec``."""
    return {"A_I": spec.u_PA, "A_O": spec.u_PB.conj().T @ spec.u_AB,
            "B_I": spec.u_PB, "B_O": spec.u_BF}


def _local(us: dict[str, np.ndarray]) -> PureProcess:
    return local_unitary_vector(us["A_I"], us["A_O"], us["B_I"], us["B_O"])


def control_kraus(p, p_prime, basis: np.ndarray, basis_prime: np.ndarray,
                  lam: tuple[float, float]) -> list[np.ndarray]:
    """Kraus operators K_pi = sqrt(lam_pi) sum_i c_i |Phi'_pi(i)><Phi_i|.

    ``c_i = sqrt(p'_pi(i) / p_i)``, or 1 when ``p_i = 0`` (that branch is
    absent and only completeness matters).
    """
    p, pp = as_distribution(p), as_distribution(p_prime)
    out = []
    for flip, l in enumerate(lam):
        k = np.zeros((2, 2), dtype=complex)
        for i in range(2):
            j = i ^ flip
            c = np.sqrt(pp[j] / p[i]) if p[i] > 0 else 1.0
            k += c * np.outer(basis_prime[:, j], basis[:, i].conj())
        out.append(np.sqrt(l) * k)
    return out


@dataclass(frozen=True, eq=False)
class ConversionPlan:
    """Three-stage conversion: canonicalize, controlled swap, dress.

    Stage one applies ``step1_unitaries`` so both source branches become
    identity wires.  Stage two is a two-outcome control instrument paired
    with the identity (outcome 0) or lab swap (outcome 1).  Stage three
    applies ``final_unitaries`` to reach the target's wire unitaries.
    """

    source: GeneralizedSwitchSpec
    target: GeneralizedSwitchSpec
    step1_unitaries: dict
    final_unitaries: dict
    lam: tuple[float, float]
    kraus: tuple[np.ndarray, np.ndarray]
    vc_terms: tuple[PureProcess, PureProcess]
    vab_terms: tuple[PureProcess, PureProcess]

    def stage_vectors(self) -> tuple[PureProcess, tuple[PureProcess, PureProcess], PureProcess]:
        ident = control_vector(np.eye(2))
        first = tensor_vectors(_local(self.step1_unitaries), ident)
        middle = tuple(tensor_vectors(ab, c) for ab, c in zip(self.vab_terms, self.vc_terms))
        last = tensor_vectors(_local(self.final_unitaries), ident)
        return first, middle, last

    def free_operations(self) -> list[FreeOperation]:
        ident = identity_control()
        first = FreeOperation(((ident, _local(self.step1_unitaries).outer()),), LOAE)
        middle = FreeOperation(tuple((c.outer(), ab.outer())
                                     for c, ab in zip(self.vc_terms, self.vab_terms)), PLS)
        last = FreeOperation(((ident, _local(self.final_unitaries).outer()),), LOAE)
        for op in (first, middle, last):
            op.validate()
        return [first, middle, last]

    def as_sequence(self) -> FreeSequence:
        return sequence(self.free_operations())


def _require_constraints(spec: GeneralizedSwitchSpec, which: str) -> None:
    ok, r = check_switch_constraints(spec)
    if not ok:
        raise ConstraintError(f"{which} violates the unitary constraints (residuals {r})")


def plan_deterministic(source: GeneralizedSwitchSpec,
                       target: GeneralizedSwitchSpec) -> ConversionPlan:
    _require_constraints(source, "source")
    _require_constraints(target, "target")
    if source.d != target.d:
        raise SpecMismatchError("source and target have different target dimensions")
    lam = solve_lambda(source.p, target.p)
    kraus = control_kraus(source.p, target.p, source.control_basis, target.control_basis, lam)
    vc = tuple(control_vector(k) for k in kraus)
    vab = (identity_ab_vector(source.d), swap_ab_vector(source.d))
    return ConversionPlan(source, target, canonicalizing_unitaries(source),
                          dressing_unitaries(target), lam, tuple(kraus), vc, vab)


def _check_source(plan: ConversionPlan, w: PureProcess) -> None:
    f = fidelity(make_generalized_switch(plan.source), w)
    if f < 1 - MATCH_TOL:
        raise SpecMismatchError(f"input process does not match the plan source (fidelity {f:.6f})")


def execute_branches(plan: ConversionPlan, w: PureProcess) -> list[PureProcess]:
    """Unnormalized output vector for each outcome of the control instrument."""
    _check_source(plan, w)
    first, middle, last = plan.stage_vectors()
    w1 = apply_vector(first, w)
    return [apply_vector(last, apply_vector(m, w1)) for m in middle]


def execute(plan: ConversionPlan, w: PureProcess) -> ProcessMatrix:
    """Sum over instrument outcomes of the branch outputs."""
    branches = execute_branches(plan, w)
    data = sum(np.outer(b.data, b.data.conj()) for b in branches)
    return ProcessMatrix(LabeledOperator(branches[0].factors, data))


@dataclass(frozen=True)
class BranchCheck:
    weight: float
    expected_weight: float
    fidelity: float


def branch_checks(plan: ConversionPlan, w: PureProcess) -> list[BranchCheck]:
    """Per-outcome weight (norm relative to the target's) and fidelity to the target.

    Outcomes with zero weight report fidelity 1.
    """
    target = make_generalized_switch(plan.target)
    out = []
    for lam, b in zip(plan.lam, execute_branches(plan, w)):
        weight = b.norm_sq() / target.norm_sq()
        f = fidelity(b, target) if weight > 1e-14 else 1.0
        out.append(BranchCheck(weight, lam, f))
    return out


def output_fidelity(plan: ConversionPlan, w: PureProcess) -> float:
    """<w'| rho |w'> / (|w'|^2 Tr rho) for the executed output rho."""
    target = make_generalized_switch(plan.target)
    rho = execute(plan, w)
    t = target.permuted(rho.op.names).data
    return float((t.conj() @ rho.data @ t).real / (target.norm_sq() * rho.trace()))


# --- probabilistic filtering ------------------------------------------------------

def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else np.inf


@dataclass(frozen=True, eq=False)
class FilterPlan:
    """Two-outcome control filter; outcome 0 leaves a switch with ``aux`` weights."""

    source: GeneralizedSwitchSpec
    target: GeneralizedSwitchSpec
    x: float
    y: float
    p_success: float
    kraus: tuple[np.ndarray, np.ndarray]
    vectors: tuple[PureProcess, PureProcess]
    aux: BinaryDistribution | None

    def completeness_residual(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus)
        return float(np.max(np.abs(s - np.eye(2))))

    def aux_spec(self) -> GeneralizedSwitchSpec:
        if self.aux is None:
            raise MajorizationError("filter never succeeds; no post-filter switch")
        return self.source.replace(p=tuple(self.aux))

    def conversion(self) -> ConversionPlan:
        """Deterministic plan from the post-filter switch to the target."""
        return plan_deterministic(self.aux_spec(), self.target)


def filter_parameters(p, p_prime) -> tuple[float, float, float]:
    """(x, y, p_success) of the local filter taking p to p'."""
    p, pp = as_distribution(p), as_distribution(p_prime)
    if not majorizes(p, pp):
        raise MajorizationError(f"{tuple(pp)} is not majorized by {tuple(p)}")
    if pp.min == 0:
        # then p is (1,0) or (0,1) as well: nothing to filter
        return 1.0, 1.0, 1.0
    r = pp.max / pp.min
    x = min(_ratio(p.p1, p.p0) * r, 1.0)
    y = min(_ratio(p.p0, p.p1) * r, 1.0)
    return x, y, p.min / pp.min


def plan_filter(source: GeneralizedSwitchSpec, target: GeneralizedSwitchSpec) -> FilterPlan:
    """Local filter on the control, diagonal in the source control basis."""
    x, y, ps = filter_parameters(source.p, target.p)
    phi = source.control_basis
    proj = [np.outer(phi[:, i], phi[:, i].conj()) for i in range(2)]
    m0 = np.sqrt(x) * proj[0] + np.sqrt(y) * proj[1]
    m1 = np.sqrt(1 - x) * proj[0] + np.sqrt(1 - y) * proj[1]
    a0, a1 = x * source.p[0], y * source.p[1]
    aux = BinaryDistribution(a0 / (a0 + a1), a1 / (a0 + a1)) if a0 + a1 > 0 else None
    vecs = (control_vector(m0), control_vector(m1))
    return FilterPlan(source, target, x, y, ps, (m0, m1), vecs, aux)


def apply_filter(plan: FilterPlan, w: PureProcess) -> list[tuple[float, PureProcess]]:
    """Born probability and unnormalized post-filter vector for each outcome."""
    out = []
    for v in plan.vectors:
        post = link_vectors(v, w).renamed({"C'": "C"}).permuted(PROCESS_ORDER)
        out.append((post.norm_sq() / w.norm_sq(), post))
    return out


def born_success_probability(plan: FilterPlan, w: PureProcess | None = None) -> float:
    w = make_generalized_switch(plan.source) if w is None else w
    return apply_filter(plan, w)[0][0]


def sample_filter(p_success: float, trials: int, seed: int) -> np.ndarray:
    """Heralded filter outcomes (True = success) for ``trials`` independent runs."""
    rng = np.random.default_rng(seed)
    return rng.random(trials) < p_success


def filtered_conversion(source: GeneralizedSwitchSpec, target: GeneralizedSwitchSpec,
                        w: PureProcess | None = None) -> tuple[float, list[PureProcess]]:
    """Filter, renormalize the heralded state, then convert it deterministically.

    Returns the success probability and the conversion branches.
    """
    fp = plan_filter(source, target)
    w = make_generalized_switch(source) if w is None else w
    p0, post = apply_filter(fp, w)[0]
    post = post.scaled(np.sqrt(w.norm_sq() / post.norm_sq()))
    return p0, execute_branches(fp.conversion(), post)
