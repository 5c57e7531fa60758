"""Constructors for fixed-order processes and (generalized) quantum switches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DistributionError, NotIsometryError
from .linalg import PureProcess, random_unitary
from .process import process_factors

UNITARY_TOL = 1e-9
BASIS_TOL = 1e-12
CONSTRAINT_TOL = 1e-9
UNITARY_NAMES = ("u_PA", "u_AB", "u_BF", "u_PB", "u_BA", "u_AF")


def _check_unitary(name: str, u: np.ndarray, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (d, d):
        raise NotIsometryError(f"{name} has shape {u.shape}, expected {(d, d)}")
    err = float(np.max(np.abs(u.conj().T @ u - np.eye(d))))
    if err > UNITARY_TOL:
        raise NotIsometryError(f"{name} is not unitary (deviation {err:.3e})")
    u = u.copy()
    u.flags.writeable = False
    return u


def check_distribution(p, tol: float = 1e-12) -> tuple[float, float]:
    p = tuple(float(x) for x in p)
    if len(p) != 2 or min(p) < -tol or abs(sum(p) - 1) > tol or not all(np.isfinite(p)):
        raise DistributionError(f"{p} is not a binary probability distribution")
    return (max(p[0], 0.0), max(p[1], 0.0))


@dataclass(frozen=True, eq=False)
class GeneralizedSwitchSpec:
    """Branch weights and control basis plus the six wire unitaries.

    Branch 0 wires P->A_I, A_O->B_I, B_O->F with u_PA, u_AB, u_BF.
    Branch 1 wires P->B_I, B_O->A_I, A_O->F with u_PB, u_BA, u_AF.
    ``control_basis`` holds the two control states as columns.
    """

    p: tuple[float, float]
    control_basis: np.ndarray
    u_PA: np.ndarray
    u_AB: np.ndarray
    u_BF: np.ndarray
    u_PB: np.ndarray
    u_BA: np.ndarray
    u_AF: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", check_distribution(self.p))
        basis = np.asarray(self.control_basis, dtype=complex)
        if basis.shape != (2, 2):
            raise NotIsometryError(f"control basis must be 2x2, got {basis.shape}")
        if np.max(np.abs(basis.conj().T @ basis - np.eye(2))) > BASIS_TOL:
            raise NotIsometryError("control basis is not orthonormal")
        basis = basis.copy()
        basis.flags.writeable = False
        object.__setattr__(self, "control_basis", basis)
        d = np.asarray(self.u_PA).shape[0]
        for name in UNITARY_NAMES:
            object.__setattr__(self, name, _check_unitary(name, getattr(self, name), d))

    @property
    def d(self) -> int:
        return self.u_PA.shape[0]

    def unitaries(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in UNITARY_NAMES}

    def replace(self, **kw) -> "GeneralizedSwitchSpec":
        args = {"p": self.p, "control_basis": self.control_basis, **self.unitaries()}
        args.update(kw)
        return GeneralizedSwitchSpec(**args)

    def constraint_residuals(self) -> tuple[float, float]:
        eye = np.eye(self.d)
        r0 = np.linalg.norm(self.u_PA.conj().T @ self.u_BA @ self.u_BF.conj().T - eye)
        r1 = np.linalg.norm(self.u_PB.conj().T @ self.u_AB @ self.u_AF.conj().T - eye)
        return float(r0), float(r1)

    @classmethod
    def canonical(cls, d: int = 2, p=(0.5, 0.5)) -> "GeneralizedSwitchSpec":
        eye = np.eye(d)
        return cls(p, np.eye(2), *([eye] * 6))

    @classmethod
    def random(cls, d: int, p, rng: np.random.Generator,
               random_basis: bool = True) -> "GeneralizedSwitchSpec":
        """Random spec satisfying both unitary constraints."""
        u_PA, u_BF, u_PB, u_AF = (random_unitary(d, rng) for _ in range(4))
        basis = random_unitary(2, rng) if random_basis else np.eye(2)
        return cls(p, basis, u_PA, u_PB @ u_AF, u_BF, u_PB, u_PA @ u_BF, u_AF)


def check_switch_constraints(spec: GeneralizedSwitchSpec,
                             tol: float = CONSTRAINT_TOL) -> tuple[bool, tuple[float, float]]:
    """Whether u_PA^dag u_BA u_BF^dag = 1 = u_PB^dag u_AB u_AF^dag (Frobenius residuals)."""
    r = spec.constraint_residuals()
    return max(r) <= tol, r


def branch_tensor(order: int, u_in: np.ndarray, u_mid: np.ndarray,
                  u_out: np.ndarray) -> np.ndarray:
    """Target content of one branch as a tensor over P, A_I, A_O, B_I, B_O, F.

    ``order`` 0 routes P->A->B->F through (u_in, u_mid, u_out); order 1
    routes P->B->A->F.
    """
    # entry [j, k] of a CJ vector is u[k, j]
    # axes: p=P a=A_I o=A_O b=B_I c=B_O f=F
    if order == 0:
        return np.einsum("ap,bo,fc->paobcf", u_in, u_mid, u_out)
    return np.einsum("bp,ac,fo->paobcf", u_in, u_mid, u_out)


def _with_control(control: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.multiply.outer(t, np.asarray(control, dtype=complex))


def _process(d: int, data: np.ndarray) -> PureProcess:
    return PureProcess(process_factors(d), data.reshape(-1))


def make_fixed_order(bit: int, d: int = 2) -> PureProcess:
    """|0>_C|1_0> (bit 0, A before B) or |1>_C|1_1> (bit 1, B before A)."""
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    eye = np.eye(d)
    return _process(d, _with_control(np.eye(2)[bit], branch_tensor(bit, eye, eye, eye)))


def make_quantum_switch(d: int = 2) -> PureProcess:
    a, b = make_fixed_order(0, d), make_fixed_order(1, d)
    return _process(d, (a.data + b.data) / np.sqrt(2))


def make_generalized_switch(spec: GeneralizedSwitchSpec) -> PureProcess:
    """sqrt(p0)|Phi0>|u0> + sqrt(p1)|Phi1>|u1>; the unitary constraints are not required."""
    b0 = branch_tensor(0, spec.u_PA, spec.u_AB, spec.u_BF)
    b1 = branch_tensor(1, spec.u_PB, spec.u_BA, spec.u_AF)
    phi = spec.control_basis
    t = (np.sqrt(spec.p[0]) * _with_control(phi[:, 0], b0)
         + np.sqrt(spec.p[1]) * _with_control(phi[:, 1], b1))
    return _process(spec.d, t)


def make_w_ent(d: int, u_AB: np.ndarray) -> PureProcess:
    """Equal superposition of |0>|1_0> and |1>|u_AB-process>, both A before B.

    ``u_AB`` proportional to the identity is rejected: the result would be a
    product of control and target.
    """
    u = _check_unitary("u_AB", u_AB, d)
    if abs(abs(np.trace(u)) - d) < 1e-9:
        raise ConstraintError("u_AB proportional to the identity gives a product process")
    eye = np.eye(d)
    t = (_with_control([1, 0], branch_tensor(0, eye, eye, eye))
         + _with_control([0, 1], branch_tensor(0, eye, u, eye))) / np.sqrt(2)
    return _process(d, t)
