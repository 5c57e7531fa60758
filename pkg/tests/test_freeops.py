import numpy as np
import pytest

from causalforge.errors import FactorError, InstrumentError, NotIsometryError
from causalforge.freeops import (
    INVERT,
    PRESERVE,
    LoaeSpec,
    LoaeTerm,
    apply,
    build_loae,
    build_pls,
    check_nso,
    check_swapped_conditions,
    identity_ab_vector,
    random_causal_process,
    random_loae,
    random_pls,
    random_separable_mixture,
    sequence,
    preservation_suite,
    swap_ab_vector,
    term_behaviour,
    v_conditions,
)
from causalforge.linalg import FactorLabel, PureProcess, permute_factors
from causalforge.process import (
    A_TO_B,
    B_TO_A,
    PROCESS_ORDER,
    cj_state,
    is_compatible_order,
    is_valid_process,
    link_product,
)
from causalforge.switches import (
    GeneralizedSwitchSpec,
    branch_tensor,
    make_fixed_order,
    make_generalized_switch,
    make_quantum_switch,
)

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)


def identity_loae():
    return build_loae(LoaeSpec((LoaeTerm.local(I2, I2, I2, I2),)))


def pure_swap():
    return build_pls([(1.0, True)])


def diff(a, b):
    return float(np.max(np.abs(a.op.data - b.op.data)))


def control_flipped(w: PureProcess) -> PureProcess:
    t = w.data.reshape(-1, 2)[:, ::-1]
    return PureProcess(w.factors, t.reshape(-1))


def test_identity_loae_is_identity():
    w = make_quantum_switch(2)
    out = apply(identity_loae(), w)
    assert out.op.names == PROCESS_ORDER
    assert np.max(np.abs(out.op.data - w.outer().data)) < 1e-10


def test_pauli_at_lab_input_matches_link_oracle():
    v = build_loae(LoaeSpec((LoaeTerm.local(X, I2, I2, I2),)))
    w = make_fixed_order(0)
    out = apply(v, w)
    A, Ap = FactorLabel("A_I", 2), FactorLabel("A_I'", 2)
    oracle = link_product(w.outer(), cj_state(X, [A], [Ap])).renamed({"A_I'": "A_I"})
    oracle = permute_factors(oracle, PROCESS_ORDER)
    assert np.max(np.abs(out.op.data - oracle.data)) < 1e-10
    direct = make_generalized_switch(GeneralizedSwitchSpec.canonical(2, (1, 0)).replace(u_PA=X))
    assert np.max(np.abs(out.op.data - direct.outer().data)) < 1e-10


def test_random_loae_is_nso(rng):
    for n_terms in (1, 2, 3):
        v = random_loae(2, n_terms, rng)
        ok, r = check_nso(v, 1e-9)
        assert ok, r
        cond = v_conditions(v)
        for key in ("trace", "inputs_outputs", "labs_separate"):
            assert cond[key] < 1e-9


def test_pls_terms():
    ident = build_pls([(1.0, False)])
    assert check_nso(ident)[0]
    swap = pure_swap()
    ok, r = check_nso(swap)
    assert not ok and min(r) > 0.1
    assert check_swapped_conditions(swap)[0]
    assert term_behaviour(identity_ab_vector(2).outer()) == PRESERVE
    assert term_behaviour(swap_ab_vector(2).outer()) == INVERT


def test_pls_identity_is_identity():
    w = make_quantum_switch(2)
    assert np.max(np.abs(apply(build_pls([(1.0, False)]), w).op.data - w.outer().data)) < 1e-10


def test_swap_inverts_fixed_order():
    out = apply(pure_swap(), make_fixed_order(0))
    expect = np.multiply.outer(branch_tensor(1, I2, I2, I2), I2[0]).reshape(-1)
    assert np.max(np.abs(out.op.data - np.outer(expect, expect))) < 1e-10
    assert is_compatible_order(out, B_TO_A)[0]


def test_half_swap_gives_separable_mixture():
    out = apply(build_pls([(0.5, False), (0.5, True)]), make_fixed_order(0))
    assert is_valid_process(out).passed
    b0 = make_fixed_order(0).outer().data
    b1 = np.multiply.outer(branch_tensor(1, I2, I2, I2), I2[0]).reshape(-1)
    expect = 0.5 * b0 + 0.5 * np.outer(b1, b1)
    assert np.max(np.abs(out.op.data - expect)) < 1e-10


def test_swap_on_switch_relabels_branches():
    w = make_quantum_switch(2)
    out = apply(pure_swap(), w)
    t = control_flipped(w)
    f = (t.data.conj() @ out.op.data @ t.data).real / (t.norm_sq() * out.op.trace().real)
    assert f == pytest.approx(1, abs=1e-12)


def test_trace_rule_on_random_pairs(rng):
    for _ in range(3):
        v = random_loae(2, 2, rng)
        w = random_causal_process(2, A_TO_B, rng)
        assert apply(v, w).op.trace().real == pytest.approx(8, abs=1e-9)


def test_assembled_is_sum_of_terms(rng):
    v = random_pls(2, 3, rng)
    total = sum(v.term_operator(j).data for j in range(len(v.terms)))
    assert np.array_equal(total, v.assembled.data)


def test_sequences():
    w = make_fixed_order(0)
    seq = sequence([identity_loae(), identity_loae()])
    assert np.max(np.abs(seq(w).op.data - w.outer().data)) < 1e-10
    v = build_loae(LoaeSpec((LoaeTerm.local(X, I2, X, I2),)))
    out = sequence([v, pure_swap()])(w)
    assert is_valid_process(out).passed
    assert is_compatible_order(out, B_TO_A)[0]
    with pytest.raises(InstrumentError):
        sequence([])


def test_random_causal_processes(rng):
    for order in (A_TO_B, B_TO_A):
        w = random_causal_process(2, order, rng)
        assert is_valid_process(w).passed
        assert is_compatible_order(w, order)[0]


def test_preservation_suite_loae(rng):
    rep = preservation_suite(random_loae(2, 2, rng), samples=10, seed=3)
    assert rep.passed and rep.worst() < 1e-8
    again = preservation_suite(random_loae(2, 2, np.random.default_rng(20240611)), 10, 3)
    assert again.samples == 10


def test_preservation_suite_swap():
    rep = preservation_suite(pure_swap(), samples=6, seed=1)
    assert rep.behaviours == (INVERT,)
    assert rep.passed


def test_preservation_deterministic(rng):
    v = random_pls(2, 2, rng)
    a = preservation_suite(v, 4, seed=9)
    b = preservation_suite(v, 4, seed=9)
    assert a == b


def test_mixture_pls_on_separable_mixture(rng):
    v = build_pls([(0.3, False), (0.7, True)])
    w, q = random_separable_mixture(2, rng)
    out = apply(v, w)
    assert is_valid_process(out).passed
    assert out.op.trace().real == pytest.approx(8)


def test_errors():
    with pytest.raises(InstrumentError):
        build_pls([])
    with pytest.raises(InstrumentError):
        build_pls([(0.6, False), (0.6, True)])
    with pytest.raises(NotIsometryError):
        LoaeTerm.local(2 * I2, I2, I2, I2)
    with pytest.raises(FactorError):
        apply(identity_loae(), make_quantum_switch(3))
    with pytest.raises(InstrumentError):
        build_loae(LoaeSpec((LoaeTerm.local(I2, I2, I2, I2),) * 2))
