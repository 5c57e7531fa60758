import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalforge.conversion import (
    BinaryDistribution,
    apply_filter,
    born_success_probability,
    branch_checks,
    execute,
    execute_branches,
    filter_parameters,
    filtered_conversion,
    majorizes,
    output_fidelity,
    plan_deterministic,
    plan_filter,
    sample_filter,
    solve_lambda,
)
from causalforge.errors import (
    ConstraintError,
    DistributionError,
    MajorizationError,
    SpecMismatchError,
)
from causalforge.freeops import apply_vector
from causalforge.linalg import fidelity
from causalforge.process import is_valid_process
from causalforge.switches import (
    GeneralizedSwitchSpec,
    make_generalized_switch,
    make_quantum_switch,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
prob = st.floats(0, 1, allow_nan=False)


def canon(p, d=2):
    return GeneralizedSwitchSpec.canonical(d, p)


def test_binary_distribution():
    p = BinaryDistribution(0.3, 0.7)
    assert (p.max, p.min) == (0.7, 0.3)
    assert tuple(p.swapped()) == (0.7, 0.3)
    with pytest.raises(DistributionError):
        BinaryDistribution(0.5, 0.6)
    with pytest.raises(DistributionError):
        BinaryDistribution(-0.1, 1.1)


def test_majorizes_examples():
    assert majorizes((0.7, 0.3), (0.5, 0.5))
    assert not majorizes((0.6, 0.4), (0.9, 0.1))
    assert majorizes((0.6, 0.4), (0.6, 0.4))


@given(prob, prob)
def test_majorization_total(a, b):
    p, q = (a, 1 - a), (b, 1 - b)
    assert majorizes(p, q) or majorizes(q, p)


def test_solve_lambda_examples():
    assert solve_lambda((0.6, 0.4), (0.8, 0.2)) == pytest.approx((2 / 3, 1 / 3))
    assert solve_lambda((0.3, 0.7), (0.3, 0.7)) == (1.0, 0.0)
    assert solve_lambda((0.5, 0.5), (1.0, 0.0)) == pytest.approx((0.5, 0.5))
    assert solve_lambda((0.5, 0.5), (0.5, 0.5)) == (1.0, 0.0)
    with pytest.raises(MajorizationError):
        solve_lambda((0.9, 0.1), (0.6, 0.4))


@given(prob, prob)
def test_solve_lambda_reconstructs(a, b):
    p, pp = (a, 1 - a), (b, 1 - b)
    if not majorizes(pp, p):
        p, pp = pp, p
    l0, l1 = solve_lambda(p, pp)
    assert l0 >= 0 and l1 >= 0 and l0 + l1 == pytest.approx(1)
    assert l0 * pp[0] + l1 * pp[1] == pytest.approx(p[0], abs=1e-9)


def test_identity_plan():
    spec = canon((0.5, 0.5))
    plan = plan_deterministic(spec, spec)
    w = make_quantum_switch(2)
    out = execute(plan, w)
    assert np.max(np.abs(out.op.data - w.outer().data)) < 1e-12


def test_switch_to_skewed():
    plan = plan_deterministic(canon((0.5, 0.5)), canon((0.7, 0.3)))
    w = make_quantum_switch(2)
    assert output_fidelity(plan, w) == pytest.approx(1, abs=1e-9)
    for lam, b in zip(plan.lam, branch_checks(plan, w)):
        assert b.fidelity == pytest.approx(1, abs=1e-12)
        assert b.weight == pytest.approx(lam, abs=1e-12)
    out = execute(plan, w)
    assert out.trace() == pytest.approx(8)
    assert is_valid_process(out).passed


def test_random_spec_pairs(rng):
    worst = 0.0
    for _ in range(50):
        a, b = rng.random(2)
        a, b = max(a, 1 - a), max(b, 1 - b)
        p, pp = (min(a, b), 1 - min(a, b)), (max(a, b), 1 - max(a, b))
        if rng.random() < 0.5:
            pp = pp[::-1]
        src = GeneralizedSwitchSpec.random(2, p, rng)
        tgt = GeneralizedSwitchSpec.random(2, pp, rng)
        plan = plan_deterministic(src, tgt)
        worst = max(worst, 1 - output_fidelity(plan, make_generalized_switch(src)))
    assert worst < 1e-8


def test_d3_conversion(rng):
    src = GeneralizedSwitchSpec.random(3, (0.6, 0.4), rng)
    tgt = GeneralizedSwitchSpec.random(3, (0.8, 0.2), rng)
    plan = plan_deterministic(src, tgt)
    assert output_fidelity(plan, make_generalized_switch(src)) == pytest.approx(1, abs=1e-8)


def test_stage_one_reaches_switch(rng):
    spec = GeneralizedSwitchSpec.random(2, (0.5, 0.5), rng, random_basis=False)
    plan = plan_deterministic(spec, spec)
    first, _, _ = plan.stage_vectors()
    out = apply_vector(first, make_generalized_switch(spec))
    assert fidelity(out, make_quantum_switch(2)) == pytest.approx(1, abs=1e-9)


def test_dense_sequence_matches_vectors(rng):
    src = GeneralizedSwitchSpec.random(2, (0.6, 0.4), rng)
    tgt = GeneralizedSwitchSpec.random(2, (0.8, 0.2), rng)
    plan = plan_deterministic(src, tgt)
    w = make_generalized_switch(src)
    dense = plan.as_sequence()(w)
    assert np.max(np.abs(dense.data - execute(plan, w).data)) < 1e-10


def test_plan_errors(rng):
    with pytest.raises(MajorizationError):
        plan_deterministic(canon((0.7, 0.3)), canon((0.5, 0.5)))
    bad = canon((0.5, 0.5)).replace(u_BA=X)
    with pytest.raises(ConstraintError):
        plan_deterministic(bad, canon((0.7, 0.3)))
    plan = plan_deterministic(canon((0.5, 0.5)), canon((0.7, 0.3)))
    with pytest.raises(SpecMismatchError):
        execute_branches(plan, make_generalized_switch(canon((0.6, 0.4))))


def test_filter_examples():
    fp = plan_filter(canon((0.6, 0.4)), canon((0.5, 0.5)))
    assert (fp.x, fp.y, fp.p_success) == pytest.approx((2 / 3, 1, 0.8))
    assert fp.completeness_residual() < 1e-12
    assert filter_parameters((0.3, 0.7), (0.3, 0.7)) == pytest.approx((1, 1, 1))
    assert filter_parameters((0.9, 0.1), (0.5, 0.5))[2] == pytest.approx(0.2)
    assert filter_parameters((1.0, 0.0), (1.0, 0.0)) == (1.0, 1.0, 1.0)
    with pytest.raises(MajorizationError):
        filter_parameters((0.5, 0.5), (0.9, 0.1))


def test_filter_born_rule_and_conversion():
    src, tgt = canon((0.9, 0.1)), canon((0.3, 0.7))
    fp = plan_filter(src, tgt)
    assert born_success_probability(fp) == pytest.approx(0.1 / 0.3, abs=1e-10)
    p0, branches = filtered_conversion(src, tgt)
    target = make_generalized_switch(tgt)
    for b in branches:
        if b.norm_sq() > 1e-14:
            assert fidelity(b, target) == pytest.approx(1, abs=1e-9)
    outcomes = apply_filter(fp, make_generalized_switch(src))
    assert sum(pr for pr, _ in outcomes) == pytest.approx(1)


@settings(max_examples=20, deadline=None)
@given(prob, prob)
def test_filter_born_matches_formula(a, b):
    p, pp = (a, 1 - a), (b, 1 - b)
    if not majorizes(p, pp):
        p, pp = pp, p
    src, tgt = canon(p), canon(pp)
    fp = plan_filter(src, tgt)
    assert fp.completeness_residual() < 1e-12
    expected = min(p) / min(pp) if min(pp) > 0 else 1.0
    assert born_success_probability(fp) == pytest.approx(expected, abs=1e-10)


def test_sample_filter_deterministic():
    a = sample_filter(0.3, 1000, 5)
    assert np.array_equal(a, sample_filter(0.3, 1000, 5))
    assert abs(a.mean() - 0.3) < 3 * np.sqrt(0.3 * 0.7 / 1000)
