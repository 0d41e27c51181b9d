import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lqmfg import GrowthBound, HilbertSpace, adjoint, growth_bound, is_psd, mat_exp, semigroup_sup, yosida
from lqmfg.errors import InvalidOperatorError, ResolventError, SymmetryError

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def weighted_op(draw, max_dim=5):
    n = draw(st.integers(1, max_dim))
    w = draw(arrays(float, n, elements=st.floats(0.1, 10)))
    L = draw(arrays(float, (n, n), elements=finite))
    return HilbertSpace(w), L


def test_space_rejects_bad_weights():
    with pytest.raises(ValueError):
        HilbertSpace([1.0, 0.0])
    with pytest.raises(ValueError):
        HilbertSpace([])


def test_weighted_inner_and_norm():
    sp = HilbertSpace([1.0, 2.0])
    assert sp.inner([1, 1], [1, 2]) == pytest.approx(5.0)
    assert sp.norm([0, 1]) == pytest.approx(math.sqrt(2))


def test_mat_exp_examples():
    assert np.array_equal(mat_exp(np.zeros((2, 2)), 5.0), np.eye(2))
    assert np.allclose(mat_exp(np.diag([1.0, -2.0]), 1.0), np.diag([math.e, math.exp(-2)]), atol=1e-14)
    assert np.allclose(mat_exp([[0.0, 1.0], [0.0, 0.0]], 3.0), [[1, 3], [0, 1]], atol=1e-14)
    assert np.array_equal(mat_exp(np.random.default_rng(0).standard_normal((3, 3)), 0.0), np.eye(3))


def test_mat_exp_rejects_non_finite():
    with pytest.raises(InvalidOperatorError):
        mat_exp([[np.nan]])


def test_semigroup_law(rng):
    for _ in range(20):
        A = rng.standard_normal((5, 5))
        A *= 2 / np.linalg.norm(A, 2)
        s, t = rng.uniform(0, 1, 2)
        err = np.linalg.norm(mat_exp(A, s) @ mat_exp(A, t) - mat_exp(A, s + t), 2)
        assert err <= 1e-10


def test_yosida_examples():
    assert np.allclose(yosida([[1.0]], 10), [[10 / 9]], atol=1e-14)
    assert np.allclose(yosida(np.zeros((3, 3)), 7), 0, atol=1e-13)
    assert np.allclose(yosida(np.diag([1.0, -1.0]), 100), np.diag([100 / 99, -100 / 101]), atol=1e-12)


def test_yosida_resolvent_failure():
    with pytest.raises(ResolventError) as exc:
        yosida(2.0 * np.eye(2), 2.0)
    assert exc.value.n == 2.0


def test_yosida_convergence_rate(rng):
    A = rng.standard_normal((4, 4))
    A *= 1.5 / np.linalg.norm(A, 2)
    errs = [np.linalg.norm(yosida(A, n) - A, 2) for n in (10, 100, 1000, 10000)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    assert all(0.05 <= r <= 0.2 for r in ratios)


def test_yosida_semigroups_converge(rng):
    A = rng.standard_normal((4, 4))
    x = rng.standard_normal(4)
    ts = np.linspace(0, 1, 21)
    gaps = [max(np.linalg.norm((mat_exp(yosida(A, n), t) - mat_exp(A, t)) @ x) for t in ts)
            for n in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]
    # O(1/n)
    assert gaps[2] / gaps[1] < 0.2 and gaps[1] / gaps[0] < 0.2


def test_growth_bound_examples():
    gb = growth_bound(np.zeros((2, 2)), 1.0)
    assert gb.M == pytest.approx(1.0) and gb.omega == pytest.approx(0.0)
    gb = growth_bound(np.diag([-1.0, -3.0]), 2.0)
    assert gb.M == pytest.approx(1.0, abs=1e-12) and gb.omega == pytest.approx(-1.0)
    gb = growth_bound(np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)
    ts = np.linspace(0, 1, 100_001)
    # ||[[1,t],[0,1]]||_2 = t/2 + sqrt(1 + t^2/4)
    oracle = float(np.max(ts / 2 + np.sqrt(1 + ts**2 / 4)))
    assert gb.omega == pytest.approx(0.0)
    assert gb.M == pytest.approx(oracle, rel=1e-9)


def test_growth_certificate_holds(rng):
    for _ in range(5):
        n = rng.integers(1, 5)
        sp = HilbertSpace(rng.uniform(0.5, 2, n))
        A = rng.standard_normal((n, n))
        gb = growth_bound(A, 1.0, space=sp)
        for t in np.linspace(0, 1, 1000):
            assert sp.op_norm(mat_exp(A, t)) <= gb.M * math.exp(gb.omega * t) * (1 + 1e-9)


def test_growth_bound_validation():
    with pytest.raises(ValueError):
        GrowthBound(0.5, 0.0)
    with pytest.raises(ValueError):
        growth_bound(np.eye(2), 0.0)


def test_semigroup_sup_dissipative_is_one():
    assert semigroup_sup(np.array([[-1.0, 2.0], [-2.0, -1.0]]), 1.0) == pytest.approx(1.0)


def test_adjoint_examples():
    L = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert np.array_equal(adjoint(L), L)
    sp = HilbertSpace([1.0, 2.0])
    assert np.allclose(adjoint([[0.0, 1.0], [0.0, 0.0]], sp), [[0, 0], [0.5, 0]])


def test_adjoint_identity_random(rng):
    sp = HilbertSpace(rng.uniform(0.2, 5, 4))
    L = rng.standard_normal((4, 4))
    Ls = adjoint(L, sp)
    x = rng.standard_normal((100, 4))
    y = rng.standard_normal((100, 4))
    err = np.max(np.abs(sp.inner(x @ L.T, y) - sp.inner(x, y @ Ls.T)))
    assert err <= 1e-12


@given(weighted_op())
def test_adjoint_is_an_involution(data):
    sp, L = data
    assert np.allclose(sp.adjoint(sp.adjoint(L)), L, rtol=1e-13, atol=1e-13)


@given(weighted_op(), st.integers(0, 2**31))
def test_adjoint_defining_property(data, seed):
    sp, L = data
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, sp.dim))
    lhs = sp.inner(L @ x, y)
    rhs = sp.inner(x, sp.adjoint(L) @ y)
    scale = 1 + sp.op_norm(L) * sp.norm(x) * sp.norm(y)
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(weighted_op())
def test_symmetrized_operator_is_self_adjoint(data):
    sp, L = data
    S = sp.symmetrize(L)
    assert sp.self_adjoint_defect(S) <= 1e-12


@given(weighted_op())
def test_op_norm_dominates_vector_ratios(data):
    sp, L = data
    x = np.random.default_rng(0).standard_normal((20, sp.dim))
    ratios = sp.norm(x @ L.T) / sp.norm(x)
    assert np.all(ratios <= sp.op_norm(L) * (1 + 1e-12) + 1e-14)


def test_is_psd_examples():
    ok, lam = is_psd(np.eye(3))
    assert ok and lam == pytest.approx(1.0)
    ok, lam = is_psd(np.diag([1.0, -1.0]))
    assert not ok and lam == pytest.approx(-1.0)
    ok, lam = is_psd(np.diag([1.0, 0.0]))
    assert ok and lam == pytest.approx(0.0)


def test_is_psd_rejects_non_self_adjoint():
    with pytest.raises(SymmetryError) as exc:
        is_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert exc.value.defect > 0


def test_is_psd_in_weighted_space():
    sp = HilbertSpace([1.0, 4.0])
    # self-adjoint in W: W L symmetric
    L = np.array([[2.0, 4.0], [1.0, 3.0]])
    ok, lam = is_psd(L, space=sp)
    assert ok and lam > 0
