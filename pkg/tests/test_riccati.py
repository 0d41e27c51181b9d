import math

import numpy as np
import pytest

import frozen
import oracles
from conftest import equilibrium_problem, q2_problem
from lqmfg import GrowthBound, HilbertSpace, MFGProblem, TimeGrid, growth_bound, p_bound, riccati_residual
from lqmfg import solve_riccati_p
from lqmfg.delay import DelayParams, build_delay_problem
from lqmfg.errors import DivergenceError, GridMismatchError, PositivityError
from lqmfg.instances import random_problem
from lqmfg.paths import OperatorPath
from lqmfg.riccati import default_grid


def test_equilibrium_is_constant():
    p = equilibrium_problem()
    P = solve_riccati_p(p, TimeGrid(1.0, 1000))
    assert np.array_equal(P.values[:, 0, 0], np.ones(1001))
    assert riccati_residual(P, p) <= 1e-9


def test_lyapunov_case_is_linear():
    n = 2
    z = np.zeros((n, n))
    q, g, T = 0.7, 1.5, 2.0
    p = MFGProblem(z, np.zeros((n, 1)), q * np.eye(n), z, g * np.eye(n), z, [[1.0]], z, z,
                   np.zeros((n, 1)), T, np.ones(n))
    P = solve_riccati_p(p, TimeGrid(T, 50))
    expect = (g + q * (T - P.grid.nodes))[:, None, None] * np.eye(n)
    assert np.allclose(P.values, expect, atol=1e-13)


def test_q2_matches_oracle():
    P = solve_riccati_p(q2_problem(), TimeGrid(1.0, 1000))
    assert abs(P.values[0, 0, 0] - frozen.P0_Q2_RK4) <= 1e-8
    assert abs(P.values[0, 0, 0] - frozen.P0_Q2) <= 1e-8
    t = P.grid.nodes
    assert np.max(np.abs(P.values[:, 0, 0] - oracles.riccati_closed_q2(t))) <= 1e-8


def test_residual_of_q2(q2):
    p, P = q2
    assert riccati_residual(P, p) <= 1e-6


def test_residual_zero_for_constant_path():
    z = np.zeros((1, 1))
    p = MFGProblem(z, z, z, z, [[2.0]], z, [[1.0]], z, z, z, 1.0, [1.0])
    g = TimeGrid(1.0, 10)
    P = OperatorPath(g, np.full((11, 1, 1), 2.0), np.zeros((11, 1, 1)))
    assert riccati_residual(P, p) == 0.0


def test_terminal_condition_exact(rng):
    p = random_problem(rng, dim=4)
    P = solve_riccati_p(p)
    assert np.array_equal(P.values[-1], p.QT_sum)


def test_grid_convergence_is_fourth_order():
    p = q2_problem()
    errs = [abs(solve_riccati_p(p, TimeGrid(1.0, n), certify=False).values[0, 0, 0] - frozen.P0_Q2)
            for n in (20, 40, 80)]
    for a, b in zip(errs, errs[1:]):
        assert 12 <= a / b <= 20


@pytest.mark.parametrize("dim", [1, 2, 4])
def test_matches_adaptive_oracle_on_weighted_problem(dim):
    rng = np.random.default_rng(dim)
    p = random_problem(rng, dim=dim, contractive=False, a_norm=1.5)
    P = solve_riccati_p(p, TimeGrid(p.T, 1000))
    ref = oracles.riccati_ivp(p.A, p.B, p.R, p.Q_sum, p.QT_sum, p.space.weight, p.T, P.grid.nodes[::100])
    assert np.max(np.abs(P.values[::100] - ref)) <= 1e-8


def test_p_bound_examples():
    gb = GrowthBound(1.0, 0.0)
    assert p_bound(equilibrium_problem(), gb) == pytest.approx(2.0)
    assert p_bound(MFGProblem.scalar(q=0.0, qT=0.0), gb) == 0.0
    assert p_bound(q2_problem(), gb) == pytest.approx(3.0)


def test_p_bound_uses_positive_part_of_omega():
    p = equilibrium_problem(a=-1.0)
    assert p_bound(p, GrowthBound(1.0, -1.0)) == pytest.approx(2.0)


def test_bound_and_positivity_on_random_suite():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = random_problem(rng, dim=int(rng.integers(1, 7)), contractive=False, a_norm=rng.uniform(0, 2))
        P = solve_riccati_p(p)
        sp = p.space
        gb = growth_bound(p.A, p.T, space=sp)
        norms = P.norms(sp)
        assert norms.max() <= p_bound(p, gb) * (1 + 1e-6)
        lam = sp.eigvalsh(P.values)[:, 0]
        assert np.all(lam >= -1e-9 * norms)
        assert max(sp.self_adjoint_defect(X) for X in P.values) <= 1e-10


def test_monotone_in_running_cost():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = random_problem(rng, dim=4, weighted=False)
        P1 = solve_riccati_p(p)
        P2 = solve_riccati_p(p.replace(Q=p.Q + 0.3 * np.eye(4)), P1.grid)
        diff = P2.values - P1.values
        assert np.min(np.linalg.eigvalsh(0.5 * (diff + diff.transpose(0, 2, 1)))) >= -1e-8


def test_divergence_is_reported():
    with pytest.raises(DivergenceError) as exc:
        solve_riccati_p(MFGProblem.scalar(a=10.0, b=0.0, T=2.0))
    assert exc.value.norm > 1e12


def test_positivity_loss_on_too_coarse_grid():
    p = build_delay_problem(DelayParams(d=0.25, n_seg=16))
    with pytest.raises(PositivityError) as exc:
        solve_riccati_p(p, TimeGrid(p.T, 200))
    assert exc.value.min_eig < 0
    # the default grid resolves the transport speed
    assert default_grid(p.T, p).n_steps > 200
    solve_riccati_p(p)


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        solve_riccati_p(equilibrium_problem(), TimeGrid(2.0, 10))


def test_weighted_space_symmetry():
    sp = HilbertSpace([1.0, 3.0])
    A = np.array([[0.0, 1.0], [-1.0, -0.5]])
    z = np.zeros((2, 2))
    p = MFGProblem(A, [[1.0], [0.0]], np.eye(2), z, np.eye(2), z, [[1.0]], z, z,
                   np.zeros((2, 1)), 1.0, [1.0, 1.0], space=sp)
    P = solve_riccati_p(p)
    assert max(sp.self_adjoint_defect(X) for X in P.values) <= 1e-12
    assert math.isfinite(riccati_residual(P, p))
