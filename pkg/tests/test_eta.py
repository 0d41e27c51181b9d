import math

import numpy as np
import pytest

import frozen
from conftest import q2_problem
from lqmfg import MFGProblem, TimeGrid, beta_T, eta_contraction_params, solve_eta, solve_eta_global
from lqmfg import solve_eta_local, solve_riccati_p
from lqmfg.errors import PreconditionError
from lqmfg.eta import eta_rhs
from lqmfg.instances import random_problem
from lqmfg.paths import OperatorPath


def _const_P(value, T=1.0, n=1000):
    g = TimeGrid(T, n)
    return OperatorPath(g, np.full((n + 1, 1, 1), value), np.zeros((n + 1, 1, 1)))


def test_radius_zero_without_terminal_coupling():
    p = MFGProblem.scalar(q=1, qbar=1, S=0.0, ST=0.0, qbarT=1, qT=0)
    cert = eta_contraction_params(p, _const_P(math.sqrt(2)), 1.0)
    assert cert.radius_r == 0.0
    # only the contraction inequality is left: tau * 2 ||P|| ||G|| <= 1/2
    assert cert.tau == pytest.approx(min(1.0, 0.25 / math.sqrt(2)), abs=1e-6)


def test_radius_and_step_closed_form():
    p = q2_problem()
    cert = eta_contraction_params(p, _const_P(math.sqrt(2)), 1.0)
    assert cert.radius_r == pytest.approx(2.0)
    assert cert.tau == pytest.approx(1 / (2 * (2 * math.sqrt(2) + 4)), abs=1e-6)
    assert not cert.global_ok


def test_beta_T_closed_form():
    p = q2_problem()
    assert beta_T(p, _const_P(math.sqrt(2)), 1.0) == pytest.approx(2 * math.exp(2 * math.sqrt(2)), rel=1e-12)
    assert 2 * math.exp(2 * math.sqrt(2)) == pytest.approx(33.84, abs=5e-3)


def test_local_zero_data_gives_zero(q2):
    p, P = q2
    p0 = p.replace(S=[[0.0]], ST=[[0.0]])
    path = solve_eta_local(p0, P, (0.0, 0.05), np.zeros((1, 1)))
    assert np.array_equal(path.values, np.zeros_like(path.values))


def test_local_matches_dense_oracle():
    p = q2_problem(T=0.05)
    P = solve_riccati_p(p, TimeGrid(0.05, 200))
    path = solve_eta_local(p, P, (0.0, 0.05), np.eye(1))
    assert abs(path.values[-1, 0, 0] - frozen.ETA0_Q2_T005) <= 1e-8
    d = path.sweep_diffs
    ratios = [b / a for a, b in zip(d, d[1:]) if a > 1e-13]
    assert ratios and max(ratios) <= 0.55


def test_global_zero_data():
    p = MFGProblem.scalar(q=1, qT=1)
    P = solve_riccati_p(p)
    eta, cert = solve_eta_global(p, P)
    assert np.array_equal(eta.values, np.zeros_like(eta.values))
    assert cert.beta_T == 0.0 and cert.global_ok


def test_global_matches_dense_oracle(q2):
    p, P = q2
    eta, cert = solve_eta_global(p, P)
    assert abs(eta.values[0, 0, 0] - frozen.ETA0_Q2_T1) <= 1e-6
    assert eta.values[-1, 0, 0] == 1.0
    assert np.all(eta.values >= 0) and np.all(eta.values <= cert.beta_T)
    # beta_T from the formula with the computed sup ||P||
    nP = float(np.max(P.norms()))
    assert cert.beta_T == pytest.approx(2 * math.exp(2 * nP), rel=1e-12)


def test_every_segment_contracts(q2):
    p, P = q2
    eta, _ = solve_eta_global(p, P)
    for d in eta.sweep_diffs:
        ratios = [b / a for a, b in zip(d, d[1:]) if a > 1e-12]
        assert all(r <= 0.55 for r in ratios)


def test_eta_ode_residual_is_second_order():
    p = q2_problem()
    errs = []
    for n in (200, 400):
        P = solve_riccati_p(p, TimeGrid(1.0, n))
        eta, _ = solve_eta(p, P)
        fd = np.gradient(eta.values[:, 0, 0], P.grid.h, edge_order=2)
        rhs = eta_rhs(p, P.values, eta.values)[:, 0, 0]
        errs.append(np.max(np.abs(fd - rhs)) / P.grid.h**2)
    # measured constants stay bounded under refinement
    assert errs[1] <= 1.2 * errs[0] and errs[0] < 50


def test_precondition_names_operator(q2):
    p, P = q2
    bad = p.replace(S=[[1.0]])
    with pytest.raises(PreconditionError, match="-Qbar S"):
        solve_eta_global(bad, P)
    bad = p.replace(ST=[[1.0]])
    with pytest.raises(PreconditionError, match="-Qbar_T S_T"):
        solve_eta_global(bad, P)


def test_solve_eta_falls_back_to_local_route():
    p = MFGProblem.scalar(q=1, qbar=1, S=1.0, qT=0, qbarT=1, ST=0.5, T=0.05)
    P = solve_riccati_p(p, TimeGrid(0.05, 200))
    eta, cert = solve_eta(p, P)
    assert cert.tau >= p.T
    assert eta.values[-1, 0, 0] == -0.5


def test_solve_eta_rejects_long_non_dissipative_horizon():
    p = MFGProblem.scalar(q=1, qbar=1, S=1.0, qT=0, qbarT=1, ST=1.0, T=2.0)
    P = solve_riccati_p(p)
    with pytest.raises(PreconditionError):
        solve_eta(p, P)


def test_dissipative_suite_certificates():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = random_problem(rng, dim=int(rng.integers(1, 6)))
        P = solve_riccati_p(p)
        eta, cert = solve_eta_global(p, P)
        sp = p.space
        assert np.array_equal(eta.values[-1], -p.QbarTST)
        lam = sp.eigvalsh(eta.values)
        assert lam[:, 0].min() >= -1e-8 * (1 + cert.beta_T)
        assert float(np.max(eta.norms(sp))) <= cert.beta_T * (1 + 1e-6)
        assert max(sp.self_adjoint_defect(X) for X in eta.values) <= 1e-9
