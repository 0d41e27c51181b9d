"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they are produced; they are also collected in the terminal summary.
"""

import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

import frozen
from conftest import equilibrium_problem, q2_problem
from lqmfg import MFGProblem, TimeGrid, growth_bound, solve_riccati_p
from lqmfg.cli import run_scenario
from lqmfg.config import parse_config
from lqmfg.delay import DelayParams, build_delay_problem, segment_refinement_study
from lqmfg.eta import beta_T, solve_eta_global
from lqmfg.fbs import contraction_constant, solve_decoupled, solve_picard, value_function
from lqmfg.instances import random_problem
from lqmfg.linops import semigroup_sup
from lqmfg.montecarlo import MCConfig, evaluate_cost, monte_carlo_consistency
from lqmfg.riccati import default_grid, p_bound
from lqmfg.verify import check_uniqueness_conditions, monotonicity_probe, yosida_convergence_study

RESULTS_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """Time a criterion body and record a PASS/FAIL line with its measurements."""

    @contextmanager
    def run(number, title, limit=None):
        info = {}
        start = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            in_time = limit is None or elapsed < limit
            passed = ok and in_time
            details = ", ".join(f"{k}={v}" for k, v in info.items())
            budget = f" (limit {limit:g} s)" if limit is not None else ""
            line = (f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}  "
                    f"[{elapsed:.2f} s{budget}] {details}")
            request.config.stash.setdefault(RESULTS_KEY, []).append(line)
            with capsys.disabled():
                print("\n" + line)
        assert in_time, f"criterion {number} took {elapsed:.2f} s, limit {limit} s"

    return run


def _fmt(x):
    return f"{x:.3g}"


def _gb(p):
    return growth_bound(p.A, p.T, space=p.space)


def _scalar_suite():
    return [
        equilibrium_problem(),
        q2_problem(),
        MFGProblem.scalar(a=-0.5, qbar=1.0, S=-1.0, qbarT=1.0, ST=-1.0),
        MFGProblem.scalar(a=-0.5, q=0.5, qbar=1.5, S=-0.4, qT=0.2, qbarT=0.8, ST=-0.5, z0=-1.5),
    ]


def test_c01_scalar_riccati_oracle(criterion):
    with criterion(1, "scalar Riccati oracle", limit=1.0) as info:
        p = q2_problem()
        P = solve_riccati_p(p, TimeGrid(1.0, 1000))
        err = abs(P.values[0, 0, 0] - frozen.P0_Q2_RK4)
        info["error"] = _fmt(err)
        assert err <= 1e-8


def test_c02_p_bound_certificate(criterion):
    with criterion(2, "sup ||P|| certificate, 100 random instances", limit=30.0) as info:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            p = random_problem(rng, dim=int(rng.integers(1, 7)), contractive=False,
                               a_norm=float(rng.uniform(0.1, 2.0)), dissipative=bool(rng.integers(2)))
            assert p.norm(p.A) <= 2.0 + 1e-12
            P = solve_riccati_p(p, default_grid(p.T, p))
            worst = max(worst, float(np.max(P.norms(p.space))) / p_bound(p, _gb(p)))
        info["max sup/bound"] = _fmt(worst)
        assert worst <= 1 + 1e-6


def test_c03_cross_method_uniqueness(criterion):
    with criterion(3, "decoupled vs Picard, 50 dissipative instances", limit=60.0) as info:
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(50):
            p = random_problem(rng, dim=int(rng.integers(1, 6)), T=1.0)
            sp = p.space
            P = solve_riccati_p(p, TimeGrid(1.0, 1000))
            dec = solve_decoupled(p, P)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                pic, _ = solve_picard(p, P)
            assert pic.diagnostics["converged"]
            gap = np.max(sp.norm(dec.z.values - pic.z.values) + sp.norm(dec.r.values - pic.r.values))
            worst = max(worst, float(gap) / (1 + float(sp.norm(p.z0))))
        info["max relative gap"] = _fmt(worst)
        assert worst <= 1e-6


def test_c04_contraction_rate(criterion):
    with criterion(4, "Picard ratios vs C_T and multi-start", limit=30.0) as info:
        rng = np.random.default_rng(11)
        instances = [q2_problem(T=0.1)]
        while len(instances) < 20:
            p = random_problem(rng, dim=int(rng.integers(1, 5)), T=float(rng.uniform(0.05, 0.5)),
                               dissipative=bool(rng.integers(2)))
            if contraction_constant(p, _gb(p)).C_T < 1:
                instances.append(p)
        excess, spread = -np.inf, 0.0
        for p in instances:
            ct = contraction_constant(p, _gb(p)).C_T
            P = solve_riccati_p(p, TimeGrid(p.T, 500))
            a, ra = solve_picard(p, P, tol=1e-12)
            r0 = 5.0 * rng.standard_normal((len(P.grid), p.dim))
            b, rb = solve_picard(p, P, tol=1e-12, r0=r0)
            assert a.diagnostics["converged"] and b.diagnostics["converged"]
            excess = max(excess, max(ra + rb) - ct)
            spread = max(spread, float(np.max(np.abs(a.r.values - b.r.values))))
        info["max(ratio - C_T)"] = _fmt(excess)
        info["start spread"] = _fmt(spread)
        assert excess <= 0.05
        assert spread <= 1e-8


def test_c05_eta_certificates(criterion):
    with criterion(5, "eta certificates on the dissipative suite", limit=30.0) as info:
        rng = np.random.default_rng(3)
        worst_norm, worst_eig = 0.0, 0.0
        for _ in range(20):
            p = random_problem(rng, dim=int(rng.integers(1, 6)))
            sp = p.space
            P = solve_riccati_p(p, TimeGrid(p.T, 1000))
            eta, cert = solve_eta_global(p, P)
            bT = beta_T(p, P, semigroup_sup(p.A, p.T, space=sp))
            assert cert.beta_T == bT
            assert np.array_equal(eta.values[-1], -p.QbarTST)
            worst_norm = max(worst_norm, float(np.max(eta.norms(sp))) / bT)
            lam = float(np.min(sp.eigvalsh(eta.values)))
            worst_eig = min(worst_eig, lam / (1 + bT))
        info["max sup/beta_T"] = _fmt(worst_norm)
        info["min eig/(1+beta_T)"] = _fmt(worst_eig)
        assert worst_norm <= 1 + 1e-6
        assert worst_eig >= -1e-8


def test_c06_monotonicity_identity(criterion):
    with criterion(6, "monotonicity identity", limit=10.0) as info:
        rng = np.random.default_rng(5)
        Ks, chains = [], []
        problems = _scalar_suite() + [random_problem(rng, dim=int(rng.integers(1, 5))) for _ in range(3)]
        for i, p in enumerate(problems):
            P = solve_riccati_p(p, TimeGrid(p.T, 1000))
            sa = solve_decoupled(p, P)
            # eta does not depend on z0
            sb = solve_decoupled(p.replace(z0=p.z0 + rng.standard_normal(p.dim)), P, eta=sa.diagnostics["eta"])
            res = monotonicity_probe(p, P, sa, sb)
            assert res.max_error <= res.K * P.grid.h**2 * (1 + 1e-12)
            if i < len(_scalar_suite()):
                Ks.append(res.K)
            chains.append(res.sign_chain_ok)
        info["K (scalar suite)"] = "/".join(_fmt(k) for k in Ks)
        info["sign chains"] = f"{sum(chains)}/{len(chains)}"
        assert max(Ks) <= 1e3
        assert all(chains)


def test_c07_yosida_convergence(criterion):
    with criterion(7, "Yosida approximants", limit=60.0) as info:
        p = MFGProblem.scalar(a=-1.0, qbar=1.0, S=-1.0, qbarT=1.0, ST=-1.0)
        P = solve_riccati_p(p, TimeGrid(1.0, 1000))
        st = yosida_convergence_study(p, P, [10, 100, 1000])
        info["scalar gaps"] = "/".join(_fmt(g) for g in st.gaps)
        info["ratios"] = "/".join(_fmt(r) for r in st.ratios)
        info["below 1e-4"] = st.below_target
        dp = build_delay_problem(DelayParams(d=1.0, delta_past=1.0, n_seg=16))
        dP = solve_riccati_p(dp, default_grid(dp.T, dp))
        ds = yosida_convergence_study(dp, dP, [50, 200, 800])
        info["delay gaps"] = "/".join(_fmt(g) for g in ds.gaps)
        assert st.monotone and all(0.05 <= r <= 0.2 for r in st.ratios)
        assert ds.monotone


def test_c08_mean_field_consistency(criterion):
    with criterion(8, "Monte Carlo mean vs z", limit=60.0) as info:
        p = equilibrium_problem(sigma=0.1)
        sol = solve_decoupled(p, solve_riccati_p(p, TimeGrid(1.0, 1000)))
        res = monte_carlo_consistency(p, sol, MCConfig(n_paths=10_000, seed=42))
        h = sol.grid.h
        slack = float(np.min(3 * res.stderr_path + 10 * h - res.deviation))
        p0 = equilibrium_problem()
        sol0 = solve_decoupled(p0, solve_riccati_p(p0, TimeGrid(1.0, 1000)))
        dev0 = monte_carlo_consistency(p0, sol0, MCConfig(n_paths=100, seed=42)).max_deviation
        info["max deviation"] = _fmt(res.max_deviation)
        info["min slack"] = _fmt(slack)
        info["sigma=0 deviation"] = _fmt(dev0)
        assert slack >= 0 and res.contract_ok
        assert dev0 <= 1e-6


def test_c09_cost_value_agreement(criterion):
    with criterion(9, "cost vs value function", limit=10.0) as info:
        worst = 0.0
        for p in _scalar_suite():
            sol = solve_decoupled(p, solve_riccati_p(p, TimeGrid(p.T, 1000)))
            J, _ = evaluate_cost(p, sol, MCConfig(n_paths=2))
            v = value_function(sol.P, sol.r, sol.s, 0.0, p.z0, space=p.space)
            worst = max(worst, abs(J - v))
        info["max |J - v|"] = _fmt(worst)
        assert worst <= 1e-5


def test_c10_delay_model(criterion):
    with criterion(10, "delay model", limit=120.0) as info:
        rng = np.random.default_rng(10)
        defect = 0.0
        for n_seg in (4, 16, 64):
            p = build_delay_problem(DelayParams(d=0.8, n_seg=n_seg))
            for _ in range(20):
                x, y = rng.standard_normal((2, n_seg + 1))
                defect = max(defect, abs(p.space.inner(p.A @ x, y) - p.space.inner(x, p.A_adj @ y)))
        prm = DelayParams(d=1.0, b_kernel=0.0, delta_past=1.0, n_seg=1, T=0.5)
        dp = build_delay_problem(prm)
        grid = TimeGrid(prm.T, 1000)
        sol = solve_decoupled(dp, solve_riccati_p(dp, grid))
        bg, be = prm.beta * prm.gamma, prm.beta * prm.eta_price
        sp = MFGProblem.scalar(R=2 * prm.r_cost, q=0.0, qbar=1.0, qT=0.0, qbarT=1.0, S=-bg, ST=-bg,
                               T=prm.T, z0=prm.k0, c=be, cT=be)
        ref = solve_decoupled(sp, solve_riccati_p(sp, grid))
        red = float(np.max(np.abs(sol.z.values[:, 0] - ref.z.values[:, 0])))
        study = segment_refinement_study(DelayParams(d=1.0, delta_past=1.0), [4, 8, 16, 32])
        regimes = set()
        for _ in range(5):
            beta, gamma = rng.uniform(0.05, 3.0, 2)
            q = build_delay_problem(DelayParams(d=1.0, beta=beta, gamma=gamma, n_seg=8))
            regimes.add(check_uniqueness_conditions(q, _gb(q)).uniqueness_regime)
        info["adjoint defect"] = _fmt(defect)
        info["b=0 reduction"] = _fmt(red)
        info["refinement ratios"] = "/".join(_fmt(r) for r in study.ratios)
        info["regimes"] = ",".join(sorted(regimes))
        assert defect <= 1e-12
        assert red <= 1e-8
        assert study.monotone and all(abs(r - 0.5) <= 0.15 for r in study.ratios)
        assert regimes == {"dissipative"}


SCENARIOS = {
    "scalar_mc": "kind = scalar\nsigma = 0.1\nqbar = 1\nS = -1\nsteps = 400\nmc_paths = 3000\n"
                 "seed = 42\nrun = riccati,decoupled,picard,montecarlo\n",
    "random": "kind = random_psd\ndim = 4\nseed = 9\nsteps = 500\nrun = riccati,decoupled,picard,verify\n",
    "delay": "kind = delay\nd = 1.0\ndelta_past = constant:1.0\nn_seg = 8\nsigma = 0.2\nmc_paths = 1000\n"
             "seed = 3\nrun = riccati,decoupled,verify,montecarlo\n",
}


def test_c11_determinism(criterion, tmp_path):
    with criterion(11, "byte-identical artifacts on re-run") as info:
        compared = 0
        for name, text in SCENARIOS.items():
            s = parse_config(text)
            a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
            assert run_scenario(s, str(a)) == 0
            assert run_scenario(s, str(b)) == 0
            files = sorted(f.name for f in a.iterdir() if f.suffix == ".csv")
            assert files
            for f in files:
                assert (a / f).read_bytes() == (b / f).read_bytes(), f"{name}/{f} differs"
                compared += 1
        info["csv files compared"] = compared
