"""Backward operator Riccati equation for P(.)."""

from __future__ import annotations

import math

import numpy as np

from .errors import CertificateError, DivergenceError, GridMismatchError, PositivityError
from .linops import GrowthBound, mat_exp
from .paths import OperatorPath, TimeGrid

BLOWUP = 1e12
PSD_RTOL = 1e-9


def riccati_rhs(problem, P):
    """F(P) = PA + A*P - PGP + Q + Qbar, so that P' = -F(P)."""
    return P @ problem.A + problem.A_adj @ P - P @ problem.G @ P + problem.Q_sum


def default_grid(T: float, problem=None) -> TimeGrid:
    """max(200, ceil(200 T)) steps, refined so that h ||A|| <= 0.02 when a problem is given."""
    n = max(200, math.ceil(200 * T))
    if problem is not None:
        n = max(n, math.ceil(50 * T * problem.norm(problem.A)))
    return TimeGrid(T, n)


def residual_tol(problem, grid: TimeGrid) -> float:
    """Default tolerance for :func:`riccati_residual` on ``grid``.

    The base value is calibrated for steps of 1e-3; the trapezoid rule in
    the certificate is second order, so coarser grids scale it by (h/1e-3)^2.
    """
    base = 1e-6 * (1.0 + problem.norm(problem.QT_sum))
    return base * max(1.0, (grid.h / 1e-3) ** 2)


def solve_riccati_p(problem, grid: TimeGrid | None = None, certify: bool = True) -> OperatorPath:
    """Integrate the Riccati equation backward from P(T) = Q_T + Qbar_T.

    Classical RK4 in reversed time; each step is symmetrized in the
    weighted inner product. The terminal node is set exactly.

    Raises
    ------
    DivergenceError
        A node norm exceeds 1e12.
    PositivityError
        A node has min eigenvalue below -1e-9 ||P(t)||.
    CertificateError
        ``certify`` is set and the mild-form residual exceeds
        :func:`residual_tol`.
    """
    problem.validate()
    grid = grid or default_grid(problem.T, problem)
    if not math.isclose(grid.T, problem.T, rel_tol=1e-12) or grid.start != 0.0:
        raise GridMismatchError(f"grid {grid!r} does not cover [0, {problem.T}]")
    sp = problem.space
    n, h = grid.n_steps, grid.h
    dim = problem.dim
    P = np.empty((n + 1, dim, dim))
    P[n] = problem.QT_sum
    F = lambda X: riccati_rhs(problem, X)  # noqa: E731
    Y = P[n].copy()
    for i in range(n, 0, -1):
        k1 = F(Y)
        k2 = F(Y + 0.5 * h * k1)
        k3 = F(Y + 0.5 * h * k2)
        k4 = F(Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        Y = sp.symmetrize(Y)
        if not np.all(np.isfinite(Y)) or sp.op_norm(Y) > BLOWUP:
            nrm = sp.op_norm(Y) if np.all(np.isfinite(Y)) else float("inf")
            raise DivergenceError(i - 1, grid.nodes[i - 1], nrm)
        P[i - 1] = Y
    lam = sp.eigvalsh(P)
    norms = np.linalg.norm(sp.similar(P), 2, axis=(1, 2))
    bad = np.nonzero(lam[:, 0] < -PSD_RTOL * np.maximum(norms, 1e-300))[0]
    if bad.size:
        # latest node first: integration runs backward
        k = int(bad[-1])
        raise PositivityError(k, grid.nodes[k], float(lam[k, 0]))
    derivs = -np.stack([F(X) for X in P])
    path = OperatorPath(grid, P, derivs, symmetric=True, space=sp)
    if certify:
        res = riccati_residual(path, problem)
        tol = residual_tol(problem, grid)
        if res > tol:
            raise CertificateError(f"Riccati mild residual {res:.3e} exceeds {tol:.3e}")
    return path


def probe_vectors(space, n_random: int = 4, seed: int = 0):
    """W-unit basis vectors plus a few seeded random W-unit vectors."""
    dim = space.dim
    basis = np.diag(1.0 / np.sqrt(space.weight))
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((n_random, dim))
    rand /= space.norm(rand)[:, None]
    return np.vstack([basis, rand])


def riccati_residual(P: OperatorPath, problem) -> float:
    """Max mild-form defect of ``P`` over grid nodes and probe vectors.

    The mild right-hand side is assembled cell by cell with exact semigroup
    factors e^{hA} and the trapezoid rule with its Euler-Maclaurin end
    correction (h^2/12 times the integrand derivative). The correction uses
    the node derivatives stored on ``P``, so only node data enter.
    """
    grid = P.grid
    if not math.isclose(grid.T, problem.T, rel_tol=1e-12) or P.dim != problem.dim:
        raise GridMismatchError("path does not live on the problem's horizon and space")
    sp = problem.space
    h = grid.h
    E = mat_exp(problem.A, h)
    Es = sp.adjoint(E)
    A, As = problem.A, problem.A_adj
    G, Qs = problem.G, problem.Q_sum
    vals, dP = P.values, P.derivs
    PG = vals @ G[None]
    M = Qs[None] - PG @ vals
    Md = -(dP @ G[None] @ vals + PG @ dP)
    # d/ds of e^{(s-t)A*} M(s) e^{(s-t)A} at s = t
    D = As[None] @ M + M @ A[None] + Md
    probes = probe_vectors(sp).T
    V = problem.QT_sum.copy()
    worst = float(np.max(sp.norm(((vals[-1] - V) @ probes).T)))
    c1, c2 = 0.5 * h, h * h / 12.0
    for i in range(grid.n_steps - 1, -1, -1):
        V = Es @ (V + c1 * M[i + 1] - c2 * D[i + 1]) @ E + c1 * M[i] + c2 * D[i]
        worst = max(worst, float(np.max(sp.norm(((vals[i] - V) @ probes).T))))
    return worst


def p_bound(problem, gb: GrowthBound) -> float:
    """M^2 e^{2 omega^+ T} (||Q_T + Qbar_T|| + T ||Q + Qbar||)."""
    wplus = max(gb.omega, 0.0)
    return gb.M**2 * math.exp(min(2 * wplus * problem.T, 700.0)) * (
        problem.norm(problem.QT_sum) + problem.T * problem.norm(problem.Q_sum)
    )
