"""Auxiliary Riccati equation for the decoupling operator eta(.).

Work is done in forward time ``u = T - t`` where ``f(u) = eta(T - u)``
solves

    f' = (A* - P(T-u) G) f + f (A - G P(T-u)) - Qbar S - f G f,
    f(0) = -Qbar_T S_T,

with ``G = B R^{-1} B*``. On short intervals the mild form of this
equation is a contraction (Picard sweeps below); under dissipative
coupling the local solutions are continued across [0, T] with a uniform
certified step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CertificateError,
    ContractionError,
    PathologicalInstanceError,
    PreconditionError,
    SymmetryError,
)
from .linops import SELF_ADJOINT_RTOL, is_psd, mat_exp, semigroup_sup
from .paths import OperatorPath, TimeGrid

MAX_SEGMENTS = 10**6
SUBGRID = 64
# a standalone local solve has no outer grid to lean on; 256 cells keep the
# trapezoid error near 1e-9 on certified steps
LOCAL_SUBGRID = 256


@dataclass(frozen=True)
class EtaCertificate:
    """Constants certifying an eta solve.

    ``segments`` holds ``(start, end, radius)`` triples in forward time.
    """

    radius_r: float
    tau: float
    beta_T: float
    global_ok: bool
    segments: tuple = ()
    M_T: float = 1.0

    def __post_init__(self):
        if self.radius_r < 0 or self.tau < 0 or self.beta_T < 0:
            raise ValueError("certificate constants must be nonnegative")


def _norms(problem, P):
    sp = problem.space
    return dict(
        nG=sp.op_norm(problem.G),
        nP=float(np.max(P.norms(sp))),
        c1=sp.op_norm(problem.QbarTST),
        c2=sp.op_norm(problem.QbarS),
    )


def beta_T(problem, P, MT: float) -> float:
    """Uniform bound on the forward solution under dissipative data."""
    k = _norms(problem, P)
    T = problem.T
    expo = 2 * T * MT**2 * k["nP"] * k["nG"]
    scale = MT**2 * (k["c1"] + T * k["c2"])
    if scale == 0.0:
        return 0.0
    return scale * math.exp(expo) if expo < 700.0 else math.inf


def eta_contraction_params(problem, P: OperatorPath, MT: float) -> EtaCertificate:
    """Radius and largest certified step of the local contraction.

    ``r = 2 MT^2 ||Qbar_T S_T||``; ``tau`` is found by 30 bisection steps on
    [0, T] against the invariance and contraction inequalities, with the
    sup of ||P|| over the whole horizon standing in for its sup on the
    interval.
    """
    if MT < 1:
        raise ValueError("MT must be >= 1")
    k = _norms(problem, P)
    nG, nP, c1, c2 = k["nG"], k["nP"], k["c1"], k["c2"]
    r = 2 * MT**2 * c1

    def ok(tau):
        inv = MT**2 * (c1 + tau * (c2 + 2 * r * nP * nG + r * r * nG)) <= r * (1 + 1e-14)
        con = tau * MT**2 * (2 * nP * nG + 2 * r * nG) <= 0.5
        return inv and con

    T = problem.T
    if ok(T):
        tau = T
    else:
        lo, hi = 0.0, T
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        tau = lo
    if tau <= P.grid.h:
        return EtaCertificate(r, 0.0, 0.0, False, M_T=MT)
    return EtaCertificate(r, tau, 0.0, tau >= T, M_T=MT)


def restart_step(problem, P, MT: float, beta: float):
    """Radius ``r1 = 2 MT^2 beta`` and the continuation step ``tau1``."""
    k = _norms(problem, P)
    nG, nP, c2 = k["nG"], k["nP"], k["c2"]
    r1 = 2 * MT**2 * beta
    limits = []
    den_a = MT**2 * (c2 + 2 * r1 * nP * nG + r1 * r1 * nG)
    if den_a > 0:
        limits.append(0.5 * r1 / den_a)
    den_b = MT**2 * (2 * nP * nG + 2 * r1 * nG)
    if den_b > 0:
        limits.append(0.5 / den_b)
    tau1 = min(limits) if limits else problem.T
    return r1, min(tau1, problem.T)


def _data_symmetric(problem):
    sp = problem.space
    return (
        sp.self_adjoint_defect(problem.QbarS) <= SELF_ADJOINT_RTOL
        and sp.self_adjoint_defect(problem.QbarTST) <= SELF_ADJOINT_RTOL
    )


def forward_rhs(problem, Pv, f):
    """Right-hand side of the forward equation; broadcasts over node stacks."""
    G, A, As = problem.G, problem.A, problem.A_adj
    return As @ f - Pv @ G @ f + f @ A - f @ G @ Pv - problem.QbarS - f @ G @ f


def eta_rhs(problem, Pv, eta):
    """eta' in original time."""
    G, A, As = problem.G, problem.A, problem.A_adj
    return Pv @ G @ eta - As @ eta - eta @ A + eta @ G @ Pv + problem.QbarS + eta @ G @ eta


class _Segments:
    """Shared state for Picard sweeps on fine sub-grids."""

    def __init__(self, problem, P, hf, tol, max_sweeps, symmetric, exact_norms=True):
        self.problem = problem
        self.P = P
        self.hf = hf
        self.E = mat_exp(problem.A, hf)
        self.Es = problem.space.adjoint(self.E)
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.symmetric = symmetric
        self.exact_norms = exact_norms

    def _sup(self, X):
        """(sup ||X(u)||, lower bound of sup ||X(u)||) in the weighted norm.

        Without exact norms the Frobenius norm is used: it bounds the
        operator norm from above, and divided by sqrt(d) from below.
        """
        S = self.problem.space.similar(X)
        if self.exact_norms:
            v = float(np.max(np.linalg.norm(S, 2, axis=(1, 2))))
            return v, v
        v = float(np.sqrt(np.max(np.sum(S * S, axis=(1, 2)))))
        return v, v / math.sqrt(X.shape[-1])

    def solve(self, u_a, m, f0):
        pr, sp, hf = self.problem, self.problem.space, self.hf
        u = u_a + hf * np.arange(m + 1)
        Pv = self.P.sample(np.clip(pr.T - u, 0.0, pr.T))
        G, QbS, E, Es = pr.G, pr.QbarS, self.E, self.Es
        F = np.broadcast_to(f0, (m + 1,) + f0.shape).copy()
        diffs = []
        for _ in range(self.max_sweeps):
            N = -QbS - Pv @ G @ F - F @ G @ Pv - F @ G @ F
            # trapezoid recursion F_{j+1} = E* (F_j + h/2 N_j) E + h/2 N_{j+1}
            X = 0.5 * hf * (Es @ N[:-1] @ E + N[1:])
            new = np.empty_like(F)
            new[0] = f0
            cur = f0
            for j in range(m):
                cur = Es @ cur @ E + X[j]
                new[j + 1] = cur
            if self.symmetric:
                new = sp.symmetrize(new)
            diff, _ = self._sup(new - F)
            scale = max(1.0, self._sup(new)[1])
            diffs.append(diff)
            F = new
            if not np.all(np.isfinite(F)):
                raise ContractionError(len(diffs), float("inf"))
            if diff <= self.tol * scale:
                return F, Pv, diffs
        raise ContractionError(len(diffs), diffs[-1])


def solve_eta_local(problem, P: OperatorPath, interval, eta_start, n_sub: int = LOCAL_SUBGRID,
                    tol: float = 1e-10, max_sweeps: int = 200) -> OperatorPath:
    """Fixed point of the mild map on a forward-time interval.

    Parameters
    ----------
    interval : (u_a, u_b)
        Forward-time interval; ``u = T - t``.
    eta_start : (d, d) array
        Value of the forward solution at ``u_a``.
    n_sub : int
        Number of sub-grid cells.

    Returns
    -------
    OperatorPath
        Forward solution on ``TimeGrid(u_b - u_a, n_sub, start=u_a)``, with
        the Picard differences stored in ``sweep_diffs``.
    """
    u_a, u_b = map(float, interval)
    if not 0.0 <= u_a < u_b <= problem.T * (1 + 1e-12):
        raise ValueError(f"interval {interval} not inside [0, {problem.T}]")
    f0 = np.array(eta_start, dtype=float)
    sp = problem.space
    sym = _data_symmetric(problem) and sp.self_adjoint_defect(f0) <= SELF_ADJOINT_RTOL
    grid = TimeGrid(u_b - u_a, n_sub, start=u_a)
    seg = _Segments(problem, P, grid.h, tol, max_sweeps, sym)
    F, Pv, diffs = seg.solve(u_a, n_sub, f0)
    path = OperatorPath(grid, F, forward_rhs(problem, Pv, F), symmetric=sym, space=sp)
    path.sweep_diffs = diffs
    return path


def _march(problem, P, first_len, step_len, tol, max_sweeps, sym, radius0, radius1):
    """Continue local solves over [0, T]; returns eta on P's grid and segments."""
    grid = P.grid
    n, h = grid.n_steps, grid.h
    tau_min = min(first_len, step_len)
    k = max(1, math.ceil(SUBGRID * h / tau_min - 1e-9), math.ceil(h / 1.25e-3 - 1e-9))
    hf = h / k
    total = n * k
    c_first = max(1, min(total, int(math.floor(first_len / hf + 1e-9))))
    c_step = max(1, int(math.floor(step_len / hf + 1e-9)))
    count = 1 + max(0, math.ceil((total - c_first) / c_step))
    if count > MAX_SEGMENTS:
        raise PathologicalInstanceError(
            f"continuation needs {count} segments (limit {MAX_SEGMENTS})"
        )
    seg = _Segments(problem, P, hf, tol, max_sweeps, sym, exact_norms=False)
    dim = problem.dim
    f_nodes = np.empty((n + 1, dim, dim))
    f = -np.array(problem.QbarTST)
    f_nodes[0] = f
    segments = []
    all_diffs = []
    pos = 0
    while pos < total:
        m = min(c_first if pos == 0 else c_step, total - pos)
        F, _, diffs = seg.solve(pos * hf, m, f)
        all_diffs.append(diffs)
        first = -(-pos // k) * k
        for g in range(first, pos + m + 1, k):
            f_nodes[g // k] = F[g - pos]
        segments.append((pos * hf, (pos + m) * hf, radius0 if pos == 0 else radius1))
        f = F[-1]
        pos += m
    eta = f_nodes[::-1].copy()
    eta[-1] = -np.array(problem.QbarTST)
    return eta, tuple(segments), all_diffs


def _eta_path(problem, P, eta, sym, cert, diffs):
    d = eta_rhs(problem, P.values, eta)
    path = OperatorPath(P.grid, eta, d, symmetric=sym, space=problem.space)
    path.certificate = cert
    path.sweep_diffs = diffs
    return path


def check_dissipative(problem, tol: float = 1e-10):
    """Raise PreconditionError unless -Qbar S and -Qbar_T S_T are PSD."""
    sp = problem.space
    for name, L in (("-Qbar S", -problem.QbarS), ("-Qbar_T S_T", -problem.QbarTST)):
        scale = max(1.0, sp.op_norm(L))
        try:
            ok, lam = is_psd(L, tol * scale, space=sp)
        except SymmetryError as exc:
            raise PreconditionError(f"{name} is not self-adjoint: {exc}") from exc
        if not ok:
            raise PreconditionError(f"{name} is not PSD (min eigenvalue {lam:.3e})")


def solve_eta_global(problem, P: OperatorPath, tol: float = 1e-10, max_sweeps: int = 200):
    """eta on P's grid by continuation under dissipative coupling.

    Returns
    -------
    (OperatorPath, EtaCertificate)
    """
    check_dissipative(problem)
    sp = problem.space
    MT = semigroup_sup(problem.A, problem.T, space=sp)
    local = eta_contraction_params(problem, P, MT)
    beta = beta_T(problem, P, MT)
    if not math.isfinite(beta):
        raise PathologicalInstanceError("beta_T overflows; continuation step would vanish")
    r1, tau1 = restart_step(problem, P, MT, beta)
    if local.global_ok:
        first = problem.T
    elif local.tau > 0:
        first = local.tau
    else:
        first = tau1
    if tau1 <= 0:
        raise PathologicalInstanceError("continuation step is zero")
    sym = _data_symmetric(problem)
    eta, segs, diffs = _march(problem, P, first, tau1, tol, max_sweeps, sym,
                              local.radius_r if local.tau > 0 else r1, r1)
    cert = EtaCertificate(local.radius_r, local.tau if local.tau > 0 else tau1,
                          beta, True, segs, MT)
    lam = sp.eigvalsh(eta)
    if lam[:, 0].min() < -1e-8 * (1 + beta):
        raise CertificateError(f"eta lost positivity: min eigenvalue {lam[:, 0].min():.3e}")
    if lam[:, -1].max() > beta * (1 + 1e-6) + 1e-12:
        raise CertificateError(f"eta exceeds its bound: {lam[:, -1].max():.6g} > {beta:.6g}")
    return _eta_path(problem, P, eta, sym, cert, diffs), cert


def solve_eta(problem, P: OperatorPath, tol: float = 1e-10, max_sweeps: int = 200):
    """eta on [0, T] by whichever certified route applies.

    Dissipative data use the global continuation; otherwise a single
    local contraction must cover the horizon.
    """
    try:
        return solve_eta_global(problem, P, tol, max_sweeps)
    except PreconditionError as exc:
        reason = str(exc)
    MT = semigroup_sup(problem.A, problem.T, space=problem.space)
    cert = eta_contraction_params(problem, P, MT)
    if not cert.global_ok:
        raise PreconditionError(
            f"no certified route for eta: {reason}; local step {cert.tau:.3g} < T = {problem.T}"
        )
    sym = _data_symmetric(problem)
    eta, segs, diffs = _march(problem, P, problem.T, problem.T, tol, max_sweeps, sym,
                              cert.radius_r, cert.radius_r)
    cert = EtaCertificate(cert.radius_r, cert.tau, 0.0, True, segs, MT)
    return _eta_path(problem, P, eta, sym, cert, diffs), cert
