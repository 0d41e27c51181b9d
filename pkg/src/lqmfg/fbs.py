"""Forward-backward system for the population mean z and the linear term r.

    z' = (A - G P) z - G r,                        z(0) = z0
    r' = -(A* - P G) r + Qbar S z + c,              r(T) = -Qbar_T S_T z(T) - c_T

with ``G = B R^{-1} B*``. Two routes are provided: Picard iteration of the
composite map r -> Phi(Psi(r)) and decoupling through r = eta z + kappa.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError, NoCertificateError, UnsupportedCaseError
from .eta import solve_eta
from .linops import GrowthBound, mat_exp
from .paths import OperatorPath, VectorPath, check_same_grid

PICARD_TOL = 1e-10
RATIO_FLOOR = 1e-13


@dataclass(frozen=True)
class ContractionReport:
    C_T: float
    C_BR: float
    C_QbarTST: float
    C_QS: float
    beta: float
    is_contraction: bool


@dataclass
class LQMSolution:
    """The tuple (P, z, r, s) with diagnostics; ``s`` is None for affine data."""

    P: OperatorPath
    z: VectorPath
    r: VectorPath
    s: np.ndarray | None
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.P.grid


def contraction_constant(problem, gb: GrowthBound) -> ContractionReport:
    """Small-horizon contraction constant of the composite map.

    ``omega`` enters through ``max(omega, 0)`` so that ``M e^{omega^+ T}``
    bounds the semigroup on the whole interval.
    """
    T, M = problem.T, gb.M
    w = max(gb.omega, 0.0)
    nrm = problem.norm
    C_BR = nrm(problem.G)
    C_TS = nrm(problem.QbarTST)
    C_QS = nrm(problem.QbarS)
    beta = M**2 * math.exp(min(2 * w * T, 700.0)) * (nrm(problem.QT_sum) + T * nrm(problem.Q_sum))
    expo = 2 * M * math.exp(min(w * T, 700.0)) * C_BR * beta * T + 2 * w * T
    if (C_TS + C_QS) * C_BR > 0:
        C_T = M**2 * (C_TS + C_QS * T) * T * C_BR * math.exp(min(expo, 700.0))
        if expo > 700.0:
            C_T = math.inf
    else:
        C_T = 0.0
    return ContractionReport(C_T, C_BR, C_TS, C_QS, beta, C_T < 1)


def _forward_stepper(problem, P: OperatorPath, extra=None, extra_mid=None):
    from .stepping import LinearRK4

    G = problem.G
    Mn = problem.A[None] - G[None] @ P.values
    Mm = problem.A[None] - G[None] @ P.midpoints()
    if extra is not None:
        Mn = Mn - G[None] @ extra
        Mm = Mm - G[None] @ extra_mid
    return LinearRK4(Mn, Mm, P.grid.h), Mn


def _backward_stepper(problem, P: OperatorPath, extra=None, extra_mid=None):
    from .stepping import LinearRK4

    G, As = problem.G, problem.A_adj
    Mn = -(As[None] - P.values @ G[None])
    Mm = -(As[None] - P.midpoints() @ G[None])
    if extra is not None:
        Mn = Mn + extra @ G[None]
        Mm = Mm + extra_mid @ G[None]
    return LinearRK4(Mn, Mm, -P.grid.h), Mn


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


class _System:
    """Cached steppers for repeated Psi/Phi evaluations on one grid."""

    def __init__(self, problem, P):
        self.problem = problem
        self.P = P
        self.zs, self.zM = _forward_stepper(problem, P)
        self.rs, self.rM = _backward_stepper(problem, P)

    def psi(self, r: VectorPath) -> VectorPath:
        G = self.problem.G
        vn = -_mv(G, r.values)
        vm = -_mv(G, r.midpoints())
        z = self.zs.run(self.problem.z0, self.zs.forcing(vn, vm))
        return VectorPath(self.P.grid, z, _mv(self.zM, z) + vn)

    def phi(self, z: VectorPath) -> VectorPath:
        pr = self.problem
        K = pr.QbarS
        vn = _mv(K, z.values) + pr.affine_c
        vm = _mv(K, z.midpoints()) + pr.affine_c
        rT = -pr.QbarTST @ z.values[-1] - pr.affine_cT
        r = self.rs.run(rT, self.rs.forcing(vn, vm))
        return VectorPath(self.P.grid, r, _mv(self.rM, r) + vn)


def propagate_z(problem, P: OperatorPath, r: VectorPath) -> VectorPath:
    """Forward RK4 solve of the z-equation for a given r."""
    check_same_grid(P.grid, r.grid)
    return _System(problem, P).psi(r)


def propagate_r(problem, P: OperatorPath, z: VectorPath) -> VectorPath:
    """Backward RK4 solve of the r-equation for a given z."""
    check_same_grid(P.grid, z.grid)
    return _System(problem, P).phi(z)


def mild_tol(problem, grid, scale: float) -> float:
    return 1e-6 * (1.0 + scale) * max(1.0, (grid.h / 1e-3) ** 2)


def mild_residual_z(problem, P, z: VectorPath, r: VectorPath) -> float:
    """Max node defect of z against its variation-of-constants form.

    Cells use the trapezoid rule with the Euler-Maclaurin end correction;
    integrand derivatives come from the node derivatives of P, z and r.
    """
    G, A, sp, h = problem.G, problem.A, problem.space, P.grid.h
    E = mat_exp(A, h)
    GP = G[None] @ P.values
    g = -_mv(GP, z.values) - _mv(G, r.values)
    dg = -_mv(G[None] @ P.derivs, z.values) - _mv(GP, z.derivs) - _mv(G, r.derivs)
    D = dg - _mv(A, g)
    c1, c2 = 0.5 * h, h * h / 12.0
    V = z.values[0].copy()
    worst = float(sp.norm(V - problem.z0))
    for i in range(P.grid.n_steps):
        V = E @ (V + c1 * g[i] + c2 * D[i]) + c1 * g[i + 1] - c2 * D[i + 1]
        worst = max(worst, float(sp.norm(z.values[i + 1] - V)))
    return worst


def mild_residual_r(problem, P, z: VectorPath, r: VectorPath) -> float:
    """Max node defect of r against its backward variation-of-constants form.

    Same quadrature as :func:`mild_residual_z`.
    """
    G, As, sp, h = problem.G, problem.A_adj, problem.space, P.grid.h
    Es = mat_exp(As, h)
    PG = P.values @ G[None]
    K = problem.QbarS
    g = _mv(PG, r.values) + _mv(K, z.values) + problem.affine_c
    dg = _mv(P.derivs @ G[None], r.values) + _mv(PG, r.derivs) + _mv(K, z.derivs)
    D = dg + _mv(As, g)
    c1, c2 = 0.5 * h, h * h / 12.0
    V = -problem.QbarTST @ z.values[-1] - problem.affine_cT
    worst = float(sp.norm(r.values[-1] - V))
    for i in range(P.grid.n_steps - 1, -1, -1):
        V = Es @ (V - c1 * g[i + 1] + c2 * D[i + 1]) - c1 * g[i] - c2 * D[i]
        worst = max(worst, float(sp.norm(r.values[i] - V)))
    return worst


def _sup(space, diff):
    return float(np.max(space.norm(diff)))


def solve_picard(problem, P: OperatorPath, tol: float = PICARD_TOL, max_iter: int = 200,
                 r0=None, relax: float = 1.0, gb: GrowthBound | None = None):
    """Fixed point of r -> Phi(Psi(r)) starting from ``r0`` (zero by default).

    Returns
    -------
    (LQMSolution, list of float)
        The solution and the per-sweep contraction ratios
        ``|r_{k+1} - r_k| / |r_k - r_{k-1}|`` (recorded while the
        differences are above round-off).

    Raises
    ------
    NoCertificateError
        No convergence within ``max_iter`` and the contraction constant is
        not below one.
    """
    from .linops import growth_bound

    problem.validate()
    sp = problem.space
    gb = gb or growth_bound(problem.A, problem.T, space=sp)
    rep = contraction_constant(problem, gb)
    if not rep.is_contraction:
        warnings.warn(f"contraction constant C_T = {rep.C_T:.3g} >= 1; convergence not certified",
                      RuntimeWarning, stacklevel=2)
    sys_ = _System(problem, P)
    grid = P.grid
    if r0 is None:
        r = VectorPath(grid, np.zeros((len(grid), problem.dim)), np.zeros((len(grid), problem.dim)))
    else:
        r = r0 if isinstance(r0, VectorPath) else VectorPath(grid, r0)
    diffs, ratios = [], []
    converged = False
    z = None
    for _ in range(max_iter):
        z = sys_.psi(r)
        new = sys_.phi(z)
        if relax != 1.0:
            new = VectorPath(grid, relax * new.values + (1 - relax) * r.values,
                             relax * new.derivs + (1 - relax) * r.derivs)
        d = _sup(sp, new.values - r.values)
        scale = max(1.0, _sup(sp, new.values))
        if diffs and diffs[-1] > RATIO_FLOOR * scale and d > RATIO_FLOOR * scale:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        r = new
        if not np.all(np.isfinite(r.values)):
            break
        if d <= tol * scale:
            converged = True
            break
    if not converged and not rep.is_contraction:
        raise NoCertificateError(
            f"no-certificate: Picard iteration did not converge in {len(diffs)} sweeps "
            f"(last difference {diffs[-1]:.3e}, C_T = {rep.C_T:.3g})",
            last_iterate=r, diffs=diffs,
        )
    z = sys_.psi(r)
    s = None if problem.is_affine else compute_s(problem, P, z, r)
    diag = dict(
        iterations=len(diffs), diffs=diffs, ratios=ratios, converged=converged,
        C_T=rep.C_T, contraction=rep,
        residual_z=mild_residual_z(problem, P, z, r),
        residual_r=mild_residual_r(problem, P, z, r),
    )
    return LQMSolution(P, z, r, s, "picard", diag), ratios


def solve_decoupled(problem, P: OperatorPath, eta=None) -> LQMSolution:
    """Solve through r = eta z + kappa.

    ``eta`` comes from the certified eta solver unless supplied. With affine
    data, kappa solves the backward linear equation
    kappa' + (A* - P G - eta G) kappa - c = 0, kappa(T) = -c_T.
    """
    from .stepping import LinearRK4

    problem.validate()
    cert = None
    if eta is None:
        eta, cert = solve_eta(problem, P)
    check_same_grid(P.grid, eta.grid)
    grid, G, sp = P.grid, problem.G, problem.space
    dim = problem.dim
    eta_mid = eta.midpoints()
    if problem.is_affine:
        ks, kM = _backward_stepper(problem, P, eta.values, eta_mid)
        c = np.broadcast_to(problem.affine_c, (len(grid), dim))
        cm = np.broadcast_to(problem.affine_c, (grid.n_steps, dim))
        kap = ks.run(-problem.affine_cT, ks.forcing(c, cm))
        kappa = VectorPath(grid, kap, _mv(kM, kap) + c)
    else:
        kappa = VectorPath(grid, np.zeros((len(grid), dim)), np.zeros((len(grid), dim)))
    zs, zM = _forward_stepper(problem, P, eta.values, eta_mid)
    vn = -_mv(G, kappa.values)
    vm = -_mv(G, kappa.midpoints())
    zv = zs.run(problem.z0, zs.forcing(vn, vm))
    z = VectorPath(grid, zv, _mv(zM, zv) + vn)
    rv = _mv(eta.values, zv) + kappa.values
    rd = _mv(eta.derivs, zv) + _mv(eta.values, z.derivs) + kappa.derivs
    r = VectorPath(grid, rv, rd)
    res_r = mild_residual_r(problem, P, z, r)
    tol_r = mild_tol(problem, grid, _sup(sp, zv))
    if res_r > tol_r:
        raise CertificateError(f"mild residual of r is {res_r:.3e} > {tol_r:.3e}")
    s = None if problem.is_affine else compute_s(problem, P, z, r)
    diag = dict(eta=eta, eta_certificate=cert, kappa=kappa, residual_r=res_r,
                residual_z=mild_residual_z(problem, P, z, r))
    return LQMSolution(P, z, r, s, "decoupled", diag)


def compute_s(problem, P: OperatorPath, z: VectorPath, r: VectorPath) -> np.ndarray:
    """Scalar offset of the value function, by composite trapezoid on the grid."""
    if problem.is_affine:
        raise UnsupportedCaseError("s is not available for problems with affine terms")
    check_same_grid(P.grid, z.grid, r.grid)
    sp, G, h = problem.space, problem.G, P.grid.h
    zT = z.values[-1]
    terminal = 0.5 * sp.inner(problem.QbarTST @ zT, problem.ST @ zT)
    tr = np.trace(problem.noise_cov[None] @ P.values, axis1=1, axis2=2)
    Gr = _mv(G, r.values)
    Sz = _mv(problem.S, z.values)
    integrand = 0.5 * tr - 0.5 * sp.inner(Gr, r.values) + 0.5 * sp.inner(_mv(problem.Qbar, Sz), Sz)
    cells = 0.5 * h * (integrand[:-1] + integrand[1:])
    tail = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])
    return terminal + tail


def value_function(P: OperatorPath, r: VectorPath, s, t: float, x, space=None) -> float:
    """v(t, x) = 1/2 <P x, x> + <r, x> + s at the nearest grid node."""
    space = space or P.space
    i = P.grid.nearest(t)
    x = np.asarray(x, dtype=float)
    return float(0.5 * space.inner(P.values[i] @ x, x) + space.inner(r.values[i], x) + s[i])


def feedback_control(problem, P: OperatorPath, r: VectorPath, t: float, x):
    """alpha = -R^{-1} B* (P x + r) at the nearest grid node."""
    i = P.grid.nearest(t)
    x = np.asarray(x, dtype=float)
    return -problem.R_inv @ problem.B_adj @ (P.values[i] @ x + r.values[i])
