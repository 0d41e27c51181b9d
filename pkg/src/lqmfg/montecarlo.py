"""Monte Carlo simulation of the representative agent under optimal feedback.

Each path owns the random stream ``SeedSequence(seed, spawn_key=(i,))`` so
its noise depends only on ``(seed, i)``. Paths are simulated in blocks of
fixed size; block sums are combined by a pairwise tree in block order, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SimulationBlowupError
from .paths import TimeGrid, VectorPath
from .stepping import LinearRK4

BLOCK = 1024


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo settings.

    ``n_steps`` must be a multiple of the solution grid's step count (None
    uses the solution grid). ``scheme`` is ``"rk4"`` (RK4 drift with
    additive Gaussian increments) or ``"euler"`` (Euler-Maruyama).
    """

    n_paths: int
    seed: int = 0
    n_steps: int | None = None
    scheme: str = "rk4"
    workers: int = 1
    init_cov: np.ndarray | None = None
    allowance: float = 10.0

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 2:
            raise ValueError("n_paths must be an integer >= 2")
        if self.scheme not in ("rk4", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class MCResult:
    mean_path: VectorPath
    stderr_path: np.ndarray
    deviation: np.ndarray
    max_deviation: float
    contract_ok: bool
    cost_estimate: float
    cost_stderr: float
    n_paths: int


def pairwise_sum(x):
    """Sum along axis 0 by a fixed binary tree."""
    x = np.asarray(x, dtype=float)
    while x.shape[0] > 1:
        n = x.shape[0]
        half = n // 2
        top = x[: 2 * half : 2] + x[1 : 2 * half : 2]
        x = np.concatenate([top, x[2 * half :]]) if n % 2 else top
    return x[0]


def _fine_grid(sol, cfg):
    grid = sol.grid
    if cfg.n_steps is None:
        return grid, 1
    if cfg.n_steps % grid.n_steps:
        raise ValueError(
            f"n_steps = {cfg.n_steps} is not a multiple of the solution grid ({grid.n_steps})"
        )
    k = cfg.n_steps // grid.n_steps
    return grid.refine(k), k


class _Simulator:
    def __init__(self, problem, sol, cfg):
        self.problem, self.sol, self.cfg = problem, sol, cfg
        fine, k = _fine_grid(sol, cfg)
        self.fine, self.k = fine, k
        P, r = sol.P, sol.r
        t = fine.nodes
        tm = 0.5 * (t[:-1] + t[1:])
        Pn, Pm = (P.values, P.midpoints()) if k == 1 else (P.sample(t), P.sample(tm))
        rn, rm = (r.values, r.midpoints()) if k == 1 else (r.sample(t), r.sample(tm))
        G = problem.G
        self.Pn, self.rn = Pn, rn
        self.Mn = problem.A[None] - G[None] @ Pn
        self.vn = -rn @ G.T
        if cfg.scheme == "rk4":
            Mm = problem.A[None] - G[None] @ Pm
            st = LinearRK4(self.Mn, Mm, fine.h)
            self.Phi = st.Phi
            self.psi = st.forcing(self.vn, -rm @ G.T)
        else:
            self.Phi = np.eye(problem.dim)[None] + fine.h * self.Mn[:-1]
            self.psi = fine.h * self.vn[:-1]
        self.K = -problem.R_inv @ problem.B_adj
        z = sol.z.values if k == 1 else sol.z.sample(t)
        self.z = z
        self.Sz = z @ problem.S.T
        self.STz = problem.ST @ z[-1]
        self.chol = None
        if cfg.init_cov is not None:
            self.chol = np.linalg.cholesky(np.asarray(cfg.init_cov, dtype=float))

    def _noise(self, start, stop):
        cfg, pr = self.cfg, self.problem
        n, kn, h = self.fine.n_steps, pr.sigma.shape[1], self.fine.h
        x0 = np.broadcast_to(pr.z0, (stop - start, pr.dim)).copy()
        dW = np.empty((stop - start, n, kn))
        for j, i in enumerate(range(start, stop)):
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i,)))
            if self.chol is not None:
                x0[j] += self.chol @ rng.standard_normal(pr.dim)
            dW[j] = rng.standard_normal((n, kn)) * math.sqrt(h)
        return x0, dW

    def _running_cost(self, X, i):
        pr, sp = self.problem, self.problem.space
        a = (X @ self.Pn[i].T + self.rn[i]) @ self.K.T
        u = X - self.Sz[i]
        f = 0.5 * (np.einsum("pi,ij,pj->p", a, pr.R, a)
                   + sp.inner(X @ pr.Q.T, X) + sp.inner(u @ pr.Qbar.T, u))
        return f - sp.inner(X, pr.affine_c)

    def block(self, start, stop):
        pr, sp = self.problem, self.problem.space
        n, h = self.fine.n_steps, self.fine.h
        X, dW = self._noise(start, stop)
        noise = dW @ pr.sigma.T
        PhiT = self.Phi.swapaxes(-1, -2)
        kk = self.k
        n_coarse = n // kk
        dsum = np.empty((n_coarse + 1, pr.dim))
        dsq = np.empty(n_coarse + 1)
        cost = 0.5 * h * self._running_cost(X, 0)

        def record(idx, X):
            D = X - self.z[idx]
            dsum[idx // kk] = pairwise_sum(D)
            dsq[idx // kk] = pairwise_sum(sp.inner(D, D))

        record(0, X)
        for i in range(n):
            X = X @ PhiT[i] + self.psi[i] + noise[:, i]
            if not np.all(np.isfinite(X)):
                bad = int(np.nonzero(~np.all(np.isfinite(X), axis=1))[0][0])
                raise SimulationBlowupError(start + bad, float(self.fine.nodes[i + 1]))
            w = 0.5 * h if i == n - 1 else h
            cost = cost + w * self._running_cost(X, i + 1)
            if (i + 1) % kk == 0:
                record(i + 1, X)
        u = X - self.STz
        cost = cost + 0.5 * (sp.inner(X @ pr.QT.T, X) + sp.inner(u @ pr.QbarT.T, u))
        cost = cost - sp.inner(X, pr.affine_cT)
        return dsum, dsq, pairwise_sum(cost), pairwise_sum(cost * cost)


def _simulate(problem, sol, cfg):
    sim = _Simulator(problem, sol, cfg)
    N = int(cfg.n_paths)
    bounds = [(s, min(s + BLOCK, N)) for s in range(0, N, BLOCK)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(lambda b: sim.block(*b), bounds))
    else:
        parts = [sim.block(*b) for b in bounds]
    dsum = pairwise_sum(np.stack([p[0] for p in parts]))
    dsq = pairwise_sum(np.stack([p[1] for p in parts]))
    csum = pairwise_sum(np.array([p[2] for p in parts]))
    csq = pairwise_sum(np.array([p[3] for p in parts]))
    return sim, N, dsum, dsq, csum, csq


def monte_carlo_consistency(problem, sol, cfg: MCConfig) -> MCResult:
    """Ensemble mean of the controlled state against the population mean z.

    The contract holds when ``||mean(t) - z(t)|| <= 3 stderr(t) +
    cfg.allowance * step`` at every node of the solution grid; ``stderr`` is
    the standard error of the mean in the weighted norm.
    """
    sim, N, dsum, dsq, csum, csq = _simulate(problem, sol, cfg)
    sp = problem.space
    grid = sol.grid
    mean_dev = dsum / N
    var = np.maximum(dsq - N * sp.inner(mean_dev, mean_dev), 0.0) / (N - 1)
    stderr = np.sqrt(var / N)
    mean = sol.z.values + mean_dev
    dev = sp.norm(mean_dev)
    h = sim.fine.h
    ok = bool(np.all(dev <= 3 * stderr + cfg.allowance * h))
    cmean = csum / N
    cvar = max(csq - N * cmean * cmean, 0.0) / (N - 1)
    return MCResult(
        mean_path=VectorPath(grid, mean),
        stderr_path=stderr,
        deviation=dev,
        max_deviation=float(np.max(dev)),
        contract_ok=ok,
        cost_estimate=float(cmean),
        cost_stderr=float(math.sqrt(cvar / N)),
        n_paths=N,
    )


def evaluate_cost(problem, sol, cfg: MCConfig):
    """Monte Carlo estimate of the cost of the feedback policy from z0.

    The population mean is frozen at ``sol.z``. Constant terms that do not
    depend on the state or control are excluded.

    Returns
    -------
    (float, float)
        Estimate and its standard error.
    """
    res = monte_carlo_consistency(problem, sol, cfg)
    return res.cost_estimate, res.cost_stderr
