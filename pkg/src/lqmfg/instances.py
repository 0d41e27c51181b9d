"""Random problem instances on weighted spaces."""

from __future__ import annotations

import numpy as np

from .linops import HilbertSpace
from .problem import MFGProblem


def _scaled(space, L, target):
    n = space.op_norm(L)
    return L if n == 0 else L * (target / n)


def random_psd(rng, space, scale=1.0, rank=None):
    """W-self-adjoint PSD operator with norm ``scale``."""
    d = space.dim
    k = d if rank is None else rank
    X = rng.standard_normal((d, k))
    return _scaled(space, (X @ X.T) / space.weight[:, None], scale)


def random_problem(rng, dim=None, T=1.0, dissipative=True, contractive=True,
                   a_norm=None, weighted=True, scale=1.0) -> MFGProblem:
    """Random instance satisfying the standing assumptions.

    Parameters
    ----------
    dissipative : bool
        Build ``S = -Qbar^{-1} K`` with ``K`` PSD so that ``-Qbar S = K``;
        otherwise ``S`` is a random operator.
    contractive : bool
        Make ``A`` W-dissipative (``A + A* <= 0``) so ``||e^{tA}|| <= 1``.
    a_norm : float, optional
        Norm of ``A``; drawn from [0.2, 1] when omitted.
    """
    dim = int(dim or rng.integers(1, 6))
    w = rng.uniform(0.5, 2.0, dim) if weighted else np.ones(dim)
    sp = HilbertSpace(w)
    a_norm = rng.uniform(0.2, 1.0) if a_norm is None else a_norm
    X = rng.standard_normal((dim, dim))
    if contractive:
        Dm = rng.standard_normal((dim, dim))
        A = ((X - X.T) - Dm @ Dm.T / dim) / w[:, None]
    else:
        A = X
    A = _scaled(sp, A, a_norm)
    m = int(rng.integers(1, dim + 1))
    B = rng.standard_normal((dim, m))
    B = B * (0.7 * scale / sp.input_norm(B))
    Y = rng.standard_normal((m, m))
    R = Y @ Y.T / m + np.eye(m)
    Q = random_psd(rng, sp, rng.uniform(0.1, 1.0) * scale)
    QT = random_psd(rng, sp, rng.uniform(0.1, 1.0) * scale)
    Qbar = random_psd(rng, sp, rng.uniform(0.3, 1.0) * scale) + 0.2 * scale * np.eye(dim)
    QbarT = random_psd(rng, sp, rng.uniform(0.3, 1.0) * scale) + 0.2 * scale * np.eye(dim)
    if dissipative:
        K = random_psd(rng, sp, rng.uniform(0.1, 0.6) * scale)
        KT = random_psd(rng, sp, rng.uniform(0.1, 0.6) * scale)
        S = -np.linalg.solve(Qbar, K)
        ST = -np.linalg.solve(QbarT, KT)
    else:
        S = rng.standard_normal((dim, dim)) * 0.5 * scale
        ST = rng.standard_normal((dim, dim)) * 0.5 * scale
    k = int(rng.integers(1, dim + 1))
    sigma = rng.standard_normal((dim, k)) * 0.3
    z0 = rng.standard_normal(dim)
    return MFGProblem(A, B, Q, Qbar, QT, QbarT, R, S, ST, sigma, T, z0, space=sp)
