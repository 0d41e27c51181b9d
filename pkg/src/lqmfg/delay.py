"""Production planning with time-to-build, lifted to R x L^2(-d, 0).

The segment component is discretized by cell averages on ``n_seg`` uniform
cells; the Gram weights are ``(1, dxi, ..., dxi)``. The generator is
first-order upwind transport towards xi = 0 with zero inflow at xi = -d,
and the value in the last cell feeds the production level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .fbs import solve_decoupled
from .linops import HilbertSpace
from .paths import TimeGrid
from .problem import MFGProblem
from .riccati import default_grid, solve_riccati_p


def parse_kernel(spec) -> Callable:
    """Turn a kernel description into a vectorized function on [-d, 0].

    Accepted forms: a callable, a number, ``"constant:v"``,
    ``"exp:amp,rate"`` (``amp * exp(rate * xi)``), or
    ``"table:v1,v2,..."`` (samples at uniform points from -d to 0, linearly
    interpolated; a single value is constant).
    """
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        v = float(spec)
        return lambda xi: np.full_like(np.asarray(xi, dtype=float), v)
    if not isinstance(spec, str) or ":" not in spec:
        raise ValueError(f"cannot parse kernel {spec!r}")
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        vals = [float(v) for v in arg.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad kernel arguments in {spec!r}") from exc
    if kind == "constant" and len(vals) == 1:
        return parse_kernel(vals[0])
    if kind in ("exp", "exponential") and len(vals) == 2:
        amp, rate = vals
        return lambda xi: amp * np.exp(rate * np.asarray(xi, dtype=float))
    if kind == "table" and vals:
        table = np.array(vals)

        def f(xi, _t=table):
            xi = np.asarray(xi, dtype=float)
            if _t.size == 1:
                return np.full_like(xi, _t[0])
            return np.interp(xi, np.linspace(f.lo, 0.0, _t.size), _t)

        f.lo = -1.0
        f.table = True
        return f
    raise ValueError(f"cannot parse kernel {spec!r}")


@dataclass(frozen=True)
class DelayParams:
    """Primitives of the production planning model."""

    d: float
    b_kernel: object = 1.0
    sigma: float = 0.0
    r_cost: float = 1.0
    beta: float = 0.5
    eta_price: float = 1.0
    gamma: float = 0.5
    T: float = 0.5
    k0: float = 1.0
    delta_past: object = 0.0
    n_seg: int = 32

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d > 0):
            raise ValueError("d must be > 0")
        if int(self.n_seg) != self.n_seg or self.n_seg < 1:
            raise ValueError("n_seg must be an integer >= 1")
        if not self.r_cost > 0:
            raise ValueError("r_cost must be > 0")
        for name in ("sigma", "beta", "eta_price", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be >= 0")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError("T must be > 0")

    def kernel(self, which: str) -> Callable:
        f = parse_kernel(getattr(self, which))
        if getattr(f, "table", False):
            f.lo = -self.d
        return f


def cell_centers(params: DelayParams):
    dx = params.d / params.n_seg
    return -params.d + dx * (np.arange(params.n_seg) + 0.5), dx


def _b_values(params):
    xi, _ = cell_centers(params)
    b = np.asarray(params.kernel("b_kernel")(xi), dtype=float)
    if not np.all(np.isfinite(b)) or np.any(b < 0):
        raise ValueError("b_kernel must be finite and nonnegative")
    return b


def delay_operators(params: DelayParams):
    """(space, A, B) of the lifted dynamics."""
    n = params.n_seg
    _, dx = cell_centers(params)
    space = HilbertSpace(np.concatenate([[1.0], np.full(n, dx)]))
    A = np.zeros((n + 1, n + 1))
    A[0, n] = 1.0
    for j in range(1, n + 1):
        A[j, j] = -1.0 / dx
        if j > 1:
            A[j, j - 1] = 1.0 / dx
    B = np.concatenate([[1.0], _b_values(params)]).reshape(-1, 1)
    return space, A, B


def lift_initial(params: DelayParams):
    """State ``(k0, x1)`` with x1 the cell averages of
    ``x1(xi) = int_{-d}^{xi} b(theta) delta(theta - xi) dtheta``.
    """
    n, d = params.n_seg, params.d
    _, dx = cell_centers(params)
    b = params.kernel("b_kernel")
    dl = params.kernel("delta_past")
    go, gw = np.polynomial.legendre.leggauss(8)
    gi, giw = np.polynomial.legendre.leggauss(48)
    x1 = np.zeros(n)
    for j in range(n):
        a = -d + j * dx
        xi = a + 0.5 * dx * (go + 1)
        inner = np.empty_like(xi)
        for m, x in enumerate(xi):
            half = 0.5 * (x + d)
            th = -d + half * (gi + 1)
            inner[m] = half * np.sum(giw * b(th) * dl(th - x))
        x1[j] = 0.5 * np.sum(gw * inner)
    return np.concatenate([[params.k0], x1])


def build_delay_problem(params: DelayParams) -> MFGProblem:
    space, A, B = delay_operators(params)
    dim = params.n_seg + 1
    e0 = np.zeros(dim)
    e0[0] = 1.0
    proj = np.outer(e0, e0)
    zero = np.zeros((dim, dim))
    S = -params.beta * params.gamma * np.eye(dim)
    sigma = (params.sigma * e0).reshape(-1, 1)
    c = params.beta * params.eta_price * e0
    return MFGProblem(
        A, B, zero, proj, zero, proj, [[2.0 * params.r_cost]], S, S, sigma,
        params.T, lift_initial(params), affine_c=c, affine_cT=c, space=space,
    )


@dataclass
class RefinementStudy:
    segs: list
    gaps: list
    ratios: list
    monotone: bool


def segment_refinement_study(params: DelayParams, segs, n_steps: int | None = None) -> RefinementStudy:
    """First-component gaps of (z, r) between consecutive segment refinements."""
    segs = list(segs)
    if any(b < a for a, b in zip(segs, segs[1:])):
        raise ValueError("segs must be nondecreasing")
    if n_steps is None:
        finest = build_delay_problem(replace(params, n_seg=max(segs)))
        n_steps = default_grid(params.T, finest).n_steps
    first = []
    for n in segs:
        pr = build_delay_problem(replace(params, n_seg=n))
        grid = TimeGrid(params.T, n_steps)
        P = solve_riccati_p(pr, grid)
        sol = solve_decoupled(pr, P)
        first.append((sol.z.values[:, 0], sol.r.values[:, 0]))
    gaps = [
        float(np.max(np.abs(za - zb) + np.abs(ra - rb)))
        for (za, ra), (zb, rb) in zip(first, first[1:])
    ]
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(gaps, gaps[1:])]
    monotone = all(b <= a for a, b in zip(gaps, gaps[1:]))
    return RefinementStudy(segs, gaps, ratios, monotone)
