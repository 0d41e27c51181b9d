"""Uniform time grids and node-valued paths.

Paths store node values and, when the producer knows them, the time
derivatives at the nodes. Off-node values (RK4 stages, sub-grids) are
obtained by cubic Hermite interpolation, which keeps fourth-order steppers
fourth order when they consume a path computed on the same grid.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GridMismatchError, InvalidOperatorError


class TimeGrid:
    """Uniform partition of ``[start, start + T]`` into ``n_steps`` cells."""

    def __init__(self, T: float, n_steps: int, start: float = 0.0):
        if isinstance(n_steps, bool) or int(n_steps) != n_steps:
            raise ValueError("n_steps must be an integer")
        n_steps = int(n_steps)
        if n_steps < 2:
            raise ValueError("n_steps must be ≥ 2")
        if not (math.isfinite(T) and T > 0):
            raise ValueError("T must be a positive finite number")
        self.T = float(T)
        self.n_steps = n_steps
        self.start = float(start)
        self.h = self.T / n_steps
        nodes = self.start + self.h * np.arange(n_steps + 1)
        nodes[-1] = self.start + self.T
        nodes.setflags(write=False)
        self.nodes = nodes

    @classmethod
    def default(cls, T: float) -> "TimeGrid":
        return cls(T, max(200, math.ceil(200 * T)))

    @property
    def end(self) -> float:
        return self.start + self.T

    def __len__(self):
        return self.n_steps + 1

    def __eq__(self, other):
        return (
            isinstance(other, TimeGrid)
            and self.n_steps == other.n_steps
            and self.T == other.T
            and self.start == other.start
        )

    def __hash__(self):
        return hash((self.T, self.n_steps, self.start))

    def __repr__(self):
        return f"TimeGrid(T={self.T}, n_steps={self.n_steps}, start={self.start})"

    def nearest(self, t: float) -> int:
        """Index of the node closest to ``t`` (clipped to the grid)."""
        k = int(round((float(t) - self.start) / self.h))
        return min(max(k, 0), self.n_steps)

    def refine(self, k: int) -> "TimeGrid":
        return TimeGrid(self.T, self.n_steps * k, self.start)


def check_same_grid(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"grid mismatch: {first!r} vs {g!r}")
    return first


def _hermite(y0, y1, d0, d1, h, s):
    s = np.asarray(s, dtype=float)
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    shape = (-1,) + (1,) * (np.ndim(y0) - 1)
    return (
        h00.reshape(shape) * y0
        + (h10 * h).reshape(shape) * d0
        + h01.reshape(shape) * y1
        + (h11 * h).reshape(shape) * d1
    )


class _Path:
    def __init__(self, grid: TimeGrid, values, derivs=None):
        values = np.array(values, dtype=float)
        if values.shape[0] != len(grid):
            raise GridMismatchError(
                f"{values.shape[0]} node values for a grid with {len(grid)} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidOperatorError("path values must be finite")
        if derivs is not None:
            derivs = np.array(derivs, dtype=float)
            if derivs.shape != values.shape:
                raise GridMismatchError("derivative array does not match values")
        else:
            derivs = np.gradient(values, grid.h, axis=0, edge_order=2)
        values.setflags(write=False)
        derivs.setflags(write=False)
        self.grid = grid
        self.values = values
        self.derivs = derivs

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def at_node(self, t: float):
        return self.values[self.grid.nearest(t)]

    def midpoints(self):
        """Values at the cell midpoints, one per cell."""
        v, d, h = self.values, self.derivs, self.grid.h
        return 0.5 * (v[:-1] + v[1:]) + (h / 8.0) * (d[:-1] - d[1:])

    def sample(self, times):
        """Hermite-interpolated values at arbitrary times inside the grid."""
        g = self.grid
        times = np.atleast_1d(np.asarray(times, dtype=float))
        u = (times - g.start) / g.h
        idx = np.clip(np.floor(u).astype(int), 0, g.n_steps - 1)
        s = u - idx
        return _hermite(
            self.values[idx], self.values[idx + 1], self.derivs[idx], self.derivs[idx + 1], g.h, s
        )

    def sup_norm(self, norm):
        return float(max(norm(v) for v in self.values))


class OperatorPath(_Path):
    """Operator-valued function on a grid; ``values`` has shape (n+1, dim, dim)."""

    def __init__(self, grid, values, derivs=None, symmetric=False, space=None):
        super().__init__(grid, values, derivs)
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise InvalidOperatorError("operator path values must have shape (n+1, dim, dim)")
        self.symmetric = bool(symmetric)
        self.space = space

    @property
    def dim(self):
        return self.values.shape[1]

    def norms(self, space=None):
        space = space or self.space
        if space is None:
            return np.linalg.norm(self.values, 2, axis=(1, 2))
        return np.linalg.norm(space.similar(self.values), 2, axis=(1, 2))


class VectorPath(_Path):
    """Vector-valued function on a grid; ``values`` has shape (n+1, dim)."""

    def __init__(self, grid, values, derivs=None):
        super().__init__(grid, values, derivs)
        if self.values.ndim != 2:
            raise InvalidOperatorError("vector path values must have shape (n+1, dim)")

    @property
    def dim(self):
        return self.values.shape[1]
