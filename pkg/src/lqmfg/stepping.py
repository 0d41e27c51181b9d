"""Classical RK4 for linear systems y' = M(t) y + v(t).

For a linear right-hand side one RK4 step is an affine map
``y -> Phi_i y + psi_i``. The matrices ``Phi_i`` are assembled in one
batched pass, so sweeping many forcings (Picard iterations, Monte Carlo
ensembles) costs only matrix-vector products.
"""

from __future__ import annotations

import numpy as np


def _bmv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


class LinearRK4:
    """One-step maps of RK4 on a uniform grid.

    Parameters
    ----------
    M_nodes : (n+1, d, d) array
        Coefficient at the grid nodes.
    M_mid : (n, d, d) array
        Coefficient at the cell midpoints.
    h : float
        Step; negative values integrate backward from the last node.
    """

    def __init__(self, M_nodes, M_mid, h: float):
        M_nodes = np.asarray(M_nodes, dtype=float)
        M_mid = np.asarray(M_mid, dtype=float)
        self.backward = h < 0
        if self.backward:
            # reversed time: u(s) = y(T - s) solves u' = -M u - v
            M_nodes = -M_nodes[::-1]
            M_mid = -M_mid[::-1]
            h = -h
        self.h = h
        self.M0 = M_nodes[:-1]
        self.M1 = M_nodes[1:]
        self.Mh = M_mid
        self.n = M_mid.shape[0]
        d = M_nodes.shape[1]
        eye = np.eye(d)
        K1 = self.M0
        K2 = self.Mh @ (eye + 0.5 * h * K1)
        K3 = self.Mh @ (eye + 0.5 * h * K2)
        K4 = self.M1 @ (eye + h * K3)
        self.Phi = eye + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)

    def forcing(self, v_nodes, v_mid):
        """Affine parts ``psi_i`` of the step maps for the forcing ``v``."""
        v_nodes = np.asarray(v_nodes, dtype=float)
        v_mid = np.asarray(v_mid, dtype=float)
        if self.backward:
            v_nodes = -v_nodes[::-1]
            v_mid = -v_mid[::-1]
        h = self.h
        k1 = v_nodes[:-1]
        k2 = _bmv(self.Mh, 0.5 * h * k1) + v_mid
        k3 = _bmv(self.Mh, 0.5 * h * k2) + v_mid
        k4 = _bmv(self.M1, h * k3) + v_nodes[1:]
        return (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def run(self, y_start, psi=None):
        """Node values starting from ``y_start`` (at t0, or at T if backward).

        ``y_start`` may carry leading batch axes: shape (..., d).
        """
        y = np.array(y_start, dtype=float)
        out = np.empty((self.n + 1,) + y.shape)
        out[0] = y
        PhiT = self.Phi.swapaxes(-1, -2)
        for i in range(self.n):
            y = y @ PhiT[i]
            if psi is not None:
                y = y + psi[i]
            out[i + 1] = y
        if self.backward:
            out = out[::-1].copy()
        return out
