"""
Graph operator built from a QOT plan and its Laplace-Beltrami limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Sphere, Torus, align_frame, cost_matrix, equispaced_circle
from .scaling_theory import circle_threshold

__all__ = [
    "ZeroRow",
    "WeightMatrix",
    "OperatorEstimate",
    "weights_from_coupling",
    "plugin_weights",
    "apply_operator",
    "rescaled_estimate",
    "operator_limit",
    "circle_weights",
    "circle_operator_profile",
]


class ZeroRow(ValueError):
    def __init__(self, row):
        super().__init__(f"coupling row {row} sums to zero")
        self.row = row


@dataclass(frozen=True)
class WeightMatrix:
    """Row-stochastic weights; ``W`` is dense or scipy sparse."""

    W: object
    coupling: object = None

    def row(self, i):
        if sp.issparse(self.W):
            return np.asarray(self.W.getrow(i).toarray()).ravel()
        return np.asarray(self.W[i])

    @property
    def dense(self):
        return self.W.toarray() if sp.issparse(self.W) else np.asarray(self.W)


@dataclass(frozen=True)
class OperatorEstimate:
    raw: float
    rescaled: float
    K: float
    base_index: int


def weights_from_coupling(coupling):
    """Row-normalise a plan: :math:`W_{ij} = \\pi_{ij} / \\sum_j \\pi_{ij}`.

    Raises
    ------
    ZeroRow
        If some row of the plan is identically zero.
    """
    P = coupling.plan if hasattr(coupling, "plan") else coupling
    rows = np.asarray(P.sum(axis=1)).ravel()
    bad = np.flatnonzero(rows <= 0)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    if sp.issparse(P):
        W = sp.diags(1.0 / rows) @ P
        return WeightMatrix(sp.csr_matrix(W), coupling)
    return WeightMatrix(np.asarray(P) / rows[:, None], coupling)


def plugin_weights(points, K, eps, base_index=0):
    """Unnormalised weights ``n (K - ||x_0 - x_j||^2)_+ / eps`` of one row.

    This is the approximate-potential weight row used in the limit theorem,
    ``n`` being the number of points including the base point.
    """
    X = np.asarray(points, dtype=float)
    D = ((X - X[base_index]) ** 2).sum(axis=1)
    return X.shape[0] * np.clip(K - D, 0.0, None) / eps


def _row(W, base_index):
    if isinstance(W, WeightMatrix):
        return W.row(base_index)
    W = np.asarray(W)
    return W if W.ndim == 1 else W[base_index]


def apply_operator(W, g, points, base_index=0):
    """:math:`\\Delta^{OT} g(X_0) = \\sum_j W_{0j}(g(X_0) - g(X_j))`.

    ``W`` may be a :class:`WeightMatrix`, a full matrix or just the weight
    row of the base point; ``g`` is any callable on ``(n, p)`` arrays.
    """
    w = _row(W, base_index)
    X = np.asarray(points, dtype=float)
    gv = np.asarray(g(X), dtype=float)
    return float(w @ (gv[base_index] - gv))


def rescaled_estimate(W, g, points, base_index, K):
    """Raw operator value and its rescaling ``-2 raw / K``."""
    if not K > 0:
        raise ValueError("K must be positive")
    raw = apply_operator(W, g, points, base_index)
    return OperatorEstimate(raw, -2.0 * raw / K, float(K), base_index)


def operator_limit(manifold, x0, g):
    """Limit :math:`d\\,L_0 \\cdot \\mathfrak{N}(x_0)/2 + \\tfrac12 \\mathrm{tr}_T Q_0` in the aligned frame.

    ``L_0`` and ``Q_0`` are the gradient and Hessian of ``g`` at ``x0``;
    only the normal part of the gradient survives the pairing with the
    mean second fundamental form.
    """
    if not isinstance(manifold, (Sphere, Torus)):
        raise TypeError(f"unsupported manifold kind: {type(manifold).__name__}")
    A = align_frame(manifold, x0)
    d = A.tangent_dim
    L = A.apply_vector(g.gradient(np.asarray(x0, dtype=float)))
    Q = A.apply_matrix(g.hessian(np.asarray(x0, dtype=float)))
    nrm = A.apply_vector(manifold.mean_second_fundamental(x0))
    grad_term = d * float(L[d:] @ nrm[d:]) / 2.0
    return grad_term + 0.5 * float(np.trace(Q[:d, :d]))


def circle_weights(N, eps):
    """Weight row of the point ``(0, 1)`` among N equispaced circle points.

    Uses the exact constant potential, i.e. the threshold ``y`` solving
    :math:`\\sum_j (y - D_j)_+ = \\varepsilon/N`.

    Returns
    -------
    points : ndarray, shape (N, 2)
        Circle points rotated so that index 0 sits at ``(0, 1)``.
    w : ndarray, shape (N,)
    """
    thr = circle_threshold(N, eps)
    if thr.n_active < 2:
        raise ValueError("eps too small: no neighbour is active")
    base = equispaced_circle(N).points
    # rotate by +pi/2 so that the first point becomes (0, 1)
    pts = np.column_stack([-base[:, 1], base[:, 0]])
    D = cost_matrix(pts, 1.0)[0]
    w = np.clip(thr.y_exact - D, 0.0, None)
    return pts, w / w.sum()


def circle_operator_profile(N, eps, g):
    """:math:`\\varepsilon^{-2/3} N^{4/3}\\,\\Delta^{OT} g` at ``(0, 1)`` on the equispaced circle.

    ``g`` takes an ``(n, 2)`` array of ``(z, y)`` coordinates.
    """
    pts, w = circle_weights(N, eps)
    return eps ** (-2.0 / 3.0) * N ** (4.0 / 3.0) * apply_operator(w, g, pts, 0)
