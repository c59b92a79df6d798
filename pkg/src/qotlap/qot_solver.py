"""
Symmetric quadratically regularised optimal transport.

The primal problem is

.. math::
    \\min_{\\pi \\in \\Pi(\\mu,\\mu)} \\langle C, \\pi \\rangle + \\frac{\\varepsilon}{2}\\|\\pi\\|_2^2,
    \\qquad \\mu = \\frac1N \\sum_i \\delta_{x_i},

and it is solved through the single-potential concave dual

.. math::
    \\max_u \\; \\frac1N \\sum_i u_i - \\frac{1}{4\\varepsilon}\\sum_{ij} (u_i + u_j - C_{ij})_+^2,

whose maximiser gives the plan :math:`\\pi_{ij} = (u_i + u_j - C_{ij})_+ / \\varepsilon`.
The dual value is half the primal optimum (the two-potential dual
restricted to ``f = g = u``, divided by two).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg

from .scaling_theory import ScalingConstants, K_eps_N

__all__ = [
    "QotProblem",
    "DualPotential",
    "Coupling",
    "SolveReport",
    "NonConvergence",
    "DegenerateActiveSet",
    "potential_hint",
    "dual_objective",
    "dual_gradient",
    "primal_objective",
    "recover_plan",
    "marginal_residual",
    "solve_semismooth_newton",
    "diagonal_update_step",
    "brute_force_solve",
    "initial_potential",
]

logger = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Raised when ``max_iter`` is reached; carries the partial result."""

    def __init__(self, message, potential=None, report=None):
        super().__init__(message)
        self.potential = potential
        self.report = report


class DegenerateActiveSet(RuntimeError):
    """A row of the plan stays empty after repair."""


@dataclass(frozen=True)
class QotProblem:
    """Symmetric QOT instance with uniform marginals ``1/N``.

    ``potential_hint`` is the first-order value of :math:`u_i + u_j`
    (see :func:`potential_hint`); when set it seeds the solver.
    """

    cost: np.ndarray
    epsilon: float
    potential_hint: Optional[float] = None

    def __post_init__(self):
        C = np.asarray(self.cost, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("cost must be a square matrix")
        if not np.all(np.isfinite(C)):
            raise ValueError("cost must be finite")
        if not np.array_equal(C, C.T):
            raise ValueError("cost must be symmetric")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        C = C.copy()
        C.setflags(write=False)
        object.__setattr__(self, "cost", C)

    @property
    def n(self):
        return self.cost.shape[0]

    @classmethod
    def from_cloud(cls, cloud, epsilon, gamma=1.0, n_sample=None):
        """Problem on a point cloud with the first-order potential as hint.

        ``n_sample`` is the sample size entering :math:`K_{\\varepsilon,N}`
        (defaults to the number of points).
        """
        from .geometry import cost_matrix

        C = cost_matrix(cloud, gamma)
        consts = ScalingConstants.from_manifold(cloud.manifold)
        N = cloud.n if n_sample is None else n_sample
        return cls(C, epsilon, potential_hint(consts, epsilon, N, gamma))


def potential_hint(constants, epsilon, N, gamma=1.0):
    """First-order :math:`u_i + u_j` for cost ``gamma * ||x - y||^2``.

    Rescaling the cost by ``gamma`` is the same as solving with
    ``epsilon / gamma`` and multiplying the potential by ``gamma``.
    """
    return gamma * K_eps_N(constants, epsilon / gamma, N)


@dataclass(frozen=True)
class DualPotential:
    u: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.u, dtype=dtype)


@dataclass(frozen=True)
class Coupling:
    """Plan stored densely or as a scipy sparse matrix."""

    plan: object

    @property
    def dense(self):
        return self.plan.toarray() if sp.issparse(self.plan) else np.asarray(self.plan)

    @property
    def support(self):
        i, j = np.nonzero(self.dense)
        return np.column_stack([i, j])

    def row_sums(self):
        return np.asarray(self.plan.sum(axis=1)).ravel()

    def col_sums(self):
        return np.asarray(self.plan.sum(axis=0)).ravel()

    def triplets(self):
        coo = sp.coo_matrix(self.plan)
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = np.inf
    converged: bool = False
    objective_trace: List[float] = field(default_factory=list)
    active_sizes: List[int] = field(default_factory=list)
    step_sizes: List[float] = field(default_factory=list)
    repairs: int = 0

    def as_text(self):
        lines = [
            f"iterations = {self.iterations}",
            f"residual = {self.residual:.17g}",
            f"converged = {str(self.converged).lower()}",
            f"repairs = {self.repairs}",
            "objective_trace = " + ",".join(f"{v:.17g}" for v in self.objective_trace),
            "active_sizes = " + ",".join(str(v) for v in self.active_sizes),
            "step_sizes = " + ",".join(f"{v:.6g}" for v in self.step_sizes),
        ]
        return "\n".join(lines) + "\n"


def _slack(problem, u):
    return u[:, None] + u[None, :] - problem.cost


def dual_objective(problem, u):
    """Dual value :math:`\\langle u, \\mu\\rangle - \\frac{1}{4\\varepsilon}\\|[u \\oplus u - C]_+\\|^2`."""
    u = np.asarray(u, dtype=float)
    P = np.clip(_slack(problem, u), 0.0, None)
    return float(u.sum() / problem.n - (P * P).sum() / (4.0 * problem.epsilon))


def dual_gradient(problem, u):
    """:math:`1/N - \\varepsilon^{-1}\\sum_j (u_i + u_j - C_{ij})_+`, i.e. the marginal defect."""
    u = np.asarray(u, dtype=float)
    P = np.clip(_slack(problem, u), 0.0, None)
    return 1.0 / problem.n - P.sum(axis=1) / problem.epsilon


def primal_objective(problem, coupling):
    """:math:`\\langle C, \\pi\\rangle + \\tfrac{\\varepsilon}{2}\\|\\pi\\|_2^2`."""
    pi = coupling.dense if isinstance(coupling, Coupling) else np.asarray(coupling)
    return float((problem.cost * pi).sum() + 0.5 * problem.epsilon * (pi * pi).sum())


def recover_plan(problem, u, sparse=None):
    """Plan :math:`(u_i + u_j - C_{ij})_+ / \\varepsilon`; ties count as inactive."""
    u = np.asarray(u, dtype=float)
    S = _slack(problem, u)
    P = np.where(S > 0.0, S, 0.0) / problem.epsilon
    if sparse is None:
        sparse = np.count_nonzero(P) < 0.25 * P.size
    return Coupling(sp.csr_matrix(P) if sparse else P)


def marginal_residual(problem, coupling):
    """:math:`\\max_j |\\sum_i \\pi_{ij} - 1/N|`."""
    return float(np.max(np.abs(coupling.col_sums() - 1.0 / problem.n)))


def initial_potential(problem):
    """Constant start: half the hint, else :math:`\\max_j C_{ij} / N`."""
    if problem.potential_hint is not None:
        return np.full(problem.n, 0.5 * problem.potential_hint)
    return problem.cost.max(axis=1) / problem.n


def _repair_empty_rows(problem, u, active):
    empty = ~active.any(axis=1)
    if not empty.any():
        return u, 0
    u = u.copy()
    C = problem.cost
    for i in np.flatnonzero(empty):
        others = C[i] - u
        others[i] = 0.5 * C[i, i]  # diagonal entry is active once 2 u_i > C_ii
        u[i] = others.min() + 1e-12 * max(1.0, abs(others.min()))
    return u, int(empty.sum())


def _newton_direction(active, rhs, sparse_threshold=0.15):
    n = active.shape[0]
    deg = active.sum(axis=1).astype(float)
    nnz = deg.sum()
    delta = 1e-10 * (deg.sum() + np.trace(active)) / n
    if nnz < sparse_threshold * n * n:
        A = sp.csr_matrix(active, dtype=float)
        A = A + sp.diags(deg + delta)
        return scipy.sparse.linalg.spsolve(A.tocsc(), rhs)
    A = active.astype(float)
    A[np.diag_indices(n)] += deg + delta
    try:
        return scipy.linalg.solve(A, rhs, assume_a="pos", check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(A, rhs, check_finite=False)


def solve_semismooth_newton(
    problem,
    init=None,
    tol=1e-8,
    max_iter=100,
    armijo=1e-4,
    backtrack=0.5,
    raise_on_failure=True,
):
    """Semismooth Newton ascent on the QOT dual.

    Each step solves the active-set system
    :math:`(\\mathrm{diag}(\\sigma\\mathbf 1) + \\sigma + \\delta I)\\,\\Delta u = \\varepsilon\\,\\nabla`,
    with :math:`\\sigma_{ij} = 1\\{u_i + u_j > C_{ij}\\}` and a tiny ridge
    :math:`\\delta`, followed by Armijo backtracking on the dual.

    Parameters
    ----------
    problem : QotProblem
    init : array_like or DualPotential, optional
        Starting potential; defaults to :func:`initial_potential`.
    tol : float
        Target sup-norm of the marginal residual.
    max_iter : int
    raise_on_failure : bool
        If False, return the last iterate with ``report.converged = False``.

    Returns
    -------
    potential : DualPotential
    coupling : Coupling
    report : SolveReport

    Raises
    ------
    NonConvergence
    DegenerateActiveSet
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = initial_potential(problem) if init is None else np.array(np.asarray(init), dtype=float)
    n, eps = problem.n, problem.epsilon
    C = problem.cost
    report = SolveReport()

    def evaluate(v):
        S = v[:, None] + v[None, :] - C
        active = S > 0.0
        P = np.where(active, S, 0.0)
        obj = v.sum() / n - (P * P).sum() / (4.0 * eps)
        return S, active, P, obj

    S, active, P, obj = evaluate(u)
    for it in range(max_iter + 1):
        u_fixed, nrep = _repair_empty_rows(problem, u, active)
        if nrep:
            report.repairs += nrep
            u = u_fixed
            S, active, P, obj = evaluate(u)
            if not active.any(axis=1).all():
                raise DegenerateActiveSet("empty plan row persists after repair")
        grad = 1.0 / n - P.sum(axis=1) / eps
        res = float(np.abs(grad).max())
        report.objective_trace.append(float(obj))
        report.active_sizes.append(int(active.sum()))
        report.residual = res
        report.iterations = it
        if res <= tol:
            report.converged = True
            break
        if it == max_iter:
            break
        du = _newton_direction(active, eps * grad)
        slope = float(grad @ du)
        if not slope > 0:
            du = eps * grad  # fall back to steepest ascent
            slope = float(grad @ du)
        t = 1.0
        for _ in range(60):
            cand = u + t * du
            S_c, active_c, P_c, obj_c = evaluate(cand)
            if obj_c >= obj + armijo * t * slope:
                break
            t *= backtrack
        else:
            logger.debug("line search stalled at iteration %d", it)
            break
        report.step_sizes.append(t)
        u, S, active, P, obj = cand, S_c, active_c, P_c, obj_c

    potential = DualPotential(u)
    coupling = recover_plan(problem, u)
    if not report.converged and raise_on_failure:
        raise NonConvergence(
            f"no convergence after {report.iterations} iterations (residual {report.residual:.3e})",
            potential,
            report,
        )
    return potential, coupling, report


def diagonal_update_step(problem, u):
    """Jacobi-type step :math:`G_{ii}^{-1}(\\sum_j (u_i + u_j - C_{ij})_+ - \\varepsilon/n)`.

    ``G_ii`` is the active-set size of row ``i`` and ``n`` the number of
    points. Rows with an empty active set get ``nan`` and are flagged.

    Returns
    -------
    step : ndarray, shape (n,)
    undefined : ndarray of bool
    """
    u = np.asarray(u, dtype=float)
    S = _slack(problem, u)
    active = S > 0.0
    G = active.sum(axis=1).astype(float)
    num = np.where(active, S, 0.0).sum(axis=1) - problem.epsilon / problem.n
    undefined = G == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(undefined, np.nan, num / np.where(undefined, 1.0, G))
    return step, undefined


def _project_marginals(X, a):
    n = X.shape[0]
    r = a - X.sum(axis=1)
    c = a - X.sum(axis=0)
    alpha = (r - r.sum() / (2 * n)) / n
    beta = (c - c.sum() / (2 * n)) / n
    return X + alpha[:, None] + beta[None, :]


def brute_force_solve(problem, tol=1e-10, max_iter=2_000_000):
    """Independent primal oracle for tiny problems (``N <= 8``).

    With step ``1/epsilon`` a projected-gradient step on the primal lands on
    the Euclidean projection of :math:`-C/\\varepsilon` onto the transport
    polytope, which is computed by Dykstra's alternating projections between
    the marginal constraints and the nonnegative orthant.

    Returns
    -------
    coupling : Coupling
    objective : float
        Primal value :math:`\\langle C,\\pi\\rangle + \\tfrac{\\varepsilon}{2}\\|\\pi\\|^2`.
    """
    n = problem.n
    if n > 8:
        raise ValueError("brute_force_solve is limited to N <= 8")
    a = np.full(n, 1.0 / n)
    x = -problem.cost / problem.epsilon
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = _project_marginals(x + p, a)
        p = x + p - y
        x_new = np.clip(y + q, 0.0, None)
        q = y + q - x_new
        change = np.abs(x_new - x).max()
        x = x_new
        res = max(np.abs(x.sum(axis=1) - a).max(), np.abs(x.sum(axis=0) - a).max())
        if res <= tol and change <= 1e-3 * tol:
            break
    else:
        raise NonConvergence("Dykstra projection did not converge")
    coupling = Coupling(x)
    return coupling, primal_objective(problem, coupling)
