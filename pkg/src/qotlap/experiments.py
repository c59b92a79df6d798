"""
Desk-scale reproduction studies: sphere potential scaling, torus operator
estimates, equispaced-circle thresholds and constraint validity.

Every grid cell draws from its own PCG64 stream derived from the run seed
and the cell position, so output does not depend on the number of workers.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .fileio import write_table
from .geometry import (
    Sphere,
    Torus,
    cell_seed,
    equispaced_circle,
    sample_sphere,
    sample_torus,
    test_function,
    with_base_point,
)
from .graph_operator import (
    apply_operator,
    plugin_weights,
    rescaled_estimate,
    operator_limit,
    weights_from_coupling,
)
from .pme import BarenblattProfile, support_radius_comparison
from .qot_solver import NonConvergence, QotProblem, solve_semismooth_newton
from .scaling_theory import (
    ScalingConstants,
    admissible_epsilon_window,
    circle_threshold,
    constraint_expansion,
    constraint_statistic,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "ResultRow",
    "SlopeFit",
    "SPHERE_COLUMNS",
    "TORUS_COLUMNS",
    "CIRCLE_COLUMNS",
    "VALIDITY_COLUMNS",
    "PME_COLUMNS",
    "log_grid",
    "epsilon_for_circle_k",
    "fit_loglog_slope",
    "run_sphere_scaling",
    "run_torus_convergence",
    "run_circle_exact",
    "run_constraint_validity",
    "run_pme_compare",
    "summarize",
]

logger = logging.getLogger(__name__)

SPHERE_COLUMNS = ("d", "N", "epsilon", "mean_potential", "seed", "status", "admissible", "wall_time")
TORUS_COLUMNS = (
    "N", "alpha", "epsilon", "repeat", "estimate", "limit_oracle", "seed", "status",
    "estimate_plugin", "estimate_unit", "limit_oracle_unit", "admissible", "wall_time",
)
CIRCLE_COLUMNS = (
    "N", "epsilon", "k_exact", "y_exact", "y_closed", "rel_err", "status",
    "y_solved", "potential_spread", "admissible", "wall_time",
)
VALIDITY_COLUMNS = (
    "d", "N", "epsilon", "repeat", "empirical", "leading", "correction", "status",
    "expected_total", "alpha", "seed", "admissible", "wall_time",
)
PME_COLUMNS = ("quantity", "exponent_fitted", "exponent_expected", "abs_error")

TORUS_BASE_POINT = (0.0, 0.5, 0.0)


def log_grid(lo, hi, count):
    return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), int(count)))


def epsilon_for_circle_k(N, k):
    """Regularisation giving about ``k`` active neighbours per side on N equispaced points."""
    return 16.0 * np.pi**2 * k**3 / (3.0 * N)


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid specification shared by all studies.

    ``eps`` is an explicit regularisation grid; when ``alphas`` is given
    instead, cells use ``eps = eps_scale * N**alpha``.
    """

    kind: str
    d: Sequence[int] = (2,)
    n: Sequence[int] = (1000,)
    eps: Sequence[float] = ()
    alphas: Sequence[float] = ()
    repeats: int = 1
    seed: int = 0
    tol: float = 1e-8
    max_iter: int = 100
    gamma: float = 1.0
    eps_scale: float = 1.0
    R: float = 1.0
    r: float = 0.5
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.n:
            raise ValueError("N list must be nonempty")
        if not self.eps and not self.alphas and self.kind != "pme-compare":
            raise ValueError("an eps grid or an alpha list is required")

    def epsilons(self, N):
        if self.eps:
            return [(float(e), None) for e in self.eps]
        return [(self.eps_scale * float(N) ** a, float(a)) for a in self.alphas]


@dataclass(frozen=True)
class ResultRow:
    """Long-format record of one metric of one cell."""

    kind: str
    d: Optional[int]
    N: int
    epsilon: float
    alpha: Optional[float]
    repeat: int
    seed: Optional[int]
    metric: str
    value: float
    wall_time: float


@dataclass
class ExperimentResult:
    kind: str
    columns: tuple
    rows: list = field(default_factory=list)

    def column(self, name, only_ok=True):
        return np.array(
            [r[name] for r in self.rows if not only_ok or r["status"] == "ok"], dtype=float
        )

    @property
    def n_failed(self):
        return sum(1 for r in self.rows if r.get("status", "ok") != "ok")

    def long_rows(self, metrics):
        for r in self.rows:
            for m in metrics:
                yield ResultRow(
                    self.kind, r.get("d"), int(r["N"]), float(r["epsilon"]), r.get("alpha"),
                    int(r.get("repeat", 0)), r.get("seed"), m, float(r[m]), float(r.get("wall_time", 0.0)),
                )

    def write(self, path):
        return write_table(path, self.columns, self.rows)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    window: tuple


def _ols(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ((y - fit) ** 2).sum() / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), float(r2)


def fit_loglog_slope(x, y, policy="largest_suffix", r2_min=0.999, min_points=5):
    """Least-squares slope of ``log y`` on ``log x``.

    Policies
    --------
    ``"all"``
        every point (at least 4).
    ``"largest_suffix"``
        the longest run of the largest ``x`` values whose fit reaches
        ``r2_min``, with at least ``min_points`` points.

    Raises
    ------
    ValueError
        If no window qualifies.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    order = np.argsort(x, kind="stable")
    lx, ly = np.log(x[order]), np.log(y[order])
    n = lx.size
    if policy == "all":
        if n < 4:
            raise ValueError("need at least 4 points")
        s, b, r2 = _ols(lx, ly)
        return SlopeFit(s, b, r2, (float(x[order][0]), float(x[order][-1])))
    if policy != "largest_suffix":
        raise ValueError(f"unknown window policy {policy!r}")
    best = None
    for start in range(n - min_points, -1, -1):
        s, b, r2 = _ols(lx[start:], ly[start:])
        if r2 >= r2_min:
            best = SlopeFit(s, b, r2, (float(np.exp(lx[start])), float(np.exp(lx[-1]))))
    if best is None:
        raise ValueError("no window reaches the required R^2")
    return best


def _run_cells(fn, cells, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _finish(result, config):
    if config.out:
        result.write(config.out)
    return result


def _solve_mean_potential(cloud, eps, gamma, tol, max_iter):
    problem = QotProblem.from_cloud(cloud, eps, gamma)
    u, _, _ = solve_semismooth_newton(problem, tol=tol, max_iter=max_iter)
    return float(np.mean(u.u))


def _sphere_cell(args):
    d, N, eps, seed, config, potential_fn = args
    t0 = time.perf_counter()
    row = dict(d=d, N=N, epsilon=eps, seed=seed, mean_potential=np.nan)
    row["admissible"] = admissible_epsilon_window(d, N).is_admissible(eps)
    try:
        cloud = sample_sphere(d, N, seed)
        fn = potential_fn or _solve_mean_potential
        row["mean_potential"] = fn(cloud, eps, config.gamma, config.tol, config.max_iter)
        row["status"] = "ok"
    except NonConvergence:
        row["status"] = "nonconverged"
    except Exception as exc:  # per-cell failures are recorded, not raised
        row["status"] = f"error:{type(exc).__name__}"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_sphere_scaling(config, potential_fn: Optional[Callable] = None):
    """Mean optimal potential on fresh uniform sphere samples over an eps grid.

    ``potential_fn(cloud, eps, gamma, tol, max_iter)`` replaces the solver
    when given (used to inject synthetic data).
    """
    cells = []
    idx = 0
    for d in config.d:
        for N in config.n:
            for eps, _ in config.epsilons(N):
                for rep in range(config.repeats):
                    cells.append((int(d), int(N), eps, cell_seed(config.seed, idx), config, potential_fn))
                    idx += 1
    workers = config.workers if potential_fn is None else 1
    rows = _run_cells(_sphere_cell, cells, workers)
    return _finish(ExperimentResult("sphere-scaling", SPHERE_COLUMNS, rows), config)


def sphere_slopes(result, **fit_kw):
    """Slope fit of log mean potential against log eps for each d."""
    out = {}
    for d in sorted({r["d"] for r in result.rows}):
        sub = [r for r in result.rows if r["d"] == d and r["status"] == "ok"]
        out[d] = fit_loglog_slope([r["epsilon"] for r in sub], [r["mean_potential"] for r in sub], **fit_kw)
    return out


def _torus_cell(args):
    N, cells, sample_seed, config = args
    # all alphas of one (N, repeat) share the sample
    T = Torus(config.R, config.r)
    x0 = np.array(TORUS_BASE_POINT) if (config.R, config.r) == (1.0, 0.5) else np.array([0.0, config.R - config.r, 0.0])
    f = test_function("paper_quadratic")
    g = test_function("unit_quadratic")
    consts = ScalingConstants.from_manifold(T)
    rows = []
    cloud = with_base_point(sample_torus(config.R, config.r, N, sample_seed), x0)
    for eps, alpha, rep in cells:
        t0 = time.perf_counter()
        K = consts.K(eps, N)
        row = dict(
            N=N, alpha=alpha, epsilon=eps, repeat=rep, seed=sample_seed,
            estimate=np.nan, estimate_unit=np.nan, estimate_plugin=np.nan,
            limit_oracle=operator_limit(T, x0, f), limit_oracle_unit=operator_limit(T, x0, g),
            admissible=admissible_epsilon_window(2, N).is_admissible(eps),
        )
        try:
            problem = QotProblem.from_cloud(cloud, eps, config.gamma, n_sample=N)
            _, coupling, _ = solve_semismooth_newton(problem, tol=config.tol, max_iter=config.max_iter)
            W = weights_from_coupling(coupling)
            row["estimate"] = rescaled_estimate(W, f, cloud.points, 0, K).rescaled
            row["estimate_unit"] = rescaled_estimate(W, g, cloud.points, 0, K).rescaled
            w_plug = plugin_weights(cloud.points, K, eps)
            row["estimate_plugin"] = -2.0 * apply_operator(w_plug, f, cloud.points, 0) / K
            row["status"] = "ok"
        except NonConvergence:
            row["status"] = "nonconverged"
        except Exception as exc:
            row["status"] = f"error:{type(exc).__name__}"
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def run_torus_convergence(config):
    """Rescaled operator estimates at the inner-equator point of the torus.

    Rows are ordered by ``(N, alpha-or-eps, repeat)``.
    """
    tasks = []
    for ni, N in enumerate(config.n):
        grid = config.epsilons(N)
        for rep in range(config.repeats):
            seed = cell_seed(config.seed, ni * config.repeats + rep)
            tasks.append((int(N), [(e, a, rep) for e, a in grid], seed, config))
    chunks = _run_cells(_torus_cell, tasks, config.workers)
    rows = [r for chunk in chunks for r in chunk]
    key = {}
    for ni, N in enumerate(config.n):
        for gi, (e, _) in enumerate(config.epsilons(N)):
            key[(int(N), e)] = (ni, gi)
    rows.sort(key=lambda r: (key[(r["N"], r["epsilon"])], r["repeat"]))
    return _finish(ExperimentResult("torus-laplacian", TORUS_COLUMNS, rows), config)


def torus_medians(result, column="estimate"):
    """Median of ``column`` per ``(N, alpha)`` over successful repeats."""
    out = {}
    for r in result.rows:
        if r["status"] == "ok":
            out.setdefault((r["N"], r["alpha"] if r["alpha"] is not None else r["epsilon"]), []).append(r[column])
    return {k: float(np.median(v)) for k, v in out.items()}


def _circle_cell(args):
    N, eps, config = args
    t0 = time.perf_counter()
    row = dict(N=N, epsilon=eps, k_exact=-1, y_exact=np.nan, y_closed=np.nan, rel_err=np.nan,
               y_solved=np.nan, potential_spread=np.nan)
    row["admissible"] = admissible_epsilon_window(1, N).is_admissible(eps)
    try:
        thr = circle_threshold(N, eps)
        row.update(k_exact=thr.k_exact, y_exact=thr.y_exact, y_closed=thr.y_closed,
                   rel_err=abs(thr.y_closed / thr.y_exact - 1.0))
        cloud = equispaced_circle(N)
        problem = QotProblem.from_cloud(cloud, eps, 1.0)
        u, _, _ = solve_semismooth_newton(problem, tol=config.tol, max_iter=config.max_iter)
        row["y_solved"] = 2.0 * float(np.mean(u.u))
        row["potential_spread"] = float(np.ptp(u.u))
        row["status"] = "ok"
    except NonConvergence:
        row["status"] = "nonconverged"
    except Exception as exc:
        row["status"] = f"error:{type(exc).__name__}"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_circle_exact(config):
    """Solved, exact and closed-form thresholds on the equispaced circle (``N >= 50``)."""
    if min(config.n) < 50:
        raise ValueError("circle study needs N >= 50")
    cells = [(int(N), e, config) for N in config.n for e, _ in config.epsilons(N)]
    rows = _run_cells(_circle_cell, cells, config.workers)
    return _finish(ExperimentResult("circle-exact", CIRCLE_COLUMNS, rows), config)


def _validity_cell(args):
    d, N, eps, alpha, rep, seed = args
    t0 = time.perf_counter()
    S = Sphere(d)
    x0 = np.zeros(d + 1)
    x0[-1] = 1.0
    consts = ScalingConstants.from_manifold(S)
    K = consts.K(eps, N)
    row = dict(d=d, N=N, epsilon=eps, alpha=alpha, repeat=rep, seed=seed,
               admissible=admissible_epsilon_window(d, N).is_admissible(eps))
    try:
        terms = constraint_expansion(consts, S.curvature_at(x0), K, eps, N, manifold=S, check_cap=False)
        row.update(leading=terms.leading, correction=terms.curvature_correction, expected_total=terms.total)
        cloud = with_base_point(sample_sphere(d, N, seed), x0)
        row["empirical"] = constraint_statistic(cloud, K, eps, 0)
        cap_ok = np.sqrt(K) <= 0.5 * S.min_curvature_radius
        row["status"] = "ok" if cap_ok else "ok:cap_exceeded"
    except Exception as exc:
        row["status"] = f"error:{type(exc).__name__}"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_constraint_validity(config):
    """Empirical constraint statistic at the first-order potential versus its expansion."""
    cells = []
    idx = 0
    for d in config.d:
        for N in config.n:
            for eps, alpha in config.epsilons(N):
                for rep in range(config.repeats):
                    cells.append((int(d), int(N), eps, alpha, rep, cell_seed(config.seed, idx)))
                    idx += 1
    rows = _run_cells(_validity_cell, cells, config.workers)
    return _finish(ExperimentResult("constraint-validity", VALIDITY_COLUMNS, rows), config)


def validity_means(result):
    """Mean empirical statistic per ``(d, N, eps)`` (rows flagged for the cap included)."""
    out = {}
    for r in result.rows:
        if r["status"].startswith("ok"):
            out.setdefault((r["d"], r["N"], r["epsilon"]), []).append(r["empirical"])
    return {k: float(np.mean(v)) for k, v in out.items()}


def run_pme_compare(d=2, mass=1.0, N=1000, t_grid=None, eps_grid=None, out=None):
    """Exponent table for the PME support radius and the QOT support radius."""
    t_grid = t_grid or log_grid(0.1, 10.0, 11)
    eps_grid = eps_grid or log_grid(1.0, 1e4, 11)
    rows = []
    for dd in ([d] if np.isscalar(d) else d):
        profile = BarenblattProfile.from_mass(mass, int(dd))
        consts = ScalingConstants.from_manifold(Sphere(int(dd)))
        for q, fitted, expected, err in support_radius_comparison(profile, consts, eps_grid, N, t_grid):
            rows.append(dict(quantity=f"{q}_d{dd}", exponent_fitted=fitted,
                             exponent_expected=expected, abs_error=err))
    result = ExperimentResult("pme-compare", PME_COLUMNS, rows)
    if out:
        result.write(out)
    return result


def summarize(result):
    n = len(result.rows)
    return f"{result.kind}: {n} rows ({n - result.n_failed} ok)"
