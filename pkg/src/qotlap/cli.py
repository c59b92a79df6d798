"""
Command line entry point ``qotlap``.

Exit codes: 0 on success, 1 on a validation error, 2 on a numerical failure.
Every subcommand accepts ``--config FILE`` holding flat ``key = value``
lines that mirror the long flags; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .fileio import write_coupling, write_point_cloud, write_report
from .geometry import Torus, equispaced_circle, sample_sphere, sample_torus
from .qot_solver import NonConvergence, QotProblem, solve_semismooth_newton, marginal_residual

__all__ = ["main", "build_parser", "read_config"]

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def read_config(path):
    """Turn a ``key = value`` file into argv tokens.

    Underscores in keys become dashes; values split on commas or spaces;
    ``true``/``false`` values toggle store-true flags.
    """
    tokens = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{ln}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
            continue
        tokens.append(flag)
        tokens.extend(v for v in re.split(r"[,\s]+", value) if v)
    return tokens


def _common(p, *, eps_grid=True, alphas=False, repeats=False, dims=None, n_default=(1000,)):
    p.add_argument("--config", help="flat key = value file mirroring these flags")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, nargs="+", default=list(n_default), help="sample sizes N")
    if dims is not None:
        p.add_argument("--d", type=int, nargs="+", default=list(dims), choices=(1, 2, 3))
    if eps_grid:
        p.add_argument("--eps", type=float, nargs="+", help="explicit eps grid")
        p.add_argument("--eps-min", type=float)
        p.add_argument("--eps-max", type=float)
        p.add_argument("--eps-count", type=int)
    if alphas:
        p.add_argument("--alpha", type=float, nargs="+", help="schedule exponents, eps = scale * N**alpha")
        p.add_argument("--eps-scale", type=float, default=1.0)
    if repeats:
        p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = _Parser(prog="qotlap", description="Quadratically regularised OT on sampled manifolds.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one QOT problem on a sampled manifold")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="coupling CSV (i,j,value)")
    p.add_argument("--manifold", choices=("sphere", "torus", "circle"), default="sphere")
    p.add_argument("--d", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--gamma", type=float, default=1.0, choices=(0.5, 1.0))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--points", help="also write the point cloud here")
    p.add_argument("--report", help="also write the solve report here")

    p = sub.add_parser("sphere-scaling", help="mean potential against eps on spheres")
    _common(p, dims=(2,))
    p.add_argument("--gamma", type=float, default=1.0, choices=(0.5, 1.0))

    p = sub.add_parser("torus-laplacian", help="rescaled operator estimates on the torus")
    _common(p, alphas=True, repeats=True, n_default=(2500,))
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--r", type=float, default=0.5)

    p = sub.add_parser("circle-exact", help="equispaced-circle thresholds")
    _common(p, alphas=False)
    p.add_argument("--k", type=float, nargs="+", help="target active neighbours per side instead of eps")

    p = sub.add_parser("constraint-validity", help="constraint statistic at the first-order potential")
    _common(p, alphas=True, repeats=True, dims=(2,))

    p = sub.add_parser("pme-compare", help="PME and QOT support-radius exponents")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, nargs="+", default=[2], choices=(1, 2, 3))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--t-min", type=float, default=0.1)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--eps-min", type=float, default=1.0)
    p.add_argument("--eps-max", type=float, default=1e4)
    p.add_argument("--count", type=int, default=11)
    return parser


def _expand_config(argv):
    argv = list(argv)
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise ValidationError("--config needs a path")
        path = argv[i + 1]
        if not Path(path).is_file():
            raise ValidationError(f"config file not found: {path}")
        rest = argv[:i] + argv[i + 2:]
        # subcommand first, then config tokens, then explicit flags (last wins)
        return rest[:1] + read_config(path) + rest[1:]
    return argv


def _eps_grid(args):
    if getattr(args, "eps", None):
        return tuple(args.eps)
    if getattr(args, "eps_min", None) is not None:
        if args.eps_max is None or args.eps_count is None:
            raise ValidationError("--eps-min needs --eps-max and --eps-count")
        if not 0 < args.eps_min < args.eps_max or args.eps_count < 2:
            raise ValidationError("need 0 < eps-min < eps-max and eps-count >= 2")
        return ex.log_grid(args.eps_min, args.eps_max, args.eps_count)
    return ()


def _check_out(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ValidationError(f"output directory does not exist: {parent}")


def _config(args, kind, **extra):
    kw = dict(kind=kind, n=tuple(args.n), seed=args.seed, tol=args.tol, max_iter=args.max_iter,
              workers=args.workers, out=args.out)
    if hasattr(args, "d"):
        kw["d"] = tuple(args.d)
    if hasattr(args, "repeats"):
        kw["repeats"] = args.repeats
    kw.update(extra)
    try:
        return ex.ExperimentConfig(**kw)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _run_solve(args):
    if args.eps <= 0 or args.n < 2:
        raise ValidationError("need eps > 0 and n >= 2")
    if args.manifold == "sphere":
        cloud = sample_sphere(args.d, args.n, args.seed)
    elif args.manifold == "torus":
        cloud = sample_torus(1.0, 0.5, args.n, args.seed)
    else:
        cloud = equispaced_circle(args.n)
    problem = QotProblem.from_cloud(cloud, args.eps, args.gamma)
    u, coupling, report = solve_semismooth_newton(problem, tol=args.tol, max_iter=args.max_iter)
    write_coupling(args.out, coupling)
    if args.points:
        write_point_cloud(args.points, cloud)
    if args.report:
        write_report(args.report, report)
    nnz = coupling.triplets()[0].size
    return (f"solve: n={problem.n} eps={args.eps:g} iterations={report.iterations} "
            f"residual={marginal_residual(problem, coupling):.3g} nnz={nnz} mean_u={np.mean(u.u):.6g}")


def _run(args):
    if args.command == "solve":
        return _run_solve(args)
    if args.command == "pme-compare":
        res = ex.run_pme_compare(
            d=args.d, mass=args.mass, N=args.n,
            t_grid=ex.log_grid(args.t_min, args.t_max, args.count),
            eps_grid=ex.log_grid(args.eps_min, args.eps_max, args.count), out=args.out,
        )
        worst = max(r["abs_error"] for r in res.rows)
        return f"pme-compare: {len(res.rows)} rows, max exponent error {worst:.3g}"
    if args.command == "sphere-scaling":
        res = ex.run_sphere_scaling(_config(args, "sphere-scaling", eps=_eps_grid(args), gamma=args.gamma))
        return ex.summarize(res)
    if args.command == "torus-laplacian":
        cfg = _config(args, "torus-laplacian", eps=_eps_grid(args), alphas=tuple(args.alpha or ()),
                      eps_scale=args.eps_scale, R=args.R, r=args.r)
        res = ex.run_torus_convergence(cfg)
        return ex.summarize(res)
    if args.command == "circle-exact":
        eps = _eps_grid(args)
        if args.k:
            if len(args.n) != 1:
                raise ValidationError("--k needs exactly one N")
            eps = tuple(ex.epsilon_for_circle_k(args.n[0], k) for k in args.k)
        if min(args.n) < 50:
            raise ValidationError("circle-exact needs N >= 50")
        res = ex.run_circle_exact(_config(args, "circle-exact", eps=eps))
        return ex.summarize(res)
    if args.command == "constraint-validity":
        cfg = _config(args, "constraint-validity", eps=_eps_grid(args), alphas=tuple(args.alpha or ()),
                      eps_scale=args.eps_scale)
        return ex.summarize(ex.run_constraint_validity(cfg))
    raise ValidationError(f"unknown command {args.command}")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        argv = _expand_config(argv)
        args = build_parser().parse_args(argv)
        _check_out(args.out)
        line = _run(args)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
