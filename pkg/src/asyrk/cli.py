"""Command-line entry point: ``asyrk <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error. Errors are written to
stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checks import check_corollary, check_kernels, check_structural
from .datagen import GenSpec, read_instance, write_generated
from .delay_sim import DelayModel, simulate
from .errors import AsyrkError, InvalidConfig
from .kaczmarz import SAMPLING_MODES, RKConfig, Trace, dist_sq_to, rk_solve
from .lsq import LsqConfig, lsq_solve
from .parallel import RunConfig, default_threads, solve_parallel, sweep_threads
from .sparsemat import compute_stats, normalize_rows, write_vector
from .stepsize import corollary_params, rate_table

VARIANT_ALIASES = {
    "single": "single_component", "single_component": "single_component",
    "fullrow": "full_row", "full_row": "full_row",
}
SAMPLING_ALIASES = {
    "shuffle": "slice_shuffle", "slice_shuffle": "slice_shuffle",
    "replace": "with_replacement", "with_replacement": "with_replacement",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _gamma(text: str):
    if text in ("corollary", "one"):
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, 'corollary' or 'one', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("gamma must be positive")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _load(path, normalize: bool = True):
    """Read an instance; rows are rescaled to unit norm unless already so."""
    inst = read_instance(path)
    A, b = inst.A, inst.b
    if normalize and not A.is_normalized:
        A, b = normalize_rows(A, b)
    return A, b, inst.x_star


def _emit(obj):
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not serializable: {type(v).__name__}")


def _write_trace(trace: Trace, out: str | None, summary: dict):
    if out is None:
        sys.stdout.write(trace.to_jsonl())
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "trace.jsonl").write_text(trace.to_jsonl())
    (d / "trace.csv").write_text(trace.to_csv())
    if trace.final_x is not None:
        write_vector(d / "x.txt", trace.final_x)
    _emit({**summary, "out": str(d)})


def _summary(trace: Trace) -> dict:
    last = trace.last
    return {"epochs": last.epoch_index, "r_sq": last.r_sq, "grad_sq": last.grad_sq,
            "dist_sq": last.dist_sq, "wall_seconds": last.wall_seconds}


def _warn_fallback(trace: Trace):
    source = trace.config_echo.get("gamma_source", "")
    if "infeasible" in source:
        print(json.dumps({"warning": f"gamma = {source}"}), file=sys.stderr)


def _distance(x_star):
    return None if x_star is None else dist_sq_to(x_star)


def _run_config(args) -> RunConfig:
    return RunConfig(
        threads=args.threads, gamma=args.gamma, epochs=args.epochs,
        target_r_sq=args.target, variant=VARIANT_ALIASES[args.variant],
        sampling=SAMPLING_ALIASES[args.sampling], seed=args.seed,
        snapshot_interval=args.snapshot_interval, tau=args.tau,
    )


# -- subcommands --------------------------------------------------------------

def cmd_gen(args):
    spec = GenSpec(args.m, args.n, args.delta, args.seed,
                   consistent=not args.inconsistent, noise_level=args.noise)
    inst = write_generated(args.out, spec)
    _emit({"out": args.out, **inst.meta})


def cmd_stats(args):
    A, _, _ = _load(args.instance)
    stats = compute_stats(A, exact_spectral=not args.power)
    _emit(stats.to_dict(include_theta=args.theta))


def cmd_solve_rk(args):
    A, b, x_star = _load(args.instance)
    cfg = RKConfig(max_epochs=args.epochs, target_r_sq=args.target, seed=args.seed,
                   sampling=args.sampling)
    trace = rk_solve(A, b, np.zeros(A.n), cfg, distance=_distance(x_star))
    _write_trace(trace, args.out, _summary(trace))


def cmd_solve_asyrk(args):
    A, b, x_star = _load(args.instance)
    trace = solve_parallel(A, b, np.zeros(A.n), _run_config(args), distance=_distance(x_star))
    _warn_fallback(trace)
    _write_trace(trace, args.out, {**_summary(trace), "gamma": trace.config_echo["gamma_value"]})


def cmd_simulate(args):
    A, b, x_star = _load(args.instance)
    if args.gamma == "one":
        params = 1.0
    elif args.gamma == "corollary":
        params = corollary_params(compute_stats(A), args.tau)
        if not params.usable:
            raise InvalidConfig(f"corollary condition fails for tau={args.tau}; pass --gamma")
    else:
        params = args.gamma
    delay = {"fixed": DelayModel.fixed, "uniform": DelayModel.uniform,
             "max_staleness": DelayModel.max_staleness}[args.delay](args.tau)
    run = simulate(A, b, np.zeros(A.n), params, delay, args.iters, seed=args.seed,
                   variant=VARIANT_ALIASES[args.variant], distance=_distance(x_star))
    _write_trace(run.trace, args.out, _summary(run.trace))


def cmd_lsq(args):
    A, b, _ = _load(args.instance, normalize=False)
    cfg = LsqConfig(tol=args.tol, max_epochs=args.epochs, seed=args.seed,
                    solver="rk" if args.threads is None else "asyrk",
                    threads=args.threads or 1, gamma=args.gamma,
                    sigma_r=args.sigma_r, zeta=args.zeta, phi=args.phi)
    res = lsq_solve(A, b, cfg)
    summary = {**_summary(res.trace), "grad_norm": res.grad_norm,
               "zeta": res.system.zeta, "phi": res.system.phi}
    res.trace.final_x = res.x_ls
    _write_trace(res.trace, args.out, summary)


def cmd_sweep(args):
    A, b, _ = _load(args.instance)
    stats = compute_stats(A, exact_spectral=A.m * A.n <= 4_000_000)
    report = sweep_threads(A, b, np.zeros(A.n), _run_config(args), args.thread_list, stats)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "sweep.csv").write_text(report.to_csv())
        (d / "sweep.json").write_text(json.dumps(report.to_dict(), indent=2))
    _emit(report.to_dict())


def cmd_rates(args):
    A, _, _ = _load(args.instance)
    stats = compute_stats(A, exact_spectral=not args.power)
    tau = default_threads() - 1 if args.tau is None else args.tau
    report = rate_table(stats, tau)
    if args.json:
        _emit({**report.to_dict(), "corollary": corollary_params(stats, tau).to_dict()})
    else:
        print(report.to_text())


def cmd_check(args):
    suites = {
        "structural": lambda: check_structural(args.count, args.seed),
        "corollary": lambda: check_corollary(args.draws, args.seed),
        "corollary_quadratic": lambda: check_corollary(args.draws, args.seed, quadratic=True),
        "kernels": lambda: check_kernels(args.seed),
    }
    names = args.suite or list(suites)
    results = [suites[name]() for name in names]
    _emit([asdict(r) for r in results])
    return 0 if all(r.passed for r in results) else 1


# -- parser -------------------------------------------------------------------

def _add_run_flags(p, *, gamma_default="corollary"):
    p.add_argument("--threads", type=int, default=default_threads(),
                   help="worker threads (default: $ASYRK_THREADS or CPU count)")
    p.add_argument("--gamma", type=_gamma, default=gamma_default,
                   help="step length: a number, 'corollary' (1/psi) or 'one'")
    p.add_argument("--epochs", type=int, default=100, help="epoch budget (epoch = m row events)")
    p.add_argument("--target", type=float, default=0.0, help="stop once ||Ax-b||^2 <= target")
    p.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="full_row")
    p.add_argument("--sampling", choices=sorted(SAMPLING_ALIASES), default="shuffle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-interval", type=int, default=1,
                   help="epochs between residual snapshots")
    p.add_argument("--tau", type=int, default=None,
                   help="delay bound for the corollary step (default: threads - 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asyrk", description="Asynchronous randomized Kaczmarz solvers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a sparse Gaussian instance")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inconsistent", action="store_true")
    p.add_argument("--noise", type=float, default=1.0, help="norm of the off-range part of b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("stats", help="print SystemStats as JSON")
    p.add_argument("instance")
    p.add_argument("--power", action="store_true", help="power iteration instead of dense SVD")
    p.add_argument("--theta", action="store_true", help="include per-row nonzero counts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("solve-rk", help="serial randomized Kaczmarz")
    p.add_argument("instance")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--target", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampling", choices=SAMPLING_MODES, default="uniform")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_rk)

    p = sub.add_parser("solve-asyrk", help="lock-free multithreaded AsyRK")
    p.add_argument("instance")
    _add_run_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_asyrk)

    p = sub.add_parser("simulate", help="deterministic delayed-update simulator")
    p.add_argument("instance")
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--delay", choices=("fixed", "uniform", "max_staleness"), default="max_staleness")
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--gamma", type=_gamma, default="corollary")
    p.add_argument("--variant", choices=sorted(VARIANT_ALIASES), default="single_component")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lsq", help="least squares via the augmented system")
    p.add_argument("instance")
    p.add_argument("--tol", type=float, default=1e-9, help="stop at ||A^T(Ax-b)|| <= tol")
    p.add_argument("--epochs", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="use the parallel solver")
    p.add_argument("--gamma", type=_gamma, default="one")
    p.add_argument("--sigma-r", type=float, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lsq)

    p = sub.add_parser("sweep", help="thread-count sweep with speedups")
    p.add_argument("instance")
    _add_run_flags(p)
    p.add_argument("--thread-list", type=_int_list, default=[1, 2, 4])
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rates", help="RK / AsySCD / AsyRK comparison table")
    p.add_argument("instance")
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--power", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("check", help="run the invariant suites")
    p.add_argument("--suite", action="append",
                   choices=("structural", "corollary", "corollary_quadratic", "kernels"))
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    try:
        code = args.func(args)
    except AsyrkError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
