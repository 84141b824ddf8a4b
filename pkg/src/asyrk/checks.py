"""Invariant suites run by ``asyrk check``.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .datagen import GenSpec, gen_sparse_gaussian
from .kaczmarz import SolutionSetDistance, asyrk_update, rk_step
from .sparsemat import NORM_TOL, CsrMatrix, SystemStats, compute_stats
from .stepsize import saturating_pow, corollary_params, gamma_bounds


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self):
        return asdict(self)


def structural_bounds(stats: SystemStats, A: CsrMatrix) -> list[str]:
    """Violations of the structural inequalities for one matrix."""
    bad = []
    slack = 1e-9
    if stats.alpha > math.sqrt(stats.nu) * stats.mu * (1 + slack):
        bad.append("alpha > sqrt(nu)*mu")
    if stats.alpha > math.sqrt(stats.lambda_max) * stats.mu * (1 + slack):
        bad.append("alpha > sqrt(lambda_max)*mu")
    if stats.lambda_max > stats.mu * stats.nu * (1 + slack):
        bad.append("lambda_max > mu*nu")
    if abs(stats.frob_sq - A.m) > 1e-8 * A.m:
        bad.append("frob_sq != m")
    if np.max(np.abs(A.row_norm - 1.0)) > NORM_TOL:
        bad.append("row not unit norm")
    return bad


def check_structural(count: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = []
    for k in range(count):
        m = int(rng.integers(20, 120))
        n = int(rng.integers(10, 100))
        delta = float(rng.uniform(max(1.5 / n, 0.02), 0.5))
        A, _, _ = gen_sparse_gaussian(GenSpec(m, n, delta, seed=int(rng.integers(2**31))))
        bad = structural_bounds(compute_stats(A), A)
        if bad:
            failures.append(f"instance {k}: {', '.join(bad)}")
    return CheckResult("structural_bounds", not failures, "; ".join(failures) or f"{count} instances ok")


def random_feasible_stats(rng, quadratic: bool = False) -> tuple[SystemStats, int]:
    """Draw a parameter set obeying the structural bounds and feasibility.

    With ``quadratic=True`` tau is further limited to
    ``2e·lambda_max·(tau+1)**2 <= m``, the regime where
    ``(1 + 2e·lambda_max·(tau+1)/m)**(tau+1) <= e`` actually holds.
    """
    while True:
        m = int(rng.integers(50, 100_000))
        mu = int(rng.integers(1, 50))
        nu = int(rng.integers(1, 50))
        lam = float(rng.uniform(1.0, mu * nu))
        tau_max = math.floor(m / (2 * math.e * lam)) - 1
        if quadratic:
            tau_max = math.floor(math.sqrt(m / (2 * math.e * lam))) - 1
        if tau_max < 0:
            continue
        tau = int(rng.integers(0, tau_max + 1))
        alpha = float(rng.uniform(0.0, 1.0)) * min(math.sqrt(nu), math.sqrt(lam)) * mu
        stats = SystemStats(
            m=m, n=m, nnz=0, delta=0.0, theta=[], mu=mu, nu=nu, alpha=alpha,
            lambda_min=None, lambda_max=lam, frob_sq=float(m), l_max=1.0, l_res=1.0,
            sigma_r=None,
        )
        return stats, tau


def corollary_violations(stats: SystemStats, tau: int) -> list[str]:
    """Which of the corollary's intermediate claims fail for one draw."""
    p = corollary_params(stats, tau)
    (b1, b2, b3), _ = gamma_bounds(stats, tau, p.rho)
    rel = 1e-12
    bad = []
    if saturating_pow(p.rho, tau + 1) > math.e * (1 + rel):
        bad.append("rho^(tau+1) > e")
    if p.psi > stats.mu + 1 + rel:
        bad.append("psi > mu+1")
    if b1 > b2 * (1 + rel) or b1 > b3 * (1 + rel):
        bad.append("1/psi not the smallest bound")
    return bad


def check_corollary(draws: int = 1000, seed: int = 0, quadratic: bool = False) -> CheckResult:
    """Corollary claims over random feasible draws.

    The default draws use the linear condition ``2e·lambda_max·(tau+1) <= m``
    alone; ``quadratic=True`` restricts to the squared condition.
    """
    rng = np.random.default_rng(seed)
    counts: dict[str, int] = {}
    first: dict[str, str] = {}
    for k in range(draws):
        stats, tau = random_feasible_stats(rng, quadratic)
        for msg in corollary_violations(stats, tau):
            counts[msg] = counts.get(msg, 0) + 1
            first.setdefault(msg, f"m={stats.m}, lambda_max={stats.lambda_max:.4g}, tau={tau}")
    name = "corollary_regime_quadratic" if quadratic else "corollary_regime"
    if not counts:
        return CheckResult(name, True, f"{draws} draws ok")
    detail = "; ".join(f"{msg}: {c}/{draws} draws (e.g. {first[msg]})" for msg, c in counts.items())
    return CheckResult(name, False, detail)


def check_kernels(seed: int = 0) -> CheckResult:
    """Projection property of the Kaczmarz step and the single-component
    update summed over a row's support."""
    A, b, _ = gen_sparse_gaussian(GenSpec(40, 30, 0.2, seed=seed))
    rng = np.random.default_rng(seed)
    oracle = SolutionSetDistance(A, b)
    failures = []
    for _ in range(50):
        x = rng.standard_normal(A.n)
        i = int(rng.integers(A.m))
        x_new = rk_step(A, b, x, i)
        cols, vals = A.row(i)
        if abs(vals @ x_new[cols] - b[i]) > 1e-10:
            failures.append("a_i^T x_new != b_i")
        star = oracle.project(x)
        if np.linalg.norm(x_new - star) > np.linalg.norm(x - star) + 1e-12:
            failures.append("step increased distance to solution set")
        step = x_new[cols] - x[cols]
        parts = np.array([asyrk_update(A, b, i, int(t), 1.0 / cols.size, x) for t in cols])
        if np.max(np.abs(parts - step)) > 1e-12:
            failures.append("summed single-component updates differ from the RK step")
    return CheckResult("kaczmarz_kernels", not failures, "; ".join(sorted(set(failures))) or "ok")


def run_all(seed: int = 0, count: int = 100, draws: int = 1000) -> list[CheckResult]:
    return [
        check_structural(count, seed),
        check_corollary(draws, seed),
        check_corollary(draws, seed, quadratic=True),
        check_kernels(seed),
    ]
