"""Step-size and rate formulas for asynchronous randomized Kaczmarz.

All functions are pure. ``e`` is ``math.e`` at full double precision.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InvalidRho, MissingStats, StepTooLarge, ZeroLambdaMin
from .sparsemat import SystemStats


@dataclass
class StepParams:
    tau: int
    rho: float | None
    psi: float | None
    gamma: float | None
    gamma_bounds: tuple[float, float, float] | None
    feasible: bool
    rate_iter: float | None
    rate_simplified: float | None

    @property
    def usable(self) -> bool:
        return self.gamma is not None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProbBound:
    epsilon: float
    eta: float
    j_min: int


def saturating_pow(rho: float, k: int) -> float:
    """``rho**k``, saturating to inf instead of raising on overflow."""
    try:
        return rho**k
    except OverflowError:
        return math.inf


def psi(mu: float, lambda_max: float, tau: int, rho: float, m: int) -> float:
    """``mu + 2 * lambda_max * tau * rho**tau / m``."""
    if tau > 0 and rho <= 1.0:
        raise InvalidRho(f"rho must exceed 1 when tau > 0, got {rho}")
    if tau == 0:
        return float(mu)
    return mu + 2.0 * lambda_max * tau * saturating_pow(rho, tau) / m


def _require(stats: SystemStats, *names):
    missing = [k for k in names if getattr(stats, k) is None]
    if missing:
        raise MissingStats(f"stats lack {', '.join(missing)}")


def gamma_bounds(stats: SystemStats, tau: int, rho: float) -> tuple[tuple[float, float, float], float]:
    """The three admissible upper bounds on gamma and their minimum."""
    _require(stats, "alpha", "lambda_max", "mu")
    if rho <= 1.0:
        raise InvalidRho(f"rho must exceed 1, got {rho}")
    m, lam, alpha = stats.m, stats.lambda_max, stats.alpha
    b1 = 1.0 / psi(stats.mu, lam, tau, rho, m)
    b2 = m * (rho - 1.0) / (2.0 * lam * saturating_pow(rho, tau + 1))
    rt = saturating_pow(rho, tau)
    # separate square roots keep b3 finite when rho**(2*tau) would overflow
    b3 = m * math.sqrt(rho - 1.0) / (math.sqrt(rt) * math.sqrt(m * alpha**2 + lam**2 * tau * rt))
    return (b1, b2, b3), min(b1, b2, b3)


def feasibility_lhs(lambda_max: float, tau: int, m: int) -> float:
    return 2.0 * math.e * lambda_max * (tau + 1) / m


def max_feasible_tau(lambda_max: float, m: int) -> int:
    """Largest tau with ``2e·lambda_max·(tau+1)/m <= 1`` (may be negative)."""
    return math.floor(m / (2.0 * math.e * lambda_max)) - 1


def rate_iteration(lambda_min: float | None, m: int, gamma: float, psi_value: float):
    """Per-iteration contraction ``1 − lambda_min·gamma·(2 − gamma·psi)/m``.

    Returns ``(factor, factor**m)``; the second is the decrease over one
    epoch of ``m`` iterations. ``(None, None)`` if ``lambda_min`` is unknown.
    """
    if gamma >= 2.0 / psi_value:
        raise StepTooLarge(f"gamma={gamma} must be below 2/psi={2.0 / psi_value}")
    if lambda_min is None:
        return None, None
    factor = 1.0 - lambda_min * gamma * (2.0 - gamma * psi_value) / m
    return factor, factor**m


def corollary_params(stats: SystemStats, tau: int) -> StepParams:
    """Parameter choice of the corollary: rho from feasibility, gamma = 1/psi.

    gamma is capped by the other two theorem bounds, which 1/psi does not
    always respect for large tau. Infeasible inputs yield ``feasible=False``
    with every parameter ``None``.
    """
    _require(stats, "lambda_max", "mu", "alpha")
    m, lam = stats.m, stats.lambda_max
    lhs = feasibility_lhs(lam, tau, m)
    if lhs > 1.0:
        return StepParams(tau, None, None, None, None, False, None, None)
    rho = 1.0 + lhs
    p = psi(stats.mu, lam, tau, rho, m)
    bounds, _ = gamma_bounds(stats, tau, rho)
    # 1/psi, unless b2 or b3 is smaller (possible once 2e*lambda_max*(tau+1)**2 > m)
    gamma = min(bounds)
    if not gamma > 0.0:
        # rho**tau overflowed and the admissible step underflowed to zero
        return StepParams(tau, rho, p, None, bounds, True, None, None)
    rate_iter, _ = rate_iteration(stats.lambda_min, m, gamma, p)
    simplified = None
    if stats.lambda_min is not None:
        simplified = 1.0 - stats.lambda_min / (m * (stats.mu + 1))
    return StepParams(tau, rho, p, gamma, bounds, True, rate_iter, simplified)


def theorem_params(stats: SystemStats, tau: int, rho: float) -> StepParams:
    """Largest gamma admitted by the three bounds for a user-chosen rho."""
    bounds, gamma = gamma_bounds(stats, tau, rho)
    p = psi(stats.mu, stats.lambda_max, tau, rho, stats.m)
    rate_iter, _ = rate_iteration(stats.lambda_min, stats.m, gamma, p)
    feasible = feasibility_lhs(stats.lambda_max, tau, stats.m) <= 1.0
    simplified = None
    if stats.lambda_min is not None:
        simplified = 1.0 - stats.lambda_min / (stats.m * (stats.mu + 1))
    return StepParams(tau, rho, p, gamma, bounds, feasible, rate_iter, simplified)


def iteration_bound(stats: SystemStats, x0_dist_sq: float, epsilon: float, eta: float) -> ProbBound:
    """Iterations after which ``‖x_j − x_j*‖² <= epsilon`` w.p. ``>= 1 − eta``."""
    if not stats.lambda_min:
        raise ZeroLambdaMin("lambda_min must be known and positive")
    if epsilon <= 0 or not 0 < eta < 1 or x0_dist_sq <= 0:
        raise ValueError("need epsilon > 0, 0 < eta < 1 and x0_dist_sq > 0")
    scale = stats.m * (stats.mu + 1) / stats.lambda_min
    j = scale * abs(math.log(x0_dist_sq / (eta * epsilon)))
    return ProbBound(epsilon, eta, int(math.ceil(j)))


# -- comparison table ---------------------------------------------------------

@dataclass
class RateRow:
    method: str
    ops_per_iteration: float
    rate_iteration: float | None
    processors: float
    rate_running_time: float | None


@dataclass
class RateReport:
    tau: int
    rows: list[RateRow]
    asyrk_processors_corollary: float
    note: str = "O(.) entries evaluated with constant 1 (estimate)"

    CATEGORIES = (
        ("# operation per iteration", "ops_per_iteration"),
        ("rate (iteration)", "rate_iteration"),
        ("# processors", "processors"),
        ("rate (running time)", "rate_running_time"),
    )

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "note": self.note,
            "asyrk_processors_corollary": self.asyrk_processors_corollary,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_text(self) -> str:
        heads = ["algorithms"] + [r.method for r in self.rows]
        body = []
        for label, attr in self.CATEGORIES:
            cells = []
            for r in self.rows:
                v = getattr(r, attr)
                cells.append("n/a" if v is None else f"{v:.6g}")
            body.append([label] + cells)
        widths = [max(len(row[c]) for row in [heads] + body) for c in range(len(heads))]
        fmt = lambda row: " | ".join(s.ljust(w) for s, w in zip(row, widths))
        sep = "-+-".join("-" * w for w in widths)
        lines = [fmt(heads), sep] + [fmt(r) for r in body]
        lines.append(
            f"AsyRK processors from corollary condition m/(2e*lambda_max) - 1: "
            f"{self.asyrk_processors_corollary:.6g}"
        )
        lines.append(self.note)
        return "\n".join(lines)


def rate_table(stats: SystemStats, tau: int) -> RateReport:
    """RK / AsySCD / AsyRK comparison with every O(.) constant set to 1."""
    _require(stats, "l_max", "l_res", "lambda_max", "mu")
    m, n, d = stats.m, stats.n, stats.delta
    lmin, lmax = stats.lambda_min, stats.lambda_max

    def rate(denom):
        return None if lmin is None else 1.0 - lmin / denom

    rows = [
        RateRow("RK", d * n, rate(m), 1.0, rate(d * m * n)),
        RateRow(
            "AsySCD",
            min(d * d * m * n, n),
            rate(2.0 * n * stats.l_max),
            math.sqrt(n) * stats.l_max / stats.l_res,
            rate(n**1.5 * stats.l_res * min(d * d * m, 1.0)),
        ),
        RateRow(
            "AsyRK",
            d * n,
            rate(m * (stats.mu + 1)),
            m / lmax,
            rate(d * d * n * n * lmax),
        ),
    ]
    return RateReport(tau, rows, m / (2.0 * math.e * lmax) - 1.0)
