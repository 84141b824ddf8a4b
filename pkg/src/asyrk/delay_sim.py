"""Deterministic single-threaded simulation of AsyRK with explicit staleness.

Iteration ``j`` reads iterate ``x_{k(j)}`` from a ring buffer of the last
``tau + 1`` iterates, so ``max(0, j − tau) <= k(j) <= j`` by construction.
For ``j < tau`` the read index is clipped at 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats as sps

from . import _kernels
from .errors import InvalidConfig, InvalidGamma, NonFinite, NonPositiveData, NotNormalized
from .kaczmarz import ALL, Trace, UpdateEvent
from .sparsemat import CsrMatrix
from .stepsize import StepParams

VARIANTS = {"full_row": _kernels.FULL_ROW, "single_component": _kernels.SINGLE_COMPONENT}


@dataclass(frozen=True)
class DelayModel:
    """Rule for the read index k(j).

    ``fixed`` always lags by ``tau``; ``max_staleness`` is the same adversarial
    lag named by its bound; ``uniform_random`` lags by a uniform draw from
    ``0..tau``.
    """

    kind: str = "max_staleness"
    tau: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform_random", "max_staleness"):
            raise InvalidConfig(f"unknown delay model {self.kind!r}")
        if self.tau < 0:
            raise InvalidConfig("tau must be >= 0")

    @classmethod
    def fixed(cls, d: int) -> "DelayModel":
        return cls("fixed", d)

    @classmethod
    def uniform(cls, tau: int) -> "DelayModel":
        return cls("uniform_random", tau)

    @classmethod
    def max_staleness(cls, tau: int) -> "DelayModel":
        return cls("max_staleness", tau)

    def reads(self, j0: int, count: int, rng: np.random.Generator) -> np.ndarray:
        j = np.arange(j0, j0 + count, dtype=np.int64)
        if self.kind == "uniform_random":
            lag = rng.integers(0, self.tau + 1, size=count)
        else:
            lag = self.tau
        return np.maximum(0, j - lag)


@dataclass
class SimRun:
    trace: Trace
    params: StepParams | float
    events: list[UpdateEvent] = field(default_factory=list)
    # r_sq_iter[j] = ‖Ax_j − b‖², j = 0..K, when requested
    r_sq_iter: np.ndarray | None = None
    # (iteration, dist_sq) samples every `sample_every` iterations
    dist_iter: np.ndarray | None = None
    dist_samples: np.ndarray | None = None
    history: np.ndarray | None = None


def _gamma_of(params) -> float:
    return float(params.gamma if isinstance(params, StepParams) else params)


def simulate(
    A: CsrMatrix,
    b,
    x0,
    params: StepParams | float,
    delay: DelayModel,
    K: int,
    seed: int = 0,
    variant: str = "single_component",
    *,
    distance: Callable | None = None,
    record_r_sq: bool = False,
    sample_every: int | None = None,
    record_trace: bool = True,
    max_events: int = 0,
    allow_zero_gamma: bool = False,
) -> SimRun:
    """Execute K iterations of the asynchronous recursion.

    Each iteration picks a row uniformly (drawn in per-epoch blocks of ``m``
    from ``default_rng(seed)``, the same stream :func:`rk_solve` uses), reads
    the stale iterate ``x_{k(j)}`` and applies the step to one uniformly
    chosen component of the row's support (``single_component``) or to every
    component, with increment ``−gamma·(a_iᵀx_k − b_i)/‖a_i‖²·a_i``
    (``full_row``; gamma = 1 is the exact Kaczmarz projection).

    ``distance(x)`` supplies ``dist_sq`` for the trace and for the samples
    taken every ``sample_every`` iterations.
    """
    gamma = _gamma_of(params)
    if gamma < 0 or (gamma == 0 and not allow_zero_gamma):
        raise InvalidGamma(f"gamma must be positive, got {gamma}")
    if variant not in VARIANTS:
        raise InvalidConfig(f"unknown variant {variant!r}")
    if K < 1:
        raise InvalidConfig("K must be >= 1")
    if not A.is_normalized:
        raise NotNormalized("simulator requires unit-norm rows")
    code = VARIANTS[variant]
    b = np.ascontiguousarray(b, dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    m = A.m
    row_norm_sq = A.row_norm**2

    rng_rows = np.random.default_rng(seed)
    rng_comp = np.random.default_rng([seed, 1])
    rng_delay = np.random.default_rng([seed, 2])
    hist = np.empty((delay.tau + 1, A.n))
    hist[:] = x

    trace = Trace(config_echo={
        "solver": "simulate", "epoch_unit": "m_row_events", "gamma": gamma,
        "delay": delay.kind, "tau": delay.tau, "K": K, "seed": seed, "variant": variant,
    })
    start = time.perf_counter()
    if record_trace:
        trace.record(A, b, x, 0, 0.0, 0, distance)

    r_sq_iter = None
    if record_r_sq:
        r_sq_iter = np.empty(K + 1)
        r = A.matvec(x) - b
        r_sq_iter[0] = float(r @ r)
    dist_iter, dist_samples = [], []
    if sample_every:
        dist_iter.append(0)
        dist_samples.append(distance(x))

    events: list[UpdateEvent] = []
    dummy = np.empty(0)
    j = 0
    rows_block = np.empty(0, dtype=np.int64)
    comp_block = np.empty(0)
    block_pos = 0
    while j < K:
        if block_pos == rows_block.size:
            rows_block = rng_rows.integers(0, m, size=m)
            comp_block = rng_comp.random(m)
            block_pos = 0
        # stop at the next epoch boundary, sample point or K
        stop = min(K, j + (rows_block.size - block_pos))
        if sample_every:
            stop = min(stop, (j // sample_every + 1) * sample_every)
        count = stop - j
        rows = rows_block[block_pos:block_pos + count]
        us = comp_block[block_pos:block_pos + count]
        reads = delay.reads(j, count, rng_delay)
        r_out = r_sq_iter[j + 1:stop + 1] if record_r_sq else dummy
        if len(events) < max_events:
            _log_events(events, A, b, hist, x, j, rows, us, reads, gamma, code, max_events)
        ok = _kernels.simulate_chunk(
            A.row_ptr, A.col_idx, A.values, row_norm_sq, b, x, hist, j,
            rows, us, reads, gamma, code, r_out, record_r_sq,
        )
        if not ok:
            raise NonFinite(f"iterate became non-finite before iteration {stop}")
        block_pos += count
        j = stop
        if sample_every and j % sample_every == 0:
            dist_iter.append(j)
            dist_samples.append(distance(x))
        if record_trace and (j % m == 0 or j == K):
            trace.record(A, b, x, -(-j // m), time.perf_counter() - start, j, distance)
    trace.final_x = x
    return SimRun(
        trace=trace,
        params=params,
        events=events,
        r_sq_iter=r_sq_iter,
        dist_iter=np.asarray(dist_iter) if sample_every else None,
        dist_samples=np.asarray(dist_samples) if sample_every else None,
        history=hist,
    )


def _log_events(events, A, b, hist, x, j0, rows, us, reads, gamma, code, cap):
    """Replay the first few iterations of a chunk to record UpdateEvents.

    Works on copies so the real run is untouched.
    """
    x = x.copy()
    hist = hist.copy()
    depth = hist.shape[0]
    for jj in range(rows.size):
        if len(events) >= cap:
            return
        j = j0 + jj
        hist[j % depth] = x
        i, k = int(rows[jj]), int(reads[jj])
        res = _kernels.row_residual(A.row_ptr, A.col_idx, A.values, b, hist[k % depth], i)
        if code == _kernels.FULL_ROW:
            coef = gamma * res / A.row_norm[i] ** 2
            lo, hi = A.row_ptr[i], A.row_ptr[i + 1]
            x[A.col_idx[lo:hi]] += -(coef * A.values[lo:hi])
            events.append(UpdateEvent(j, i, ALL, k, -coef))
        else:
            pos = _kernels.pick_component(A.row_ptr, i, us[jj])
            theta = A.row_ptr[i + 1] - A.row_ptr[i]
            step = -(gamma * theta * A.values[pos] * res)
            x[A.col_idx[pos]] += step
            events.append(UpdateEvent(j, i, int(A.col_idx[pos]), k, step))


@dataclass
class MonteCarloResult:
    mean_r_sq: np.ndarray
    ratios: np.ndarray
    stderr: np.ndarray


def monte_carlo_ratios(
    A, b, x0, params, delay: DelayModel, K: int, runs: int = 1000,
    seeds=None, variant: str = "single_component",
) -> MonteCarloResult:
    """Sample mean of ``‖Ax_j − b‖²`` over independent runs and its
    consecutive ratios ``mean[j+1] / mean[j]``."""
    if runs < 100:
        raise InvalidConfig("need at least 100 runs for a usable expectation")
    seeds = list(range(runs)) if seeds is None else list(seeds)[:runs]
    acc = np.zeros(K + 1)
    acc_sq = np.zeros(K + 1)
    for s in seeds:
        run = simulate(
            A, b, x0, params, delay, K, seed=s, variant=variant,
            record_r_sq=True, record_trace=False, allow_zero_gamma=True,
        )
        acc += run.r_sq_iter
        acc_sq += run.r_sq_iter**2
    n = len(seeds)
    mean = acc / n
    var = np.maximum(acc_sq / n - mean**2, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = mean[1:] / mean[:-1]
    return MonteCarloResult(mean, ratios, np.sqrt(var / n))


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float


def rate_fit(values, steps=None) -> RateFit:
    """Least-squares fit of ``log(values)`` against the iteration index.

    ``slope`` is the fitted log decay per iteration, comparable with the log
    of a predicted contraction factor.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 20:
        raise NonPositiveData(f"need at least 20 points, got {v.size}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise NonPositiveData("rate_fit needs strictly positive finite data")
    j = np.arange(v.size, dtype=np.float64) if steps is None else np.asarray(steps, dtype=np.float64)
    y = np.log(v)
    if np.ptp(y) == 0.0:
        return RateFit(0.0, float(y[0]), 1.0)
    fit = sps.linregress(j, y)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2))
