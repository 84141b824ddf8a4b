"""Lock-free multicore AsyRK.

Workers are Python threads running ``nogil`` numba kernels against one
shared float64 vector. Reads of ``x`` are unlocked element loads and every
write is a single-element compare-and-swap add, so no mutual-exclusion
primitive ever guards the solution vector. Workers rendezvous only between
snapshot intervals, when the coordinator measures the residual.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidConfig, NonFinite, NotNormalized, ThreadSpawnFailure
from .kaczmarz import Trace, _check_dims
from .sparsemat import CsrMatrix, SystemStats, compute_stats
from .stepsize import corollary_params

VARIANTS = {"full_row": _kernels.FULL_ROW, "single_component": _kernels.SINGLE_COMPONENT}
SAMPLINGS = ("with_replacement", "slice_shuffle")


def default_threads() -> int:
    env = os.environ.get("ASYRK_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


@dataclass
class RunConfig:
    """Executor settings. ``gamma`` may be a number, ``"corollary"`` (1/psi
    with tau = threads − 1 unless ``tau`` is set) or ``"one"``."""

    threads: int = 1
    gamma: float | str = "corollary"
    epochs: int = 100
    target_r_sq: float = 0.0
    variant: str = "full_row"
    sampling: str = "slice_shuffle"
    seed: int = 0
    snapshot_interval: int = 1
    tau: int | None = None

    def validate(self):
        if self.threads < 1:
            raise InvalidConfig("threads must be >= 1")
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"unknown variant {self.variant!r}")
        if self.sampling not in SAMPLINGS:
            raise InvalidConfig(f"unknown sampling {self.sampling!r}")
        if self.snapshot_interval < 1:
            raise InvalidConfig("snapshot_interval must be >= 1")
        if isinstance(self.gamma, str):
            if self.gamma not in ("corollary", "one"):
                raise InvalidConfig(f"unknown gamma preset {self.gamma!r}")
        elif not self.gamma > 0:
            raise InvalidConfig("gamma must be positive")


def resolve_gamma(A: CsrMatrix, cfg: RunConfig, stats: SystemStats | None = None) -> tuple[float, str]:
    """Numeric step length and a short note on where it came from.

    ``"corollary"`` falls back to gamma = 1 when the feasibility condition
    fails for the chosen tau.
    """
    if not isinstance(cfg.gamma, str):
        return float(cfg.gamma), "explicit"
    if cfg.gamma == "one":
        return 1.0, "one"
    tau = cfg.threads - 1 if cfg.tau is None else cfg.tau
    if stats is None:
        stats = compute_stats(A, exact_spectral=A.m * A.n <= 4_000_000)
    params = corollary_params(stats, tau)
    if not params.usable:
        return 1.0, f"one (corollary infeasible for tau={tau})"
    return params.gamma, f"corollary (tau={tau})"


@dataclass
class AuditLog:
    """Every increment applied by an instrumented run."""

    columns: list[np.ndarray] = field(default_factory=list)
    increments: list[np.ndarray] = field(default_factory=list)
    applied: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))

    @property
    def count(self) -> int:
        return int(sum(c.size for c in self.columns))

    def net_change(self, n: int) -> np.ndarray:
        total = np.zeros(n)
        for c, d in zip(self.columns, self.increments):
            np.add.at(total, c, d)
        return total


class _Worker:
    def __init__(self, w, slice_rows, m, cfg):
        self.rows = slice_rows
        self.m = m
        self.cfg = cfg
        base = cfg.seed ^ w
        self.rng = np.random.default_rng(base)
        self.rng_comp = np.random.default_rng([base, 1])

    def schedule(self, epochs: int):
        parts, us = [], []
        for _ in range(epochs):
            if self.cfg.sampling == "slice_shuffle":
                parts.append(self.rows[self.rng.permutation(self.rows.size)])
            else:
                parts.append(self.rng.integers(0, self.m, size=self.rows.size))
            if self.cfg.variant == "single_component":
                us.append(self.rng_comp.random(self.rows.size))
        rows = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        u = np.concatenate(us) if us else np.empty(0)
        return rows, u


def solve_parallel(
    A: CsrMatrix,
    b,
    x0,
    cfg: RunConfig,
    *,
    stats: SystemStats | None = None,
    distance=None,
    audit: AuditLog | None = None,
) -> Trace:
    """Run ``cfg.threads`` lock-free workers until ``cfg.epochs`` or target.

    Rows are split into equal contiguous slices, one per worker. One epoch is
    ``m`` row events in total, i.e. one scan of each slice.
    """
    cfg.validate()
    if not A.is_normalized:
        raise NotNormalized("parallel solver requires unit-norm rows")
    if cfg.sampling == "slice_shuffle" and A.m < cfg.threads:
        raise InvalidConfig(f"m={A.m} rows cannot be split into {cfg.threads} slices")
    b = np.ascontiguousarray(b, dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    _check_dims(A, b, x)
    gamma, source = resolve_gamma(A, cfg, stats)
    code = VARIANTS[cfg.variant]
    row_norm_sq = A.row_norm**2
    slices = np.array_split(np.arange(A.m, dtype=np.int64), cfg.threads)
    workers = [_Worker(w, s, A.m, cfg) for w, s in enumerate(slices)]
    width = A.theta.max() if cfg.variant == "full_row" else 1
    empty_t, empty_d = np.empty(0, dtype=np.int64), np.empty(0)
    applied = audit.applied if audit is not None else np.zeros(1, dtype=np.int64)

    def run(worker: _Worker, epochs: int):
        rows, us = worker.schedule(epochs)
        if audit is not None:
            log_t = np.empty(rows.size * width, dtype=np.int64)
            log_d = np.empty(rows.size * width)
        else:
            log_t, log_d = empty_t, empty_d
        k = _kernels.asyrk_worker(
            A.row_ptr, A.col_idx, A.values, row_norm_sq, b, x, rows, us,
            gamma, code, log_t, log_d, applied,
        )
        return log_t[:k], log_d[:k]

    echo = {"solver": "asyrk", "epoch_unit": "m_row_events", **asdict(cfg), "gamma_value": gamma,
            "gamma_source": source}
    trace = Trace(config_echo=echo)
    start = time.perf_counter()
    rec = trace.record(A, b, x, 0, 0.0, 0, distance)
    epoch = 0
    with ThreadPoolExecutor(max_workers=cfg.threads, thread_name_prefix="asyrk") as pool:
        while epoch < cfg.epochs and rec.r_sq > cfg.target_r_sq:
            chunk = min(cfg.snapshot_interval, cfg.epochs - epoch)
            try:
                futures = [pool.submit(run, w, chunk) for w in workers]
            except RuntimeError as exc:
                raise ThreadSpawnFailure(str(exc)) from exc
            logs = [f.result() for f in futures]
            if audit is not None:
                for t, d in logs:
                    audit.columns.append(t)
                    audit.increments.append(d)
            epoch += chunk
            if not np.all(np.isfinite(x)):
                raise NonFinite(f"iterate became non-finite by epoch {epoch}")
            rec = trace.record(
                A, b, x, epoch, time.perf_counter() - start, epoch * A.m, distance
            )
            if not np.isfinite(rec.r_sq):
                raise NonFinite(f"residual overflowed by epoch {epoch}")
    trace.final_x = x
    return trace


@dataclass
class SpeedupRow:
    threads: int
    wall_seconds: float
    epochs: int
    reached_target: bool
    final_r_sq: float
    speedup: float


@dataclass
class SpeedupReport:
    target_r_sq: float
    rows: list[SpeedupRow]

    def to_dict(self):
        return {"target_r_sq": self.target_r_sq, "rows": [asdict(r) for r in self.rows]}

    def to_csv(self) -> str:
        head = "threads,wall_seconds,epochs,reached_target,final_r_sq,speedup"
        lines = [head] + [
            f"{r.threads},{r.wall_seconds},{r.epochs},{int(r.reached_target)},{r.final_r_sq},{r.speedup}"
            for r in self.rows
        ]
        return "\n".join(lines) + "\n"


def sweep_threads(A, b, x0, cfg: RunConfig, thread_list, stats=None) -> SpeedupReport:
    """Solve once per thread count; speedup(t) = wall(1) / wall(t)."""
    thread_list = list(thread_list)
    if not thread_list or 1 not in thread_list:
        raise InvalidConfig("thread_list must be nonempty and contain 1")
    rows = []
    for t in thread_list:
        run_cfg = RunConfig(**{**asdict(cfg), "threads": t})
        trace = solve_parallel(A, b, x0, run_cfg, stats=stats)
        last = trace.last
        rows.append(SpeedupRow(
            threads=t,
            wall_seconds=last.wall_seconds,
            epochs=last.epoch_index,
            reached_target=last.r_sq <= cfg.target_r_sq,
            final_r_sq=last.r_sq,
            speedup=0.0,
        ))
    base = next(r for r in rows if r.threads == 1).wall_seconds
    for r in rows:
        r.speedup = base / r.wall_seconds if r.wall_seconds > 0 else 1.0
    return SpeedupReport(cfg.target_r_sq, rows)
