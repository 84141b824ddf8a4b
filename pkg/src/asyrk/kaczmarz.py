"""Serial randomized Kaczmarz, the AsyRK single-component update, and the
projection onto the solution set used as a distance oracle.

Randomness: every stream is a numpy ``PCG64`` generator from
``numpy.random.default_rng``. Row choices for a run with base seed ``s`` come
from ``default_rng(s)``; worker ``w`` of the parallel executor uses
``default_rng(s ^ w)``, so worker 0 shares the serial stream. Component draws
use the independent stream ``default_rng([s ^ w, 1])``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    ComponentNotInSupport,
    DimensionMismatch,
    Inconsistent,
    InvalidConfig,
    NonFinite,
    NotNormalized,
    TooLarge,
    ZeroRow,
)
from .sparsemat import DENSE_CAP, RANK_RTOL, CsrMatrix, residuals

SCHEMA_VERSION = 1
ALL = -1  # UpdateEvent.t for full-row updates
SAMPLING_MODES = ("uniform", "norm_proportional", "shuffle")


class UpdateEvent(NamedTuple):
    j: int
    i: int
    t: int
    k: int
    step: float


@dataclass
class EpochRecord:
    epoch_index: int
    r_sq: float
    grad_sq: float
    dist_sq: float | None
    wall_seconds: float
    updates_applied: int
    # the same progress measured in n-iteration epochs
    n_epochs: float = 0.0


TRACE_FIELDS = [
    "epoch_index", "r_sq", "grad_sq", "dist_sq",
    "wall_seconds", "updates_applied", "n_epochs",
]


@dataclass
class Trace:
    """Per-epoch convergence record of one run.

    One epoch is ``m`` row events; ``n_epochs`` carries the count in units of
    ``n`` iterations for comparison with n-based plots.
    """

    epochs: list[EpochRecord] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    final_x: np.ndarray | None = None

    def record(self, A: CsrMatrix, b, x, epoch, wall, updates, distance=None):
        res = residuals(A, x, b)
        dist = None if distance is None else float(distance(x))
        rec = EpochRecord(
            epoch_index=epoch,
            r_sq=res.r_sq,
            grad_sq=res.grad_sq,
            dist_sq=dist,
            wall_seconds=wall,
            updates_applied=updates,
            n_epochs=updates / A.n,
        )
        self.epochs.append(rec)
        return rec

    @property
    def last(self) -> EpochRecord:
        return self.epochs[-1]

    def numeric_rows(self) -> list[tuple]:
        """Every field except wall time, for reproducibility comparisons."""
        return [
            (e.epoch_index, e.r_sq, e.grad_sq, e.dist_sq, e.updates_applied)
            for e in self.epochs
        ]

    def epochs_to(self, target_r_sq: float) -> int | None:
        for e in self.epochs:
            if e.r_sq <= target_r_sq:
                return e.epoch_index
        return None

    def to_jsonl(self) -> str:
        header = {"schema": SCHEMA_VERSION, "kind": "header", "config": self.config_echo}
        lines = [json.dumps(header)]
        for e in self.epochs:
            lines.append(json.dumps({"schema": SCHEMA_VERSION, "kind": "epoch", **asdict(e)}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        trace = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("kind") == "header":
                trace.config_echo = obj["config"]
            else:
                trace.epochs.append(EpochRecord(**{k: obj[k] for k in TRACE_FIELDS}))
        return trace

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n")
        w.writeheader()
        for e in self.epochs:
            row = asdict(e)
            if row["dist_sq"] is None:
                row["dist_sq"] = ""
            w.writerow(row)
        return buf.getvalue()


def _check_dims(A: CsrMatrix, b, x):
    if np.shape(b) != (A.m,) or np.shape(x) != (A.n,):
        raise DimensionMismatch(
            f"A is {A.m}x{A.n}, got b{np.shape(b)} and x{np.shape(x)}"
        )


def rk_step(A: CsrMatrix, b, x, i: int) -> np.ndarray:
    """Project ``x`` orthogonally onto the hyperplane ``a_iᵀz = b_i``."""
    x = np.asarray(x, dtype=np.float64)
    _check_dims(A, b, x)
    if A.row_norm[i] == 0.0:
        raise ZeroRow(f"row {i} is zero")
    cols, vals = A.row(i)
    res = float(vals @ x[cols]) - b[i]
    out = x.copy()
    out[cols] -= (res / A.row_norm[i] ** 2) * vals
    return out


def asyrk_update(A: CsrMatrix, b, i: int, t: int, gamma: float, x_read) -> float:
    """Increment for component ``t`` computed from a possibly stale read.

    Returns ``-gamma * theta_i * (a_i)_t * (a_iᵀx_read - b_i)``; the caller
    adds it to component ``t`` of the live vector.
    """
    cols, vals = A.row(i)
    pos = np.searchsorted(cols, t)
    if pos >= cols.size or cols[pos] != t:
        raise ComponentNotInSupport(f"column {t} is not in supp(a_{i})")
    x_read = np.asarray(x_read, dtype=np.float64)
    res = _kernels.row_residual(A.row_ptr, A.col_idx, A.values, np.asarray(b, dtype=np.float64), x_read, i)
    return -(gamma * cols.size * vals[pos] * res)


class AliasSampler:
    """Walker/Vose alias table for O(1) draws from a discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        k = w.size
        p = w * (k / w.sum())
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if p[i] < 1.0]
        large = [i for i in range(k) if p[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = p[s]
            self.alias[s] = g
            p[g] = (p[g] + p[s]) - 1.0
            (small if p[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, self.prob.size, size=size)
        coin = rng.random(size)
        return np.where(coin < self.prob[idx], idx, self.alias[idx])


@dataclass
class RKConfig:
    max_epochs: int = 100
    target_r_sq: float = 0.0
    seed: int = 0
    sampling: str = "uniform"


class SolutionSetDistance:
    """Dense pseudoinverse oracle for the solution set ``{z : Az = b}``.

    ``project(x) = x − A⁺(Ax − b)`` and ``self(x) = ‖A⁺(Ax − b)‖²``, the
    squared distance from ``x`` to its projection.
    """

    def __init__(self, A: CsrMatrix, b, dense_cap: int = DENSE_CAP, check: bool = True):
        if A.m * A.n > dense_cap:
            raise TooLarge(f"{A.m}x{A.n} exceeds dense cap of {dense_cap} entries")
        self.A = A
        self.b = np.asarray(b, dtype=np.float64)
        dense = A.to_dense()
        self.pinv = np.linalg.pinv(dense, rcond=RANK_RTOL)
        self._dense = dense
        if check:
            z = self.pinv @ self.b
            gap = np.linalg.norm(dense @ z - self.b)
            if gap > 1e-8 * max(1.0, np.linalg.norm(self.b)):
                raise Inconsistent(f"b is not in range(A): ‖Az − b‖ = {gap:.3e}")

    def correction(self, x) -> np.ndarray:
        return self.pinv @ (self._dense @ x - self.b)

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x - self.correction(x)

    def __call__(self, x) -> float:
        c = self.correction(np.asarray(x, dtype=np.float64))
        return float(c @ c)


def project_solution_set(A: CsrMatrix, b, x, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``{z : Az = b}`` (dense)."""
    x = np.asarray(x, dtype=np.float64)
    _check_dims(A, b, x)
    return SolutionSetDistance(A, b, dense_cap).project(x)


def epoch_rows(A: CsrMatrix, rng: np.random.Generator, sampling: str, alias=None):
    if sampling == "uniform":
        return rng.integers(0, A.m, size=A.m)
    if sampling == "shuffle":
        return rng.permutation(A.m)
    return alias.sample(rng, A.m)


def rk_solve(
    A: CsrMatrix,
    b,
    x0,
    cfg: RKConfig | None = None,
    *,
    distance: Callable | None = None,
    callback: Callable[[np.ndarray, EpochRecord], bool] | None = None,
) -> Trace:
    """Serial randomized Kaczmarz, ``m`` projections per epoch.

    ``sampling`` is ``uniform`` (with replacement), ``shuffle`` (a fresh
    permutation per epoch) or ``norm_proportional`` (probability
    ``‖a_i‖²/‖A‖_F²`` via an alias table, for unnormalized systems).
    ``distance(x)`` if given fills ``dist_sq``; ``callback(x, record)``
    returning True stops the run.
    """
    cfg = cfg or RKConfig()
    if cfg.sampling not in SAMPLING_MODES:
        raise InvalidConfig(f"unknown sampling {cfg.sampling!r}")
    b = np.ascontiguousarray(b, dtype=np.float64)
    x = np.array(x0, dtype=np.float64, copy=True)
    _check_dims(A, b, x)
    if cfg.sampling != "norm_proportional" and not A.is_normalized:
        raise NotNormalized(f"{cfg.sampling} sampling requires unit-norm rows")
    alias = AliasSampler(A.row_norm**2) if cfg.sampling == "norm_proportional" else None
    rng = np.random.default_rng(cfg.seed)
    row_norm_sq = A.row_norm**2

    trace = Trace(config_echo={"solver": "rk", "epoch_unit": "m_row_events", **asdict(cfg)})
    start = time.perf_counter()
    rec = trace.record(A, b, x, 0, 0.0, 0, distance)
    updates = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if rec.r_sq <= cfg.target_r_sq or (callback is not None and callback(x, rec)):
            break
        rows = epoch_rows(A, rng, cfg.sampling, alias)
        _kernels.rk_sweep(A.row_ptr, A.col_idx, A.values, row_norm_sq, b, x, rows, 1.0)
        updates += A.m
        if not np.all(np.isfinite(x)):
            raise NonFinite(f"iterate became non-finite in epoch {epoch}")
        rec = trace.record(A, b, x, epoch, time.perf_counter() - start, updates, distance)
        if not np.isfinite(rec.r_sq):
            raise NonFinite(f"residual overflowed in epoch {epoch}")
    trace.final_x = x
    return trace


def dist_sq_to(x_star) -> Callable[[np.ndarray], float]:
    """Distance function to a fixed precomputed solution."""
    x_star = np.asarray(x_star, dtype=np.float64)

    def f(x):
        d = x - x_star
        return float(d @ d)

    return f

