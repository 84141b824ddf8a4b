"""Row-compressed sparse matrices and the structural/spectral quantities of A.

The solver kernels consume the raw ``row_ptr``/``col_idx``/``values`` arrays
directly; scipy is used for matrix-vector products and Matrix Market I/O.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    DuplicateEntry,
    IndexOutOfRange,
    NotNormalized,
    PowerIterationDiverged,
    TooLarge,
    ZeroRow,
)

NORM_TOL = 1e-12
# singular values below RANK_RTOL * sigma_max count as zero
RANK_RTOL = 1e-10
DENSE_CAP = 25_000_000


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Immutable CSR matrix with cached Euclidean row norms.

    Safe to share between threads by reference. Build it with
    :func:`from_triplets`, :func:`from_scipy` or :func:`from_dense` so the
    invariants (sorted columns, no stored zeros, no empty rows) hold.
    """

    m: int
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    row_norm: np.ndarray = field(repr=False)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def theta(self) -> np.ndarray:
        """Nonzero count of each row."""
        return np.diff(self.row_ptr)

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(np.abs(self.row_norm - 1.0) <= NORM_TOL))

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    @property
    def frob_sq(self) -> float:
        return float(np.sum(self.values**2))

    def column_norms(self) -> np.ndarray:
        sq = np.bincount(self.col_idx, weights=self.values**2, minlength=self.n)
        return np.sqrt(sq)

    def column_counts(self) -> np.ndarray:
        return np.bincount(self.col_idx, minlength=self.n)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=(self.m, self.n)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def to_triplets(self) -> list[tuple[int, int, float]]:
        rows = np.repeat(np.arange(self.m), self.theta)
        return [
            (int(r), int(c), float(v))
            for r, c, v in zip(rows, self.col_idx, self.values)
        ]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        return self.to_scipy().T @ y


def _build(m, n, row_ptr, col_idx, values) -> CsrMatrix:
    row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
    col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    theta = np.diff(row_ptr)
    empty = np.flatnonzero(theta == 0)
    if empty.size:
        raise ZeroRow(f"row {int(empty[0])} has no nonzero entries")
    rows = np.repeat(np.arange(m), theta)
    row_norm = np.sqrt(np.bincount(rows, weights=values**2, minlength=m))
    for arr in (row_ptr, col_idx, values, row_norm):
        arr.setflags(write=False)
    return CsrMatrix(int(m), int(n), row_ptr, col_idx, values, row_norm)


def from_triplets(
    entries: Iterable[tuple[int, int, float]], m: int, n: int
) -> CsrMatrix:
    """Build a CSR matrix from ``(row, col, value)`` triplets.

    Duplicates are rejected rather than summed. Explicit zero values are
    dropped; a row left with no nonzeros raises :class:`ZeroRow`.
    """
    entries = list(entries)
    if entries:
        rows, cols, vals = zip(*entries)
    else:
        rows = cols = vals = ()
    return from_coo(rows, cols, vals, m, n)


def from_coo(rows, cols, vals, m: int, n: int) -> CsrMatrix:
    """Array form of :func:`from_triplets`."""
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    cols = np.asarray(cols, dtype=np.int64).reshape(-1)
    vals = np.asarray(vals, dtype=np.float64).reshape(-1)
    if m < 1 or n < 1:
        raise DimensionMismatch(f"invalid shape ({m}, {n})")
    bad = (rows < 0) | (rows >= m) | (cols < 0) | (cols >= n)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise IndexOutOfRange(
            f"entry ({int(rows[k])}, {int(cols[k])}) outside {m}x{n}"
        )
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
    if np.any(dup):
        k = int(np.flatnonzero(dup)[0])
        raise DuplicateEntry(f"duplicate entry at ({int(rows[k])}, {int(cols[k])})")
    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    row_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=row_ptr[1:])
    return _build(m, n, row_ptr, cols, vals)


def from_scipy(mat) -> CsrMatrix:
    csr = sp.csr_matrix(mat, dtype=np.float64, copy=True)
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    m, n = csr.shape
    return _build(m, n, csr.indptr, csr.indices, csr.data)


def from_dense(arr) -> CsrMatrix:
    return from_scipy(sp.csr_matrix(np.asarray(arr, dtype=np.float64)))


def normalize_rows(A: CsrMatrix, b: np.ndarray) -> tuple[CsrMatrix, np.ndarray]:
    """Scale every row of ``A`` and entry of ``b`` by the row norm.

    The solution set of ``Ax = b`` is unchanged. Rows already within
    ``NORM_TOL`` of unit length are left bit-identical.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.m,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({A.m},)")
    if np.any(A.row_norm == 0.0):
        raise ZeroRow("cannot normalize a zero row")
    scale = np.where(np.abs(A.row_norm - 1.0) <= NORM_TOL, 1.0, A.row_norm)
    values = A.values / np.repeat(scale, A.theta)
    return _build(A.m, A.n, A.row_ptr, A.col_idx, values), b / scale


@dataclass
class SystemStats:
    """Derived scalars of a row-normalized matrix.

    ``lambda_min`` (smallest nonzero eigenvalue of AᵀA) and ``sigma_r`` are
    ``None`` unless computed by dense SVD or supplied by the user.
    """

    m: int
    n: int
    nnz: int
    delta: float
    theta: list[int]
    mu: int
    nu: int
    alpha: float
    lambda_min: float | None
    lambda_max: float
    frob_sq: float
    l_max: float
    l_res: float
    sigma_r: float | None
    spectral_method: str = "svd"

    def to_dict(self, include_theta: bool = True) -> dict:
        d = asdict(self)
        if not include_theta:
            d.pop("theta")
        return d

    def to_json(self, include_theta: bool = False) -> str:
        return json.dumps(self.to_dict(include_theta), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemStats":
        d = dict(d)
        d.setdefault("theta", [])
        d.setdefault("spectral_method", "svd")
        return cls(**d)

    def with_lambda_min(self, lambda_min: float) -> "SystemStats":
        d = asdict(self)
        d["lambda_min"] = float(lambda_min)
        d["sigma_r"] = math.sqrt(lambda_min)
        return SystemStats(**d)


def singular_values(A: CsrMatrix, dense_cap: int = DENSE_CAP) -> np.ndarray:
    if A.m * A.n > dense_cap:
        raise TooLarge(f"{A.m}x{A.n} exceeds dense cap of {dense_cap} entries")
    return np.linalg.svd(A.to_dense(), compute_uv=False)


def power_iteration(
    A: CsrMatrix, tol: float = 1e-8, max_iter: int = 20_000, seed: int = 0
) -> float:
    """Largest eigenvalue of AᵀA by power iteration.

    Stops when the eigen-residual ``‖AᵀAv − λv‖`` falls below ``tol·λ``.
    """
    csr = A.to_scipy()
    csc = csr.T.tocsr()
    v = np.random.default_rng(seed).standard_normal(A.n)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = csc @ (csr @ v)
        lam = float(v @ w)
        if not np.isfinite(lam):
            break
        if np.linalg.norm(w - lam * v) <= tol * lam:
            return lam
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    raise PowerIterationDiverged(
        f"power iteration did not reach tol={tol} within {max_iter} iterations"
    )


def compute_stats(
    A: CsrMatrix,
    exact_spectral: bool = True,
    tol: float = 1e-8,
    max_iter: int = 20_000,
    dense_cap: int = DENSE_CAP,
    lambda_min: float | None = None,
) -> SystemStats:
    """Compute :class:`SystemStats` for a row-normalized ``A``.

    With ``exact_spectral`` the extreme eigenvalues of AᵀA come from a dense
    SVD; otherwise ``lambda_max`` is found by power iteration and
    ``lambda_min`` is taken from the argument (possibly ``None``).
    """
    if not A.is_normalized:
        worst = float(np.max(np.abs(A.row_norm - 1.0)))
        raise NotNormalized(f"rows not unit norm (max deviation {worst:.3e})")
    theta = A.theta
    col_counts = A.column_counts()
    col_norms = A.column_norms()
    theta_nz = np.repeat(theta, theta)
    alpha = float(np.max(theta_nz * np.abs(A.values) * col_norms[A.col_idx]))
    csr = A.to_scipy()
    gram = (csr.T @ csr).tocsr()
    l_res = float(np.sqrt(np.max(gram.multiply(gram).sum(axis=1))))

    if exact_spectral:
        s = singular_values(A, dense_cap)
        lam_max = float(s[0] ** 2)
        nonzero = s[s > RANK_RTOL * s[0]]
        lam_min = float(nonzero[-1] ** 2)
        method = "svd"
    else:
        lam_max = power_iteration(A, tol=tol, max_iter=max_iter)
        lam_min = None if lambda_min is None else float(lambda_min)
        method = "power"
    return SystemStats(
        m=A.m,
        n=A.n,
        nnz=A.nnz,
        delta=A.nnz / (A.m * A.n),
        theta=theta.tolist(),
        mu=int(theta.max()),
        nu=int(col_counts.max()),
        alpha=alpha,
        lambda_min=lam_min,
        lambda_max=lam_max,
        frob_sq=A.frob_sq,
        l_max=float(np.max(col_norms**2)),
        l_res=l_res,
        sigma_r=None if lam_min is None else math.sqrt(lam_min),
        spectral_method=method,
    )


class Residuals(NamedTuple):
    r: np.ndarray
    r_sq: float
    grad_sq: float


def residuals(A: CsrMatrix, x: np.ndarray, b: np.ndarray) -> Residuals:
    """Return ``r = Ax − b``, ``‖r‖²`` and ``‖Aᵀr‖²``."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.shape != (A.n,) or b.shape != (A.m,):
        raise DimensionMismatch(
            f"A is {A.m}x{A.n}, got x{x.shape} and b{b.shape}"
        )
    csr = A.to_scipy()
    r = csr @ x - b
    g = csr.T @ r
    return Residuals(r, float(r @ r), float(g @ g))


# -- file formats -----------------------------------------------------------

def write_matrix_market(path, A: CsrMatrix) -> None:
    scipy.io.mmwrite(str(path), A.to_scipy().tocoo(), precision=17)


def read_matrix_market(path) -> CsrMatrix:
    coo = sp.coo_matrix(scipy.io.mmread(str(path)))
    return from_coo(coo.row, coo.col, coo.data, *coo.shape)


def write_vector(path, v) -> None:
    np.savetxt(Path(path), np.asarray(v, dtype=np.float64), fmt="%.17g")


def read_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(Path(path), dtype=np.float64))
