"""Sparse Gaussian test instances and the on-disk instance layout.

An instance directory holds ``A.mtx`` (Matrix Market, 1-based), ``b.txt``,
optionally ``xstar.txt``, and ``meta.json`` (generator settings plus a short
stats digest).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleSpec
from .sparsemat import (
    CsrMatrix,
    from_coo,
    normalize_rows,
    read_matrix_market,
    read_vector,
    write_matrix_market,
    write_vector,
)


@dataclass
class GenSpec:
    m: int
    n: int
    delta: float
    seed: int = 0
    consistent: bool = True
    noise_level: float = 0.0

    def nnz_target(self) -> int:
        return int(round(self.delta * self.m * self.n))

    def validate(self):
        if self.m < 1 or self.n < 1:
            raise InfeasibleSpec(f"invalid shape {self.m}x{self.n}")
        if not 0 < self.delta <= 1:
            raise InfeasibleSpec(f"delta must lie in (0, 1], got {self.delta}")
        if self.nnz_target() < self.m:
            raise InfeasibleSpec(
                f"delta*m*n = {self.nnz_target()} < m = {self.m}: some row must be empty"
            )


def _place(spec: GenSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Exactly ``round(delta*m*n)`` distinct positions, every row occupied.

    Each empty row gets one random position, paid for by removing a random
    position from a row holding two or more, so the total is unchanged.
    """
    m, n = spec.m, spec.n
    flat = rng.choice(m * n, size=spec.nnz_target(), replace=False)
    rows, cols = np.divmod(flat, n)
    counts = np.bincount(rows, minlength=m)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        rows, cols = rows.copy(), cols.copy()
        for r in empty:
            donors = np.flatnonzero(counts[rows] >= 2)
            k = donors[rng.integers(donors.size)]
            counts[rows[k]] -= 1
            rows[k], cols[k] = r, rng.integers(n)
            counts[r] += 1
    return rows, cols


def gen_sparse_gaussian(spec: GenSpec) -> tuple[CsrMatrix, np.ndarray, np.ndarray]:
    """Random sparse system with N(0, 1) nonzeros and unit-norm rows.

    Returns ``(A, b, x_star)``. Consistent instances have ``b = A x_star``.
    Inconsistent ones add ``noise_level`` times a unit vector orthogonal to
    range(A), so ``x_star`` is still a least-squares solution.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    rows, cols = _place(spec, rng)
    vals = rng.standard_normal(rows.size)
    A = from_coo(rows, cols, vals, spec.m, spec.n)
    A, _ = normalize_rows(A, np.zeros(spec.m))
    x_star = rng.standard_normal(spec.n)
    b = A.matvec(x_star)
    if not spec.consistent:
        w = _orthogonal_to_range(A, rng)
        b = b + spec.noise_level * w
    return A, b, x_star


def _orthogonal_to_range(A: CsrMatrix, rng) -> np.ndarray:
    dense = A.to_dense()
    u, s, _ = np.linalg.svd(dense, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s[0]))
    if rank >= A.m:
        raise InfeasibleSpec("range(A) is all of R^m; an inconsistent b is impossible")
    comp = u[:, rank:]
    w = comp @ rng.standard_normal(comp.shape[1])
    return w / np.linalg.norm(w)


# -- instance directories ---------------------------------------------------

@dataclass
class Instance:
    A: CsrMatrix
    b: np.ndarray
    x_star: np.ndarray | None
    meta: dict


def write_instance(path, A: CsrMatrix, b, x_star=None, meta: dict | None = None) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_market(out / "A.mtx", A)
    write_vector(out / "b.txt", b)
    if x_star is not None:
        write_vector(out / "xstar.txt", x_star)
    digest = {
        "m": A.m,
        "n": A.n,
        "nnz": A.nnz,
        "delta": A.nnz / (A.m * A.n),
        "mu": int(A.theta.max()),
        "nu": int(A.column_counts().max()),
    }
    (out / "meta.json").write_text(json.dumps({**(meta or {}), "digest": digest}, indent=2))
    return out


def write_generated(path, spec: GenSpec) -> Instance:
    A, b, x_star = gen_sparse_gaussian(spec)
    meta = {"generator": "sparse_gaussian", "spec": asdict(spec)}
    write_instance(path, A, b, x_star, meta)
    return Instance(A, b, x_star, meta)


def read_instance(path) -> Instance:
    src = Path(path)
    if not (src / "A.mtx").is_file():
        raise FileNotFoundError(f"no A.mtx in instance directory {src}")
    A = read_matrix_market(src / "A.mtx")
    b = read_vector(src / "b.txt")
    xs = src / "xstar.txt"
    meta_path = src / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Instance(A, b, read_vector(xs) if xs.exists() else None, meta)


def gen_near_tight_frame(
    n: int, copies: int = 2, block: int = 5, perturb: float = 0.3, seed: int = 0
) -> tuple[CsrMatrix, np.ndarray, np.ndarray]:
    """Stack of ``copies`` sparse orthogonal n×n matrices, perturbed on their
    pattern and row-normalized.

    Each copy is a column-permuted block-diagonal matrix of random orthogonal
    ``block``×``block`` blocks, so with ``perturb=0`` AᵀA = copies·I. A small
    perturbation spreads the spectrum around ``copies`` while keeping
    lambda_max close to m/n, the smallest value row normalization allows.
    """
    if n % block:
        raise InfeasibleSpec(f"n={n} is not a multiple of block={block}")
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    for c in range(copies):
        perm = rng.permutation(n)
        for start in range(0, n, block):
            q, _ = np.linalg.qr(rng.standard_normal((block, block)))
            q = q + perturb * rng.standard_normal((block, block)) / np.sqrt(block)
            r_idx = c * n + start + np.arange(block)
            c_idx = perm[start:start + block]
            rows.append(np.repeat(r_idx, block))
            cols.append(np.tile(c_idx, block))
            vals.append(q.ravel())
    m = copies * n
    A = from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), m, n)
    A, _ = normalize_rows(A, np.zeros(m))
    x_star = rng.standard_normal(n)
    return A, A.matvec(x_star), x_star
