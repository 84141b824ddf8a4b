"""Least squares through the square consistent augmented system

    [ 0    φAᵀ ] [x]   [φAᵀb]
    [ A    −ζI ] [y] = [ 0  ]

whose x-block equals ζ times the least-squares solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonPositiveSigma, NotConverged, NotNormalized, SigmaUnavailable, ZeroColumn
from .kaczmarz import RKConfig, Trace, rk_solve
from .parallel import RunConfig, solve_parallel
from .sparsemat import DENSE_CAP, CsrMatrix, from_scipy, normalize_rows, singular_values, RANK_RTOL


def optimal_params(sigma_r: float) -> tuple[float, float]:
    """Return ``(phi, zeta) = (1, sigma_r / sqrt(2))``."""
    if not sigma_r > 0:
        raise NonPositiveSigma(f"sigma_r must be positive, got {sigma_r}")
    return 1.0, sigma_r / math.sqrt(2.0)


def ratio_branches(sigma_r, frob_sq, m, zeta, phi) -> tuple[float, float]:
    denom = (1.0 + phi * phi) * frob_sq + m * zeta * zeta
    other = -zeta / 2.0 + 0.5 * math.sqrt(zeta * zeta + 4.0 * phi * sigma_r * sigma_r)
    return zeta * zeta / denom, other * other / denom


def critical_ratio(sigma_r: float, frob_sq: float, m: int, zeta: float, phi: float) -> float:
    """Smallest nonzero squared singular value of the augmented matrix over
    its squared Frobenius norm."""
    if min(sigma_r, frob_sq, m, zeta, phi) <= 0:
        raise ValueError("all inputs must be positive")
    return min(ratio_branches(sigma_r, frob_sq, m, zeta, phi))


@dataclass
class AugmentedSystem:
    a_tilde: CsrMatrix
    b_tilde: np.ndarray
    zeta: float
    phi: float
    n: int
    m: int
    row_scales: np.ndarray = field(repr=False)
    raw: CsrMatrix | None = field(default=None, repr=False)
    raw_b: np.ndarray | None = field(default=None, repr=False)

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        return z[: self.n], z[self.n:]


def _raw_blocks(A: CsrMatrix, b, zeta, phi):
    a = A.to_scipy()
    top = sp.hstack([sp.csr_matrix((A.n, A.n)), phi * a.T])
    bottom = sp.hstack([a, -zeta * sp.identity(A.m, format="csr")])
    mat = sp.vstack([top, bottom]).tocsr()
    rhs = np.concatenate([phi * (a.T @ b), np.zeros(A.m)])
    return mat, rhs


def augment(A: CsrMatrix, b, zeta: float, phi: float) -> AugmentedSystem:
    """Build the augmented system and rescale its rows to unit norm.

    The unscaled matrix and right-hand side are kept in ``raw``/``raw_b``.
    """
    if not A.is_normalized:
        raise NotNormalized("augment expects a row-normalized A")
    if zeta <= 0 or phi <= 0:
        raise ValueError("zeta and phi must be positive")
    empty = np.flatnonzero(A.column_counts() == 0)
    if empty.size:
        raise ZeroColumn(
            f"column {int(empty[0])} of A is empty; drop that variable first"
        )
    b = np.asarray(b, dtype=np.float64)
    mat, rhs = _raw_blocks(A, b, zeta, phi)
    raw = from_scipy(mat)
    scaled, rhs_scaled = normalize_rows(raw, rhs)
    return AugmentedSystem(
        a_tilde=scaled, b_tilde=rhs_scaled, zeta=zeta, phi=phi, n=A.n, m=A.m,
        row_scales=raw.row_norm.copy(), raw=raw, raw_b=rhs,
    )


def smallest_singular_value(A: CsrMatrix, dense_cap: int = DENSE_CAP) -> float:
    s = singular_values(A, dense_cap)
    return float(s[s > RANK_RTOL * s[0]][-1])


@dataclass
class LsqConfig:
    tol: float = 1e-9
    max_epochs: int = 20_000
    seed: int = 0
    solver: str = "rk"
    threads: int = 1
    gamma: float | str = "one"
    sigma_r: float | None = None
    zeta: float | None = None
    phi: float | None = None
    check_every: int = 10
    dense_cap: int = DENSE_CAP


@dataclass
class LsqResult:
    x_ls: np.ndarray
    trace: Trace
    system: AugmentedSystem
    grad_norm: float


def lsq_solve(A: CsrMatrix, b, cfg: LsqConfig | None = None) -> LsqResult:
    """Least-squares solution of ``Ax ≈ b`` by Kaczmarz on the augmented system.

    Stops once ``‖Aᵀ(A x_ls − b)‖ <= cfg.tol`` (checked every
    ``check_every`` epochs); raises :class:`NotConverged` otherwise.
    """
    cfg = cfg or LsqConfig()
    b = np.asarray(b, dtype=np.float64)
    sigma_r = cfg.sigma_r
    if sigma_r is None:
        try:
            sigma_r = smallest_singular_value(A, cfg.dense_cap)
        except Exception as exc:
            raise SigmaUnavailable(f"cannot compute sigma_r: {exc}; pass it explicitly") from exc
    phi, zeta = optimal_params(sigma_r)
    phi = cfg.phi if cfg.phi is not None else phi
    zeta = cfg.zeta if cfg.zeta is not None else zeta
    system = augment(A, b, zeta, phi)
    csr = A.to_scipy()

    def grad_norm(z):
        x_ls = z[: A.n] / zeta
        return float(np.linalg.norm(csr.T @ (csr @ x_ls - b)))

    z0 = np.zeros(A.n + A.m)
    if cfg.solver == "rk":
        def stop(z, rec):
            return rec.epoch_index % cfg.check_every == 0 and grad_norm(z) <= cfg.tol

        trace = rk_solve(
            system.a_tilde, system.b_tilde, z0,
            RKConfig(max_epochs=cfg.max_epochs, target_r_sq=0.0, seed=cfg.seed),
            callback=stop,
        )
    else:
        # Aᵀ(Ax/ζ − b) = Aᵀr_bottom/ζ + r_top/φ and raw residuals are the
        # scaled ones times row_scales; ‖A‖ <= ‖A‖_F, so this level implies cfg.tol
        lift = (math.sqrt(A.frob_sq) / zeta + 1.0 / phi) * system.row_scales.max()
        target = (cfg.tol / lift) ** 2
        trace = solve_parallel(
            system.a_tilde, system.b_tilde, z0,
            RunConfig(threads=cfg.threads, gamma=cfg.gamma, epochs=cfg.max_epochs,
                      target_r_sq=target, seed=cfg.seed, snapshot_interval=cfg.check_every),
        )
    z = trace.final_x
    g = grad_norm(z)
    if g > cfg.tol:
        raise NotConverged(f"‖Aᵀ(Ax − b)‖ = {g:.3e} > tol {cfg.tol:.1e} after {trace.last.epoch_index} epochs")
    return LsqResult(z[: A.n] / zeta, trace, system, g)
