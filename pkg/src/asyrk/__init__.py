"""Asynchronous parallel randomized Kaczmarz for sparse linear systems."""

from .datagen import GenSpec, gen_near_tight_frame, gen_sparse_gaussian, read_instance, write_instance
from .delay_sim import DelayModel, monte_carlo_ratios, rate_fit, simulate
from .errors import AsyrkError
from .kaczmarz import RKConfig, SolutionSetDistance, Trace, asyrk_update, rk_solve, rk_step
from .lsq import LsqConfig, augment, critical_ratio, lsq_solve, optimal_params
from .parallel import AuditLog, RunConfig, solve_parallel, sweep_threads
from .sparsemat import (
    CsrMatrix,
    SystemStats,
    compute_stats,
    from_coo,
    from_dense,
    from_scipy,
    from_triplets,
    normalize_rows,
    power_iteration,
)
from .stepsize import corollary_params, gamma_bounds, iteration_bound, psi, rate_iteration, rate_table

__version__ = "0.1.0"
