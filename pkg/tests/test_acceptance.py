"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the pytest terminal summary) and then asserts the same verdict.
"""

import math
import os
import time
import warnings

import numpy as np
import pytest
from scipy import stats as sps

from asyrk.checks import check_structural
from asyrk.datagen import GenSpec, gen_near_tight_frame, gen_sparse_gaussian
from asyrk.delay_sim import DelayModel, monte_carlo_ratios, rate_fit, simulate
from asyrk.kaczmarz import RKConfig, SolutionSetDistance, dist_sq_to, rk_solve
from asyrk.lsq import LsqConfig, critical_ratio, lsq_solve, optimal_params, smallest_singular_value
from asyrk.parallel import AuditLog, RunConfig, solve_parallel
from asyrk.sparsemat import compute_stats
from asyrk.stepsize import corollary_params, iteration_bound


@pytest.fixture(scope="module")
def frame():
    """100×50 instance on which tau = 5 is corollary-feasible."""
    A, b, x_star = gen_near_tight_frame(50, perturb=0.2, seed=0)
    stats = compute_stats(A)
    return A, b, x_star, stats, corollary_params(stats, 5)


@pytest.fixture(scope="module")
def scaled():
    """The 8000×10000, delta = 0.001 instance."""
    A, b, x_star = gen_sparse_gaussian(GenSpec(8000, 10000, 0.001, seed=0))
    return A, b, x_star, compute_stats(A, exact_spectral=False)


def test_c01_serial_rk_rate(verdict):
    start = time.perf_counter()
    A, b, x_star = gen_sparse_gaussian(GenSpec(500, 200, 0.1, seed=0))
    lam_min = compute_stats(A).lambda_min
    dist = dist_sq_to(x_star)
    K, every = 20_000, 100
    acc = None
    for s in range(50):
        run = simulate(A, b, np.zeros(A.n), 1.0, DelayModel.fixed(0), K, seed=s, variant="full_row",
                       distance=dist, sample_every=every, record_trace=False)
        acc = run.dist_samples if acc is None else acc + run.dist_samples
    fit = rate_fit(acc / 50, run.dist_iter)
    bound = 1 - lam_min / A.m
    contraction = math.exp(fit.slope)
    elapsed = time.perf_counter() - start
    # the stated form (factor <= bound*1.10) exceeds 1 and is vacuous; the
    # log-slope form asks for at least 90% of the guaranteed decay
    ok = fit.slope <= 0.9 * math.log(bound) and contraction <= bound * 1.10 and elapsed < 60
    verdict(1, ok, f"fitted factor {contraction:.6f} (log-slope {fit.slope:.3e}) vs 1-lambda_min/m = "
                   f"{bound:.6f} (log {math.log(bound):.3e}); {elapsed:.1f}s")
    assert ok


def test_c02_ratio_bounds(verdict, frame):
    start = time.perf_counter()
    A, b, _, _, p = frame
    assert p.feasible and p.usable
    mc = monte_carlo_ratios(A, b, np.zeros(A.n), p, DelayModel.max_staleness(5), 2000, runs=1000)
    lo, hi = 0.9 / p.rho, 1.1 * p.rho
    elapsed = time.perf_counter() - start
    ok = bool(np.all((mc.ratios >= lo) & (mc.ratios <= hi))) and elapsed < 300
    verdict(2, ok, f"ratios in [{mc.ratios.min():.4f}, {mc.ratios.max():.4f}] vs allowed "
                   f"[{lo:.4f}, {hi:.4f}], rho = {p.rho:.4f}; {elapsed:.1f}s")
    assert ok


def test_c03_rate_under_staleness(verdict, frame):
    A, b, _, _, p = frame
    dist = SolutionSetDistance(A, b)
    x0 = np.zeros(A.n)
    acc = None
    runs = 50
    for s in range(runs):
        run = simulate(A, b, x0, p, DelayModel.max_staleness(5), 20_000, seed=s, distance=dist,
                       sample_every=200, record_trace=False)
        acc = run.dist_samples if acc is None else acc + run.dist_samples
    fit = rate_fit(acc / runs, run.dist_iter)
    predicted = math.log(p.rate_iter)
    ok = fit.slope <= 0.85 * predicted
    verdict(3, ok, f"log-slope {fit.slope:.3e} vs predicted {predicted:.3e} (need <= {0.85 * predicted:.3e})")
    assert ok


def test_c04_corollary_thread_insensitivity(verdict, scaled):
    start = time.perf_counter()
    A, b, _, stats = scaled
    epochs, notes = {}, []
    for t in (1, 2, 4):
        cfg = RunConfig(threads=t, gamma="corollary", epochs=40_000, target_r_sq=1e-5,
                        variant="single_component", snapshot_interval=10, seed=0)
        trace = solve_parallel(A, b, np.zeros(A.n), cfg, stats=stats)
        assert trace.last.r_sq <= 1e-5, "target not reached within the epoch budget"
        epochs[t] = trace.epochs_to(1e-5)
        notes.append(trace.config_echo["gamma_source"])
    spread = (max(epochs.values()) - min(epochs.values())) / min(epochs.values())
    elapsed = time.perf_counter() - start
    ok = spread < 0.25 and elapsed < 600
    verdict(4, ok, f"epochs to 1e-5 {epochs}, spread {spread:.1%}, gamma {notes[-1]}; {elapsed:.0f}s")
    assert ok


def test_c05_single_thread_equivalence(verdict, small_system):
    A, b, x_star = small_system
    dist = dist_sq_to(x_star)
    same = True
    for seed in range(5):
        par = solve_parallel(A, b, np.zeros(A.n), RunConfig(threads=1, gamma="one", epochs=30,
                             variant="full_row", sampling="slice_shuffle", seed=seed), distance=dist)
        ser = rk_solve(A, b, np.zeros(A.n), RKConfig(max_epochs=30, seed=seed, sampling="shuffle"),
                       distance=dist)
        same &= par.numeric_rows() == ser.numeric_rows() and np.array_equal(par.final_x, ser.final_x)
    verdict(5, same, "threads=1 slice-shuffle vs serial shuffle RK, 5 seeds, exact comparison")
    assert same


def test_c06_high_probability_bound(verdict, frame):
    start = time.perf_counter()
    A, b, _, stats, p = frame
    dist = SolutionSetDistance(A, b)
    x0 = np.zeros(A.n)
    eps, eta = 1e-4, 0.1
    pb = iteration_bound(stats, dist(x0), eps, eta)
    hits = sum(
        dist(simulate(A, b, x0, p, DelayModel.max_staleness(5), pb.j_min, seed=1000 + s,
                      record_trace=False).trace.final_x) <= eps
        for s in range(200)
    )
    pval = sps.binomtest(int(hits), 200, 1 - eta, alternative="greater").pvalue
    elapsed = time.perf_counter() - start
    ok = pval < 0.05 and elapsed < 600
    verdict(6, ok, f"j_min = {pb.j_min}, {hits}/200 within eps, one-sided p = {pval:.2e}; {elapsed:.0f}s")
    assert ok


def test_c07_least_squares(verdict):
    start = time.perf_counter()
    errors = []
    grid_ok = True
    for seed in range(3):
        A, b, _ = gen_sparse_gaussian(GenSpec(200, 100, 0.1, seed=seed, consistent=False, noise_level=1.0))
        d = A.to_dense()
        oracle = np.linalg.solve(d.T @ d, d.T @ b)
        res = lsq_solve(A, b, LsqConfig(tol=1e-9, seed=seed))
        errors.append(float(np.linalg.norm(res.x_ls - oracle)))
        sigma = smallest_singular_value(A)
        phi_s, zeta_s = optimal_params(sigma)
        zetas = np.geomspace(zeta_s / 10, 10 * zeta_s, 50)
        phis = np.geomspace(0.1, 10, 50)
        grid = np.array([[critical_ratio(sigma, A.frob_sq, A.m, z, q) for q in phis] for z in zetas])
        iz, ip = np.unravel_index(grid.argmax(), grid.shape)
        cells_z = abs(math.log(zetas[iz] / zeta_s)) / math.log(zetas[1] / zetas[0])
        cells_p = abs(math.log(phis[ip] / phi_s)) / math.log(phis[1] / phis[0])
        best = critical_ratio(sigma, A.frob_sq, A.m, zeta_s, phi_s)
        grid_ok &= cells_z <= 1 and cells_p <= 1 and grid.max() <= best * (1 + 1e-12)
    elapsed = time.perf_counter() - start
    ok = max(errors) <= 1e-6 and grid_ok and elapsed < 120
    verdict(7, ok, f"max ||x_ls - oracle|| = {max(errors):.2e} over 3 instances, grid optimum "
                   f"{'within' if grid_ok else 'outside'} one cell; {elapsed:.1f}s")
    assert ok


def test_c08_structural_bounds(verdict):
    start = time.perf_counter()
    res = check_structural(100, seed=0)
    elapsed = time.perf_counter() - start
    ok = res.passed and elapsed < 60
    verdict(8, ok, f"{res.detail}; {elapsed:.1f}s")
    assert ok


@pytest.mark.parametrize("variant", ["full_row", "single_component"])
def test_c09_no_lost_updates(verdict, variant):
    start = time.perf_counter()
    A, b, _ = gen_sparse_gaussian(GenSpec(400, 20, 0.3, seed=3))
    b = b + 0.1 * np.random.default_rng(1).standard_normal(A.m)  # keeps residuals away from 0
    x0 = np.random.default_rng(0).standard_normal(A.n)
    audit = AuditLog()
    gamma = 0.5 if variant == "full_row" else 0.5 / A.theta.max()
    trace = solve_parallel(A, b, x0, RunConfig(threads=8, gamma=gamma, epochs=50, variant=variant, seed=5),
                           audit=audit)
    n_inc = audit.count
    gap = float(np.max(np.abs(trace.final_x - (x0 + audit.net_change(A.n)))))
    elapsed = time.perf_counter() - start
    ok = int(audit.applied[0]) == n_inc and n_inc > 0 and gap <= 1e-9 * n_inc and elapsed < 120
    verdict(9, ok, f"{variant}: {n_inc} increments recorded, {int(audit.applied[0])} applied, "
                   f"max gap {gap:.2e} (allowance {1e-9 * n_inc:.2e})")
    assert ok


def _cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def test_c10_speedup(verdict, scaled):
    A, b, _, stats = scaled
    walls = {}
    for t in (1, 4):
        cfg = RunConfig(threads=t, gamma="one", epochs=2000, target_r_sq=1e-5, seed=0)
        walls[t] = solve_parallel(A, b, np.zeros(A.n), cfg, stats=stats).last.wall_seconds
    speedup = walls[1] / walls[4]
    cores = _cores()
    detail = f"speedup at 4 threads {speedup:.2f}x on {cores} available core(s)"
    if speedup >= 2.0:
        verdict(10, True, detail)
    elif cores < 4:
        # soft criterion: constrained hardware downgrades the failure to a warning
        verdict(10, False, detail + " (needs >= 4 cores)", label="FAIL (downgraded to warning)")
        warnings.warn(f"speedup criterion not assessable: {detail}")
    else:
        verdict(10, False, detail)
        pytest.fail(detail)
