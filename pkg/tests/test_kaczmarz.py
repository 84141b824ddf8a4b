import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyrk.datagen import GenSpec, gen_sparse_gaussian
from asyrk.errors import (
    ComponentNotInSupport,
    DimensionMismatch,
    Inconsistent,
    InvalidConfig,
    NonFinite,
    NotNormalized,
    TooLarge,
)
from asyrk.kaczmarz import (
    AliasSampler,
    RKConfig,
    SolutionSetDistance,
    Trace,
    asyrk_update,
    dist_sq_to,
    project_solution_set,
    rk_solve,
    rk_step,
)
from asyrk.sparsemat import from_dense, from_triplets, normalize_rows

H = math.sqrt(0.5)


# -- rk_step ------------------------------------------------------------------

def test_unit_projection():
    A = from_dense(np.eye(2))
    np.testing.assert_array_equal(rk_step(A, np.array([1.0, 0.0]), np.zeros(2), 0), [1.0, 0.0])


def test_fixed_point_on_hyperplane(small_system):
    A, b, x_star = small_system
    np.testing.assert_allclose(rk_step(A, b, x_star, 3), x_star, atol=1e-14)


def test_hand_projection():
    A = from_dense([[0.6, 0.8]])
    np.testing.assert_allclose(rk_step(A, np.array([2.0]), np.zeros(2), 0), [1.2, 1.6], atol=1e-15)


def test_rk_step_dimension_mismatch(small_system):
    A, b, _ = small_system
    with pytest.raises(DimensionMismatch):
        rk_step(A, b, np.zeros(A.n + 2), 0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), i=st.integers(0, 39))
def test_rk_step_is_orthogonal_projection(small_system, seed, i):
    A, b, _ = small_system
    x = np.random.default_rng(seed).standard_normal(A.n)
    x_new = rk_step(A, b, x, i)
    cols, vals = A.row(i)
    assert abs(vals @ x_new[cols] - b[i]) <= 1e-10
    # the move is parallel to a_i, hence orthogonal to the hyperplane direction
    d = x_new - x
    untouched = np.setdiff1d(np.arange(A.n), cols)
    assert np.all(d[untouched] == 0)
    resid = d[cols] - (d[cols] @ vals) * vals
    assert np.linalg.norm(resid) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), i=st.integers(0, 19))
def test_rk_step_never_moves_away(wide_system, seed, i):
    A, b, _ = wide_system
    oracle = SolutionSetDistance(A, b)
    x = np.random.default_rng(seed).standard_normal(A.n)
    star = oracle.project(x)
    x_new = rk_step(A, b, x, i)
    assert np.linalg.norm(x_new - star) <= np.linalg.norm(x - star) + 1e-12


# -- asyrk_update -------------------------------------------------------------

def test_update_zero_residual():
    A = from_dense([[H, H]])
    assert asyrk_update(A, np.array([H]), 0, 0, 0.7, np.array([1.0, 0.0])) == 0.0


def test_update_singleton_row():
    A = from_dense(np.eye(2))
    assert asyrk_update(A, np.array([1.0, 0.0]), 0, 0, 1.0, np.zeros(2)) == 1.0


def test_update_hand_value():
    A = from_dense([[H, H]])
    d = asyrk_update(A, np.array([0.0]), 0, 1, 0.5, np.array([1.0, 0.0]))
    assert d == pytest.approx(-0.5, abs=1e-15)


def test_update_outside_support():
    A = from_triplets([(0, 0, 1.0)], 1, 3)
    with pytest.raises(ComponentNotInSupport):
        asyrk_update(A, np.array([1.0]), 0, 2, 1.0, np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), i=st.integers(0, 39))
def test_component_updates_sum_to_rk_step(small_system, seed, i):
    A, b, _ = small_system
    x = np.random.default_rng(seed).standard_normal(A.n)
    cols, _ = A.row(i)
    parts = np.array([asyrk_update(A, b, i, int(t), 1.0 / cols.size, x) for t in cols])
    step = rk_step(A, b, x, i)[cols] - x[cols]
    np.testing.assert_allclose(parts, step, rtol=0, atol=1e-12)


# -- projection oracle --------------------------------------------------------

def test_projection_fixed_point(wide_system):
    A, b, x_star = wide_system
    np.testing.assert_allclose(project_solution_set(A, b, x_star), x_star, atol=1e-10)


def test_projection_full_column_rank(small_system):
    A, b, x_star = small_system
    for seed in range(3):
        x = np.random.default_rng(seed).standard_normal(A.n)
        np.testing.assert_allclose(project_solution_set(A, b, x), x_star, atol=1e-9)


def test_projection_rank_deficient_null_space_oracle():
    rng = np.random.default_rng(4)
    dense = rng.standard_normal((10, 20))
    A, _ = normalize_rows(from_dense(dense), np.zeros(10))
    d = A.to_dense()
    b = d @ rng.standard_normal(20)
    x = rng.standard_normal(20)
    p = project_solution_set(A, b, x)
    assert np.linalg.norm(d @ p - b) <= 1e-8
    # brute force: particular solution plus null-space coordinates by least squares
    _, s, vt = np.linalg.svd(d)
    null = vt[np.sum(s > 1e-10 * s[0]):].T
    z0 = np.linalg.lstsq(d, b, rcond=None)[0]
    coef = np.linalg.lstsq(null, x - z0, rcond=None)[0]
    np.testing.assert_allclose(p, z0 + null @ coef, atol=1e-8)


def test_projection_rejects_inconsistent():
    A = from_dense([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(Inconsistent):
        project_solution_set(A, np.array([1.0, 2.0]), np.zeros(2))


def test_projection_dense_cap(small_system):
    A, b, _ = small_system
    with pytest.raises(TooLarge):
        SolutionSetDistance(A, b, dense_cap=10)


# -- rk_solve -----------------------------------------------------------------

def test_solve_from_solution(small_system):
    A, b, x_star = small_system
    b_exact = A.matvec(x_star)
    trace = rk_solve(A, b_exact, x_star, RKConfig(max_epochs=5))
    assert len(trace.epochs) == 1 and trace.last.r_sq <= 1e-28


def test_solve_identity_exact_after_all_rows():
    n = 6
    A = from_dense(np.eye(n))
    b = np.arange(1.0, n + 1)
    trace = rk_solve(A, b, np.zeros(n), RKConfig(max_epochs=1, sampling="shuffle"))
    assert trace.last.r_sq == 0.0
    np.testing.assert_array_equal(trace.final_x, b)


def test_solve_converges(small_system):
    A, b, x_star = small_system
    trace = rk_solve(A, b, np.zeros(A.n), RKConfig(max_epochs=2000, target_r_sq=1e-20),
                     distance=dist_sq_to(x_star))
    assert trace.last.r_sq <= 1e-20
    assert trace.last.dist_sq < 1e-18


def test_solve_bit_reproducible(small_system):
    A, b, _ = small_system
    cfg = RKConfig(max_epochs=20, seed=9)
    t1 = rk_solve(A, b, np.zeros(A.n), cfg)
    t2 = rk_solve(A, b, np.zeros(A.n), cfg)
    assert t1.numeric_rows() == t2.numeric_rows()
    np.testing.assert_array_equal(t1.final_x, t2.final_x)


def test_uniform_requires_normalized():
    A = from_dense([[3.0, 0.0], [0.0, 4.0]])
    with pytest.raises(NotNormalized):
        rk_solve(A, np.ones(2), np.zeros(2), RKConfig(max_epochs=1))


def test_norm_proportional_on_unnormalized():
    rng = np.random.default_rng(1)
    dense = rng.standard_normal((30, 10)) * rng.uniform(0.1, 10, size=(30, 1))
    A = from_dense(dense)
    x_star = rng.standard_normal(10)
    b = dense @ x_star
    trace = rk_solve(A, b, np.zeros(10), RKConfig(max_epochs=3000, target_r_sq=1e-18,
                                                  sampling="norm_proportional"))
    np.testing.assert_allclose(trace.final_x, x_star, atol=1e-8)


def test_unknown_sampling(small_system):
    A, b, _ = small_system
    with pytest.raises(InvalidConfig):
        rk_solve(A, b, np.zeros(A.n), RKConfig(sampling="nope"))


def test_non_finite_detected(small_system):
    A, b, _ = small_system
    x0 = np.zeros(A.n)
    x0[0] = np.inf
    with pytest.raises(NonFinite):
        rk_solve(A, b, x0, RKConfig(max_epochs=2))


def test_trace_invariants_and_serialization(small_system):
    A, b, x_star = small_system
    trace = rk_solve(A, b, np.zeros(A.n), RKConfig(max_epochs=15), distance=dist_sq_to(x_star))
    idx = [e.epoch_index for e in trace.epochs]
    assert idx == sorted(set(idx))
    upd = [e.updates_applied for e in trace.epochs]
    assert all(u1 <= u2 for u1, u2 in zip(upd, upd[1:]))
    assert all(e.r_sq >= 0 and e.grad_sq >= 0 for e in trace.epochs)
    text = trace.to_jsonl()
    lines = [json.loads(x) for x in text.splitlines()]
    assert all(obj["schema"] == 1 for obj in lines)
    assert lines[0]["kind"] == "header" and lines[0]["config"]["solver"] == "rk"
    back = Trace.from_jsonl(text)
    assert back.numeric_rows() == trace.numeric_rows()
    csv_lines = trace.to_csv().splitlines()
    assert csv_lines[0].startswith("epoch_index,r_sq,grad_sq,dist_sq")
    assert len(csv_lines) == len(trace.epochs) + 1
    assert trace.epochs_to(trace.last.r_sq) <= trace.last.epoch_index


def test_alias_sampler_frequencies():
    w = np.array([1.0, 2.0, 3.0, 4.0, 0.5])
    rng = np.random.default_rng(0)
    draws = AliasSampler(w).sample(rng, 400_000)
    freq = np.bincount(draws, minlength=w.size) / draws.size
    p = w / w.sum()
    # 5 standard errors
    assert np.all(np.abs(freq - p) <= 5 * np.sqrt(p * (1 - p) / draws.size))


def test_alias_sampler_uniform_weights():
    s = AliasSampler(np.ones(7))
    np.testing.assert_array_equal(s.prob, np.ones(7))


def test_generated_rk_rate_sanity():
    A, b, x_star = gen_sparse_gaussian(GenSpec(120, 40, 0.2, seed=1))
    trace = rk_solve(A, b, np.zeros(A.n), RKConfig(max_epochs=60), distance=dist_sq_to(x_star))
    d = [e.dist_sq for e in trace.epochs]
    assert d[-1] < 1e-6 * d[0]
