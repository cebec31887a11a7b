# tests/test_solver.py

import numpy as np
import pytest
from numpy.testing import assert_allclose

import backend.solver as solver
from backend.entity import QnmfFactors, SolveReport, SolverConfig
from backend.errors import (
    ConfigError,
    DimensionMismatchError,
    InfeasibleDataError,
    RankMismatchError,
    SingularGramError,
)
from backend.quaternion import QuaternionMatrix
from backend.solver import (
    align_factors,
    euclidean_cost,
    grad_h,
    grad_w_conj,
    initial_factors,
    ls_h,
    ls_w,
    relative_error,
    restart_agreement,
    run_qals,
    select_best,
    solve,
    solve_all,
    update_h,
    update_w,
)
from backend.stokes import in_cone_array, project_cone_array

STEP = 1e-6


def _random_problem(rng, M=4, P=3, N=5):
    X = QuaternionMatrix(rng.standard_normal((M, N, 4)))
    W = QuaternionMatrix(rng.standard_normal((M, P, 4)))
    H = rng.uniform(0.0, 1.0, size=(P, N))
    return X, W, H


# --- 梯度 ---

def test_grad_h_matches_finite_differences(rng):
    for _ in range(10):
        X, W, H = _random_problem(rng)
        analytic = grad_h(X, W, H)
        numeric = np.zeros_like(H)
        for idx in np.ndindex(H.shape):
            Hp, Hm = H.copy(), H.copy()
            Hp[idx] += STEP
            Hm[idx] -= STEP
            numeric[idx] = (euclidean_cost(X, W, Hp) - euclidean_cost(X, W, Hm)) / (2 * STEP)
        assert np.linalg.norm(numeric - analytic) <= 1e-5 * np.linalg.norm(analytic)


def test_grad_w_matches_finite_differences(rng):
    for _ in range(10):
        X, W, H = _random_problem(rng)
        # 对 W 每个实分量的偏导 = 4 · (∇_{W̄})_c
        analytic = 4.0 * grad_w_conj(X, W, H).data
        numeric = np.zeros_like(analytic)
        for idx in np.ndindex(W.data.shape):
            Wp, Wm = np.array(W.data), np.array(W.data)
            Wp[idx] += STEP
            Wm[idx] -= STEP
            numeric[idx] = (
                euclidean_cost(X, QuaternionMatrix(Wp), H) - euclidean_cost(X, QuaternionMatrix(Wm), H)
            ) / (2 * STEP)
        assert np.linalg.norm(numeric - analytic) <= 1e-5 * np.linalg.norm(analytic)


def test_unconstrained_minimizers_are_stationary(rng):
    for _ in range(10):
        X, W, H = _random_problem(rng)
        H_star = ls_h(X, W)
        ref_h = np.linalg.norm(grad_h(X, W, np.zeros_like(H)))
        assert np.linalg.norm(grad_h(X, W, H_star)) <= 1e-8 * ref_h

        W_star = ls_w(X, H)
        ref_w = np.linalg.norm(grad_w_conj(X, QuaternionMatrix.zeros(*W.shape), H).data)
        assert np.linalg.norm(grad_w_conj(X, W_star, H).data) <= 1e-8 * ref_w


def test_updates_are_projected_least_squares(rng):
    X, W, H = _random_problem(rng)
    H_new = update_h(X, W)
    assert np.all(H_new >= 0.0)
    assert_allclose(H_new, np.maximum(ls_h(X, W), 0.0))

    W_new = update_w(X, H)
    assert np.all(in_cone_array(W_new.data))
    assert_allclose(W_new.data, project_cone_array(ls_w(X, H).data))


@pytest.mark.parametrize("rank", [1, 2, 3, 5])
def test_least_squares_half_steps_never_increase_cost(rank, make_cone):
    for seed in range(8):
        rng = np.random.default_rng(seed)
        M, N = 9, 14
        X = QuaternionMatrix(make_cone(rng, (M, N)) + 0.1 * rng.standard_normal((M, N, 4)))
        W = QuaternionMatrix(make_cone(rng, (M, rank)))
        H = rng.uniform(0.0, 1.0, size=(rank, N))
        before = euclidean_cost(X, W, H)
        tol = 1e-9 * max(1.0, before)
        assert euclidean_cost(X, W, ls_h(X, W)) <= before + tol
        assert euclidean_cost(X, ls_w(X, H), H) <= before + tol


def test_half_steps_descend_along_qals_iterates(exact_instance):
    _, _, X = exact_instance
    W, H = initial_factors(X.rows, X.cols, 2, seed=5)
    for _ in range(10):
        cost = euclidean_cost(X, W, H)
        assert euclidean_cost(X, W, ls_h(X, W)) <= cost + 1e-9 * max(1.0, cost)
        H = update_h(X, W)

        cost = euclidean_cost(X, W, H)
        assert euclidean_cost(X, ls_w(X, H), H) <= cost + 1e-9 * max(1.0, cost)
        W = update_w(X, H)


def test_singular_gram_needs_ridge(rng):
    X = QuaternionMatrix(rng.standard_normal((4, 5, 4)))
    data = rng.standard_normal((4, 2, 4))
    data[:, 1] = 0.0
    W = QuaternionMatrix(data)
    with pytest.raises(SingularGramError):
        ls_h(X, W)
    H = ls_h(X, W, gram_ridge=1e-6)
    assert np.all(np.isfinite(H))
    with pytest.raises(ConfigError):
        ls_h(X, W, gram_ridge=-1.0)


def test_relative_error_and_zero_data(rng, exact_instance):
    W, H, X = exact_instance
    assert relative_error(X, W, H) == pytest.approx(0.0, abs=1e-28)
    with pytest.raises(InfeasibleDataError):
        relative_error(QuaternionMatrix.zeros(*X.shape), W, H)
    with pytest.raises(DimensionMismatchError):
        relative_error(X, W, H[:, :3])


# --- QALS ---

def test_initial_factors_are_feasible_and_seeded():
    W1, H1 = initial_factors(6, 9, 3, seed=11)
    W2, H2 = initial_factors(6, 9, 3, seed=11)
    assert W1 == W2 and np.array_equal(H1, H2)
    assert np.all(in_cone_array(W1.data))
    assert np.all(H1 >= 0.0)


def test_run_qals_is_deterministic(exact_instance):
    _, _, X = exact_instance
    config = SolverConfig(rank=2, max_iters=50, stop_delta=1e-12, seed=5)
    a, b = run_qals(X, config), run_qals(X, config)
    assert a.residual_trace == b.residual_trace
    assert a.factors.W == b.factors.W
    assert np.array_equal(a.factors.H, b.factors.H)


def test_run_qals_keeps_iterates_feasible(exact_instance):
    _, _, X = exact_instance
    seen = []

    def callback(it, W, H):
        seen.append(it)
        assert np.all(in_cone_array(W.data))
        assert np.all(H >= 0.0)

    report = run_qals(X, SolverConfig(rank=2, max_iters=20, stop_delta=1e-14), callback=callback)
    assert seen == list(range(1, report.iterations + 1))


def test_stop_rule(exact_instance):
    _, _, X = exact_instance
    report = run_qals(X, SolverConfig(rank=2, max_iters=2000, stop_delta=1e-5, seed=1))
    trace = np.asarray(report.residual_trace)
    deltas = np.abs(np.diff(trace))
    assert len(trace) == report.iterations + 1
    if report.converged:
        assert deltas[-1] <= 1e-5
        assert np.all(deltas[:-1] > 1e-5)
    else:
        assert report.iterations == 2000


def test_zero_iterations_returns_initial_point(exact_instance):
    _, _, X = exact_instance
    report = run_qals(X, SolverConfig(rank=2, max_iters=0))
    assert report.iterations == 0
    assert len(report.residual_trace) == 1
    assert not report.converged


def test_exact_data_is_recovered(exact_instance):
    W, H, X = exact_instance
    config = SolverConfig(rank=2, max_iters=5000, stop_delta=1e-14, seed=0, restarts=10)
    best = solve(X, config)
    assert best.final_error < 1e-6

    aligned = align_factors(best.factors, QnmfFactors(W, H))
    assert aligned.eps_w < 1e-3
    assert aligned.eps_h < 1e-3


def test_invalid_data_rejected(exact_instance):
    _, _, X = exact_instance
    with pytest.raises(InfeasibleDataError):
        run_qals(QuaternionMatrix.zeros(3, 3), SolverConfig(rank=2))
    bad = np.array(X.data)
    bad[0, 0, 0] = np.nan
    with pytest.raises(InfeasibleDataError):
        run_qals(QuaternionMatrix(bad), SolverConfig(rank=2))


@pytest.mark.parametrize(
    "field, kwargs",
    [
        ("solver.rank", {"rank": 0}),
        ("solver.stop_delta", {"stop_delta": 0.0}),
        ("solver.gram_ridge", {"gram_ridge": -1.0}),
        ("solver.max_iters", {"max_iters": -1}),
        ("solver.restarts", {"restarts": 0}),
    ],
)
def test_invalid_config_names_field(exact_instance, field, kwargs):
    _, _, X = exact_instance
    with pytest.raises(ConfigError) as info:
        run_qals(X, SolverConfig(**kwargs))
    assert info.value.field_path == field


# --- 多次重启 ---

def test_solve_all_orders_by_seed_and_is_worker_independent(exact_instance):
    _, _, X = exact_instance
    config = SolverConfig(rank=2, max_iters=30, stop_delta=1e-12, seed=3, restarts=4)
    serial = solve_all(X, config, workers=1)
    parallel = solve_all(X, config, workers=3)
    assert [r.seed for r in serial] == [3, 4, 5, 6]
    assert [r.residual_trace for r in serial] == [r.residual_trace for r in parallel]
    assert select_best(serial).seed == select_best(parallel).seed


def test_failed_restart_is_recorded(monkeypatch, exact_instance):
    _, _, X = exact_instance
    real_run = solver.run_qals

    def flaky(X, config, seed=None, callback=None):
        if seed == 1:
            raise SingularGramError("forced")
        return real_run(X, config, seed, callback)

    monkeypatch.setattr(solver, "run_qals", flaky)
    reports = solve_all(X, SolverConfig(rank=2, max_iters=10, seed=0, restarts=3))
    assert [r.status for r in reports] == ["ok", "failed", "ok"]
    assert reports[1].factors is None and "forced" in reports[1].message
    assert select_best(reports).seed in (0, 2)
    assert {row["seed"] for row in restart_agreement(reports)} == {0, 2}


def test_all_restarts_failing_reraises(monkeypatch, exact_instance):
    _, _, X = exact_instance

    def broken(X, config, seed=None, callback=None):
        raise SingularGramError(f"seed {seed}")

    monkeypatch.setattr(solver, "run_qals", broken)
    with pytest.raises(SingularGramError, match="seed 0"):
        solve_all(X, SolverConfig(rank=2, seed=0, restarts=2))


def test_select_best_breaks_ties_by_seed():
    def report(seed, err):
        return SolveReport(factors=None, residual_trace=(1.0, err), iterations=1, converged=True, seed=seed)

    assert select_best([report(4, 0.1), report(2, 0.1), report(3, 0.2)]).seed == 2


# --- 对齐 ---

def test_alignment_undoes_permutation_and_scaling(rng, make_cone):
    W = QuaternionMatrix(make_cone(rng, (10, 3)))
    H = rng.uniform(size=(3, 15))
    perm = np.array([2, 0, 1])
    d = np.array([0.5, 3.0, 1.7])
    est = QnmfFactors(QuaternionMatrix(W.data[:, perm] * d[None, :, None]), H[perm] / d[:, None])

    result = align_factors(est, QnmfFactors(W, H))
    assert result.eps_w == pytest.approx(0.0, abs=1e-20)
    assert result.eps_h == pytest.approx(0.0, abs=1e-20)
    assert list(result.permutation) == list(np.argsort(perm))
    assert result.factors.W.allclose(W, rtol=1e-12, atol=1e-12)
    # 尺度作用在估计值上，抵消 d
    assert_allclose(result.scales, 1.0 / d[np.argsort(perm)])


def test_alignment_checks_shapes(rng, make_cone):
    W = QuaternionMatrix(make_cone(rng, (10, 3)))
    H = rng.uniform(size=(3, 15))
    with pytest.raises(RankMismatchError):
        align_factors(QnmfFactors(QuaternionMatrix(W.data[:, :2]), H[:2]), QnmfFactors(W, H))
    with pytest.raises(DimensionMismatchError):
        align_factors(QnmfFactors(QuaternionMatrix(W.data[:5]), H), QnmfFactors(W, H))
