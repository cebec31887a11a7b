# backend/solver.py

"""
QALS: 四元数交替最小二乘。

每轮先解 H 的无约束最小二乘并截断到 R_+，再解 W 并逐元素投影到 H_S。
停止准则: |ε_r - ε_{r-1}| ≤ stop_delta，ε = ‖X - WH‖²_F / ‖X‖²_F。
"""

import concurrent.futures
import logging
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from tqdm import tqdm

from backend.entity import AlignmentResult, QnmfFactors, SolveReport, SolverConfig
from backend.errors import (
    ConfigError,
    DimensionMismatchError,
    InfeasibleDataError,
    NonFiniteResidualError,
    RankMismatchError,
    SingularGramError,
)
from backend.quaternion import QuaternionMatrix
from backend.stokes import project_cone_array, project_nonneg

logger = logging.getLogger(__name__)

_COND_LIMIT = 1.0 / np.finfo(np.float64).eps

IterationCallback = Callable[[int, QuaternionMatrix, np.ndarray], None]


def _check_conformable(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray):
    H = np.atleast_2d(H)
    if W.cols != H.shape[0] or X.rows != W.rows or X.cols != H.shape[1]:
        raise DimensionMismatchError(
            f"X is {X.rows}x{X.cols} but W is {W.rows}x{W.cols} and H is {H.shape[0]}x{H.shape[1]}"
        )


def residual(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray) -> QuaternionMatrix:
    _check_conformable(X, W, H)
    return X - W @ H


# --- 代价与梯度 ---

def euclidean_cost(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray) -> float:
    return residual(X, W, H).frobenius_sq()


def relative_error(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray) -> float:
    x_norm = X.frobenius_sq()
    if x_norm == 0.0:
        raise InfeasibleDataError("relative error is undefined for an all-zero data matrix")
    return euclidean_cost(X, W, H) / x_norm


def grad_h(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray) -> np.ndarray:
    """∇_H = -2 Re[Wᵀ conj(X - WH)]"""
    R = residual(X, W, H)
    return -2.0 * np.einsum("mpc,mnc->pn", W.data, R.data)


def grad_w_conj(X: QuaternionMatrix, W: QuaternionMatrix, H: np.ndarray) -> QuaternionMatrix:
    """
    ∇_{W̄} = -½ (X - WH) Hᵀ
    代价对 W 各实分量的偏导数等于该矩阵对应分量的 4 倍。
    """
    R = residual(X, W, H)
    return QuaternionMatrix(-0.5 * np.einsum("mnc,pn->mpc", R.data, np.atleast_2d(H)))


# --- 闭式最小二乘 ---

def _solve_normal(gram: np.ndarray, rhs: np.ndarray, ridge: float, label: str) -> np.ndarray:
    if ridge < 0.0:
        raise ConfigError("solver.gram_ridge", f"must be non-negative, got {ridge}")
    P = gram.shape[0]
    if ridge == 0.0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularGramError(f"{label} normal matrix is singular (cond={cond:.3g}); set gram_ridge > 0")
    try:
        return np.linalg.solve(gram + ridge * np.eye(P), rhs)
    except np.linalg.LinAlgError as e:
        raise SingularGramError(f"{label} normal matrix is singular: {e}") from e


def ls_h(X: QuaternionMatrix, W: QuaternionMatrix, gram_ridge: float = 0.0) -> np.ndarray:
    """(Re[Wᵀ W̄] + ridge·I)⁻¹ Re[Wᵀ X̄]，未截断"""
    if X.rows != W.rows:
        raise DimensionMismatchError(f"X has {X.rows} rows but W has {W.rows}")
    gram = np.einsum("mic,mjc->ij", W.data, W.data)
    rhs = np.einsum("mic,mnc->in", W.data, X.data)
    return _solve_normal(gram, rhs, gram_ridge, "Re[W^T conj(W)]")


def ls_w(X: QuaternionMatrix, H: np.ndarray, gram_ridge: float = 0.0) -> QuaternionMatrix:
    """X Hᵀ (H Hᵀ + ridge·I)⁻¹，未投影"""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if X.cols != H.shape[1]:
        raise DimensionMismatchError(f"X has {X.cols} columns but H has {H.shape[1]}")
    P = H.shape[0]
    xh = np.einsum("mnc,pn->mpc", X.data, H)
    rhs = xh.transpose(1, 0, 2).reshape(P, -1)
    # HHᵀ 对称，W_c = (G⁻¹ (XHᵀ_c)ᵀ)ᵀ
    sol = _solve_normal(H @ H.T, rhs, gram_ridge, "H H^T")
    return QuaternionMatrix(sol.reshape(P, X.rows, 4).transpose(1, 0, 2))


def update_h(X: QuaternionMatrix, W: QuaternionMatrix, gram_ridge: float = 0.0) -> np.ndarray:
    return project_nonneg(ls_h(X, W, gram_ridge))


def update_w(X: QuaternionMatrix, H: np.ndarray, gram_ridge: float = 0.0) -> QuaternionMatrix:
    return QuaternionMatrix(project_cone_array(ls_w(X, H, gram_ridge).data))


# --- 主循环 ---

def initial_factors(rows: int, cols: int, rank: int, seed: int):
    """W ~ 各分量标准正态后投影到 H_S，H ~ U[0,1]；先抽 W 再抽 H"""
    rng = np.random.default_rng(seed)
    W = QuaternionMatrix(project_cone_array(rng.standard_normal((rows, rank, 4))))
    H = rng.uniform(0.0, 1.0, size=(rank, cols))
    return W, H


def validate_config(config: SolverConfig):
    if config.rank < 1:
        raise ConfigError("solver.rank", f"must be >= 1, got {config.rank}")
    if not config.stop_delta > 0.0:
        raise ConfigError("solver.stop_delta", f"must be > 0, got {config.stop_delta}")
    if config.gram_ridge < 0.0:
        raise ConfigError("solver.gram_ridge", f"must be >= 0, got {config.gram_ridge}")
    if config.max_iters < 0:
        raise ConfigError("solver.max_iters", f"must be >= 0, got {config.max_iters}")
    if config.restarts < 1:
        raise ConfigError("solver.restarts", f"must be >= 1, got {config.restarts}")


def run_qals(
    X: QuaternionMatrix,
    config: SolverConfig,
    seed: Optional[int] = None,
    callback: Optional[IterationCallback] = None,
) -> SolveReport:
    """单次求解，结果只取决于 (X, config, seed)"""
    validate_config(config)
    seed = config.seed if seed is None else seed
    if not np.all(np.isfinite(X.data)):
        raise InfeasibleDataError("data matrix contains non-finite entries")
    x_norm = X.frobenius_sq()
    if x_norm == 0.0:
        raise InfeasibleDataError("data matrix is identically zero")

    W, H = initial_factors(X.rows, X.cols, config.rank, seed)
    trace = [euclidean_cost(X, W, H) / x_norm]
    converged = False

    for it in range(1, config.max_iters + 1):
        H = update_h(X, W, config.gram_ridge)
        W = update_w(X, H, config.gram_ridge)
        err = euclidean_cost(X, W, H) / x_norm
        if not np.isfinite(err):
            raise NonFiniteResidualError(f"residual became {err} at iteration {it} (seed {seed})")
        trace.append(err)
        if callback is not None:
            callback(it, W, H)
        if abs(trace[-1] - trace[-2]) <= config.stop_delta:
            converged = True
            break

    zero_rows = int(np.sum(~np.any(H > 0.0, axis=1)))
    if zero_rows:
        logger.debug(f"[QALS] seed {seed}: {zero_rows} activation row(s) ended identically zero")
    logger.debug(f"[QALS] seed {seed}: {len(trace) - 1} iterations, eps={trace[-1]:.3e}, converged={converged}")

    trace = tuple(trace)
    factors = QnmfFactors(W=W, H=H, seed=seed, iterations=len(trace) - 1, residual_trace=trace)
    return SolveReport(
        factors=factors,
        residual_trace=trace,
        iterations=len(trace) - 1,
        converged=converged,
        seed=seed,
        zero_rows=zero_rows,
    )


def solve_all(
    X: QuaternionMatrix,
    config: SolverConfig,
    workers: Optional[int] = None,
    progress: bool = False,
) -> List[SolveReport]:
    """
    运行 config.restarts 次独立求解 (seed, seed+1, ...)，按 seed 排序返回。
    单次失败 (奇异 Gram / 非有限残差) 记录为 failed 并继续；全部失败时抛出第一个错误。
    """
    validate_config(config)
    seeds = [config.seed + r for r in range(config.restarts)]
    workers = max(1, int(workers if workers is not None else config.workers))
    errors: Dict[int, Exception] = {}

    def _one(seed: int) -> SolveReport:
        try:
            return run_qals(X, config, seed)
        except (SingularGramError, NonFiniteResidualError) as e:
            logger.warning(f"[QALS] restart with seed {seed} failed: {e}")
            errors[seed] = e
            return SolveReport(
                factors=None, residual_trace=(), iterations=0, converged=False,
                seed=seed, status="failed", message=str(e),
            )

    reports: List[SolveReport] = []
    bar = tqdm(total=len(seeds), desc="restarts", unit="run", disable=not progress)
    if workers == 1:
        for seed in seeds:
            reports.append(_one(seed))
            bar.update(1)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_one, seed): seed for seed in seeds}
            for future in concurrent.futures.as_completed(futures):
                reports.append(future.result())
                bar.update(1)
    bar.close()

    reports.sort(key=lambda r: r.seed)
    if len(errors) == len(seeds):
        raise errors[seeds[0]]
    logger.info(f"[QALS] {len(seeds) - len(errors)}/{len(seeds)} restarts finished")
    return reports


def select_best(reports: Sequence[SolveReport]) -> SolveReport:
    ok = [r for r in reports if r.ok]
    if not ok:
        raise ValueError("no successful restart to select from")
    return min(ok, key=lambda r: (r.final_error, r.seed))


def solve(X: QuaternionMatrix, config: SolverConfig, workers: Optional[int] = None) -> SolveReport:
    return select_best(solve_all(X, config, workers))


# --- 因子对齐 ---

def align_factors(est: QnmfFactors, truth: QnmfFactors) -> AlignmentResult:
    """
    在置换与正对角缩放下把 est 对齐到 truth:
    每对列取最优正尺度 d = max(0,⟨Ŵp,Wq⟩)/‖Ŵp‖²，再用匈牙利算法求置换。
    """
    if est.rank != truth.rank:
        raise RankMismatchError(f"estimate has rank {est.rank}, truth has rank {truth.rank}")
    if est.W.shape != truth.W.shape or np.shape(est.H) != np.shape(truth.H):
        raise DimensionMismatchError(
            f"estimate W{est.W.shape}/H{np.shape(est.H)} vs truth W{truth.W.shape}/H{np.shape(truth.H)}"
        )

    W_est, W_true = est.W.data, truth.W.data
    H_est, H_true = np.asarray(est.H, dtype=np.float64), np.asarray(truth.H, dtype=np.float64)
    inner = np.einsum("mpc,mqc->pq", W_est, W_true)
    norm_est = np.einsum("mpc,mpc->p", W_est, W_est)
    norm_true = np.einsum("mqc,mqc->q", W_true, W_true)

    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.maximum(inner, 0.0) / norm_est[:, None]
    scale = np.where(np.isfinite(scale) & (scale > 0.0), scale, 1.0)

    # ‖d Ŵp - Wq‖²
    cost = scale ** 2 * norm_est[:, None] - 2.0 * scale * inner + norm_true[None, :]
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(truth.rank, dtype=int)
    perm[cols] = rows
    d = scale[perm, np.arange(truth.rank)]

    W_al = W_est[:, perm, :] * d[None, :, None]
    H_al = H_est[perm, :] / d[:, None]
    eps_w = float(np.sum((W_al - W_true) ** 2) / np.sum(W_true ** 2))
    eps_h = float(np.sum((H_al - H_true) ** 2) / np.sum(H_true ** 2))

    aligned = QnmfFactors(
        W=QuaternionMatrix(W_al), H=H_al, seed=est.seed,
        iterations=est.iterations, residual_trace=est.residual_trace,
    )
    return AlignmentResult(aligned, tuple(int(p) for p in perm), d, eps_w, eps_h)


def restart_agreement(reports: Sequence[SolveReport], reference: Optional[SolveReport] = None) -> List[dict]:
    """各成功 restart 与选中解对齐后的 ε_W / ε_H"""
    reference = reference or select_best(reports)
    rows = []
    for r in reports:
        if not r.ok:
            continue
        aligned = align_factors(r.factors, reference.factors)
        rows.append({"seed": r.seed, "eps_W": aligned.eps_w, "eps_H": aligned.eps_h})
    return rows
