# backend/uniqueness.py

"""
P=2 可容许变换区间与唯一性条件检查。

T(α, β) = [[1-α, β], [α, 1-β]]，W̃ = W·T，H̃ = T⁻¹·H。
α 区间在 β = 0 下计算，β 区间在 α = 0 下计算。
每行偏振约束是 α (或 β) 的二次不等式，只保留包含 0 的连通分量，
再与 NMF 区间 (Re W̃ ≥ 0, H̃ ≥ 0) 相交。
"""

import logging
import math
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np

from backend.entity import (
    AdmissibilityReport,
    Interval,
    NecessaryVerdict,
    QuadraticInequality,
    RowPolarization,
    SeparabilityVerdict,
    SufficientVerdict,
)
from backend.errors import (
    InfeasibleFactorsError,
    InvalidAxisError,
    RankMismatchError,
    VanishingSourceError,
)
from backend.quaternion import DEFAULT_TOL, Quaternion, QuaternionMatrix
from backend.stokes import in_cone_array, polarization_components

logger = logging.getLogger(__name__)

# 区间端点与 0 的吸附容差
SNAP_TOL = 1e-9
UNIQUE_TOL = 1e-9


# --- 基础 ---

def inner_axis(mu1: Quaternion, mu2: Quaternion, tol: float = DEFAULT_TOL) -> float:
    """⟨μ1, μ2⟩ = -Re(μ1 μ2)"""
    for name, mu in (("mu1", mu1), ("mu2", mu2)):
        if not (mu.is_pure(tol) and mu.is_unit(tol)):
            raise InvalidAxisError(f"{name} must be a pure unit quaternion, got {mu}")
    return -(mu1 * mu2).re


def check_feasible(W: QuaternionMatrix, H: np.ndarray, tol: float = DEFAULT_TOL):
    H = np.asarray(H, dtype=np.float64)
    if W.cols != H.shape[0]:
        raise RankMismatchError(f"W has {W.cols} sources but H has {H.shape[0]} rows")
    bad = ~in_cone_array(W.data, tol)
    if np.any(bad):
        m, p = np.argwhere(bad)[0]
        raise InfeasibleFactorsError(f"W[{m},{p}] is not a non-negative quaternion")
    if np.any(H < 0.0):
        p, n = np.argwhere(H < 0.0)[0]
        raise InfeasibleFactorsError(f"H[{p},{n}] = {H[p, n]} is negative")


def source_parameters(W: QuaternionMatrix):
    """(I, Φ, μ)，Φ 截断到 [0, 1]"""
    intensity, dop, axis = polarization_components(W.data)
    return intensity, np.clip(dop, 0.0, 1.0), axis


def row_polarization(W: QuaternionMatrix, m: int, p: int = 0, q: int = 1) -> RowPolarization:
    return row_polarizations(W, p, q)[m]


def row_polarizations(W: QuaternionMatrix, p: int = 0, q: int = 1) -> List[RowPolarization]:
    intensity, dop, axis = source_parameters(W)
    return [
        RowPolarization(
            float(intensity[m, p]), float(dop[m, p]), Quaternion.pure(*axis[m, p]),
            float(intensity[m, q]), float(dop[m, q]), Quaternion.pure(*axis[m, q]),
        )
        for m in range(W.rows)
    ]


# --- 二次不等式 ---

def polarization_inequality_alpha(row: RowPolarization) -> QuadraticInequality:
    """(1-α)w1 + αw2 ∈ H_S 的偏振部分"""
    dot = inner_axis(row.mu1, row.mu2)
    p = row.I1 ** 2 * (1.0 - row.phi1 ** 2)
    q = row.I2 ** 2 * (1.0 - row.phi2 ** 2)
    r = row.I1 * row.I2 * (1.0 - row.phi1 * row.phi2 * dot)
    return QuadraticInequality(p + q - 2.0 * r, 2.0 * (r - p), p)


def polarization_inequality_beta(row: RowPolarization) -> QuadraticInequality:
    """βw1 + (1-β)w2 ∈ H_S 的偏振部分"""
    return polarization_inequality_alpha(row.swapped())


def reduced_inequality_alpha(row: RowPolarization) -> QuadraticInequality:
    """源 1 在该行完全偏振时的化简形式 (常数项为 0)"""
    dot = inner_axis(row.mu1, row.mu2)
    cross = row.I1 * row.I2 * (1.0 - row.phi2 * dot)
    return QuadraticInequality(row.I2 ** 2 * (1.0 - row.phi2 ** 2) - 2.0 * cross, 2.0 * cross, 0.0)


def reduced_inequality_beta(row: RowPolarization) -> QuadraticInequality:
    """源 2 在该行完全偏振时的化简形式"""
    return reduced_inequality_alpha(row.swapped())


def solve_quadratic_ineq(q: QuadraticInequality) -> List[Interval]:
    """
    a2·t² + a1·t + a0 ≥ 0 的解集，升序的不相交闭区间 (至多两个)。
    |a2| ≤ εc 视为一次，|a1| 也 ≤ εc 视为常数，εc = 1e-12·max|a_i|。
    """
    a2, a1, a0 = float(q.a2), float(q.a1), float(q.a0)
    eps_c = 1e-12 * max(abs(a2), abs(a1), abs(a0))
    if eps_c == 0.0:
        return [Interval.real_line()]

    if abs(a2) <= eps_c:
        if abs(a1) <= eps_c:
            return [Interval.real_line()] if a0 >= 0.0 else []
        root = -a0 / a1
        if a1 > 0.0:
            return [Interval(root, math.inf, True, False)]
        return [Interval(-math.inf, root, False, True)]

    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0.0:
        return [Interval.real_line()] if a2 > 0.0 else []
    if disc == 0.0:
        if a2 > 0.0:
            return [Interval.real_line()]
        return [Interval.point(-a1 / (2.0 * a2))]

    # 数值稳定的求根
    sq = math.sqrt(disc)
    qq = -0.5 * (a1 + math.copysign(sq, a1))
    r1 = qq / a2
    r2 = a0 / qq if qq != 0.0 else r1
    lo, hi = min(r1, r2), max(r1, r2)
    if a2 > 0.0:
        return [Interval(-math.inf, lo, False, True), Interval(hi, math.inf, True, False)]
    return [Interval(lo, hi)]


def component_containing(sets: Sequence[Interval], at: float = 0.0, tol: float = SNAP_TOL) -> Optional[Interval]:
    """解集中包含 at 的连通分量；端点在 tol 内时吸附到 at"""
    for iv in sets:
        if iv.contains(at, tol):
            if iv.lo > at or iv.hi < at:
                return Interval(min(iv.lo, at), max(iv.hi, at), iv.lo_closed or iv.lo > at, iv.hi_closed or iv.hi < at)
            return iv
    return None


def _row_interval(q: QuadraticInequality) -> Tuple[Interval, str]:
    """返回 (区间, 状态)，状态为 "ok" / "split" (舍弃了另一分量) / "missing" """
    sets = solve_quadratic_ineq(q)
    comp = component_containing(sets)
    if comp is None:
        # 可行因子在 0 处 a0 ≥ 0，只有舍入误差会到达这里
        return Interval.point(0.0), "missing"
    return comp, ("split" if len(sets) > 1 else "ok")


def _summarize(label: str, statuses: List[str], notes: List[str]):
    split = [i for i, s in enumerate(statuses) if s == "split"]
    missing = [i for i, s in enumerate(statuses) if s == "missing"]
    if split:
        notes.append(f"{label}: disconnected component excluded on {len(split)} row(s), first row {split[0]}")
    if missing:
        notes.append(f"{label}: identity outside the solution set on rows {missing[:10]}, kept {{0}}")


# --- NMF 区间 ---

def nmf_intervals(ReW: np.ndarray, H: np.ndarray) -> Tuple[Interval, Interval]:
    """
    α_min = -min_{m∈M1} I_m1/(I_m2 - I_m1)，M1 = {m : I_m2 > I_m1}，空集时为 -∞
    α_max = min_n h_2n/(h_1n + h_2n)；β 对称。
    每列都要求 h_1n + h_2n > 0；没有列时上界为 +∞。
    """
    ReW = np.asarray(ReW, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if ReW.ndim != 2 or ReW.shape[1] != 2 or H.ndim != 2 or H.shape[0] != 2:
        raise RankMismatchError("NMF admissible intervals are defined for two sources only")
    col_sum = H[0] + H[1]
    empty = zero_activation_columns(H)
    if empty.size:
        raise InfeasibleFactorsError(
            f"activation column {empty[0]} sums to zero ({empty.size} such column(s)); the ratio bounds are undefined"
        )
    I1, I2 = ReW[:, 0], ReW[:, 1]

    def _upper(own: np.ndarray) -> float:
        if own.size == 0:
            return math.inf
        return float(np.min(own / col_sum))

    def _lower(own: np.ndarray, other: np.ndarray) -> float:
        mask = other > own
        if not np.any(mask):
            return -math.inf
        return -float(np.min(own[mask] / (other[mask] - own[mask])))

    def _interval(lo: float, hi: float) -> Interval:
        # hi ≥ 1 时 T 在端点不可逆
        return Interval(lo, hi, math.isfinite(lo), hi < 1.0)

    alpha = _interval(_lower(I1, I2), _upper(H[1]))
    beta = _interval(_lower(I2, I1), _upper(H[0]))
    return alpha, beta


def zero_activation_columns(H: np.ndarray) -> np.ndarray:
    """没有任何源激活的列下标"""
    H = np.asarray(H, dtype=np.float64)
    return np.flatnonzero(~np.any(H > 0.0, axis=0))


# --- 报告 ---

def _require_two_sources(W: QuaternionMatrix, H: np.ndarray):
    if W.cols != 2 or np.shape(H)[0] != 2:
        raise RankMismatchError(f"interval analysis needs P = 2, got P = {W.cols}")


def admissibility_report(W: QuaternionMatrix, H: np.ndarray, tol: float = DEFAULT_TOL) -> AdmissibilityReport:
    _require_two_sources(W, H)
    H = np.asarray(H, dtype=np.float64)
    check_feasible(W, H, tol)

    notes: List[str] = []
    empty = zero_activation_columns(H)
    if empty.size:
        notes.append(f"activation: {empty.size} zero-sum column(s) ignored, first column {empty[0]}")
        logger.debug(f"[Uniqueness] ignoring {empty.size} zero activation column(s)")
    nmf_alpha, nmf_beta = nmf_intervals(W.real_part(), np.delete(H, empty, axis=1))
    rows = row_polarizations(W)
    alpha_rows = [_row_interval(polarization_inequality_alpha(row)) for row in rows]
    beta_rows = [_row_interval(polarization_inequality_beta(row)) for row in rows]
    pol_alpha = [iv for iv, _ in alpha_rows]
    pol_beta = [iv for iv, _ in beta_rows]
    _summarize("alpha", [s for _, s in alpha_rows], notes)
    _summarize("beta", [s for _, s in beta_rows], notes)

    qnmf_alpha = reduce(Interval.intersect, pol_alpha, nmf_alpha)
    qnmf_beta = reduce(Interval.intersect, pol_beta, nmf_beta)
    unique = qnmf_alpha.is_point(0.0, UNIQUE_TOL) and qnmf_beta.is_point(0.0, UNIQUE_TOL)
    logger.info(
        f"[Uniqueness] alpha [{qnmf_alpha.lo:.4g}, {qnmf_alpha.hi:.4g}] "
        f"beta [{qnmf_beta.lo:.4g}, {qnmf_beta.hi:.4g}] unique={unique}"
    )
    return AdmissibilityReport(nmf_alpha, nmf_beta, pol_alpha, pol_beta, qnmf_alpha, qnmf_beta, unique, notes)


# --- 变换 ---

def transform_matrix(alpha: float, beta: float) -> np.ndarray:
    return np.array([[1.0 - alpha, beta], [alpha, 1.0 - beta]])


def inverse_transform(alpha: float, beta: float) -> np.ndarray:
    det = 1.0 - alpha - beta
    if det == 0.0:
        raise InfeasibleFactorsError(f"T({alpha}, {beta}) is singular (alpha + beta = 1)")
    return np.array([[1.0 - beta, -beta], [-alpha, 1.0 - alpha]]) / det


def apply_transform(W: QuaternionMatrix, H: np.ndarray, T: np.ndarray, T_inv: Optional[np.ndarray] = None):
    T = np.asarray(T, dtype=np.float64)
    T_inv = np.linalg.inv(T) if T_inv is None else T_inv
    return W @ T, T_inv @ np.asarray(H, dtype=np.float64)


def elementary_transform(P: int, p0: int, q0: int, alpha: float) -> np.ndarray:
    """单位阵，(p0, q0) 处为 -α；逆为 elementary_transform(P, p0, q0, -alpha)"""
    if p0 == q0:
        raise ValueError("p0 and q0 must differ")
    T = np.eye(P)
    T[p0, q0] = -alpha
    return T


def elementary_shift_interval(W: QuaternionMatrix, H: np.ndarray, p0: int, q0: int) -> Interval:
    """
    W·T^α_{p0q0} 与 T^{-α}_{p0q0}·H 保持可行的 α 集合 (包含 0 的分量)。
    受影响的是 W 的第 q0 列 w_q0 - α w_p0 与 H 的第 p0 行 h_p0 + α h_q0。
    区间非退化即说明分解不唯一，适用于任意 P。
    """
    H = np.asarray(H, dtype=np.float64)
    if W.cols != H.shape[0]:
        raise RankMismatchError(f"W has {W.cols} sources but H has {H.shape[0]} rows")
    if p0 == q0:
        raise ValueError("p0 and q0 must differ")
    intensity, dop, axis = source_parameters(W)
    # c: 被修改的列，s: 被减去的列
    Ic, Is = intensity[:, q0], intensity[:, p0]
    Pc, Ps = dop[:, q0], dop[:, p0]
    dots = np.clip(np.einsum("mc,mc->m", axis[:, q0], axis[:, p0]), -1.0, 1.0)

    result = Interval.real_line()
    for m in range(W.rows):
        quad = QuadraticInequality(
            Is[m] ** 2 * (1.0 - Ps[m] ** 2),
            -2.0 * Ic[m] * Is[m] * (1.0 - Pc[m] * Ps[m] * dots[m]),
            Ic[m] ** 2 * (1.0 - Pc[m] ** 2),
        )
        result = result.intersect(_row_interval(quad)[0])
        if Is[m] > 0.0:
            result = result.intersect(Interval(-math.inf, Ic[m] / Is[m], False, True))

    active = H[q0] > 0.0
    if np.any(active):
        result = result.intersect(Interval(float(np.max(-H[p0, active] / H[q0, active])), math.inf, True, False))
    return result


def admissible_envelopes(W: QuaternionMatrix, H: np.ndarray, report: AdmissibilityReport) -> List[dict]:
    """区间端点处的 (W·T, T⁻¹·H)，只取有限且 T 可逆的端点"""
    envelopes = []
    for kind, a_iv, b_iv in (("nmf", report.nmf_alpha, report.nmf_beta), ("qnmf", report.qnmf_alpha, report.qnmf_beta)):
        points = (
            (f"{kind}_alpha_min", a_iv.lo, 0.0),
            (f"{kind}_alpha_max", a_iv.hi, 0.0),
            (f"{kind}_beta_min", 0.0, b_iv.lo),
            (f"{kind}_beta_max", 0.0, b_iv.hi),
        )
        for label, alpha, beta in points:
            if not (math.isfinite(alpha) and math.isfinite(beta)) or alpha + beta == 1.0:
                continue
            W_t, H_t = apply_transform(W, H, transform_matrix(alpha, beta), inverse_transform(alpha, beta))
            envelopes.append({"label": label, "alpha": alpha, "beta": beta, "W": W_t, "H": H_t})
    return envelopes


# --- 条件检查 ---

def _dominance(I_own, I_other, phi_other, dot):
    """2·I_own·(1 - Φ_other⟨μ,μ'⟩) ≥ (1 - Φ_other²)·I_other"""
    lhs = 2.0 * I_own * (1.0 - phi_other * dot)
    rhs = (1.0 - phi_other ** 2) * I_other
    return lhs >= rhs - DEFAULT_TOL * np.maximum(1.0, np.abs(rhs))


def check_sufficient_conditions(W: QuaternionMatrix, H: np.ndarray, tol: float = DEFAULT_TOL) -> SufficientVerdict:
    """
    源条件 (同行读法): 存在 m1 使源 1 完全偏振、源 2 偏振状态不同且强度满足占优不等式；
    m2 对源 2 对称。见证行要求两源强度均 > 0。
    激活条件: 存在纯像素列 n1 (只有源 1) 与 n2 (只有源 2)，零判定不设容差。
    """
    _require_two_sources(W, H)
    H = np.asarray(H, dtype=np.float64)
    intensity, dop, axis = source_parameters(W)
    I1, I2 = intensity[:, 0], intensity[:, 1]
    P1, P2 = dop[:, 0], dop[:, 1]
    mu1, mu2 = axis[:, 0], axis[:, 1]
    dots = np.clip(np.einsum("mc,mc->m", mu1, mu2), -1.0, 1.0)
    positive = (I1 > 0.0) & (I2 > 0.0)

    distinct_1 = np.linalg.norm(P2[:, None] * mu2 - mu1, axis=1) > tol
    distinct_2 = np.linalg.norm(P1[:, None] * mu1 - mu2, axis=1) > tol
    base_1 = positive & (P1 >= 1.0 - tol) & distinct_1
    base_2 = positive & (P2 >= 1.0 - tol) & distinct_2
    cand_1 = base_1 & _dominance(I1, I2, P2, dots)
    cand_2 = base_2 & _dominance(I2, I1, P1, dots)

    m1 = int(np.argmax(cand_1)) if np.any(cand_1) else None
    m2 = int(np.argmax(cand_2)) if np.any(cand_2) else None
    shared = positive & (P1 >= 1.0 - tol) & (P2 >= 1.0 - tol) & (np.linalg.norm(mu1 - mu2, axis=1) > tol)
    shared_row = int(np.argmax(shared)) if np.any(shared) else None

    # 交叉行读法: 第一个占优不等式用 ⟨μ_{m1,1}, μ_{m2,2}⟩
    mismatch: List[int] = []
    if m2 is not None:
        cross_dots = np.clip(mu1 @ mu2[m2], -1.0, 1.0)
        cross = base_1 & _dominance(I1, I2, P2, cross_dots)
        mismatch = [int(m) for m in np.flatnonzero(cross != cand_1)]
        if mismatch:
            logger.warning(f"[Uniqueness] same-row and cross-row readings disagree at rows {mismatch[:10]}")

    pure_1 = (H[0] > 0.0) & (H[1] == 0.0)
    pure_2 = (H[1] > 0.0) & (H[0] == 0.0)
    n1 = int(np.argmax(pure_1)) if np.any(pure_1) else None
    n2 = int(np.argmax(pure_2)) if np.any(pure_2) else None

    source_ok = m1 is not None and m2 is not None
    activation_ok = n1 is not None and n2 is not None
    return SufficientVerdict(
        holds=source_ok and activation_ok,
        source_condition=source_ok,
        activation_condition=activation_ok,
        m1=m1, m2=m2, n1=n1, n2=n2,
        shared_row=shared_row,
        reading_mismatch_rows=mismatch,
    )


def check_necessary_conditions(W: QuaternionMatrix, H: np.ndarray, tol: float = DEFAULT_TOL) -> NecessaryVerdict:
    """
    对每个有序对 (p, q):
    偏振条件: 存在 m 使 Φ_mp = 1 且 Φ_mq·μ_mq ≠ μ_mp；
    激活条件: 存在 n 使 h_pn = 0 且 h_qn > 0。
    要求所有 Re w_mp > 0。
    """
    H = np.asarray(H, dtype=np.float64)
    if W.cols != H.shape[0]:
        raise RankMismatchError(f"W has {W.cols} sources but H has {H.shape[0]} rows")
    ReW = W.real_part()
    if np.any(ReW <= 0.0):
        m, p = np.argwhere(ReW <= 0.0)[0]
        raise VanishingSourceError(f"source {p} vanishes at row {m} (Re w = {ReW[m, p]})")

    _, dop, axis = source_parameters(W)
    witnesses = {}
    P = W.cols
    for p in range(P):
        for q in range(P):
            if p == q:
                continue
            distinct = np.linalg.norm(dop[:, q, None] * axis[:, q] - axis[:, p], axis=1) > tol
            rows = np.flatnonzero((dop[:, p] >= 1.0 - tol) & distinct)
            if rows.size == 0:
                return NecessaryVerdict(False, (p, q), "polarization", witnesses)
            witnesses[f"polarization[{p},{q}]"] = int(rows[0])

            cols = np.flatnonzero((H[p] == 0.0) & (H[q] > 0.0))
            if cols.size == 0:
                return NecessaryVerdict(False, (p, q), "activation", witnesses)
            witnesses[f"activation[{p},{q}]"] = int(cols[0])
    return NecessaryVerdict(True, None, None, witnesses)


def _pure_positions(M: np.ndarray, zero_tol: float) -> List[Optional[int]]:
    """对每行 p，找一列只有第 p 个分量为正 (M 形状 P×K)"""
    positions = []
    for p in range(M.shape[0]):
        others = np.delete(M, p, axis=0)
        mask = (M[p] > zero_tol) & np.all(np.abs(others) <= zero_tol, axis=0)
        positions.append(int(np.argmax(mask)) if np.any(mask) else None)
    return positions


def check_separable_delegate(W: QuaternionMatrix, H: np.ndarray, zero_tol: float = 0.0) -> SeparabilityVerdict:
    """
    Re W 与 H 同时可分 (各含缩放置换单位阵) 时 NMF 本质唯一，从而 QNMF 唯一。
    只做可分性检验，不检验 sufficiently scattered。
    """
    H = np.asarray(H, dtype=np.float64)
    if W.cols != H.shape[0]:
        raise RankMismatchError(f"W has {W.cols} sources but H has {H.shape[0]} rows")
    w_rows = _pure_positions(W.real_part().T, zero_tol)
    h_cols = _pure_positions(H, zero_tol)
    w_ok = all(r is not None for r in w_rows)
    h_ok = all(c is not None for c in h_cols)
    return SeparabilityVerdict(w_ok and h_ok, w_ok, h_ok, w_rows, h_cols)
