# backend/stokes.py

"""
Stokes 参数化、非负四元数锥 H_S 以及到 2x2 Hermitian 矩阵的双射。

嵌入约定: w = S0 + i·S3 + j·S1 + k·S2
锥投影: q -> f(q) -> 特征值截断 -> f^{-1}
"""

import math
from typing import Tuple

import numpy as np

from backend.entity import HermitianEigen, HermitianTwo, PolarizationDescriptor, StokesSample
from backend.errors import InvalidAxisError, ZeroIntensityError
from backend.quaternion import DEFAULT_TOL, I, Quaternion

# Stokes 顺序 (S0,S1,S2,S3) <-> 分量顺序 (re,i,j,k)
STOKES_TO_QUAT = (0, 3, 1, 2)
QUAT_TO_STOKES = (0, 2, 3, 1)


# --- 嵌入 ---

def stokes_to_quaternion(s: StokesSample) -> Quaternion:
    return Quaternion(s.s0, s.s3, s.s1, s.s2)


def quaternion_to_stokes(q: Quaternion) -> StokesSample:
    return StokesSample(q.re, q.im_j, q.im_k, q.im_i)


def stokes_array_to_quat(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64)[..., STOKES_TO_QUAT]


def quat_array_to_stokes(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64)[..., QUAT_TO_STOKES]


def degree_of_polarization(s: StokesSample) -> float:
    if not s.s0 > 0.0:
        raise ZeroIntensityError(f"degree of polarization needs S0 > 0, got {s.s0}")
    return math.sqrt(s.s1 ** 2 + s.s2 ** 2 + s.s3 ** 2) / s.s0


# --- 锥成员判定 ---

def in_cone(q: Quaternion, tol: float = DEFAULT_TOL) -> bool:
    scale = max(1.0, q.norm())
    imag_sq = q.im_i ** 2 + q.im_j ** 2 + q.im_k ** 2
    return q.re >= -tol * scale and imag_sq <= q.re * q.re * (1.0 + tol)


def in_cone_array(arr: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Entry-wise membership for an array of shape (..., 4)."""
    arr = np.asarray(arr, dtype=np.float64)
    re = arr[..., 0]
    imag_sq = np.sum(arr[..., 1:] ** 2, axis=-1)
    scale = np.maximum(1.0, np.sqrt(re * re + imag_sq))
    return (re >= -tol * scale) & (imag_sq <= re * re * (1.0 + tol))


# --- 偏振描述 ---

def describe(q: Quaternion) -> PolarizationDescriptor:
    """
    w = I + I·Φ·μ 的 (I, Φ, μ)。偏振部分为零时 μ 约定为 i。
    """
    if not q.re > 0.0:
        raise ZeroIntensityError(f"intensity must be positive to describe polarization, got {q.re}")
    vec = q.vector
    pol = float(np.linalg.norm(vec))
    if pol == 0.0:
        return PolarizationDescriptor(q.re, 0.0, I)
    return PolarizationDescriptor(q.re, pol / q.re, Quaternion.pure(*(vec / pol)))


def compose(desc: PolarizationDescriptor, tol: float = DEFAULT_TOL) -> Quaternion:
    axis = desc.axis
    if desc.dop > 0.0 and not (axis.is_pure(tol) and axis.is_unit(tol)):
        raise InvalidAxisError(f"polarization axis must be a pure unit quaternion, got {axis}")
    return Quaternion(desc.intensity) + axis.imag * (desc.intensity * desc.dop)


def polarization_components(arr: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (..., 4) -> (I, Φ, μ)，μ 形状 (..., 3)。
    I = 0 处 Φ 记为 0；偏振部分为零处 μ 取 i。
    """
    arr = np.asarray(arr, dtype=np.float64)
    intensity = arr[..., 0]
    vec = arr[..., 1:]
    pol = np.linalg.norm(vec, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dop = np.where(intensity > 0.0, pol / np.where(intensity > 0.0, intensity, 1.0), 0.0)
        axis = np.where(pol[..., None] > 0.0, vec / np.where(pol > 0.0, pol, 1.0)[..., None], 0.0)
    axis[pol == 0.0, 0] = 1.0
    return intensity, dop, axis


# --- Hermitian 映射 ---

def quat_to_hermitian(q: Quaternion) -> HermitianTwo:
    return HermitianTwo(
        a=(q.re + q.im_j) / 2.0,
        b=(q.re - q.im_j) / 2.0,
        c_re=q.im_k / 2.0,
        c_im=q.im_i / 2.0,
    )


def hermitian_to_quat(h: HermitianTwo) -> Quaternion:
    return Quaternion(h.a + h.b, 2.0 * h.c_im, h.a - h.b, 2.0 * h.c_re)


def stokes_to_coherency(s: StokesSample) -> HermitianTwo:
    """J = ½[[S0+S1, S2+iS3], [S2-iS3, S0-S1]]"""
    return HermitianTwo(
        a=(s.s0 + s.s1) / 2.0,
        b=(s.s0 - s.s1) / 2.0,
        c_re=s.s2 / 2.0,
        c_im=s.s3 / 2.0,
    )


def eig2_hermitian(h: HermitianTwo) -> HermitianEigen:
    """
    闭式特征分解，η1 ≥ η2。
    特征向量取 (c, η-a) 与 (η-b, c̄) 中范数较大者；简并时返回标准基。
    """
    mean = (h.a + h.b) / 2.0
    radius = math.hypot((h.a - h.b) / 2.0, math.hypot(h.c_re, h.c_im))
    eta1, eta2 = mean + radius, mean - radius

    if radius == 0.0:
        v1 = np.array([[1.0, 0.0], [0.0, 0.0]])
        v2 = np.array([[0.0, 0.0], [1.0, 0.0]])
        return HermitianEigen(eta1, eta2, v1, v2)

    first = np.array([[h.c_re, h.c_im], [eta1 - h.a, 0.0]])
    second = np.array([[eta1 - h.b, 0.0], [h.c_re, -h.c_im]])
    n_first, n_second = np.linalg.norm(first), np.linalg.norm(second)
    v1 = first / n_first if n_first >= n_second else second / n_second

    # v2 = (-conj(y1), conj(x1))
    (x_re, x_im), (y_re, y_im) = v1
    v2 = np.array([[-y_re, y_im], [x_re, -x_im]])
    return HermitianEigen(eta1, eta2, v1, v2)


def _outer(vec: np.ndarray, weight: float) -> HermitianTwo:
    """weight · v v†"""
    (x_re, x_im), (y_re, y_im) = vec
    return HermitianTwo(
        a=weight * (x_re * x_re + x_im * x_im),
        b=weight * (y_re * y_re + y_im * y_im),
        c_re=weight * (x_re * y_re + x_im * y_im),
        c_im=weight * (x_im * y_re - x_re * y_im),
    )


def reconstruct(eig: HermitianEigen, clip: bool = False) -> HermitianTwo:
    """Σ η_i v_i v_i†，clip=True 时 η_i 取 max(0, η_i)"""
    eta1, eta2 = (max(0.0, eig.eta1), max(0.0, eig.eta2)) if clip else (eig.eta1, eig.eta2)
    p, q = _outer(eig.v1, eta1), _outer(eig.v2, eta2)
    return HermitianTwo(p.a + q.a, p.b + q.b, p.c_re + q.c_re, p.c_im + q.c_im)


# --- 投影 ---

def project_cone(q: Quaternion) -> Quaternion:
    eig = eig2_hermitian(quat_to_hermitian(q))
    if eig.eta2 >= 0.0:
        return q
    return hermitian_to_quat(reconstruct(eig, clip=True))


def project_cone_array(arr: np.ndarray) -> np.ndarray:
    """
    project_cone 的向量化版本，输入输出形状 (..., 4)。
    只有 η2 < 0 < η1 的元素需要 η1·v1v1†，其余元素保持不变或置零。
    """
    arr = np.asarray(arr, dtype=np.float64)
    out = np.array(arr, copy=True)

    a = (arr[..., 0] + arr[..., 2]) / 2.0
    b = (arr[..., 0] - arr[..., 2]) / 2.0
    c_re = arr[..., 3] / 2.0
    c_im = arr[..., 1] / 2.0
    mean = (a + b) / 2.0
    radius = np.hypot((a - b) / 2.0, np.hypot(c_re, c_im))
    eta1, eta2 = mean + radius, mean - radius

    out[eta1 <= 0.0] = 0.0
    mask = (eta2 < 0.0) & (eta1 > 0.0)
    if not np.any(mask):
        return out

    a, b, c_re, c_im, eta1 = a[mask], b[mask], c_re[mask], c_im[mask], eta1[mask]
    # 候选 (c, η-a) 与 (η-b, c̄)
    f_norm = np.sqrt(c_re ** 2 + c_im ** 2 + (eta1 - a) ** 2)
    s_norm = np.sqrt((eta1 - b) ** 2 + c_re ** 2 + c_im ** 2)
    use_first = f_norm >= s_norm
    x_re = np.where(use_first, c_re / np.where(use_first, f_norm, 1.0), (eta1 - b) / np.where(use_first, 1.0, s_norm))
    x_im = np.where(use_first, c_im / np.where(use_first, f_norm, 1.0), 0.0)
    y_re = np.where(use_first, (eta1 - a) / np.where(use_first, f_norm, 1.0), c_re / np.where(use_first, 1.0, s_norm))
    y_im = np.where(use_first, 0.0, -c_im / np.where(use_first, 1.0, s_norm))

    pa = eta1 * (x_re ** 2 + x_im ** 2)
    pb = eta1 * (y_re ** 2 + y_im ** 2)
    pc_re = eta1 * (x_re * y_re + x_im * y_im)
    pc_im = eta1 * (x_im * y_re - x_re * y_im)
    out[mask] = np.stack((pa + pb, 2.0 * pc_im, pa - pb, 2.0 * pc_re), axis=-1)
    return out


def project_nonneg(M: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(M, dtype=np.float64), 0.0)
