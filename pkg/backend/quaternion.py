# backend/quaternion.py

"""
四元数标量与稠密矩阵运算。

分量顺序统一为 (re, i, j, k)。矩阵存储为形状 (rows, cols, 4) 的 float64
数组，行优先；所有运算返回新对象，不与输入共享可写内存。
"""

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from backend.errors import DimensionMismatchError

DEFAULT_TOL = 1e-9

RealMatrix = np.ndarray


def hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting Hamilton product of (..., 4) arrays."""
    a0, a1, a2, a3 = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    b0, b1, b2, b3 = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        (
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ),
        axis=-1,
    )


def conj_components(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out[..., 1:] *= -1.0
    return out


@dataclass(frozen=True)
class Quaternion:
    """q = re + im_i·i + im_j·j + im_k·k"""

    re: float = 0.0
    im_i: float = 0.0
    im_j: float = 0.0
    im_k: float = 0.0

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "Quaternion":
        a = np.asarray(arr, dtype=np.float64).reshape(4)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def pure(cls, x: float, y: float, z: float) -> "Quaternion":
        return cls(0.0, float(x), float(y), float(z))

    def as_array(self) -> np.ndarray:
        return np.array([self.re, self.im_i, self.im_j, self.im_k], dtype=np.float64)

    @property
    def imag(self) -> "Quaternion":
        return Quaternion(0.0, self.im_i, self.im_j, self.im_k)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.im_i, self.im_j, self.im_k], dtype=np.float64)

    def conj(self) -> "Quaternion":
        return Quaternion(self.re, -self.im_i, -self.im_j, -self.im_k)

    def norm_sq(self) -> float:
        return self.re * self.re + self.im_i * self.im_i + self.im_j * self.im_j + self.im_k * self.im_k

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def is_pure(self, tol: float = DEFAULT_TOL) -> bool:
        return abs(self.re) <= tol * max(1.0, self.norm())

    def is_unit(self, tol: float = DEFAULT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def isclose(self, other: "Quaternion", tol: float = DEFAULT_TOL) -> bool:
        scale = max(1.0, self.norm(), other.norm())
        return bool(np.max(np.abs(self.as_array() - other.as_array())) <= tol * scale)

    def __mul__(self, other: Union["Quaternion", float, int]) -> "Quaternion":
        if isinstance(other, Quaternion):
            return Quaternion.from_array(hamilton(self.as_array(), other.as_array()))
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Quaternion.from_array(self.as_array() * float(other))
        return NotImplemented

    def __rmul__(self, other: Union[float, int]) -> "Quaternion":
        # 实数与四元数可交换
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Quaternion.from_array(self.as_array() * float(other))
        return NotImplemented

    def __add__(self, other: "Quaternion") -> "Quaternion":
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = Quaternion(float(other))
        if not isinstance(other, Quaternion):
            return NotImplemented
        return Quaternion.from_array(self.as_array() + other.as_array())

    __radd__ = __add__

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        if isinstance(other, (int, float, np.floating, np.integer)):
            other = Quaternion(float(other))
        if not isinstance(other, Quaternion):
            return NotImplemented
        return Quaternion.from_array(self.as_array() - other.as_array())

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.re, -self.im_i, -self.im_j, -self.im_k)


ONE = Quaternion(1.0)
I = Quaternion(0.0, 1.0)
J = Quaternion(0.0, 0.0, 1.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)


def qmul(p: Quaternion, q: Quaternion) -> Quaternion:
    return p * q


def qconj(q: Quaternion) -> Quaternion:
    return q.conj()


def qnorm(q: Quaternion) -> float:
    return q.norm()


class QuaternionMatrix:
    """
    稠密四元数矩阵 Q ∈ H^{M×N}
    内部数组只读，运算一律产生新矩阵
    """

    __slots__ = ("_data",)
    __hash__ = None
    # ndarray @ QuaternionMatrix 交给 __rmatmul__
    __array_ufunc__ = None

    def __init__(self, data: np.ndarray):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[-1] != 4:
            raise DimensionMismatchError(f"expected an array of shape (rows, cols, 4), got {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

    # --- 构造 ---

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "QuaternionMatrix":
        return cls(np.zeros((rows, cols, 4)))

    @classmethod
    def identity(cls, n: int) -> "QuaternionMatrix":
        data = np.zeros((n, n, 4))
        data[np.arange(n), np.arange(n), 0] = 1.0
        return cls(data)

    @classmethod
    def from_real(cls, real: RealMatrix) -> "QuaternionMatrix":
        real = np.atleast_2d(np.asarray(real, dtype=np.float64))
        data = np.zeros(real.shape + (4,))
        data[..., 0] = real
        return cls(data)

    @classmethod
    def from_components(cls, re, im_i, im_j, im_k) -> "QuaternionMatrix":
        return cls(np.stack([np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in (re, im_i, im_j, im_k)], axis=-1))

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries: Iterable[Quaternion]) -> "QuaternionMatrix":
        entries = list(entries)
        if len(entries) != rows * cols:
            raise DimensionMismatchError(f"{len(entries)} entries cannot fill a {rows}x{cols} matrix")
        data = np.array([q.as_array() for q in entries], dtype=np.float64).reshape(rows, cols, 4)
        return cls(data)

    # --- 属性 ---

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    @property
    def entries(self) -> Tuple[Quaternion, ...]:
        return tuple(Quaternion.from_array(v) for v in self._data.reshape(-1, 4))

    def __getitem__(self, index: Tuple[int, int]) -> Quaternion:
        m, n = index
        return Quaternion.from_array(self._data[m, n])

    def __repr__(self) -> str:
        return f"QuaternionMatrix(rows={self.rows}, cols={self.cols})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuaternionMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def allclose(self, other: "QuaternionMatrix", rtol: float = DEFAULT_TOL, atol: float = 0.0) -> bool:
        return self.shape == other.shape and bool(np.allclose(self._data, other._data, rtol=rtol, atol=atol))

    # --- 代数 ---

    def conj(self) -> "QuaternionMatrix":
        return QuaternionMatrix(conj_components(self._data))

    def transpose(self) -> "QuaternionMatrix":
        return QuaternionMatrix(np.transpose(self._data, (1, 0, 2)))

    @property
    def T(self) -> "QuaternionMatrix":
        return self.transpose()

    def dagger(self) -> "QuaternionMatrix":
        return QuaternionMatrix(np.transpose(conj_components(self._data), (1, 0, 2)))

    def real_part(self) -> RealMatrix:
        return np.array(self._data[..., 0], copy=True)

    def imag_part(self) -> "QuaternionMatrix":
        data = np.array(self._data, copy=True)
        data[..., 0] = 0.0
        return QuaternionMatrix(data)

    def frobenius_sq(self) -> float:
        return float(np.sum(self._data * self._data))

    def _check_same_shape(self, other: "QuaternionMatrix", op: str):
        if self.shape != other.shape:
            raise DimensionMismatchError(f"cannot {op} {self.rows}x{self.cols} and {other.rows}x{other.cols}")

    def __add__(self, other: "QuaternionMatrix") -> "QuaternionMatrix":
        if not isinstance(other, QuaternionMatrix):
            return NotImplemented
        self._check_same_shape(other, "add")
        return QuaternionMatrix(self._data + other._data)

    def __sub__(self, other: "QuaternionMatrix") -> "QuaternionMatrix":
        if not isinstance(other, QuaternionMatrix):
            return NotImplemented
        self._check_same_shape(other, "subtract")
        return QuaternionMatrix(self._data - other._data)

    def __neg__(self) -> "QuaternionMatrix":
        return QuaternionMatrix(-self._data)

    def __matmul__(self, other: Union["QuaternionMatrix", RealMatrix]) -> "QuaternionMatrix":
        return matmul(self, other)

    def __rmatmul__(self, other: RealMatrix) -> "QuaternionMatrix":
        # 左乘实矩阵: R @ Q
        real = np.atleast_2d(np.asarray(other, dtype=np.float64))
        if real.shape[1] != self.rows:
            raise DimensionMismatchError(f"cannot multiply {real.shape[0]}x{real.shape[1]} by {self.rows}x{self.cols}")
        return QuaternionMatrix(np.einsum("ik,kjc->ijc", real, self._data))


def matmul(A: QuaternionMatrix, B: Union[QuaternionMatrix, RealMatrix]) -> QuaternionMatrix:
    """
    C_mn = Σ_k A_mk · B_kn，保持左右因子顺序。
    B 可以是实矩阵（如激活矩阵 H），此时按分量平面相乘。
    """
    if not isinstance(B, QuaternionMatrix):
        real = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.cols != real.shape[0]:
            raise DimensionMismatchError(f"cannot multiply {A.rows}x{A.cols} by {real.shape[0]}x{real.shape[1]}")
        return QuaternionMatrix(np.einsum("ikc,kj->ijc", A.data, real))

    if A.cols != B.rows:
        raise DimensionMismatchError(f"cannot multiply {A.rows}x{A.cols} by {B.rows}x{B.cols}")
    a0, a1, a2, a3 = (A.data[..., c] for c in range(4))
    b0, b1, b2, b3 = (B.data[..., c] for c in range(4))
    return QuaternionMatrix(
        np.stack(
            (
                a0 @ b0 - a1 @ b1 - a2 @ b2 - a3 @ b3,
                a0 @ b1 + a1 @ b0 + a2 @ b3 - a3 @ b2,
                a0 @ b2 - a1 @ b3 + a2 @ b0 + a3 @ b1,
                a0 @ b3 + a1 @ b2 - a2 @ b1 + a3 @ b0,
            ),
            axis=-1,
        )
    )


def dagger(Q: QuaternionMatrix) -> QuaternionMatrix:
    return Q.dagger()


def real_part(Q: QuaternionMatrix) -> RealMatrix:
    return Q.real_part()


def imag_part(Q: QuaternionMatrix) -> QuaternionMatrix:
    return Q.imag_part()


def frobenius_sq(Q: QuaternionMatrix) -> float:
    return Q.frobenius_sq()
