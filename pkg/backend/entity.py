# backend/entity.py

import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple, Any

import numpy as np

from backend.quaternion import DEFAULT_TOL, Quaternion, QuaternionMatrix


def encode_float(x: float) -> Any:
    """JSON 不支持 inf，统一编码为字符串"""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def decode_float(x: Any) -> float:
    return float(x)


# --- Stokes / 偏振 ---

@dataclass(frozen=True)
class StokesSample:
    s0: float
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0

    def is_admissible(self, tol: float = DEFAULT_TOL) -> bool:
        return self.s0 >= 0.0 and self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2 <= self.s0 ** 2 * (1.0 + tol)

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3], dtype=np.float64)


@dataclass(frozen=True)
class PolarizationDescriptor:
    """w = I + I·Φ·μ"""
    intensity: float
    dop: float
    axis: Quaternion


@dataclass(frozen=True)
class HermitianTwo:
    """
    [[a, c], [conj(c), b]]，复数 c 以实数对 (c_re, c_im) 存储
    """
    a: float
    b: float
    c_re: float = 0.0
    c_im: float = 0.0

    @property
    def trace(self) -> float:
        return self.a + self.b

    @property
    def det(self) -> float:
        return self.a * self.b - (self.c_re ** 2 + self.c_im ** 2)

    def is_psd(self, tol: float = DEFAULT_TOL) -> bool:
        scale = max(1.0, abs(self.a), abs(self.b), math.hypot(self.c_re, self.c_im))
        return self.trace >= -tol * scale and self.det >= -tol * scale * scale


@dataclass(frozen=True)
class HermitianEigen:
    """η1 ≥ η2；v1/v2 形状 (2, 2)，每行为一个复分量的 (re, im)"""
    eta1: float
    eta2: float
    v1: np.ndarray
    v2: np.ndarray


# --- 区间与二次不等式 ---

@dataclass(frozen=True)
class Interval:
    """
    闭区间 [lo, hi]（扩展实数）。lo_closed/hi_closed 标记端点是否可达；
    lo > hi 表示空集。
    """
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    @classmethod
    def point(cls, x: float = 0.0) -> "Interval":
        return cls(float(x), float(x))

    @classmethod
    def real_line(cls) -> "Interval":
        return cls(-math.inf, math.inf, False, False)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    @property
    def width(self) -> float:
        return 0.0 if self.is_empty else self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return (not self.is_empty) and self.lo - tol <= x <= self.hi + tol

    def is_point(self, at: float = 0.0, tol: float = 1e-9) -> bool:
        return (not self.is_empty) and abs(self.lo - at) <= tol and abs(self.hi - at) <= tol

    def is_subset(self, other: "Interval", tol: float = 0.0) -> bool:
        if self.is_empty:
            return True
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    def intersect(self, other: "Interval") -> "Interval":
        if self.lo > other.lo:
            lo, lo_closed = self.lo, self.lo_closed
        elif other.lo > self.lo:
            lo, lo_closed = other.lo, other.lo_closed
        else:
            lo, lo_closed = self.lo, self.lo_closed and other.lo_closed
        if self.hi < other.hi:
            hi, hi_closed = self.hi, self.hi_closed
        elif other.hi < self.hi:
            hi, hi_closed = other.hi, other.hi_closed
        else:
            hi, hi_closed = self.hi, self.hi_closed and other.hi_closed
        return Interval(lo, hi, lo_closed, hi_closed)

    def to_dict(self) -> dict:
        return {
            "lo": encode_float(self.lo),
            "hi": encode_float(self.hi),
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Interval":
        return cls(
            decode_float(data["lo"]),
            decode_float(data["hi"]),
            bool(data.get("lo_closed", True)),
            bool(data.get("hi_closed", True)),
        )


@dataclass(frozen=True)
class QuadraticInequality:
    """a2·t² + a1·t + a0 ≥ 0"""
    a2: float
    a1: float
    a0: float

    def evaluate(self, t):
        return (self.a2 * t + self.a1) * t + self.a0


@dataclass(frozen=True)
class RowPolarization:
    """某一行 m 上两个源的 (I, Φ, μ)"""
    I1: float
    phi1: float
    mu1: Quaternion
    I2: float
    phi2: float
    mu2: Quaternion

    def swapped(self) -> "RowPolarization":
        return RowPolarization(self.I2, self.phi2, self.mu2, self.I1, self.phi1, self.mu1)


# --- 分解结果 ---

@dataclass
class QnmfFactors:
    """
    W ∈ H_S^{M×P}（源），H ∈ R_+^{P×N}（激活）
    """
    W: QuaternionMatrix
    H: np.ndarray
    seed: Optional[int] = None
    iterations: int = 0
    residual_trace: Tuple[float, ...] = ()

    @property
    def rank(self) -> int:
        return self.W.cols

    def product(self) -> QuaternionMatrix:
        return self.W @ self.H


@dataclass(frozen=True)
class SolverConfig:
    rank: int = 3
    max_iters: int = 500
    stop_delta: float = 1e-5
    seed: int = 0
    restarts: int = 1
    gram_ridge: float = 0.0
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        default = cls()
        return cls(
            rank=int(data.get("rank", default.rank)),
            max_iters=int(data.get("max_iters", default.max_iters)),
            stop_delta=float(data.get("stop_delta", default.stop_delta)),
            seed=int(data.get("seed", default.seed)),
            restarts=int(data.get("restarts", default.restarts)),
            gram_ridge=float(data.get("gram_ridge", default.gram_ridge)),
            workers=int(data.get("workers", default.workers)),
        )


@dataclass
class SolveReport:
    factors: Optional[QnmfFactors]
    residual_trace: Tuple[float, ...]
    iterations: int
    converged: bool
    seed: int = 0
    status: str = "ok"
    message: str = ""
    zero_rows: int = 0

    @property
    def final_error(self) -> float:
        return self.residual_trace[-1] if self.residual_trace else math.inf

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "status": self.status,
            "message": self.message,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_error": encode_float(self.final_error),
            "zero_rows": self.zero_rows,
        }


@dataclass
class AlignmentResult:
    """permutation[q] = 与真值第 q 列匹配的估计列"""
    factors: QnmfFactors
    permutation: Tuple[int, ...]
    scales: np.ndarray
    eps_w: float
    eps_h: float

    def to_dict(self) -> dict:
        return {
            "eps_W": encode_float(self.eps_w),
            "eps_H": encode_float(self.eps_h),
            "permutation": list(self.permutation),
            "scales": [encode_float(s) for s in self.scales],
        }


# --- 唯一性分析 ---

@dataclass
class AdmissibilityReport:
    nmf_alpha: Interval
    nmf_beta: Interval
    pol_alpha_rows: List[Interval]
    pol_beta_rows: List[Interval]
    qnmf_alpha: Interval
    qnmf_beta: Interval
    unique: bool
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "nmf_alpha": self.nmf_alpha.to_dict(),
            "nmf_beta": self.nmf_beta.to_dict(),
            "pol_alpha_rows": [iv.to_dict() for iv in self.pol_alpha_rows],
            "pol_beta_rows": [iv.to_dict() for iv in self.pol_beta_rows],
            "qnmf_alpha": self.qnmf_alpha.to_dict(),
            "qnmf_beta": self.qnmf_beta.to_dict(),
            "unique": self.unique,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdmissibilityReport":
        return cls(
            nmf_alpha=Interval.from_dict(data["nmf_alpha"]),
            nmf_beta=Interval.from_dict(data["nmf_beta"]),
            pol_alpha_rows=[Interval.from_dict(d) for d in data.get("pol_alpha_rows", [])],
            pol_beta_rows=[Interval.from_dict(d) for d in data.get("pol_beta_rows", [])],
            qnmf_alpha=Interval.from_dict(data["qnmf_alpha"]),
            qnmf_beta=Interval.from_dict(data["qnmf_beta"]),
            unique=bool(data["unique"]),
            notes=list(data.get("notes", [])),
        )


@dataclass
class SufficientVerdict:
    """
    P=2 充分条件: 偏振条件 (行 m1/m2 上某源完全偏振且强度占优) + 激活条件 (纯像素列 n1/n2)。
    shared_row: 两源在同一行均完全偏振且轴不同的行。
    reading_mismatch_rows: 交叉行读法与同行读法结论不一致的候选行。
    """
    holds: bool
    source_condition: bool
    activation_condition: bool
    m1: Optional[int] = None
    m2: Optional[int] = None
    n1: Optional[int] = None
    n2: Optional[int] = None
    shared_row: Optional[int] = None
    reading_mismatch_rows: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NecessaryVerdict:
    """failed_condition: "polarization" (无完全偏振且状态不同的行) 或 "activation" (无 q 活跃而 p 为零的列)"""
    holds: bool
    violating_pair: Optional[Tuple[int, int]] = None
    failed_condition: Optional[str] = None
    witnesses: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "violating_pair": list(self.violating_pair) if self.violating_pair else None,
            "failed_condition": self.failed_condition,
            "witnesses": dict(self.witnesses),
        }


@dataclass
class SeparabilityVerdict:
    holds: bool
    w_separable: bool
    h_separable: bool
    w_rows: List[Optional[int]] = field(default_factory=list)
    h_cols: List[Optional[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# --- 合成数据规格 ---

@dataclass(frozen=True)
class Bump:
    center: float
    width: float
    amplitude: float


@dataclass(frozen=True)
class AxisKeyframe:
    band: float
    axis: Tuple[float, float, float]


@dataclass(frozen=True)
class SourceSpec:
    """
    单个源的生成参数。dop_profile 长度为 1（常数）或 num_bands；
    axis_profile 为关键帧，单个关键帧即常数轴。
    """
    num_bands: int
    intensity_profile: Tuple[Bump, ...] = ()
    intensity_floor: float = 0.05
    dop_profile: Tuple[float, ...] = (1.0,)
    axis_profile: Tuple[AxisKeyframe, ...] = (AxisKeyframe(0.0, (1.0, 0.0, 0.0)),)
    jitter: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SourceSpec":
        default = cls(num_bands=int(data.get("num_bands", 0)))
        bumps = tuple(
            Bump(float(b["center"]), float(b["width"]), float(b["amplitude"]))
            for b in data.get("intensity_profile", [])
        )
        dop = data.get("dop_profile", default.dop_profile)
        if isinstance(dop, (int, float)):
            dop = (dop,)
        axes = data.get("axis_profile", None)
        if axes is None:
            axis_profile = default.axis_profile
        else:
            axis_profile = tuple(
                AxisKeyframe(float(k.get("band", 0.0)), tuple(float(v) for v in k["axis"])) for k in axes
            )
        return cls(
            num_bands=int(data["num_bands"]),
            intensity_profile=bumps,
            intensity_floor=float(data.get("intensity_floor", default.intensity_floor)),
            dop_profile=tuple(float(v) for v in dop),
            axis_profile=axis_profile,
            jitter=float(data.get("jitter", default.jitter)),
        )


@dataclass(frozen=True)
class Blob:
    row: float
    col: float
    sigma: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class ActivationSpec:
    """
    blobs[p] 为源 p 的高斯斑块；为空时按 seed 随机抽取 blobs_per_source 个
    """
    grid: Tuple[int, int] = (16, 16)
    num_sources: int = 3
    blobs: Tuple[Tuple[Blob, ...], ...] = ()
    blobs_per_source: int = 2
    ensure_pure_pixels: bool = True
    floor: float = 0.0
    truncate: float = 3.0

    @property
    def num_pixels(self) -> int:
        return int(self.grid[0] * self.grid[1])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ActivationSpec":
        default = cls()
        blobs = tuple(
            tuple(Blob(float(b["row"]), float(b["col"]), float(b["sigma"]), float(b.get("amplitude", 1.0))) for b in per_source)
            for per_source in data.get("blobs", [])
        )
        grid = data.get("grid", default.grid)
        return cls(
            grid=(int(grid[0]), int(grid[1])),
            num_sources=int(data.get("num_sources", len(blobs) or default.num_sources)),
            blobs=blobs,
            blobs_per_source=int(data.get("blobs_per_source", default.blobs_per_source)),
            ensure_pure_pixels=bool(data.get("ensure_pure_pixels", default.ensure_pure_pixels)),
            floor=float(data.get("floor", default.floor)),
            truncate=float(data.get("truncate", default.truncate)),
        )


# --- 运行配置 ---

@dataclass(frozen=True)
class InputPaths:
    data: str = ""
    W: str = ""
    H: str = ""
    truth_W: str = ""
    truth_H: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "InputPaths":
        return cls(**{k: str(data.get(k, "") or "") for k in ("data", "W", "H", "truth_W", "truth_H")})


@dataclass(frozen=True)
class RunConfig:
    command: str = "generate"
    seed: int = 0
    out: str = "./runs/latest"
    solver: SolverConfig = field(default_factory=SolverConfig)
    sources: Tuple[SourceSpec, ...] = ()
    activations: ActivationSpec = field(default_factory=ActivationSpec)
    noise_sigma: float = 0.0
    inputs: InputPaths = field(default_factory=InputPaths)
    project_input: bool = False
    envelopes: bool = True
    tolerance: float = DEFAULT_TOL

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "out": self.out,
            "solver": self.solver.to_dict(),
            "sources": [s.to_dict() for s in self.sources],
            "activations": self.activations.to_dict(),
            "noise_sigma": self.noise_sigma,
            "inputs": self.inputs.to_dict(),
            "project_input": self.project_input,
            "envelopes": self.envelopes,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        default = cls()
        return cls(
            command=str(data.get("command", default.command)),
            seed=int(data.get("seed", default.seed)),
            out=str(data.get("out", default.out)),
            solver=SolverConfig.from_dict(data.get("solver", {})),
            sources=tuple(SourceSpec.from_dict(s) for s in data.get("sources", [])),
            activations=ActivationSpec.from_dict(data.get("activations", {})),
            noise_sigma=float(data.get("noise_sigma", default.noise_sigma)),
            inputs=InputPaths.from_dict(data.get("inputs", {})),
            project_input=bool(data.get("project_input", default.project_input)),
            envelopes=bool(data.get("envelopes", default.envelopes)),
            tolerance=float(data.get("tolerance", default.tolerance)),
        )
