# backend/sources/synthetic.py

"""
可复现的合成 QNMF 实例: 平滑光谱源 W、二维激活图 H、观测 X = WH (+ 噪声)。
所有随机性只来自 seed。
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from backend.entity import ActivationSpec, AxisKeyframe, Blob, Bump, QnmfFactors, SourceSpec
from backend.errors import DimensionMismatchError, InvalidSpecError
from backend.interfaces import DatasetPayload, SourceInterface
from backend.quaternion import QuaternionMatrix
from backend.stokes import project_cone_array

logger = logging.getLogger(__name__)


# --- 校验 ---

def validate_source_spec(spec: SourceSpec, path: str = "sources[0]"):
    if spec.num_bands < 1:
        raise InvalidSpecError(f"{path}.num_bands", f"must be >= 1, got {spec.num_bands}")
    for k, bump in enumerate(spec.intensity_profile):
        if bump.amplitude < 0.0:
            raise InvalidSpecError(f"{path}.intensity_profile[{k}].amplitude", f"must be >= 0, got {bump.amplitude}")
        if not bump.width > 0.0:
            raise InvalidSpecError(f"{path}.intensity_profile[{k}].width", f"must be > 0, got {bump.width}")
    if spec.intensity_floor < 0.0:
        raise InvalidSpecError(f"{path}.intensity_floor", f"must be >= 0, got {spec.intensity_floor}")
    if len(spec.dop_profile) not in (1, spec.num_bands):
        raise InvalidSpecError(
            f"{path}.dop_profile", f"needs 1 or {spec.num_bands} values, got {len(spec.dop_profile)}"
        )
    for k, phi in enumerate(spec.dop_profile):
        if not 0.0 <= phi <= 1.0:
            raise InvalidSpecError(f"{path}.dop_profile[{k}]", f"degree of polarization must lie in [0, 1], got {phi}")
    if not spec.axis_profile:
        raise InvalidSpecError(f"{path}.axis_profile", "needs at least one keyframe")
    for k, frame in enumerate(spec.axis_profile):
        if len(frame.axis) != 3:
            raise InvalidSpecError(f"{path}.axis_profile[{k}].axis", f"needs 3 components, got {len(frame.axis)}")
        if not np.linalg.norm(frame.axis) > 0.0:
            raise InvalidSpecError(f"{path}.axis_profile[{k}].axis", "must be non-zero")
    if not 0.0 <= spec.jitter < 1.0:
        raise InvalidSpecError(f"{path}.jitter", f"must lie in [0, 1), got {spec.jitter}")


def validate_activation_spec(spec: ActivationSpec, path: str = "activations"):
    if len(spec.grid) != 2 or min(spec.grid) < 1:
        raise InvalidSpecError(f"{path}.grid", f"needs two positive sizes, got {spec.grid}")
    if spec.num_sources < 1:
        raise InvalidSpecError(f"{path}.num_sources", f"must be >= 1, got {spec.num_sources}")
    if spec.blobs and len(spec.blobs) != spec.num_sources:
        raise InvalidSpecError(f"{path}.blobs", f"needs one list per source ({spec.num_sources}), got {len(spec.blobs)}")
    for p, blobs in enumerate(spec.blobs):
        for k, blob in enumerate(blobs):
            if not blob.sigma > 0.0:
                raise InvalidSpecError(f"{path}.blobs[{p}][{k}].sigma", f"must be > 0, got {blob.sigma}")
            if blob.amplitude < 0.0:
                raise InvalidSpecError(f"{path}.blobs[{p}][{k}].amplitude", f"must be >= 0, got {blob.amplitude}")
    if spec.blobs_per_source < 1:
        raise InvalidSpecError(f"{path}.blobs_per_source", f"must be >= 1, got {spec.blobs_per_source}")
    if spec.floor < 0.0:
        raise InvalidSpecError(f"{path}.floor", f"must be >= 0, got {spec.floor}")
    if not spec.truncate > 0.0:
        raise InvalidSpecError(f"{path}.truncate", f"must be > 0, got {spec.truncate}")
    if spec.ensure_pure_pixels and spec.num_sources > spec.num_pixels:
        raise InvalidSpecError(f"{path}.grid", "too few pixels to give every source a pure pixel")


# --- 源光谱 ---

def intensity_profile(spec: SourceSpec) -> np.ndarray:
    bands = np.arange(spec.num_bands, dtype=np.float64)
    intensity = np.full(spec.num_bands, spec.intensity_floor)
    for bump in spec.intensity_profile:
        intensity += bump.amplitude * np.exp(-0.5 * ((bands - bump.center) / bump.width) ** 2)
    return intensity


def axis_profile(spec: SourceSpec, path: str = "sources[0]") -> np.ndarray:
    """关键帧间线性插值再归一化，两端外延为常数"""
    frames = sorted(spec.axis_profile, key=lambda f: f.band)
    keys = np.array([f.band for f in frames], dtype=np.float64)
    axes = np.array([f.axis for f in frames], dtype=np.float64)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    bands = np.arange(spec.num_bands, dtype=np.float64)
    out = np.stack([np.interp(bands, keys, axes[:, c]) for c in range(3)], axis=-1)
    norms = np.linalg.norm(out, axis=1)
    if np.any(norms < 1e-12):
        m = int(np.argmax(norms < 1e-12))
        raise InvalidSpecError(f"{path}.axis_profile", f"interpolated axis vanishes at band {m} (antipodal keyframes)")
    return out / norms[:, None]


def gen_sources(specs: Sequence[SourceSpec], seed: int = 0) -> QuaternionMatrix:
    """w_mp = I_mp (1 + Φ_mp μ_mp)"""
    if not specs:
        raise InvalidSpecError("sources", "at least one source is required")
    M = specs[0].num_bands
    for p, spec in enumerate(specs):
        validate_source_spec(spec, f"sources[{p}]")
        if spec.num_bands != M:
            raise InvalidSpecError(f"sources[{p}].num_bands", f"expected {M} like sources[0], got {spec.num_bands}")

    rng = np.random.default_rng(seed)
    data = np.zeros((M, len(specs), 4))
    for p, spec in enumerate(specs):
        intensity = intensity_profile(spec)
        if spec.jitter > 0.0:
            intensity = intensity * rng.uniform(1.0 - spec.jitter, 1.0 + spec.jitter, size=M)
        dop = np.broadcast_to(np.asarray(spec.dop_profile, dtype=np.float64), (M,))
        axis = axis_profile(spec, f"sources[{p}]")
        data[:, p, 0] = intensity
        data[:, p, 1:] = (intensity * dop)[:, None] * axis
    return QuaternionMatrix(data)


# --- 激活图 ---

def _draw_blobs(spec: ActivationSpec, rng: np.random.Generator) -> Tuple[Tuple[Blob, ...], ...]:
    h, w = spec.grid
    size = min(h, w)
    return tuple(
        tuple(
            Blob(
                row=float(rng.uniform(0, h)),
                col=float(rng.uniform(0, w)),
                sigma=float(rng.uniform(0.08, 0.2) * size),
                amplitude=float(rng.uniform(0.5, 1.5)),
            )
            for _ in range(spec.blobs_per_source)
        )
        for _ in range(spec.num_sources)
    )


def gen_activations_with_witnesses(spec: ActivationSpec, seed: int = 0) -> Tuple[np.ndarray, List[Optional[int]]]:
    """
    :return: (H, pure_pixels)，pure_pixels[p] 为源 p 的纯像素列号 (未要求时为 None)
    像素按行优先展平: n = row * width + col
    """
    validate_activation_spec(spec)
    rng = np.random.default_rng(seed)
    blobs = spec.blobs or _draw_blobs(spec, rng)

    h, w = spec.grid
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    H = np.zeros((spec.num_sources, h * w))
    for p, source_blobs in enumerate(blobs):
        field_p = np.zeros((h, w))
        for blob in source_blobs:
            d2 = ((rows - blob.row) ** 2 + (cols - blob.col) ** 2) / blob.sigma ** 2
            # 3σ 截断，使不相交的支撑得到精确的 0
            field_p += np.where(d2 <= spec.truncate ** 2, blob.amplitude * np.exp(-0.5 * d2), 0.0)
        H[p] = field_p.reshape(-1)
    H += spec.floor

    witnesses: List[Optional[int]] = [None] * spec.num_sources
    if spec.ensure_pure_pixels:
        taken = np.zeros(H.shape[1], dtype=bool)
        for p in range(spec.num_sources):
            total = H.sum(axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                share = np.where(total > 0.0, H[p] / total, 0.0)
            score = np.where((H[p] > 0.0) & ~taken, share + 1e-12 * H[p], -np.inf)
            n = int(np.argmax(score))
            if not np.isfinite(score[n]):
                raise InvalidSpecError(f"activations.blobs[{p}]", "source has no active pixel to make pure")
            H[np.arange(spec.num_sources) != p, n] = 0.0
            taken[n] = True
            witnesses[p] = n
    return H, witnesses


def gen_activations(spec: ActivationSpec, seed: int = 0) -> np.ndarray:
    return gen_activations_with_witnesses(spec, seed)[0]


# --- 组装 ---

def assemble(W: QuaternionMatrix, H: np.ndarray, noise_sigma: float = 0.0, seed: int = 0) -> QuaternionMatrix:
    """X = WH；noise_sigma > 0 时加 4 分量高斯噪声后逐元素投影到 H_S"""
    H = np.asarray(H, dtype=np.float64)
    if W.cols != H.shape[0]:
        raise DimensionMismatchError(f"W has {W.cols} columns but H has {H.shape[0]} rows")
    if noise_sigma < 0.0:
        raise InvalidSpecError("noise_sigma", f"must be >= 0, got {noise_sigma}")
    X = W @ H
    if noise_sigma == 0.0:
        return X
    rng = np.random.default_rng(seed)
    noisy = X.data + noise_sigma * rng.standard_normal(X.data.shape)
    return QuaternionMatrix(project_cone_array(noisy))


# --- 预设 ---

def _unit(v: Sequence[float]) -> Tuple[float, float, float]:
    v = np.asarray(v, dtype=np.float64)
    return tuple(float(x) for x in v / np.linalg.norm(v))


def desk_scale_sources(num_bands: int = 128) -> List[SourceSpec]:
    """
    三个宽带、处处非零、完全偏振的源；前两个峰位接近，偏振轴随波段变化
    """
    M = num_bands
    last = float(M - 1)
    return [
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.35 * M, 0.12 * M, 1.0), Bump(0.75 * M, 0.10 * M, 0.4)),
            intensity_floor=0.1,
            dop_profile=(1.0,),
            axis_profile=(AxisKeyframe(0.0, (1.0, 0.0, 0.0)), AxisKeyframe(last, _unit((0.0, 1.0, 0.2)))),
        ),
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.40 * M, 0.12 * M, 0.9), Bump(0.12 * M, 0.08 * M, 0.3)),
            intensity_floor=0.1,
            dop_profile=(1.0,),
            axis_profile=(AxisKeyframe(0.0, (0.0, 0.0, 1.0)), AxisKeyframe(last, _unit((-0.6, 0.0, 0.8)))),
        ),
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.80 * M, 0.15 * M, 1.0),),
            intensity_floor=0.1,
            dop_profile=(1.0,),
            axis_profile=(AxisKeyframe(0.0, (0.0, -1.0, 0.0)), AxisKeyframe(last, _unit((0.5, -0.5, -0.7)))),
        ),
    ]


AXIS_ONE = _unit((0.87, -0.25, -0.43))
AXIS_TWO = _unit((-0.71, 0.44, 0.55))


def constant_polarization_pair(num_bands: int = 64) -> List[SourceSpec]:
    """两源、偏振度与偏振轴沿波段恒定 (Φ1 = 0.7, Φ2 = 0.5)，强度处处为正"""
    M = num_bands
    return [
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.40 * M, 0.18 * M, 1.0),),
            intensity_floor=0.2,
            dop_profile=(0.7,),
            axis_profile=(AxisKeyframe(0.0, AXIS_ONE),),
        ),
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.60 * M, 0.20 * M, 0.8),),
            intensity_floor=0.2,
            dop_profile=(0.5,),
            axis_profile=(AxisKeyframe(0.0, AXIS_TWO),),
        ),
    ]


def sufficient_instance(num_bands: int = 16, grid: Tuple[int, int] = (8, 8)) -> Tuple[List[SourceSpec], ActivationSpec]:
    """
    两源在所有波段完全偏振、轴不同、强度为正，激活含纯像素：
    充分唯一性条件成立的实例
    """
    M = num_bands
    h, w = grid
    sources = [
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.3 * M, 0.2 * M, 1.0),),
            intensity_floor=0.1,
            dop_profile=(1.0,),
            axis_profile=(AxisKeyframe(0.0, (1.0, 0.0, 0.0)),),
        ),
        SourceSpec(
            num_bands=M,
            intensity_profile=(Bump(0.7 * M, 0.2 * M, 1.0),),
            intensity_floor=0.1,
            dop_profile=(1.0,),
            axis_profile=(AxisKeyframe(0.0, (0.0, 1.0, 0.0)),),
        ),
    ]
    activations = ActivationSpec(
        grid=(h, w),
        num_sources=2,
        blobs=(
            (Blob(0.25 * h, 0.25 * w, 0.2 * min(h, w)),),
            (Blob(0.75 * h, 0.75 * w, 0.2 * min(h, w)),),
        ),
        ensure_pure_pixels=True,
        floor=0.05,
    )
    return sources, activations


def desk_scale_activations(grid: Tuple[int, int] = (64, 64), num_sources: int = 3) -> ActivationSpec:
    return ActivationSpec(
        grid=grid,
        num_sources=num_sources,
        blobs_per_source=2,
        ensure_pure_pixels=True,
        floor=0.0,
    )


class SyntheticSource(SourceInterface):
    """
    合成数据源
    职责：按 seed 生成 (W, H) 真值并组装 X
    """

    def __init__(self, sources: Sequence[SourceSpec], activations: ActivationSpec, noise_sigma: float = 0.0, seed: int = 0):
        self.sources = list(sources)
        self.activations = activations
        self.noise_sigma = noise_sigma
        self.seed = seed

    def fetch(self) -> Optional[DatasetPayload]:
        if len(self.sources) != self.activations.num_sources:
            raise InvalidSpecError(
                "activations.num_sources",
                f"expected {len(self.sources)} to match the number of sources, got {self.activations.num_sources}",
            )
        # W、H、噪声使用互不相同的派生 seed
        W = gen_sources(self.sources, self.seed)
        H, witnesses = gen_activations_with_witnesses(self.activations, self.seed + 1)
        X = assemble(W, H, self.noise_sigma, self.seed + 2)
        logger.info(f"[Synthetic] generated X {X.rows}x{X.cols} with P={W.cols} (seed {self.seed})")
        return DatasetPayload(
            X=X,
            truth=QnmfFactors(W=W, H=H, seed=self.seed),
            origin_info={"from": "synthetic", "seed": self.seed, "pure_pixels": witnesses},
        )
