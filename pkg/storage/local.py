# storage/local.py

import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from backend.errors import TableFormatError
from backend.interfaces import StorageInterface
from backend.quaternion import QuaternionMatrix
from backend.stokes import quat_array_to_stokes, stokes_array_to_quat
from utils import atomic_write_text, dump_json, file_digest

logger = logging.getLogger(__name__)

STOKES_COLUMNS = ["S0", "S1", "S2", "S3"]
FLOAT_FORMAT = "%.17g"


class LocalTableStorage(StorageInterface):
    """
    实验产物落盘: CSV 表 (pandas) + JSON 报告，全部原子写入
    """

    def __init__(self, base_dir: str = "./runs/latest"):
        self.base_dir = base_dir
        self._ensure_dir_exists()

    def _ensure_dir_exists(self):
        os.makedirs(self.base_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.base_dir, name)

    # --- CSV 基础 ---

    def _write_frame(self, name: str, frame: pd.DataFrame) -> str:
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        path = atomic_write_text(self._path(name), text)
        logger.debug(f"[Storage] wrote {path} ({len(frame)} rows)")
        return path

    def _write_indexed(self, name: str, shape: Sequence[int], index_names: Sequence[str],
                       values: np.ndarray, value_names: Sequence[str]) -> str:
        """稠密数组按行优先展开为 (索引..., 值...) 行"""
        grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
        columns = {n: g.reshape(-1) for n, g in zip(index_names, grids)}
        # + 0.0 把 -0.0 规范化为 0.0
        flat = np.asarray(values, dtype=np.float64).reshape(-1, len(value_names)) + 0.0
        for k, n in enumerate(value_names):
            columns[n] = flat[:, k]
        return self._write_frame(name, pd.DataFrame(columns))

    def _read_indexed(self, path: str, index_names: Sequence[str], value_names: Sequence[str]) -> np.ndarray:
        """读回稠密数组，形状 (dims..., len(value_names))；索引须从 0 开始且不缺不重"""
        expected = list(index_names) + list(value_names)
        try:
            frame = pd.read_csv(path, float_precision="round_trip", dtype={n: np.float64 for n in value_names})
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
            raise TableFormatError(f"{path}: cannot parse table: {e}") from e

        if list(frame.columns) != expected:
            raise TableFormatError(f"{path}: expected header {','.join(expected)}, got {','.join(map(str, frame.columns))}")
        if frame.empty:
            raise TableFormatError(f"{path}: table has no rows")
        for n in index_names:
            if not pd.api.types.is_integer_dtype(frame[n]):
                raise TableFormatError(f"{path}: column {n} must hold integers")
            if (frame[n] < 0).any():
                raise TableFormatError(f"{path}: column {n} has negative indices")
        values = frame[list(value_names)].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise TableFormatError(f"{path}: non-finite values")

        dims = tuple(int(frame[n].max()) + 1 if len(frame) else 0 for n in index_names)
        if len(frame) != int(np.prod(dims)):
            raise TableFormatError(f"{path}: expected {int(np.prod(dims))} rows for a dense {dims} table, got {len(frame)}")
        flat_index = np.ravel_multi_index(tuple(frame[n].to_numpy() for n in index_names), dims)
        if len(np.unique(flat_index)) != len(flat_index):
            raise TableFormatError(f"{path}: duplicated index rows")

        out = np.empty((int(np.prod(dims)), len(value_names)))
        out[flat_index] = values
        return out.reshape(dims + (len(value_names),))

    # --- Stokes 表 / 因子 ---

    def save_table(self, name: str, X: QuaternionMatrix) -> str:
        return self._write_indexed(name, X.shape, ["m", "n"], quat_array_to_stokes(X.data), STOKES_COLUMNS)

    def load_table(self, path: str) -> QuaternionMatrix:
        stokes = self._read_indexed(path, ["m", "n"], STOKES_COLUMNS)
        return QuaternionMatrix(stokes_array_to_quat(stokes))

    def save_factors(self, prefix: str, W: QuaternionMatrix, H: np.ndarray) -> Dict[str, str]:
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        return {
            "W": self._write_indexed(f"{prefix}W.csv", W.shape, ["m", "p"], quat_array_to_stokes(W.data), STOKES_COLUMNS),
            "H": self._write_indexed(f"{prefix}H.csv", H.shape, ["p", "n"], H[..., None], ["h"]),
        }

    def load_factors(self, w_path: str, h_path: str):
        W = QuaternionMatrix(stokes_array_to_quat(self._read_indexed(w_path, ["m", "p"], STOKES_COLUMNS)))
        H = self._read_indexed(h_path, ["p", "n"], ["h"])[..., 0]
        return W, H

    # --- 轨迹 / 记录 ---

    def save_trace(self, name: str, trace) -> str:
        trace = np.asarray(trace, dtype=np.float64)
        return self._write_frame(name, pd.DataFrame({"iteration": np.arange(len(trace)), "eps": trace + 0.0}))

    def save_records(self, name: str, records: List[dict], columns: List[str]) -> str:
        return self._write_frame(name, pd.DataFrame.from_records(records, columns=columns))

    # --- JSON ---

    def save_report(self, name: str, report: dict) -> str:
        return atomic_write_text(self._path(name), dump_json(report))

    def load_report(self, path: str) -> dict:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    def save_manifest(self, manifest: dict, inputs: Optional[List[str]] = None) -> str:
        manifest = dict(manifest)
        manifest["inputs"] = {p: file_digest(p) for p in (inputs or []) if p}
        return self.save_report("manifest.json", manifest)

    def list_files(self) -> List[Dict[str, str]]:
        results = []
        for root, _, files in os.walk(self.base_dir):
            for fname in files:
                if fname.startswith(".tmp_"):
                    continue
                path = os.path.join(root, fname)
                results.append({"name": os.path.relpath(path, self.base_dir), "path": path})
        return sorted(results, key=lambda d: d["name"])
