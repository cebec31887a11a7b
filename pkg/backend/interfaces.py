# backend/interfaces.py

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from backend.entity import QnmfFactors
from backend.quaternion import QuaternionMatrix


@dataclass
class DatasetPayload:
    """数据源产出: 观测 X，以及 (合成数据时) 真值因子"""
    X: QuaternionMatrix
    truth: Optional[QnmfFactors] = None
    origin_info: dict = field(default_factory=dict)


class SourceInterface(ABC):
    @abstractmethod
    def fetch(self) -> Optional[DatasetPayload]:
        pass


class StorageInterface(ABC):
    """
    实验产物的持久化。name 为相对输出目录的文件名 (e.g. "X.csv")
    """

    @abstractmethod
    def save_table(self, name: str, X: QuaternionMatrix) -> str:
        """写 Stokes 表 (m,n,S0,S1,S2,S3)，返回路径"""
        pass

    @abstractmethod
    def load_table(self, path: str) -> QuaternionMatrix:
        pass

    @abstractmethod
    def save_factors(self, prefix: str, W: QuaternionMatrix, H: np.ndarray) -> Dict[str, str]:
        """写 {prefix}W.csv 与 {prefix}H.csv"""
        pass

    @abstractmethod
    def load_factors(self, w_path: str, h_path: str):
        """
        :return: (W, H)
        """
        pass

    @abstractmethod
    def save_trace(self, name: str, trace) -> str:
        pass

    @abstractmethod
    def save_records(self, name: str, records: List[dict], columns: List[str]) -> str:
        pass

    @abstractmethod
    def save_report(self, name: str, report: dict) -> str:
        pass

    @abstractmethod
    def load_report(self, path: str) -> dict:
        pass

    @abstractmethod
    def save_manifest(self, manifest: dict, inputs: Optional[List[str]] = None) -> str:
        """写 manifest.json，附输入文件的 SHA-256"""
        pass

    @abstractmethod
    def list_files(self) -> List[Dict[str, str]]:
        """
        列出输出目录下的产物
        :return: [{'name': 文件名, 'path': 完整路径}, ...]
        """
        pass
