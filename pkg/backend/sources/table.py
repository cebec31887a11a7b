# backend/sources/table.py

import logging
from typing import Optional

import numpy as np

from backend.errors import InfeasibleDataError
from backend.interfaces import DatasetPayload, SourceInterface, StorageInterface
from backend.quaternion import DEFAULT_TOL, QuaternionMatrix
from backend.stokes import in_cone_array, project_cone_array

logger = logging.getLogger(__name__)


class StokesTableSource(SourceInterface):
    """
    Stokes 表数据源
    职责：读取 (m,n,S0..S3) 表；锥外元素默认拒绝，开启 project_input 时投影回 H_S
    """

    def __init__(self, path: str, storage: StorageInterface, project_input: bool = False, tol: float = DEFAULT_TOL):
        self.path = path
        self.storage = storage
        self.project_input = project_input
        self.tol = tol

    def fetch(self) -> Optional[DatasetPayload]:
        X = self.storage.load_table(self.path)
        inside = in_cone_array(X.data, self.tol)
        outside = int(np.sum(~inside))

        if outside and not self.project_input:
            m, n = np.argwhere(~inside)[0]
            raise InfeasibleDataError(
                f"{self.path}: {outside} entr{'y' if outside == 1 else 'ies'} outside the Stokes cone "
                f"(first at m={m}, n={n}); rerun with --project-input to project them"
            )
        if outside:
            X = QuaternionMatrix(project_cone_array(X.data))
            logger.info(f"[Storage] projected {outside} out-of-cone entries of {self.path}")

        logger.info(f"[Storage] loaded X {X.rows}x{X.cols} from {self.path}")
        return DatasetPayload(
            X=X,
            truth=None,
            origin_info={"from": "table", "path": self.path, "projected": outside},
        )
