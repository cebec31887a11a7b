# backend/errors.py

from typing import Optional


class QnmfError(Exception):
    """所有领域错误的基类，CLI 只捕获这一层"""


class DimensionMismatchError(QnmfError, ValueError):
    pass


class ZeroIntensityError(QnmfError, ValueError):
    pass


class InvalidAxisError(QnmfError, ValueError):
    pass


class SingularGramError(QnmfError, ArithmeticError):
    """Normal matrix of a least-squares update is singular and no ridge was requested."""


class NonFiniteResidualError(QnmfError, ArithmeticError):
    pass


class RankMismatchError(QnmfError, ValueError):
    pass


class InfeasibleFactorsError(QnmfError, ValueError):
    pass


class InfeasibleDataError(QnmfError, ValueError):
    pass


class VanishingSourceError(QnmfError, ValueError):
    """Re w_mp > 0 is required by the necessary-condition checker."""


class TableFormatError(QnmfError, ValueError):
    pass


class FieldError(QnmfError, ValueError):
    """带字段路径的校验错误 (e.g. ``sources[0].dop_profile[3]``)"""

    def __init__(self, field_path: str, message: str, line: Optional[int] = None):
        self.field_path = field_path
        self.line = line
        where = field_path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


class InvalidSpecError(FieldError):
    pass


class ConfigError(FieldError):
    pass
