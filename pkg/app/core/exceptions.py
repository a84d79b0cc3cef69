"""
异常定义模块
所有业务异常共享一个基类，并携带命令行退出码
"""
from typing import Optional


class AgeEnsembleError(Exception):
    """业务异常基类"""

    exit_code: int = 1


class UsageError(AgeEnsembleError):
    """命令行参数组合错误"""

    exit_code = 2


class DataIOError(AgeEnsembleError):
    """文件缺失或无法读写"""

    exit_code = 3


class ValidationFailure(AgeEnsembleError, ValueError):
    """输入数据不满足约束的统一父类"""

    exit_code = 4


class InvalidInputError(ValidationFailure):
    """非法输入值（例如非有限的年龄）"""


class InvalidArgumentError(ValidationFailure):
    """参数超出允许范围"""


class InvariantViolationError(ValidationFailure):
    """值对象的不变量被破坏（例如概率向量不归一）"""


class DegenerateGeometryError(ValidationFailure):
    """关键点退化，无法求解相似变换"""


class SchemaError(ValidationFailure):
    """文件格式错误：缺列、坏行、重复 ID"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
