"""
年龄编码相关的 Pydantic Schema
分组方案、概率向量、单模型得分与最终年龄估计
"""
import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

NUM_GROUPS = 34
GROUP_WIDTH = 3
MIN_AGE = 0
MAX_AGE = 100
SHIFTS = (0, 1, 2)
FUSION_BIAS = 2.0
MAX_FUSED_AGE = 102.0
PROB_TOLERANCE = 1e-9


def validate_probs(values) -> np.ndarray:
    """
    校验概率向量不变量，返回 float64 数组

    Raises:
        ValueError: 长度不是 34、含负数/非有限值，或总和偏离 1 超过容差
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (NUM_GROUPS,):
        raise ValueError(f"probability vector must have {NUM_GROUPS} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("probability vector contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError("probability vector contains negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > PROB_TOLERANCE:
        raise ValueError(f"probabilities sum to {total!r}, expected 1 within {PROB_TOLERANCE}")
    return arr


class GroupingScheme(BaseModel):
    """年龄分组方案：34 组、每组 3 岁，整体平移 shift 岁"""

    model_config = ConfigDict(frozen=True)

    shift: int = Field(0, ge=0, le=2, description="分组边界平移量（岁）")
    num_groups: int = Field(NUM_GROUPS, description="分组数，固定为 34")
    group_width: int = Field(GROUP_WIDTH, description="每组覆盖的岁数，固定为 3")

    @model_validator(mode="after")
    def validate_fixed_shape(self):
        """分组数与组宽不可配置"""
        if self.num_groups != NUM_GROUPS:
            raise ValueError(f"num_groups must be {NUM_GROUPS}")
        if self.group_width != GROUP_WIDTH:
            raise ValueError(f"group_width must be {GROUP_WIDTH}")
        return self

    @property
    def weights(self) -> np.ndarray:
        """解码权重 ω_j，即组序号本身"""
        return np.arange(self.num_groups, dtype=np.float64)

    def group_range(self, index: int) -> Optional[Tuple[int, int]]:
        """
        返回第 index 组覆盖的整数年龄闭区间

        Returns:
            (lo, hi)；该组在 [0, 100] 内没有年龄时返回 None
        """
        if not 0 <= index < self.num_groups:
            raise ValueError(f"group index {index} out of range")
        lo = index * self.group_width + self.shift
        hi = lo + self.group_width - 1
        if index == 0:
            lo = MIN_AGE
        if index == self.num_groups - 1:
            hi = MAX_AGE
        hi = min(hi, MAX_AGE)
        if lo > hi:
            return None
        return lo, hi


class ProbVector(BaseModel):
    """单个分类器的 softmax 输出"""

    model_config = ConfigDict(frozen=True)

    probs: Tuple[float, ...] = Field(..., description="34 个非负概率，总和为 1")

    @field_validator("probs")
    @classmethod
    def validate_probs_field(cls, v):
        validate_probs(v)
        return tuple(float(p) for p in v)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


class ModelScore(BaseModel):
    """top-k 解码得到的单模型得分 m_i（组序号尺度）"""

    model_config = ConfigDict(frozen=True)

    value: float = Field(..., ge=0, le=NUM_GROUPS - 1, description="解码得分")


class AgeEstimate(BaseModel):
    """三模型融合后的年龄估计"""

    model_config = ConfigDict(frozen=True)

    years: float = Field(..., ge=0, le=MAX_FUSED_AGE, description="估计年龄（岁）")

    @field_validator("years")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("age estimate must be finite")
        return v
