"""
评估相关的 Pydantic Schema
预测记录、ε-error 报告、混淆矩阵，以及 HTTP 接口的请求 / 响应模型
"""
import math
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.age import MAX_FUSED_AGE, NUM_GROUPS


class AgePrediction(BaseModel):
    """单条预测：融合年龄与三个单模型得分"""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="图像 ID")
    age: float = Field(..., ge=0, le=MAX_FUSED_AGE, description="融合后的年龄估计（岁）")
    scores: Optional[List[float]] = Field(None, description="三个单模型得分 m0, m1, m2")

    @field_validator("scores")
    @classmethod
    def validate_scores(cls, v):
        if v is not None and len(v) != 3:
            raise ValueError("exactly 3 model scores are required")
        return v


class RecordError(BaseModel):
    """单条记录的 ε-error"""

    id: str = Field(..., description="图像 ID")
    prediction: float = Field(..., description="预测年龄")
    mean: float = Field(..., description="标注均值 μ")
    stddev: float = Field(..., description="标注标准差 σ")
    epsilon: float = Field(..., ge=0, le=1, description="ε-error")


class EvaluationReport(BaseModel):
    """评估报告：逐条 ε、总体均值与按年龄的均值"""

    count: int = Field(..., ge=1, description="参与评估的记录数")
    mean_epsilon: float = Field(..., ge=0, le=1, description="平均 ε-error")
    records: List[RecordError] = Field(default_factory=list, description="逐条结果（与预测文件顺序一致）")
    per_age: Dict[int, float] = Field(default_factory=dict, description="round(μ) → 平均 ε-error")
    per_age_count: Dict[int, int] = Field(default_factory=dict, description="round(μ) → 记录数")

    @field_validator("per_age")
    @classmethod
    def validate_bins(cls, v: Dict[int, float]) -> Dict[int, float]:
        for age, value in v.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"per-age mean epsilon for age {age} outside [0, 1]")
        return v


class ConfusionMatrix(BaseModel):
    """34×34 混淆矩阵：行为真实组，列为预测组"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    shift: int = Field(..., ge=0, le=2, description="分组方案平移量")
    counts: np.ndarray = Field(..., description="34×34 非负整数计数")

    @field_validator("counts", mode="before")
    @classmethod
    def validate_counts(cls, v):
        arr = np.array(v, dtype=np.int64, copy=True)
        if arr.shape != (NUM_GROUPS, NUM_GROUPS):
            raise ValueError(f"confusion matrix must be {NUM_GROUPS}x{NUM_GROUPS}, got {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("confusion counts must be non-negative")
        arr.setflags(write=False)
        return arr

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)


# ========== HTTP 请求 / 响应 ==========

class DecodeRequest(BaseModel):
    """top-k 解码请求"""

    probs: List[float] = Field(..., min_length=NUM_GROUPS, max_length=NUM_GROUPS, description="34 个概率")
    k: int = Field(5, ge=1, le=NUM_GROUPS, description="参与求和的概率个数")
    shift: int = Field(0, ge=0, le=2, description="分组方案平移量")


class DecodeResponse(BaseModel):
    score: float = Field(..., description="解码得分 m")


class FuseRequest(BaseModel):
    """三模型融合请求"""

    scores: List[float] = Field(..., min_length=3, max_length=3, description="m0, m1, m2")


class FuseResponse(BaseModel):
    years: float = Field(..., description="融合后的年龄（岁）")


class FeatureItem(BaseModel):
    id: str = Field(..., min_length=1, description="样本 ID")
    features: List[float] = Field(..., min_length=1, description="特征向量")


class PredictRequest(BaseModel):
    """集成预测请求"""

    items: List[FeatureItem] = Field(..., min_length=1, description="待预测样本")
    k: Optional[int] = Field(None, ge=1, le=NUM_GROUPS, description="top-k，默认取配置 DEFAULT_TOP_K")

    @model_validator(mode="after")
    def validate_dimensions(self):
        dims = {len(item.features) for item in self.items}
        if len(dims) != 1:
            raise ValueError("all feature vectors must have the same length")
        return self


class EpsilonItem(BaseModel):
    x: float = Field(..., description="预测年龄")
    mu: float = Field(..., description="标注均值")
    sigma: float = Field(..., ge=0, description="标注标准差")

    @field_validator("x", "mu", "sigma")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v


class EpsilonRequest(BaseModel):
    items: List[EpsilonItem] = Field(..., min_length=1, description="(x, μ, σ) 三元组")


class EpsilonResponse(BaseModel):
    mean_epsilon: float = Field(..., description="平均 ε-error")
    errors: List[float] = Field(..., description="逐条 ε-error")
