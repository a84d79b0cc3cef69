"""
Softmax 分类器相关的 Schema
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.age import NUM_GROUPS


class SoftmaxModel(BaseModel):
    """34 类多项 softmax 分类器：p = softmax(Wx + b)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: np.ndarray = Field(..., description="权重矩阵 34×d")
    bias: np.ndarray = Field(..., description="偏置向量 34")

    @field_validator("weights", "bias", mode="before")
    @classmethod
    def as_readonly_float(cls, v):
        arr = np.array(v, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise ValueError("model parameters must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.weights.ndim != 2 or self.weights.shape[0] != NUM_GROUPS:
            raise ValueError(f"weights must have shape ({NUM_GROUPS}, d), got {self.weights.shape}")
        if self.weights.shape[1] < 1:
            raise ValueError("feature dimension must be positive")
        if self.bias.shape != (NUM_GROUPS,):
            raise ValueError(f"bias must have shape ({NUM_GROUPS},), got {self.bias.shape}")
        return self

    @property
    def d(self) -> int:
        """特征维度"""
        return int(self.weights.shape[1])


class TrainConfig(BaseModel):
    """训练超参数，可由 JSON 文件读入"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.5, gt=0, description="学习率")
    epochs: int = Field(100, ge=0, description="训练轮数，0 表示直接返回初始化模型")
    l2: float = Field(0.0, ge=0, description="权重 L2 正则系数")
    seed: int = Field(0, ge=0, description="初始化与打乱顺序的随机种子")
    batch_size: int = Field(32, ge=1, description="小批量大小")
    log_every: int = Field(10, ge=1, description="每隔多少轮记录一次训练损失")
