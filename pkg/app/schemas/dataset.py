"""
数据集相关的 Pydantic Schema
标注记录、数据集、增强计划与分布统计
"""
import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.age import MAX_AGE, MIN_AGE
from app.schemas.raster import LandmarkSet


class Split(str, Enum):
    """数据集划分"""

    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"

    @classmethod
    def parse(cls, value: str) -> "Split":
        """接受 train / val / validation / test"""
        aliases = {"val": cls.VALIDATION, "valid": cls.VALIDATION}
        key = value.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class AnnotatedFace(BaseModel):
    """单条标注：标注者平均年龄 μ 与标准差 σ"""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="图像 ID")
    mu: float = Field(..., ge=MIN_AGE, le=MAX_AGE, description="标注者平均年龄（岁）")
    sigma: float = Field(..., ge=0, description="标注者标准差（岁）")
    landmarks: Optional[LandmarkSet] = Field(None, description="五点关键点")
    features: Optional[Tuple[float, ...]] = Field(None, description="特征向量")

    @field_validator("mu", "sigma")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v

    @field_validator("features")
    @classmethod
    def validate_features(cls, v):
        if v is not None and not all(math.isfinite(f) for f in v):
            raise ValueError("features must be finite")
        return v


class Dataset(BaseModel):
    """同一划分下的标注集合，ID 唯一"""

    model_config = ConfigDict(frozen=True)

    split: Split = Field(..., description="数据集划分")
    records: Tuple[AnnotatedFace, ...] = Field(default=(), description="标注记录")

    @model_validator(mode="after")
    def validate_unique_ids(self):
        seen = set()
        for record in self.records:
            if record.id in seen:
                raise ValueError(f"duplicate id {record.id!r} in split {self.split.value}")
            seen.add(record.id)
        return self

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> Dict[str, AnnotatedFace]:
        return {r.id: r for r in self.records}


class AugmentationSpec(BaseModel):
    """单个增强副本的变换参数"""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., description="源图像 ID")
    replica: int = Field(..., ge=1, description="副本序号（从 1 开始，0 表示原图）")
    rotation_deg: float = Field(..., ge=-45, le=45, description="旋转角（度）")
    zoom: float = Field(..., gt=0, description="缩放倍数")
    deltas: Tuple[int, int, int] = Field(..., description="RGB 通道偏移")
    crop_index: int = Field(..., ge=0, le=4, description="五点裁剪序号")
    seed: int = Field(..., ge=0, description="生成该副本参数的随机种子")

    @field_validator("deltas")
    @classmethod
    def validate_deltas(cls, v):
        if any(abs(d) > 255 for d in v):
            raise ValueError("channel deltas must lie in [-255, 255]")
        return v

    @property
    def replica_id(self) -> str:
        return f"{self.id}_r{self.replica}"


class AugmentationPlan(BaseModel):
    """增强计划：按源 ID 分组的副本列表，顺序确定"""

    model_config = ConfigDict(frozen=True)

    entries: Tuple[AugmentationSpec, ...] = Field(default=(), description="全部副本，按年龄箱与轮转顺序排列")

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> Dict[str, List[AugmentationSpec]]:
        grouped: Dict[str, List[AugmentationSpec]] = {}
        for spec in self.entries:
            grouped.setdefault(spec.id, []).append(spec)
        return grouped


class DistributionReport(BaseModel):
    """按整数年龄统计的分布报告"""

    count: int = Field(..., ge=1, description="记录数")
    histogram: Dict[int, int] = Field(..., description="round(μ) → 记录数")
    mean_sigma: float = Field(..., ge=0, description="全体 σ 均值")
    mean_sigma_per_age: Dict[int, float] = Field(..., description="round(μ) → σ 均值")
    low_sigma_count: int = Field(0, ge=0, description="σ < 3 的记录数")
    low_sigma_over_40_count: int = Field(0, ge=0, description="σ < 3 且 μ > 40 的记录数")
