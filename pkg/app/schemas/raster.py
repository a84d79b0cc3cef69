"""
图像几何相关的 Schema
RasterImage 为不可变的 8 位三通道像素网格
"""
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

Point = Tuple[float, float]

# 关键点顺序：左眼中心、右眼中心、鼻尖、左嘴角、右嘴角
LANDMARK_NAMES = ("left_eye", "right_eye", "nose", "left_lip", "right_lip")


class RasterImage(BaseModel):
    """8 位 RGB 图像，pixels 形状为 (height, width, 3)，行优先"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray = Field(..., description="uint8 像素数组 (H, W, 3)")

    @field_validator("pixels", mode="before")
    @classmethod
    def validate_pixels(cls, v):
        arr = np.asarray(v)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"pixels must have shape (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("pixel intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_array(cls, arr) -> "RasterImage":
        return cls(pixels=arr)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


class LandmarkSet(BaseModel):
    """五个面部关键点（像素坐标）"""

    model_config = ConfigDict(frozen=True)

    points: Tuple[Point, Point, Point, Point, Point] = Field(..., description="五个 (x, y) 坐标")

    @field_validator("points")
    @classmethod
    def validate_finite(cls, v):
        for x, y in v:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("landmark coordinates must be finite")
        return v

    @classmethod
    def from_array(cls, arr) -> "LandmarkSet":
        pts = np.asarray(arr, dtype=np.float64).reshape(5, 2)
        return cls(points=tuple((float(x), float(y)) for x, y in pts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


class SimilarityTransform(BaseModel):
    """二维相似变换：x' = s·R(θ)·x + t"""

    model_config = ConfigDict(frozen=True)

    scale: float = Field(1.0, gt=0, description="均匀缩放")
    rotation: float = Field(0.0, description="旋转角（弧度，图像坐标系）")
    tx: float = Field(0.0, description="x 平移（像素）")
    ty: float = Field(0.0, description="y 平移（像素）")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "SimilarityTransform":
        """由 3×3 齐次矩阵 [[a, -b, tx], [b, a, ty], [0, 0, 1]] 构造"""
        a, b = float(matrix[0, 0]), float(matrix[1, 0])
        return cls(
            scale=math.hypot(a, b),
            rotation=math.atan2(b, a),
            tx=float(matrix[0, 2]),
            ty=float(matrix[1, 2]),
        )

    def matrix(self) -> np.ndarray:
        c = self.scale * math.cos(self.rotation)
        s = self.scale * math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]], dtype=np.float64)

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform.from_matrix(np.linalg.inv(self.matrix()))

    def apply(self, points) -> np.ndarray:
        """对 (n, 2) 点集应用变换"""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        m = self.matrix()
        return pts @ m[:2, :2].T + m[:2, 2]
