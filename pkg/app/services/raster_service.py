"""
图像几何服务
五点相似变换对齐、双线性重采样，以及旋转 / 缩放 / 通道偏移 / 五点裁剪等增强变换
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError
from skimage.transform import estimate_transform, warp as sk_warp

from app.core.config import settings
from app.core.exceptions import (
    DataIOError,
    DegenerateGeometryError,
    InvalidArgumentError,
    SchemaError,
)
from app.schemas.raster import LandmarkSet, RasterImage, SimilarityTransform
from app.services.table_io import drop_blank_rows

logger = logging.getLogger(__name__)

# 256×256 画布中的标准关键点模板：左眼、右眼、鼻尖、左嘴角、右嘴角
CANONICAL_TEMPLATE = LandmarkSet(points=(
    (88.0, 102.0),
    (168.0, 102.0),
    (128.0, 144.0),
    (96.0, 184.0),
    (160.0, 184.0),
))

LANDMARK_COLUMNS = ["image_id", "lx", "ly", "rx", "ry", "nx", "ny", "lmx", "lmy", "rmx", "rmy"]

MAX_ROTATION_DEG = 45.0

# 源点集方差低于该值视为退化
DEGENERATE_VARIANCE = 1e-12

PathLike = Union[str, Path]


class RasterService:
    """图像几何服务 - 所有变换均返回新图像，不修改输入"""

    # ========== 相似变换 ==========

    @staticmethod
    def fit_similarity(src: LandmarkSet, dst: LandmarkSet) -> SimilarityTransform:
        """
        最小二乘相似变换，使 Σ‖T(src_i) − dst_i‖² 最小（二维带缩放的正交 Procrustes 闭式解）

        Raises:
            DegenerateGeometryError: 源点集全部重合
        """
        src_pts = src.as_array()
        dst_pts = dst.as_array()
        centered = src_pts - src_pts.mean(axis=0)
        if float(np.sum(centered ** 2)) <= DEGENERATE_VARIANCE:
            raise DegenerateGeometryError("source landmarks are coincident; similarity is undefined")

        tform = estimate_transform("similarity", src_pts, dst_pts)
        if tform is None or not np.all(np.isfinite(tform.params)):
            raise DegenerateGeometryError("similarity estimation failed")
        return SimilarityTransform.from_matrix(tform.params)

    # ========== 重采样 ==========

    @staticmethod
    def _resample(
        img: RasterImage, inverse_matrix: np.ndarray, out_w: int, out_h: int, mode: str = "constant"
    ) -> RasterImage:
        """按输出→输入的 3×3 逆映射做双线性插值，默认越界像素填黑"""
        if out_w <= 0 or out_h <= 0:
            raise InvalidArgumentError(f"output size must be positive, got {out_w}x{out_h}")
        warped = sk_warp(
            img.pixels,
            inverse_matrix,
            output_shape=(out_h, out_w),
            order=1,
            mode=mode,
            cval=0.0,
            preserve_range=True,
        )
        return RasterImage(pixels=np.clip(np.rint(warped), 0, 255).astype(np.uint8))

    @staticmethod
    def warp(img: RasterImage, t: SimilarityTransform, out_w: int, out_h: int) -> RasterImage:
        """
        反向映射重采样：输出像素 p 取自源图 T⁻¹(p)

        Args:
            img: 输入图像
            t: 源图坐标 → 输出坐标的相似变换
            out_w: 输出宽度
            out_h: 输出高度
        """
        return RasterService._resample(img, np.linalg.inv(t.matrix()), out_w, out_h)

    @staticmethod
    def resize(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
        """像素中心对齐的双线性缩放"""
        if out_w <= 0 or out_h <= 0:
            raise InvalidArgumentError(f"output size must be positive, got {out_w}x{out_h}")
        if (out_w, out_h) == (img.width, img.height):
            return img
        sx = img.width / out_w
        sy = img.height / out_h
        inverse = np.array([
            [sx, 0.0, 0.5 * sx - 0.5],
            [0.0, sy, 0.5 * sy - 0.5],
            [0.0, 0.0, 1.0],
        ])
        # 缩放不引入黑边，越界取最近边缘像素
        return RasterService._resample(img, inverse, out_w, out_h, mode="edge")

    # ========== 对齐 ==========

    @staticmethod
    def align_face(img: RasterImage, lm: LandmarkSet) -> RasterImage:
        """将五点关键点对齐到标准模板，输出 ALIGN_SIZE×ALIGN_SIZE 图像"""
        t = RasterService.fit_similarity(lm, CANONICAL_TEMPLATE)
        logger.debug(
            f"align: scale={t.scale:.4f}, rotation={math.degrees(t.rotation):.2f}deg, "
            f"t=({t.tx:.2f}, {t.ty:.2f})"
        )
        return RasterService.warp(img, t, settings.ALIGN_SIZE, settings.ALIGN_SIZE)

    # ========== 数据增强 ==========

    @staticmethod
    def _about_center(img: RasterImage, scale: float, rotation: float) -> SimilarityTransform:
        """以图像中心为不动点的相似变换"""
        cx = (img.width - 1) / 2.0
        cy = (img.height - 1) / 2.0
        c = scale * math.cos(rotation)
        s = scale * math.sin(rotation)
        return SimilarityTransform(
            scale=scale,
            rotation=rotation,
            tx=cx - (c * cx - s * cy),
            ty=cy - (s * cx + c * cy),
        )

    @staticmethod
    def rotate(img: RasterImage, degrees: float) -> RasterImage:
        """绕图像中心旋转，正角度为逆时针（显示方向），尺寸不变"""
        if not math.isfinite(degrees) or abs(degrees) > MAX_ROTATION_DEG:
            raise InvalidArgumentError(f"rotation must be within ±{MAX_ROTATION_DEG} degrees, got {degrees!r}")
        if degrees == 0:
            return img
        # 图像坐标 y 轴向下，显示方向的逆时针对应负角
        t = RasterService._about_center(img, 1.0, -math.radians(degrees))
        return RasterService.warp(img, t, img.width, img.height)

    @staticmethod
    def zoom(img: RasterImage, factor: float) -> RasterImage:
        """
        以中心为基准缩放：factor > 1 时截取 1/factor 的中心区域放大回原尺寸，
        factor < 1 时缩小并以黑色填充边缘
        """
        if not math.isfinite(factor) or factor <= 0:
            raise InvalidArgumentError(f"zoom factor must be positive, got {factor!r}")
        if factor == 1:
            return img
        t = RasterService._about_center(img, float(factor), 0.0)
        return RasterService.warp(img, t, img.width, img.height)

    @staticmethod
    def channel_shift(img: RasterImage, deltas: Sequence[int]) -> RasterImage:
        """逐通道加偏移，结果饱和到 [0, 255]"""
        if len(deltas) != 3:
            raise InvalidArgumentError(f"channel_shift expects 3 deltas, got {len(deltas)}")
        if any(abs(int(v)) > 255 for v in deltas):
            raise InvalidArgumentError(f"channel deltas must lie in [-255, 255], got {tuple(deltas)}")
        shifted = img.pixels.astype(np.int16) + np.asarray(deltas, dtype=np.int16).reshape(1, 1, 3)
        return RasterImage(pixels=np.clip(shifted, 0, 255).astype(np.uint8))

    @staticmethod
    def crop_offsets(size: int, crop: int) -> List[tuple]:
        """五点裁剪的左上角偏移：左上、右上、左下、右下、中心"""
        far = size - crop
        mid = far // 2
        return [(0, 0), (far, 0), (0, far), (far, far), (mid, mid)]

    @staticmethod
    def five_crop(img: RasterImage) -> List[RasterImage]:
        """
        从 ALIGN_SIZE 方图中取四角与中心五个 CROP_SIZE 子图（不重采样）

        Raises:
            InvalidArgumentError: 输入尺寸不是 ALIGN_SIZE×ALIGN_SIZE
        """
        size, crop = settings.ALIGN_SIZE, settings.CROP_SIZE
        if img.width != size or img.height != size:
            raise InvalidArgumentError(f"five_crop expects a {size}x{size} image, got {img.width}x{img.height}")
        return [
            RasterImage(pixels=img.pixels[y:y + crop, x:x + crop])
            for x, y in RasterService.crop_offsets(size, crop)
        ]

    # ========== 文件读写 ==========

    @staticmethod
    def load_image(path: PathLike) -> RasterImage:
        """读取 PNG / PPM 等图像并转为 RGB"""
        path = Path(path)
        try:
            with Image.open(path) as im:
                return RasterImage(pixels=np.asarray(im.convert("RGB")))
        except FileNotFoundError as e:
            raise DataIOError(f"image not found: {path}") from e
        except (UnidentifiedImageError, OSError) as e:
            raise DataIOError(f"cannot decode image {path}: {e}") from e

    @staticmethod
    def save_image(img: RasterImage, path: PathLike) -> Path:
        """按扩展名写出图像（.ppm 为二进制 P6）"""
        path = Path(path)
        fmt = {".png": "PNG", ".ppm": "PPM"}.get(path.suffix.lower())
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(np.ascontiguousarray(img.pixels)).save(path, format=fmt)
        except OSError as e:
            raise DataIOError(f"cannot write image {path}: {e}") from e
        return path

    @staticmethod
    def load_landmarks(path: PathLike) -> Dict[str, LandmarkSet]:
        """
        读取关键点 CSV：image_id,lx,ly,rx,ry,nx,ny,lmx,lmy,rmx,rmy（表头可选）

        Raises:
            DataIOError: 文件不存在
            SchemaError: 列数不符、坐标无法解析或 ID 重复
        """
        path = Path(path)
        if not path.is_file():
            raise DataIOError(f"landmark file not found: {path}")
        try:
            frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False, keep_default_na=False)
        except pd.errors.EmptyDataError:
            return {}
        except pd.errors.ParserError as e:
            raise SchemaError(f"malformed landmark file {path}: {e}") from e

        if frame.shape[1] != len(LANDMARK_COLUMNS):
            raise SchemaError(f"landmark file must have {len(LANDMARK_COLUMNS)} columns, got {frame.shape[1]}")
        frame = drop_blank_rows(frame, 1)
        if len(frame) and frame.iloc[0, 0].strip() == LANDMARK_COLUMNS[0]:
            frame = frame.iloc[1:]

        landmarks: Dict[str, LandmarkSet] = {}
        for row_number, row in zip(frame.index.tolist(), frame.itertuples(index=False)):
            image_id = str(row[0]).strip()
            if image_id in landmarks:
                raise SchemaError(f"duplicate image id {image_id!r}", row=row_number)
            try:
                coords = [float(v) for v in row[1:]]
                landmarks[image_id] = LandmarkSet.from_array(coords)
            except ValueError as e:
                raise SchemaError(f"invalid landmark coordinates for {image_id!r}: {e}", row=row_number) from e

        logger.info(f"Loaded {len(landmarks)} landmark sets from {path}")
        return landmarks
