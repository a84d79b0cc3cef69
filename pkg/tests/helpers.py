"""
测试辅助函数
"""
from pathlib import Path

import numpy as np

from app.schemas.raster import RasterImage


def write_labels(path: Path, rows) -> Path:
    """写出 id,mean,stddev 标签文件"""
    lines = ["id,mean,stddev"] + [f"{i},{m},{s}" for i, m, s in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def dot_face(points, size: int = 256, spread: float = 2.0) -> RasterImage:
    """黑底上在每个关键点（亚像素位置）画一个高斯亮斑的合成人脸"""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    canvas = np.zeros((size, size))
    for x, y in points:
        canvas += np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2 * spread ** 2))
    value = np.clip(np.rint(255 * canvas), 0, 255).astype(np.uint8)
    return RasterImage(pixels=np.repeat(value[:, :, None], 3, axis=2))


def blob_centroid(img: RasterImage, center, window: int = 10):
    """在 center 附近窗口内求亮度加权质心"""
    cx, cy = int(round(center[0])), int(round(center[1]))
    y0, x0 = max(cy - window, 0), max(cx - window, 0)
    patch = img.pixels[y0:cy + window + 1, x0:cx + window + 1, 0].astype(np.float64)
    ys, xs = np.mgrid[0:patch.shape[0], 0:patch.shape[1]]
    total = patch.sum()
    return float((xs * patch).sum() / total + x0), float((ys * patch).sum() / total + y0)


def rotate_points(points, degrees: float, center=(127.5, 127.5)) -> np.ndarray:
    """在图像坐标系中绕 center 旋转点集"""
    theta = np.radians(degrees)
    c, s = np.cos(theta), np.sin(theta)
    pts = np.asarray(points, dtype=np.float64) - center
    return pts @ np.array([[c, s], [-s, c]]) + center
