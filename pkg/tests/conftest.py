"""
测试共享 fixture
"""
from pathlib import Path

import numpy as np
import pytest

from app.core.config import settings
from app.schemas.raster import RasterImage
from tests.helpers import write_labels


@pytest.fixture
def labels_file(tmp_path: Path) -> Path:
    rows = [
        ("a", 20, 3.5),
        ("b", 20.4, 2.0),
        ("c", 20.6, 4.0),
        ("d", 35, 5.0),
        ("e", 50, 0.0),
    ]
    return write_labels(tmp_path / "labels.csv", rows)


@pytest.fixture
def gradient_image() -> RasterImage:
    """256×256 渐变图，三个通道各不相同"""
    y, x = np.mgrid[0:256, 0:256]
    pixels = np.stack([x, y, (x + y) // 2], axis=-1).astype(np.uint8)
    return RasterImage(pixels=pixels)


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    """清除环境种子覆盖，避免外部环境影响测试"""
    monkeypatch.setattr(settings, "AGE_ENSEMBLE_SEED", None)
    return settings
