"""
API 依赖注入模块
定义 FastAPI 的依赖项
"""
import logging
from typing import Tuple

from fastapi import HTTPException, status

from app.core.config import settings
from app.core.exceptions import DataIOError
from app.schemas.model import SoftmaxModel
from app.services.toymodel_service import ToyModelService

logger = logging.getLogger(__name__)


def get_ensemble() -> Tuple[SoftmaxModel, SoftmaxModel, SoftmaxModel]:
    """
    从 settings.MODELS_DIR 读取三个模型

    Raises:
        HTTPException: 模型文件缺失时返回 404
    """
    try:
        return ToyModelService.load_ensemble(settings.MODELS_DIR)
    except DataIOError as e:
        logger.warning(f"Ensemble unavailable: {e}")
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail=f"模型不可用: {e}"
        )
