"""
年龄解码 / 融合 / 预测 API 路由
"""
import logging
from typing import List, Tuple

import numpy as np
from fastapi import APIRouter, Depends

from app.api.dependencies import get_ensemble
from app.core.config import settings
from app.core.exceptions import InvalidArgumentError
from app.schemas.age import GroupingScheme
from app.schemas.evaluation import (
    AgePrediction,
    DecodeRequest,
    DecodeResponse,
    FuseRequest,
    FuseResponse,
    PredictRequest,
)
from app.schemas.model import SoftmaxModel
from app.services.agecore_service import AgeCoreService
from app.services.toymodel_service import ToyModelService

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/age", tags=["年龄估计"])


@router.post("/decode", response_model=DecodeResponse, summary="top-k 解码")
async def decode(data: DecodeRequest):
    """把单个分类器的概率向量解码为得分 m"""
    score = AgeCoreService.decode_topk(data.probs, GroupingScheme(shift=data.shift), data.k)
    return DecodeResponse(score=score.value)


@router.post("/fuse", response_model=FuseResponse, summary="三模型融合")
async def fuse(data: FuseRequest):
    """m0 + m1 + m2 + 2"""
    return FuseResponse(years=AgeCoreService.fuse(data.scores).years)


@router.post("/predict", response_model=List[AgePrediction], summary="集成预测")
async def predict(
    data: PredictRequest,
    models: Tuple[SoftmaxModel, SoftmaxModel, SoftmaxModel] = Depends(get_ensemble),
):
    """用 MODELS_DIR 下的三个模型预测每个样本的年龄"""
    X = np.array([item.features for item in data.items], dtype=np.float64)
    if X.shape[1] != models[0].d:
        raise InvalidArgumentError(f"expected features of dimension {models[0].d}, got {X.shape[1]}")
    k = settings.DEFAULT_TOP_K if data.k is None else data.k
    ages, scores = ToyModelService.ensemble_predict(models, X, k)
    logger.info(f"HTTP predict: {len(data.items)} items, k={k}")
    return [
        AgePrediction(id=item.id, age=float(age), scores=[float(v) for v in row])
        for item, age, row in zip(data.items, ages, scores)
    ]
