"""
评估 API 路由
"""
from fastapi import APIRouter

from app.schemas.evaluation import EpsilonRequest, EpsilonResponse
from app.services.agecore_service import AgeCoreService

router = APIRouter(prefix="/evaluation", tags=["评估"])


@router.post("/epsilon", response_model=EpsilonResponse, summary="ε-error")
async def epsilon(data: EpsilonRequest):
    """逐条与平均 ε-error"""
    errors = [AgeCoreService.epsilon_error(i.x, i.mu, i.sigma) for i in data.items]
    return EpsilonResponse(mean_epsilon=sum(errors) / len(errors), errors=errors)
