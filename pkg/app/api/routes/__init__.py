"""
API 路由模块
"""
from fastapi import APIRouter
from app.api.routes import age, evaluation

api_router = APIRouter()

# 注册各模块路由
api_router.include_router(age.router)
api_router.include_router(evaluation.router)

__all__ = ["api_router"]
