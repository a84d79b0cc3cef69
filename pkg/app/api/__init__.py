"""
API 模块
年龄解码、融合、集成预测与评估的 HTTP 接口
"""
from app.api.routes import api_router

__all__ = ["api_router"]
