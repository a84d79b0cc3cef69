"""
核心模块：配置、异常、日志
"""
from app.core.config import settings, Settings
from app.core.exceptions import AgeEnsembleError
from app.core.logging_config import configure_logging

__all__ = ["settings", "Settings", "AgeEnsembleError", "configure_logging"]
