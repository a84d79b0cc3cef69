"""
服务模块
"""
from app.services.agecore_service import AgeCoreService
from app.services.raster_service import RasterService
from app.services.dataset_service import DatasetService
from app.services.toymodel_service import ToyModelService
from app.services.evaluation_service import EvaluationService
from app.services.pipeline_service import PipelineService

__all__ = [
    "AgeCoreService",
    "RasterService",
    "DatasetService",
    "ToyModelService",
    "EvaluationService",
    "PipelineService",
]
