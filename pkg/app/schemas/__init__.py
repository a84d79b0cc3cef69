"""
Schema 模块
导出所有 Pydantic Schema
"""
from app.schemas.age import AgeEstimate, GroupingScheme, ModelScore, ProbVector
from app.schemas.raster import LandmarkSet, RasterImage, SimilarityTransform
from app.schemas.dataset import (
    AnnotatedFace,
    AugmentationPlan,
    AugmentationSpec,
    Dataset,
    DistributionReport,
    Split,
)
from app.schemas.model import SoftmaxModel, TrainConfig
from app.schemas.evaluation import AgePrediction, ConfusionMatrix, EvaluationReport

__all__ = [
    "AgeEstimate",
    "GroupingScheme",
    "ModelScore",
    "ProbVector",
    "LandmarkSet",
    "RasterImage",
    "SimilarityTransform",
    "AnnotatedFace",
    "AugmentationPlan",
    "AugmentationSpec",
    "Dataset",
    "DistributionReport",
    "Split",
    "SoftmaxModel",
    "TrainConfig",
    "AgePrediction",
    "ConfusionMatrix",
    "EvaluationReport",
]
