"""
年龄编码核心服务
年龄分组编码、概率向量 top-k 解码、三模型融合与 ε-error 评估
"""
import logging
import math
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import (
    InvalidArgumentError,
    InvalidInputError,
    InvariantViolationError,
)
from app.schemas.age import (
    FUSION_BIAS,
    GROUP_WIDTH,
    MAX_AGE,
    MAX_FUSED_AGE,
    MIN_AGE,
    NUM_GROUPS,
    PROB_TOLERANCE,
    SHIFTS,
    AgeEstimate,
    GroupingScheme,
    ModelScore,
    ProbVector,
    validate_probs,
)

logger = logging.getLogger(__name__)

ProbLike = Union[ProbVector, Sequence[float], np.ndarray]

# σ = 0 时判定 x == μ 的容差
ZERO_SIGMA_TOLERANCE = 1e-9


class AgeCoreService:
    """年龄编码核心服务 - 纯函数，无共享状态，可并发调用"""

    @staticmethod
    def ensemble_schemes() -> Tuple[GroupingScheme, GroupingScheme, GroupingScheme]:
        """三个平移分组方案，依次为 shift 0/1/2"""
        return tuple(GroupingScheme(shift=s) for s in SHIFTS)

    @staticmethod
    def encode_age(age: float, scheme: GroupingScheme) -> int:
        """
        将年龄编码为组序号

        Args:
            age: 年龄（岁），先截断到 [0, 100]
            scheme: 分组方案

        Returns:
            组序号 0..33

        Raises:
            InvalidInputError: 年龄不是有限数
        """
        age = float(age)
        if not math.isfinite(age):
            raise InvalidInputError(f"age must be finite, got {age!r}")
        clamped = min(max(age, MIN_AGE), MAX_AGE)
        index = math.floor((clamped - scheme.shift) / GROUP_WIDTH)
        return min(max(index, 0), NUM_GROUPS - 1)

    @staticmethod
    def encode_ages(ages: Iterable[float], scheme: GroupingScheme) -> np.ndarray:
        """批量编码，返回 int64 组序号数组"""
        arr = np.asarray(list(ages) if not isinstance(ages, np.ndarray) else ages, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("ages must be finite")
        clamped = np.clip(arr, MIN_AGE, MAX_AGE)
        index = np.floor((clamped - scheme.shift) / GROUP_WIDTH).astype(np.int64)
        return np.clip(index, 0, NUM_GROUPS - 1)

    @staticmethod
    def _as_probs(p: ProbLike) -> np.ndarray:
        if isinstance(p, ProbVector):
            return p.as_array()
        try:
            return validate_probs(p)
        except ValueError as e:
            raise InvariantViolationError(str(e)) from e

    @staticmethod
    def _check_k(k: int) -> int:
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= NUM_GROUPS:
            raise InvalidArgumentError(f"k must be an integer in [1, {NUM_GROUPS}], got {k!r}")
        return int(k)

    @staticmethod
    def decode_topk(p: ProbLike, scheme: GroupingScheme, k: int) -> ModelScore:
        """
        top-k 期望值解码

        按概率降序排序（概率相同时组序号小者在前），取前 k 项求 Σ p_j·ω_j。
        截断后不重新归一化：k=34 为全量加权和，k=1 只用最大概率。

        Args:
            p: 概率向量
            scheme: 分组方案（提供权重 ω_j）
            k: 参与求和的概率个数

        Returns:
            ModelScore
        """
        k = AgeCoreService._check_k(k)
        probs = AgeCoreService._as_probs(p)
        # 稳定排序保证相同概率按组序号升序
        order = np.argsort(-probs, kind="stable")[:k]
        value = float(np.sum(probs[order] * scheme.weights[order]))
        return ModelScore(value=min(max(value, 0.0), NUM_GROUPS - 1))

    @staticmethod
    def decode_topk_batch(probs: np.ndarray, scheme: GroupingScheme, k: int) -> np.ndarray:
        """
        逐行 top-k 解码

        Args:
            probs: n×34 概率矩阵，每行须满足概率向量不变量
            scheme: 分组方案
            k: 参与求和的概率个数

        Returns:
            长度为 n 的得分数组
        """
        k = AgeCoreService._check_k(k)
        matrix = np.asarray(probs, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != NUM_GROUPS:
            raise InvariantViolationError(f"expected an n×{NUM_GROUPS} matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise InvariantViolationError("probability matrix contains negative or non-finite entries")
        sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOLERANCE)
        if bad.size:
            raise InvariantViolationError(f"row {int(bad[0])} sums to {float(sums[bad[0]])!r}")

        order = np.argsort(-matrix, axis=1, kind="stable")[:, :k]
        top = np.take_along_axis(matrix, order, axis=1)
        values = np.sum(top * scheme.weights[order], axis=1)
        return np.clip(values, 0.0, NUM_GROUPS - 1)

    @staticmethod
    def fuse(scores: Sequence[Union[ModelScore, float]]) -> AgeEstimate:
        """
        三模型得分融合：m_1 + m_2 + m_3 + 2，截断到 [0, 102]

        Raises:
            InvalidArgumentError: 得分个数不是 3
        """
        if len(scores) != len(SHIFTS):
            raise InvalidArgumentError(f"fuse expects exactly {len(SHIFTS)} scores, got {len(scores)}")
        values = [s.value if isinstance(s, ModelScore) else float(s) for s in scores]
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError("scores must be finite")
        years = sum(values) + FUSION_BIAS
        return AgeEstimate(years=min(max(years, 0.0), MAX_FUSED_AGE))

    @staticmethod
    def fuse_batch(scores: np.ndarray) -> np.ndarray:
        """逐行融合 n×3 得分矩阵"""
        matrix = np.asarray(scores, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(SHIFTS):
            raise InvalidArgumentError(f"expected an n×{len(SHIFTS)} score matrix, got shape {matrix.shape}")
        return np.clip(matrix.sum(axis=1) + FUSION_BIAS, 0.0, MAX_FUSED_AGE)

    @staticmethod
    def epsilon_error(x: float, mu: float, sigma: float) -> float:
        """
        ε-error：1 − exp(−(x−μ)² / (2σ²))

        σ = 0 时取极限：x 与 μ 相差不超过 1e-9 记 0，否则记 1。

        Raises:
            InvalidArgumentError: σ 为负或非有限
        """
        x, mu, sigma = float(x), float(mu), float(sigma)
        if not math.isfinite(sigma) or sigma < 0:
            raise InvalidArgumentError(f"sigma must be a finite value >= 0, got {sigma!r}")
        if not (math.isfinite(x) and math.isfinite(mu)):
            raise InvalidInputError("prediction and mean must be finite")
        if sigma == 0:
            return 0.0 if abs(x - mu) <= ZERO_SIGMA_TOLERANCE else 1.0
        return 1.0 - math.exp(-((x - mu) ** 2) / (2.0 * sigma ** 2))

    @staticmethod
    def epsilon_errors(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        """向量化 ε-error，语义与 epsilon_error 相同"""
        x = np.asarray(x, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        if np.any(~np.isfinite(sigma)) or np.any(sigma < 0):
            raise InvalidArgumentError("sigma must be finite and >= 0")
        if np.any(~np.isfinite(x)) or np.any(~np.isfinite(mu)):
            raise InvalidInputError("prediction and mean must be finite")
        diff = x - mu
        zero = sigma == 0
        safe_sigma = np.where(zero, 1.0, sigma)
        errors = 1.0 - np.exp(-(diff ** 2) / (2.0 * safe_sigma ** 2))
        limit = np.where(np.abs(diff) <= ZERO_SIGMA_TOLERANCE, 0.0, 1.0)
        return np.where(zero, limit, errors)

    @staticmethod
    def mean_epsilon(predictions: Sequence[Tuple[float, float, float]]) -> float:
        """
        一组 (x, μ, σ) 的平均 ε-error

        Raises:
            InvalidArgumentError: 列表为空
        """
        if len(predictions) == 0:
            raise InvalidArgumentError("mean_epsilon requires at least one prediction")
        errors: List[float] = [AgeCoreService.epsilon_error(x, mu, sigma) for x, mu, sigma in predictions]
        return float(np.mean(errors))
