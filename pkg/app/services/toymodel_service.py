"""
Softmax 分类器服务
从零实现的多项 softmax 分类器（交叉熵 + 小批量梯度下降），作为三个平移分组模型的替身
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import (
    DataIOError,
    InvalidArgumentError,
    InvariantViolationError,
    SchemaError,
)
from app.schemas.age import MAX_AGE, NUM_GROUPS, SHIFTS, GroupingScheme, ProbVector
from app.schemas.model import SoftmaxModel, TrainConfig
from app.services.agecore_service import AgeCoreService
from app.services.table_io import quantize, read_table, write_table

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
EpochCallback = Callable[[int, float], None]

INIT_RANGE = 0.01
CHECKPOINT_NAME = "model_shift{shift}.bin"


class SyntheticSet:
    """合成基准数据：ID、特征矩阵、标注均值 μ 与标准差 σ"""

    def __init__(self, ids: List[str], features: np.ndarray, mu: np.ndarray, sigma: np.ndarray):
        self.ids = ids
        self.features = features
        self.mu = mu
        self.sigma = sigma

    def __len__(self) -> int:
        return len(self.ids)

    def split(self, train_fraction: float) -> Tuple["SyntheticSet", "SyntheticSet"]:
        """按顺序切分为训练集与留出集"""
        cut = int(round(len(self) * train_fraction))
        head = SyntheticSet(self.ids[:cut], self.features[:cut], self.mu[:cut], self.sigma[:cut])
        tail = SyntheticSet(self.ids[cut:], self.features[cut:], self.mu[cut:], self.sigma[cut:])
        return head, tail


class ToyModelService:
    """Softmax 分类器服务"""

    # ========== 前向与损失 ==========

    @staticmethod
    def init_model(d: int, seed: int = 0, rng: Optional[np.random.Generator] = None) -> SoftmaxModel:
        """权重取自 uniform(−0.01, 0.01)，偏置为 0；传入 rng 时忽略 seed 并继续消费该 rng"""
        if rng is None:
            rng = np.random.default_rng(seed)
        return SoftmaxModel(
            weights=rng.uniform(-INIT_RANGE, INIT_RANGE, size=(NUM_GROUPS, d)),
            bias=np.zeros(NUM_GROUPS),
        )

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=-1, keepdims=True)

    @staticmethod
    def _check_features(model: SoftmaxModel, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != model.d:
            raise InvalidArgumentError(f"expected features of dimension {model.d}, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features must be finite")
        return X

    @staticmethod
    def forward(model: SoftmaxModel, x: Sequence[float]) -> ProbVector:
        """
        单样本前向：softmax(Wx + b)，先减去最大 logit 防止溢出

        Raises:
            InvalidArgumentError: 特征维度不符
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (model.d,):
            raise InvalidArgumentError(f"expected a feature vector of length {model.d}, got shape {x.shape}")
        probs = ToyModelService.predict_proba(model, x.reshape(1, -1))[0]
        return ProbVector(probs=tuple(probs))

    @staticmethod
    def predict_proba(model: SoftmaxModel, X: np.ndarray) -> np.ndarray:
        """批量前向，返回 n×34 概率矩阵"""
        X = ToyModelService._check_features(model, X)
        return ToyModelService._softmax(X @ model.weights.T + model.bias)

    @staticmethod
    def _check_labels(labels: np.ndarray, n: int) -> np.ndarray:
        y = np.asarray(labels)
        if y.shape != (n,):
            raise InvalidArgumentError(f"expected {n} labels, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidArgumentError("labels must be integers")
            y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= NUM_GROUPS):
            raise InvalidArgumentError(f"labels must lie in [0, {NUM_GROUPS - 1}]")
        return y

    @staticmethod
    def _loss_and_grad(
        weights: np.ndarray, bias: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        n = X.shape[0]
        logits = X @ weights.T + bias
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        rows = np.arange(n)
        loss = -float(log_probs[rows, y].mean()) + 0.5 * l2 * float(np.sum(weights ** 2))

        residual = np.exp(log_probs)
        residual[rows, y] -= 1.0
        grad_w = residual.T @ X / n + l2 * weights
        grad_b = residual.mean(axis=0)
        return loss, grad_w, grad_b

    @staticmethod
    def loss_and_grad(
        model: SoftmaxModel, X: np.ndarray, labels: np.ndarray, l2: float = 0.0
    ) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        平均交叉熵 + (l2/2)‖W‖² 及其梯度

        Args:
            model: 当前模型
            X: n×d 特征
            labels: n 个组序号
            l2: L2 正则系数

        Returns:
            (loss, grad_weights 34×d, grad_bias 34)

        Raises:
            InvalidArgumentError: 标签越界、维度不符或批为空
        """
        if l2 < 0:
            raise InvalidArgumentError(f"l2 must be >= 0, got {l2}")
        X = ToyModelService._check_features(model, X)
        if X.shape[0] == 0:
            raise InvalidArgumentError("batch must not be empty")
        y = ToyModelService._check_labels(labels, X.shape[0])
        return ToyModelService._loss_and_grad(model.weights, model.bias, X, y, float(l2))

    # ========== 训练 ==========

    @staticmethod
    def fit(
        X: np.ndarray,
        labels: np.ndarray,
        cfg: TrainConfig,
        on_epoch: Optional[EpochCallback] = None,
    ) -> SoftmaxModel:
        """
        小批量梯度下降训练（标签为组序号）

        每轮按种子随机数打乱样本顺序；每轮结束计算全量训练损失，
        返回全量损失最低的一轮参数（包含初始化），因此最终损失不高于初始损失。

        Args:
            X: n×d 特征
            labels: n 个组序号
            cfg: 训练配置
            on_epoch: 每轮结束回调 (epoch, full_training_loss)

        Raises:
            InvalidArgumentError: 训练集为空或标签越界
            InvariantViolationError: 训练发散产生非有限参数
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise InvalidArgumentError("training set must be a non-empty n×d matrix")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features must be finite")
        n, d = X.shape
        y = ToyModelService._check_labels(labels, n)

        rng = np.random.default_rng(cfg.seed)
        initial = ToyModelService.init_model(d, rng=rng)
        weights, bias = initial.weights.copy(), initial.bias.copy()

        best_loss, _, _ = ToyModelService._loss_and_grad(weights, bias, X, y, cfg.l2)
        best = (weights.copy(), bias.copy())
        logger.info(f"Training softmax: n={n}, d={d}, epochs={cfg.epochs}, lr={cfg.learning_rate}, "
                    f"batch={cfg.batch_size}, initial_loss={best_loss:.6f}")

        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                _, grad_w, grad_b = ToyModelService._loss_and_grad(weights, bias, X[idx], y[idx], cfg.l2)
                weights -= cfg.learning_rate * grad_w
                bias -= cfg.learning_rate * grad_b

            loss, _, _ = ToyModelService._loss_and_grad(weights, bias, X, y, cfg.l2)
            if not np.isfinite(loss) or not np.all(np.isfinite(weights)):
                raise InvariantViolationError(f"training diverged at epoch {epoch}; lower the learning rate")
            if loss < best_loss:
                best_loss = loss
                best = (weights.copy(), bias.copy())
            if on_epoch is not None:
                on_epoch(epoch, loss)
            if epoch % cfg.log_every == 0 or epoch == cfg.epochs:
                logger.info(f"epoch {epoch}/{cfg.epochs}: loss={loss:.6f}")

        return SoftmaxModel(weights=best[0], bias=best[1])

    @staticmethod
    def train(
        X: np.ndarray,
        ages: np.ndarray,
        scheme: GroupingScheme,
        cfg: TrainConfig,
        on_epoch: Optional[EpochCallback] = None,
    ) -> SoftmaxModel:
        """按分组方案把 μ 编码为组序号后训练"""
        labels = AgeCoreService.encode_ages(np.asarray(ages, dtype=np.float64), scheme)
        return ToyModelService.fit(X, labels, cfg, on_epoch=on_epoch)

    @staticmethod
    def train_ensemble(
        X: np.ndarray, ages: np.ndarray, cfg: TrainConfig, workers: int = 1
    ) -> Tuple[SoftmaxModel, SoftmaxModel, SoftmaxModel]:
        """
        三个平移分组各训练一个模型（shift 0/1/2），彼此无共享状态

        Args:
            X: n×d 特征
            ages: n 个标注均值 μ
            cfg: 训练配置（三个模型共用）
            workers: 并行训练的线程数，结果与串行一致
        """
        schemes = AgeCoreService.ensemble_schemes()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=min(workers, len(schemes))) as pool:
                models = list(pool.map(lambda s: ToyModelService.train(X, ages, s, cfg), schemes))
        else:
            models = [ToyModelService.train(X, ages, s, cfg) for s in schemes]
        return tuple(models)

    @staticmethod
    def ensemble_predict(
        models: Sequence[SoftmaxModel], X: np.ndarray, k: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        三模型 top-k 解码并融合

        Returns:
            (n 个年龄估计, n×3 单模型得分)
        """
        if len(models) != len(SHIFTS):
            raise InvalidArgumentError(f"ensemble needs exactly {len(SHIFTS)} models, got {len(models)}")
        schemes = AgeCoreService.ensemble_schemes()
        scores = np.column_stack([
            AgeCoreService.decode_topk_batch(ToyModelService.predict_proba(m, X), s, k)
            for m, s in zip(models, schemes)
        ])
        return AgeCoreService.fuse_batch(scores), scores

    # ========== 模型文件 ==========

    @staticmethod
    def save_checkpoint(model: SoftmaxModel, path: PathLike) -> Path:
        """
        二进制检查点（小端）：int64 表头 (d, 34)，float64 行优先 W（34×d），float64 b（34）
        """
        path = Path(path)
        payload = (
            np.array([model.d, NUM_GROUPS], dtype="<i8").tobytes()
            + np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
            + np.ascontiguousarray(model.bias, dtype="<f8").tobytes()
        )
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(payload)
        except OSError as e:
            raise DataIOError(f"cannot write checkpoint {path}: {e}") from e
        return path

    @staticmethod
    def load_checkpoint(path: PathLike) -> SoftmaxModel:
        """读取 save_checkpoint 写出的检查点"""
        path = Path(path)
        try:
            raw = path.read_bytes()
        except FileNotFoundError as e:
            raise DataIOError(f"checkpoint not found: {path}") from e
        except OSError as e:
            raise DataIOError(f"cannot read checkpoint {path}: {e}") from e
        if len(raw) < 16:
            raise SchemaError(f"{path}: truncated checkpoint header")
        d, classes = (int(v) for v in np.frombuffer(raw[:16], dtype="<i8"))
        if classes != NUM_GROUPS or d < 1:
            raise SchemaError(f"{path}: unexpected checkpoint header (d={d}, classes={classes})")
        expected = 16 + 8 * (NUM_GROUPS * d + NUM_GROUPS)
        if len(raw) != expected:
            raise SchemaError(f"{path}: expected {expected} bytes, found {len(raw)}")
        body = np.frombuffer(raw[16:], dtype="<f8")
        try:
            return SoftmaxModel(
                weights=body[:NUM_GROUPS * d].reshape(NUM_GROUPS, d),
                bias=body[NUM_GROUPS * d:],
            )
        except ValueError as e:
            raise InvariantViolationError(f"{path}: {e}") from e

    @staticmethod
    def save_ensemble(models: Sequence[SoftmaxModel], directory: PathLike) -> List[Path]:
        directory = Path(directory)
        return [
            ToyModelService.save_checkpoint(m, directory / CHECKPOINT_NAME.format(shift=s))
            for m, s in zip(models, SHIFTS)
        ]

    @staticmethod
    def load_ensemble(directory: PathLike) -> Tuple[SoftmaxModel, SoftmaxModel, SoftmaxModel]:
        directory = Path(directory)
        models = tuple(ToyModelService.load_checkpoint(directory / CHECKPOINT_NAME.format(shift=s)) for s in SHIFTS)
        if len({m.d for m in models}) != 1:
            raise SchemaError(f"{directory}: ensemble checkpoints disagree on feature dimension")
        return models

    # ========== 特征文件 ==========

    @staticmethod
    def load_features(path: PathLike) -> Tuple[List[str], np.ndarray]:
        """
        读取特征 CSV：id,f0,f1,...

        Raises:
            DataIOError: 文件不存在
            SchemaError: 缺少 id 列、无特征列、数值无法解析或 ID 重复
        """
        frame = read_table(path, ["id"])
        feature_columns = [c for c in frame.columns if c != "id"]
        if not feature_columns:
            raise SchemaError(f"{path}: no feature columns after id", row=1)
        ids = [str(v).strip() for v in frame["id"]]
        seen = set()
        for line, face_id in zip(frame.index.tolist(), ids):
            if face_id in seen:
                raise SchemaError(f"duplicate id {face_id!r}", row=int(line))
            seen.add(face_id)
        try:
            X = frame[feature_columns].to_numpy(dtype=np.float64)
        except ValueError as e:
            raise SchemaError(f"{path}: non-numeric feature value ({e})") from e
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
        if bad.size:
            raise SchemaError("non-finite feature value", row=int(frame.index[bad[0]]))
        return ids, X

    @staticmethod
    def write_features(ids: Sequence[str], X: np.ndarray, path: PathLike) -> Path:
        columns = ["id"] + [f"f{j}" for j in range(X.shape[1])]
        rows = [
            {"id": face_id, **{f"f{j}": float(v) for j, v in enumerate(row)}}
            for face_id, row in zip(ids, X)
        ]
        return write_table(rows, columns, path)

    # ========== 合成数据 ==========

    @staticmethod
    def _synthetic_labels(rng: np.random.Generator, n: int, integer: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """年龄取自 [0, 100]（integer 时为 0..100 的整数），σ = 1 + a/20；均截到 12 位有效数字"""
        if integer:
            ages = rng.integers(0, MAX_AGE, size=n, endpoint=True).astype(np.float64)
        else:
            ages = np.array([quantize(a) for a in rng.uniform(0.0, MAX_AGE, size=n)])
        sigma = np.array([quantize(1.0 + a / 20.0) for a in ages])
        return ages, sigma

    @staticmethod
    def make_synthetic(n: int, d: int, seed: int, noise: float = 0.02) -> SyntheticSet:
        """
        合成基准：年龄均匀取自连续区间 [0, 100]，特征 = (a/100 + noise·N(0,1), d−1 维标准高斯干扰)
        """
        if n < 1 or d < 1:
            raise InvalidArgumentError("n and d must be positive")
        if noise < 0:
            raise InvalidArgumentError("noise must be >= 0")
        rng = np.random.default_rng(seed)
        ages, sigma = ToyModelService._synthetic_labels(rng, n)
        informative = ages / 100.0 + noise * rng.standard_normal(n)
        nuisance = rng.standard_normal((n, d - 1))
        X = np.column_stack([informative, nuisance])
        ids = [f"s{seed}_{i:05d}" for i in range(n)]
        return SyntheticSet(ids, X, ages, sigma)

    @staticmethod
    def make_separable(n: int, seed: int) -> SyntheticSet:
        """可分合成集：特征是整数年龄的 one-hot 编码（101 维），精确编码年龄"""
        if n < 1:
            raise InvalidArgumentError("n must be positive")
        rng = np.random.default_rng(seed)
        ages, sigma = ToyModelService._synthetic_labels(rng, n, integer=True)
        X = np.zeros((n, MAX_AGE + 1))
        X[np.arange(n), ages.astype(np.int64)] = 1.0
        ids = [f"p{seed}_{i:05d}" for i in range(n)]
        return SyntheticSet(ids, X, ages, sigma)
