"""
评估服务
集成预测、ε-error 评估报告与分组混淆矩阵
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from sklearn.metrics import confusion_matrix

from app.core.exceptions import InvalidArgumentError, SchemaError
from app.schemas.age import NUM_GROUPS, GroupingScheme
from app.schemas.dataset import Dataset, Split
from app.schemas.evaluation import (
    AgePrediction,
    ConfusionMatrix,
    EvaluationReport,
    RecordError,
)
from app.services.agecore_service import AgeCoreService
from app.services.dataset_service import DatasetService, round_age
from app.services.table_io import (
    FIRST_DATA_ROW,
    parse_float,
    read_table,
    write_table,
)
from app.services.toymodel_service import ToyModelService

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PREDICTION_COLUMNS = ["id", "age", "m0", "m1", "m2"]
REPORT_COLUMNS = ["id", "prediction", "mean", "stddev", "epsilon"]
BY_AGE_COLUMNS = ["age", "count", "mean_epsilon"]


class EvaluationService:
    """评估服务类"""

    # ========== 预测 ==========

    @staticmethod
    def predict(models_dir: PathLike, features_file: PathLike, k: int) -> List[AgePrediction]:
        """
        用三模型集成预测特征文件中的每个样本

        Args:
            models_dir: 含 model_shift{0,1,2}.bin 的目录
            features_file: 特征 CSV（id,f0,f1,...）
            k: top-k 解码的 k

        Returns:
            与特征文件顺序一致的预测列表
        """
        models = ToyModelService.load_ensemble(models_dir)
        ids, X = ToyModelService.load_features(features_file)
        if X.shape[1] != models[0].d:
            raise SchemaError(
                f"{features_file}: feature dimension {X.shape[1]} does not match models ({models[0].d})"
            )
        ages, scores = ToyModelService.ensemble_predict(models, X, k)
        logger.info(f"Predicted {len(ids)} samples with k={k}")
        return [
            AgePrediction(id=face_id, age=float(age), scores=[float(v) for v in row])
            for face_id, age, row in zip(ids, ages, scores)
        ]

    @staticmethod
    def write_predictions(predictions: Sequence[AgePrediction], path: PathLike) -> Path:
        """写出 id,age,m0,m1,m2"""
        rows = []
        for p in predictions:
            scores = p.scores or [float("nan")] * 3
            rows.append({"id": p.id, "age": float(p.age), "m0": scores[0], "m1": scores[1], "m2": scores[2]})
        return write_table(rows, PREDICTION_COLUMNS, path)

    @staticmethod
    def read_predictions(path: PathLike) -> List[AgePrediction]:
        """
        读取预测 CSV；必需列 id,age，m0..m2 可选

        Raises:
            SchemaError: 缺列、数值非法或 ID 重复
        """
        frame = read_table(path, ["id", "age"])
        has_scores = all(c in frame.columns for c in ("m0", "m1", "m2"))
        predictions: List[AgePrediction] = []
        seen = set()
        for line, row in zip(frame.index.tolist(), frame.to_dict("records")):
            face_id = str(row["id"]).strip()
            if face_id in seen:
                raise SchemaError(f"duplicate id {face_id!r}", row=line)
            seen.add(face_id)
            age = parse_float(row["age"], "age", line)
            scores = [parse_float(row[c], c, line) for c in ("m0", "m1", "m2")] if has_scores else None
            try:
                predictions.append(AgePrediction(id=face_id, age=age, scores=scores))
            except ValidationError as e:
                raise SchemaError(f"invalid prediction: {e.errors()[0]['msg']}", row=line) from e
        return predictions

    # ========== ε-error 评估 ==========

    @staticmethod
    def _match(predictions: Sequence[AgePrediction], labels: Dataset) -> List[Tuple[AgePrediction, float, float]]:
        if not predictions:
            raise InvalidArgumentError("no predictions to evaluate")
        by_id = labels.by_id()
        matched = []
        for offset, p in enumerate(predictions):
            record = by_id.get(p.id)
            if record is None:
                raise SchemaError(f"prediction id {p.id!r} has no label", row=FIRST_DATA_ROW + offset)
            matched.append((p, record.mu, record.sigma))
        unmatched = len(labels) - len(matched)
        if unmatched:
            logger.warning(f"{unmatched} labelled records have no prediction and are not evaluated")
        return matched

    @staticmethod
    def evaluate(predictions: Sequence[AgePrediction], labels: Dataset) -> EvaluationReport:
        """
        逐条 ε-error、平均值与按 round(μ) 分箱的平均值

        Raises:
            InvalidArgumentError: 没有预测
            SchemaError: 预测 ID 不在标签中
        """
        matched = EvaluationService._match(predictions, labels)
        x = np.array([p.age for p, _, _ in matched])
        mu = np.array([m for _, m, _ in matched])
        sigma = np.array([s for _, _, s in matched])
        errors = AgeCoreService.epsilon_errors(x, mu, sigma)

        bins: Dict[int, List[float]] = defaultdict(list)
        for m, e in zip(mu, errors):
            bins[round_age(float(m))].append(float(e))

        report = EvaluationReport(
            count=len(matched),
            mean_epsilon=float(np.mean(errors)),
            records=[
                RecordError(id=p.id, prediction=p.age, mean=m, stddev=s, epsilon=float(e))
                for (p, m, s), e in zip(matched, errors)
            ],
            per_age={age: float(np.mean(v)) for age, v in sorted(bins.items())},
            per_age_count={age: len(v) for age, v in sorted(bins.items())},
        )
        logger.info(f"Evaluated {report.count} records: mean_epsilon={report.mean_epsilon:.6f}")
        return report

    @staticmethod
    def by_age_path(out: PathLike) -> Path:
        out = Path(out)
        return out.with_name(f"{out.stem}_by_age.csv")

    @staticmethod
    def write_report(report: EvaluationReport, out: PathLike) -> Tuple[Path, Path]:
        """写出逐条结果与 <stem>_by_age.csv"""
        rows = [
            {
                "id": r.id,
                "prediction": float(r.prediction),
                "mean": float(r.mean),
                "stddev": float(r.stddev),
                "epsilon": float(r.epsilon),
            }
            for r in report.records
        ]
        main = write_table(rows, REPORT_COLUMNS, out)
        by_age = write_table(
            [
                {"age": age, "count": report.per_age_count[age], "mean_epsilon": float(value)}
                for age, value in sorted(report.per_age.items())
            ],
            BY_AGE_COLUMNS,
            EvaluationService.by_age_path(out),
        )
        return main, by_age

    # ========== 混淆矩阵 ==========

    @staticmethod
    def confusion(predictions: Sequence[AgePrediction], labels: Dataset, shift: int) -> ConfusionMatrix:
        """
        分组混淆矩阵：真实组由 μ 编码，预测组由融合年龄编码（同一分组方案）
        """
        scheme = GroupingScheme(shift=shift)
        matched = EvaluationService._match(predictions, labels)
        true_groups = AgeCoreService.encode_ages([m for _, m, _ in matched], scheme)
        predicted_groups = AgeCoreService.encode_ages([p.age for p, _, _ in matched], scheme)
        counts = confusion_matrix(true_groups, predicted_groups, labels=list(range(NUM_GROUPS)))
        matrix = ConfusionMatrix(shift=shift, counts=counts)
        logger.info(f"Confusion matrix (shift={shift}): total={matrix.total}, trace={matrix.trace}")
        return matrix

    @staticmethod
    def write_confusion(matrix: ConfusionMatrix, path: PathLike) -> Path:
        """写出 true_group,g0..g33，每行对应一个真实组"""
        columns = ["true_group"] + [f"g{j}" for j in range(NUM_GROUPS)]
        rows = [
            {"true_group": i, **{f"g{j}": int(matrix.counts[i, j]) for j in range(NUM_GROUPS)}}
            for i in range(NUM_GROUPS)
        ]
        return write_table(rows, columns, path)

    @staticmethod
    def load_labels(path: PathLike) -> Dataset:
        """评估用标签（id,mean,stddev）"""
        return DatasetService.ingest(path, Split.TEST)
