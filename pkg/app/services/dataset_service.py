"""
数据集服务
标签读入、分布统计、自适应增强计划与多标签目标生成
"""
import logging
import math
import zlib
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import DataIOError, InvalidArgumentError, SchemaError
from app.schemas.age import MAX_AGE, MIN_AGE, GroupingScheme
from app.schemas.dataset import (
    AnnotatedFace,
    AugmentationPlan,
    AugmentationSpec,
    Dataset,
    DistributionReport,
    Split,
)
from app.schemas.raster import LandmarkSet
from app.services.agecore_service import AgeCoreService
from app.services.table_io import (
    parse_float,
    quantize,
    read_table,
    write_table,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LABEL_COLUMNS = ["id", "mean", "stddev"]
PLAN_COLUMNS = ["id", "replica", "rotation_deg", "zoom", "dr", "dg", "db", "crop_index", "seed"]
STATS_COLUMNS = ["age", "count", "mean_sigma"]

# 统计中 "低分歧" 标注的阈值与 "年长" 的年龄界线
LOW_SIGMA_THRESHOLD = 3.0
OLDER_AGE = 40.0


def round_age(mu: float) -> int:
    """μ 四舍五入到整数岁（0.5 向上）"""
    return int(math.floor(mu + 0.5))


class DatasetService:
    """数据集服务类"""

    # ========== 读入 / 写出 ==========

    @staticmethod
    def ingest(label_file: PathLike, split: Union[Split, str]) -> Dataset:
        """
        读取标签 CSV（表头 id,mean,stddev）

        Args:
            label_file: 标签文件路径
            split: 数据集划分

        Returns:
            校验后的 Dataset

        Raises:
            DataIOError: 文件不存在
            SchemaError: 表头不符、坏行、μ ∉ [0, 100]、σ < 0 或 ID 重复（诊断信息含行号）
        """
        split = split if isinstance(split, Split) else Split.parse(split)
        frame = read_table(label_file, LABEL_COLUMNS, exact=True)

        records: List[AnnotatedFace] = []
        problems: List[Tuple[int, str]] = []
        seen: Dict[str, int] = {}

        for row, (raw_id, raw_mean, raw_std) in zip(frame.index.tolist(), frame.itertuples(index=False, name=None)):
            face_id = str(raw_id).strip()
            if not face_id:
                problems.append((row, "empty id"))
                continue
            if face_id in seen:
                problems.append((row, f"duplicate id {face_id!r} (first seen on row {seen[face_id]})"))
                continue
            seen[face_id] = row
            try:
                mu = parse_float(raw_mean, "mean", row)
                sigma = parse_float(raw_std, "stddev", row)
            except SchemaError as e:
                problems.append((row, str(e).split(": ", 1)[-1]))
                continue
            if not (math.isfinite(mu) and MIN_AGE <= mu <= MAX_AGE):
                problems.append((row, f"mean {raw_mean!r} outside [{MIN_AGE}, {MAX_AGE}]"))
                continue
            if not (math.isfinite(sigma) and sigma >= 0):
                problems.append((row, f"stddev {raw_std!r} must be >= 0"))
                continue
            records.append(AnnotatedFace(id=face_id, mu=mu, sigma=sigma))

        if problems:
            for row, message in problems:
                logger.error(f"{label_file}: row {row}: {message}")
            first_row, first_message = problems[0]
            extra = f" (and {len(problems) - 1} more)" if len(problems) > 1 else ""
            raise SchemaError(f"{label_file}: {first_message}{extra}", row=first_row)

        dataset = Dataset(split=split, records=tuple(records))
        logger.info(f"Ingested {len(dataset)} records from {label_file} (split={split.value})")
        return dataset

    @staticmethod
    def emit(d: Dataset, path: PathLike) -> Path:
        """写回标签 CSV；数值不超过 12 位有效数字时 ingest(emit(d)) 与 d 相等"""
        rows = [{"id": r.id, "mean": float(r.mu), "stddev": float(r.sigma)} for r in d.records]
        return write_table(rows, LABEL_COLUMNS, path)

    @staticmethod
    def save_dataset(d: Dataset, path: PathLike) -> Path:
        """保存为 JSON（ingest 命令产出的校验后数据集文件）"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(d.model_dump_json(indent=2, exclude_none=True) + "\n", encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"cannot write dataset {path}: {e}") from e
        return path

    @staticmethod
    def load_dataset(path: PathLike) -> Dataset:
        """读取 save_dataset 写出的 JSON"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError as e:
            raise DataIOError(f"dataset file not found: {path}") from e
        except OSError as e:
            raise DataIOError(f"cannot read dataset {path}: {e}") from e
        try:
            return Dataset.model_validate_json(text)
        except ValidationError as e:
            raise SchemaError(f"{path} is not a valid dataset file: {e.errors()[0]['msg']}") from e

    @staticmethod
    def attach(
        d: Dataset,
        landmarks: Optional[Mapping[str, LandmarkSet]] = None,
        features: Optional[Mapping[str, Sequence[float]]] = None,
    ) -> Dataset:
        """为记录补充关键点 / 特征，未提供的 ID 保持原值"""
        landmarks = landmarks or {}
        features = features or {}
        records = []
        for r in d.records:
            update = {}
            if r.id in landmarks:
                update["landmarks"] = landmarks[r.id]
            if r.id in features:
                update["features"] = tuple(float(v) for v in features[r.id])
            records.append(AnnotatedFace(**{**r.model_dump(), **update}) if update else r)
        return Dataset(split=d.split, records=tuple(records))

    # ========== 统计 ==========

    @staticmethod
    def stats(d: Dataset) -> DistributionReport:
        """
        分布统计：round(μ) 直方图、σ 总均值与按年龄的 σ 均值

        Raises:
            InvalidArgumentError: 数据集为空
        """
        if len(d) == 0:
            raise InvalidArgumentError("cannot compute statistics of an empty dataset")

        sigma_by_age: Dict[int, List[float]] = defaultdict(list)
        for r in d.records:
            sigma_by_age[round_age(r.mu)].append(r.sigma)

        sigmas = np.array([r.sigma for r in d.records], dtype=np.float64)
        low = [r for r in d.records if r.sigma < LOW_SIGMA_THRESHOLD]
        report = DistributionReport(
            count=len(d),
            histogram={age: len(v) for age, v in sorted(sigma_by_age.items())},
            mean_sigma=float(sigmas.mean()),
            mean_sigma_per_age={age: float(np.mean(v)) for age, v in sorted(sigma_by_age.items())},
            low_sigma_count=len(low),
            low_sigma_over_40_count=sum(1 for r in low if r.mu > OLDER_AGE),
        )
        logger.info(f"Stats: count={report.count}, mean_sigma={report.mean_sigma:.4f}, bins={len(report.histogram)}")
        return report

    @staticmethod
    def write_stats(report: DistributionReport, path: PathLike) -> Path:
        """写出 age,count,mean_sigma"""
        rows = [
            {"age": age, "count": count, "mean_sigma": float(report.mean_sigma_per_age[age])}
            for age, count in sorted(report.histogram.items())
        ]
        return write_table(rows, STATS_COLUMNS, path)

    # ========== 增强计划 ==========

    @staticmethod
    def derive_seed(seed: int, face_id: str, replica: int) -> int:
        """由 (seed, id, 副本序号) 派生 32 位种子，与进程无关"""
        entropy = [int(seed), zlib.crc32(face_id.encode("utf-8")), int(replica)]
        return int(np.random.SeedSequence(entropy).generate_state(1)[0])

    @staticmethod
    def plan_augmentation(
        d: Dataset,
        seed: int,
        cap: int,
        rotation_deg: Optional[float] = None,
        zoom_range: Optional[Tuple[float, float]] = None,
        channel_shift: Optional[int] = None,
    ) -> AugmentationPlan:
        """
        自适应增强计划：每个整数年龄箱的目标数量为 min(最大箱数量, cap × 箱数量)，
        副本在箱内按轮转顺序分配，参数由 (seed, id, 副本序号) 派生的随机数生成

        Args:
            d: 数据集
            seed: 非负随机种子
            cap: 单张图片的最大复制倍数
            rotation_deg: 旋转幅度，默认 settings.AUGMENT_ROTATION_DEG
            zoom_range: 缩放范围，默认 (AUGMENT_ZOOM_MIN, AUGMENT_ZOOM_MAX)
            channel_shift: 通道偏移幅度，默认 settings.AUGMENT_CHANNEL_SHIFT

        Raises:
            InvalidArgumentError: cap < 1、seed < 0、范围非法或数据集为空
        """
        if cap < 1:
            raise InvalidArgumentError(f"cap must be >= 1, got {cap}")
        if seed < 0:
            raise InvalidArgumentError(f"seed must be >= 0, got {seed}")
        if len(d) == 0:
            raise InvalidArgumentError("cannot plan augmentation for an empty dataset")

        rotation_deg = settings.AUGMENT_ROTATION_DEG if rotation_deg is None else float(rotation_deg)
        zoom_lo, zoom_hi = zoom_range or (settings.AUGMENT_ZOOM_MIN, settings.AUGMENT_ZOOM_MAX)
        channel_shift = settings.AUGMENT_CHANNEL_SHIFT if channel_shift is None else int(channel_shift)
        if not 0 <= rotation_deg <= 45:
            raise InvalidArgumentError(f"rotation range must lie in [0, 45], got {rotation_deg}")
        if not 0 < zoom_lo <= zoom_hi:
            raise InvalidArgumentError(f"invalid zoom range ({zoom_lo}, {zoom_hi})")
        if not 0 <= channel_shift <= 255:
            raise InvalidArgumentError(f"channel shift must lie in [0, 255], got {channel_shift}")

        bins: Dict[int, List[AnnotatedFace]] = defaultdict(list)
        for r in d.records:
            bins[round_age(r.mu)].append(r)
        max_count = max(len(v) for v in bins.values())

        entries: List[AugmentationSpec] = []
        for age in sorted(bins):
            members = bins[age]
            target = min(max_count, cap * len(members))
            extra = target - len(members)
            replicas: Dict[str, int] = defaultdict(int)
            for i in range(extra):
                record = members[i % len(members)]
                replicas[record.id] += 1
                replica = replicas[record.id]
                spec_seed = DatasetService.derive_seed(seed, record.id, replica)
                rng = np.random.default_rng(spec_seed)
                entries.append(AugmentationSpec(
                    id=record.id,
                    replica=replica,
                    rotation_deg=quantize(rng.uniform(-rotation_deg, rotation_deg)),
                    zoom=quantize(rng.uniform(zoom_lo, zoom_hi)),
                    deltas=tuple(int(v) for v in rng.integers(-channel_shift, channel_shift, size=3, endpoint=True)),
                    crop_index=int(rng.integers(0, 5)),
                    seed=spec_seed,
                ))
            if extra:
                logger.debug(f"age bin {age}: {len(members)} -> {target} (+{extra})")

        logger.info(f"Augmentation plan: {len(entries)} replicas over {len(bins)} age bins (cap={cap}, seed={seed})")
        return AugmentationPlan(entries=tuple(entries))

    @staticmethod
    def write_plan(plan: AugmentationPlan, path: PathLike) -> Path:
        """写出 id,replica,rotation_deg,zoom,dr,dg,db,crop_index,seed"""
        rows = [
            {
                "id": s.id,
                "replica": s.replica,
                "rotation_deg": float(s.rotation_deg),
                "zoom": float(s.zoom),
                "dr": s.deltas[0],
                "dg": s.deltas[1],
                "db": s.deltas[2],
                "crop_index": s.crop_index,
                "seed": s.seed,
            }
            for s in plan.entries
        ]
        return write_table(rows, PLAN_COLUMNS, path)

    @staticmethod
    def read_plan(path: PathLike) -> AugmentationPlan:
        """读取 write_plan 写出的增强计划"""
        frame = read_table(path, PLAN_COLUMNS, exact=True)
        entries = []
        for line, row in zip(frame.index.tolist(), frame.to_dict("records")):
            try:
                entries.append(AugmentationSpec(
                    id=row["id"],
                    replica=int(row["replica"]),
                    rotation_deg=parse_float(row["rotation_deg"], "rotation_deg", line),
                    zoom=parse_float(row["zoom"], "zoom", line),
                    deltas=(int(row["dr"]), int(row["dg"]), int(row["db"])),
                    crop_index=int(row["crop_index"]),
                    seed=int(row["seed"]),
                ))
            except (ValueError, ValidationError) as e:
                raise SchemaError(f"invalid plan record: {e}", row=line) from e
        return AugmentationPlan(entries=tuple(entries))

    @staticmethod
    def replicate_labels(d: Dataset, plan: AugmentationPlan) -> Dataset:
        """增强副本原样继承源图的 μ 与 σ，ID 记为 <id>_r<replica>"""
        source = d.by_id()
        records = list(d.records)
        for spec in plan.entries:
            if spec.id not in source:
                raise SchemaError(f"plan references unknown id {spec.id!r}")
            parent = source[spec.id]
            records.append(AnnotatedFace(id=spec.replica_id, mu=parent.mu, sigma=parent.sigma))
        return Dataset(split=d.split, records=tuple(records))

    # ========== 标签 ==========

    @staticmethod
    def multilabel_targets(mu: float, sigma: float) -> Set[int]:
        """
        落在 [μ−σ, μ+σ] 内的整数年龄（截断到 [0, 100]），并总是包含 round(μ)

        Raises:
            InvalidArgumentError: σ 为负或非有限
        """
        if not math.isfinite(sigma) or sigma < 0:
            raise InvalidArgumentError(f"sigma must be a finite value >= 0, got {sigma!r}")
        if not math.isfinite(mu):
            raise InvalidArgumentError(f"mu must be finite, got {mu!r}")
        lo = max(MIN_AGE, math.ceil(mu - sigma))
        hi = min(MAX_AGE, math.floor(mu + sigma))
        targets = set(range(lo, hi + 1))
        targets.add(min(max(round_age(mu), MIN_AGE), MAX_AGE))
        return targets

    @staticmethod
    def group_labels(d: Dataset, scheme: GroupingScheme) -> List[Tuple[str, int]]:
        """按分组方案编码每条记录的 μ"""
        return [(r.id, AgeCoreService.encode_age(r.mu, scheme)) for r in d.records]
