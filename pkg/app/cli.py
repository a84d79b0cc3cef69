"""
命令行入口
python -m app.cli <command> ...

退出码：0 成功，2 用法错误，3 文件读写错误，4 格式 / 校验错误
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import AgeEnsembleError, DataIOError, SchemaError, UsageError
from app.core.logging_config import configure_logging
from app.schemas.age import NUM_GROUPS
from app.schemas.dataset import Dataset, Split
from app.schemas.model import TrainConfig
from app.services.dataset_service import DatasetService
from app.services.evaluation_service import EvaluationService
from app.services.pipeline_service import PipelineService
from app.services.table_io import format_number
from app.services.toymodel_service import ToyModelService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 4


# ========== 辅助函数 ==========

def _load_dataset(path: Path) -> Dataset:
    """数据集文件可以是 ingest 产出的 JSON，也可以直接是标签 CSV"""
    if path.suffix.lower() == ".csv":
        return DatasetService.ingest(path, Split.TRAIN)
    return DatasetService.load_dataset(path)


def _load_config(path: Optional[Path]) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataIOError(f"config file not found: {path}") from e
    except OSError as e:
        raise DataIOError(f"cannot read config {path}: {e}") from e
    try:
        return TrainConfig.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}") from e


def _seed(value: Optional[int], fallback: int = 0) -> int:
    seed = settings.resolve_seed(fallback if value is None else value)
    if seed < 0:
        raise UsageError(f"seed must be >= 0, got {seed}")
    return seed


# ========== 子命令 ==========

def cmd_ingest(args: argparse.Namespace) -> int:
    dataset = DatasetService.ingest(args.labels, args.split)
    out = args.out or args.labels.with_name(f"{args.labels.stem}.dataset.json")
    DatasetService.save_dataset(dataset, out)
    print(f"records={len(dataset)} split={dataset.split.value} out={out}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    report = DatasetService.stats(_load_dataset(args.dataset))
    out = args.out or args.dataset.with_name(f"{args.dataset.stem}_stats.csv")
    DatasetService.write_stats(report, out)
    print(
        f"count={report.count} mean_sigma={format_number(report.mean_sigma)} "
        f"low_sigma={report.low_sigma_count} low_sigma_over_40={report.low_sigma_over_40_count}"
    )
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    plan = PipelineService.augment_directory(
        dataset,
        args.images,
        _seed(args.seed),
        args.cap,
        args.out,
        with_originals=args.with_originals,
        workers=args.workers,
    )
    print(f"replicas={len(plan)} out={args.out}")
    return EXIT_OK


def cmd_align(args: argparse.Namespace) -> int:
    written = PipelineService.align_directory(args.images, args.landmarks, args.out, workers=args.workers)
    print(f"aligned={len(written)} out={args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    cfg = cfg.model_copy(update={"seed": _seed(args.seed, cfg.seed)})
    dataset = _load_dataset(args.dataset)
    ids, X = ToyModelService.load_features(args.features)

    row_of = {face_id: i for i, face_id in enumerate(ids)}
    missing = [r.id for r in dataset.records if r.id not in row_of]
    if missing:
        raise SchemaError(f"{len(missing)} labelled records have no features (first: {missing[0]!r})")
    rows = [row_of[r.id] for r in dataset.records]
    ages = [r.mu for r in dataset.records]

    models = ToyModelService.train_ensemble(X[rows], ages, cfg, workers=settings.WORKERS)
    paths = ToyModelService.save_ensemble(models, args.out)
    print(f"trained={len(paths)} n={len(rows)} d={X.shape[1]} out={args.out}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    k = settings.DEFAULT_TOP_K if args.k is None else args.k
    predictions = EvaluationService.predict(args.models, args.features, k)
    EvaluationService.write_predictions(predictions, args.out)
    print(f"predictions={len(predictions)} k={k} out={args.out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = EvaluationService.read_predictions(args.predictions)
    labels = EvaluationService.load_labels(args.labels)
    report = EvaluationService.evaluate(predictions, labels)
    EvaluationService.write_report(report, args.out)
    print(f"mean_epsilon={format_number(report.mean_epsilon)} count={report.count}")
    return EXIT_OK


def cmd_confusion(args: argparse.Namespace) -> int:
    predictions = EvaluationService.read_predictions(args.predictions)
    labels = EvaluationService.load_labels(args.labels)
    matrix = EvaluationService.confusion(predictions, labels, args.shift)
    EvaluationService.write_confusion(matrix, args.out)
    print(f"total={matrix.total} trace={matrix.trace} out={args.out}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    seed = _seed(args.seed)
    if args.separable:
        data = ToyModelService.make_separable(args.n, seed)
    else:
        data = ToyModelService.make_synthetic(args.n, args.d, seed, noise=args.noise)
    dataset = Dataset(
        split=Split.TRAIN,
        records=tuple(
            {"id": face_id, "mu": float(mu), "sigma": float(sigma)}
            for face_id, mu, sigma in zip(data.ids, data.mu, data.sigma)
        ),
    )
    DatasetService.emit(dataset, args.out / "labels.csv")
    ToyModelService.write_features(data.ids, data.features, args.out / "features.csv")
    print(f"n={len(data)} d={data.features.shape[1]} out={args.out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run(
        "app.main:app",
        host=args.host or settings.HOST,
        port=args.port or settings.PORT,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower(),
    )
    return EXIT_OK


# ========== 参数解析 ==========

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="age-ensemble", description="表观年龄估计流水线")
    parser.add_argument("--log-level", default=None, help="覆盖 LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="校验标签 CSV 并写出数据集文件")
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--split", choices=["train", "val", "validation", "test"], required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="按年龄统计样本数与 σ 均值")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", help="自适应增强：写出计划与副本图像")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cap", type=int, default=settings.AUGMENT_CAP)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--with-originals", action="store_true", help="同时写出原图的五个裁剪")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("align", help="五点对齐到 256×256")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--landmarks", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="训练三个平移分组模型")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None, help="覆盖配置文件中的 seed")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="集成预测")
    p.add_argument("--models", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--k", type=int, choices=range(1, NUM_GROUPS + 1), default=None, metavar="{1..34}")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="ε-error 评估")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("confusion", help="分组混淆矩阵")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--shift", type=int, choices=[0, 1, 2], required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_confusion)

    p = sub.add_parser("synth", help="生成合成基准数据")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--separable", action="store_true", help="特征为年龄的 one-hot 编码")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="启动 HTTP 服务")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        进程退出码
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level)
    try:
        return args.func(args)
    except AgeEnsembleError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        print(f"error: {location}: {first['msg']}" if location else f"error: {first['msg']}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
