"""
图像流水线服务
目录级的人脸对齐与数据增强，逐图处理可并行，输出顺序由输入顺序决定
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar, Union

from app.core.config import settings
from app.core.exceptions import DataIOError
from app.schemas.dataset import AugmentationPlan, AugmentationSpec, Dataset
from app.schemas.raster import RasterImage
from app.services.dataset_service import DatasetService
from app.services.raster_service import RasterService

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
T = TypeVar("T")
R = TypeVar("R")

IMAGE_EXTENSIONS = (".png", ".ppm", ".jpg", ".jpeg")
PLAN_FILE = "plan.csv"
AUGMENTED_LABELS_FILE = "labels_augmented.csv"


class PipelineService:
    """图像流水线服务类"""

    @staticmethod
    def find_image(images_dir: PathLike, face_id: str) -> Path:
        """
        在目录中查找 <id>.png / .ppm / .jpg

        Raises:
            DataIOError: 找不到对应图像
        """
        images_dir = Path(images_dir)
        for ext in IMAGE_EXTENSIONS:
            candidate = images_dir / f"{face_id}{ext}"
            if candidate.is_file():
                return candidate
        raise DataIOError(f"no image for id {face_id!r} in {images_dir}")

    @staticmethod
    def _map(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int]) -> List[R]:
        workers = settings.WORKERS if workers is None else workers
        if workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map 保持输入顺序
            return list(pool.map(fn, items))

    @staticmethod
    def _load_frame(path: Path) -> RasterImage:
        """读入图像并缩放到增强所用的 ALIGN_SIZE 方图"""
        img = RasterService.load_image(path)
        size = settings.ALIGN_SIZE
        if img.width != size or img.height != size:
            logger.debug(f"{path.name}: resizing {img.width}x{img.height} -> {size}x{size}")
            img = RasterService.resize(img, size, size)
        return img

    # ========== 对齐 ==========

    @staticmethod
    def align_directory(
        images_dir: PathLike, landmarks_file: PathLike, out_dir: PathLike, workers: Optional[int] = None
    ) -> List[Path]:
        """
        按关键点文件对齐目录下的图像，输出 <out>/<id>.png

        Returns:
            写出的文件（与关键点文件顺序一致）
        """
        landmarks = RasterService.load_landmarks(landmarks_file)
        out_dir = Path(out_dir)
        jobs = [(face_id, PipelineService.find_image(images_dir, face_id), lm) for face_id, lm in landmarks.items()]

        def run(job) -> Path:
            face_id, source, lm = job
            aligned = RasterService.align_face(RasterService.load_image(source), lm)
            return RasterService.save_image(aligned, out_dir / f"{face_id}.png")

        written = PipelineService._map(run, jobs, workers)
        logger.info(f"Aligned {len(written)} faces into {out_dir}")
        return written

    # ========== 增强 ==========

    @staticmethod
    def render_replica(frame: RasterImage, spec: AugmentationSpec) -> RasterImage:
        """旋转 → 缩放 → 通道偏移 → 取第 crop_index 个裁剪"""
        img = RasterService.rotate(frame, spec.rotation_deg)
        img = RasterService.zoom(img, spec.zoom)
        img = RasterService.channel_shift(img, spec.deltas)
        return RasterService.five_crop(img)[spec.crop_index]

    @staticmethod
    def augment_directory(
        d: Dataset,
        images_dir: PathLike,
        seed: int,
        cap: int,
        out_dir: PathLike,
        with_originals: bool = False,
        workers: Optional[int] = None,
    ) -> AugmentationPlan:
        """
        生成增强计划并渲染副本

        输出：plan.csv、labels_augmented.csv、每个副本 <id>_r<replica>.png；
        with_originals 时另写出原图五个裁剪 <id>_c<k>.png

        Returns:
            增强计划
        """
        out_dir = Path(out_dir)
        plan = DatasetService.plan_augmentation(d, seed, cap)
        grouped = plan.by_id()
        ids: Iterable[str] = [r.id for r in d.records if with_originals or r.id in grouped]
        sources = {face_id: PipelineService.find_image(images_dir, face_id) for face_id in ids}

        def run(face_id: str) -> int:
            frame = PipelineService._load_frame(sources[face_id])
            count = 0
            if with_originals:
                for index, crop in enumerate(RasterService.five_crop(frame)):
                    RasterService.save_image(crop, out_dir / f"{face_id}_c{index}.png")
                    count += 1
            for spec in grouped.get(face_id, []):
                replica = PipelineService.render_replica(frame, spec)
                RasterService.save_image(replica, out_dir / f"{spec.replica_id}.png")
                count += 1
            return count

        counts = PipelineService._map(run, list(sources), workers)
        DatasetService.write_plan(plan, out_dir / PLAN_FILE)
        DatasetService.emit(DatasetService.replicate_labels(d, plan), out_dir / AUGMENTED_LABELS_FILE)
        logger.info(f"Augment: wrote {sum(counts)} images and {len(plan)} plan records into {out_dir}")
        return plan
