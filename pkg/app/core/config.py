"""
配置管理模块
使用 Pydantic Settings 进行配置管理，支持环境变量和 .env 文件
"""
from pathlib import Path
from typing import Optional
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """应用配置类"""

    # ========== 应用基础配置 ==========
    APP_NAME: str = Field(default="Age Ensemble", description="应用名称")
    APP_VERSION: str = Field(default="1.0.0", description="应用版本")
    DEBUG: bool = Field(default=False, description="调试模式")
    API_PREFIX: str = Field(default="/api/v1", description="API 路径前缀")

    # ========== 服务器配置 ==========
    HOST: str = Field(default="127.0.0.1", description="服务器地址")
    PORT: int = Field(default=8000, description="服务器端口")

    # ========== 日志配置 ==========
    LOG_LEVEL: str = Field(default="INFO", description="日志级别")
    LOG_FILE: Optional[str] = Field(default=None, description="日志文件路径")

    # ========== 随机种子 ==========
    # 存在时覆盖命令行 --seed
    AGE_ENSEMBLE_SEED: Optional[int] = Field(default=None, description="全局随机种子覆盖")

    # ========== 解码 / 推理配置 ==========
    DEFAULT_TOP_K: int = Field(default=5, ge=1, le=34, description="top-k 解码的默认 k")
    MODELS_DIR: Path = Field(default=Path("models"), description="HTTP 服务加载的模型目录")

    # ========== 图像配置 ==========
    ALIGN_SIZE: int = Field(default=256, gt=0, description="对齐后人脸边长（像素）")
    CROP_SIZE: int = Field(default=224, gt=0, description="五点裁剪边长（像素）")

    # ========== 数据增强配置 ==========
    AUGMENT_ROTATION_DEG: float = Field(default=10.0, ge=0, le=45, description="随机旋转幅度（度）")
    AUGMENT_ZOOM_MIN: float = Field(default=0.9, gt=0, description="随机缩放下限")
    AUGMENT_ZOOM_MAX: float = Field(default=1.1, gt=0, description="随机缩放上限")
    AUGMENT_CHANNEL_SHIFT: int = Field(default=10, ge=0, le=255, description="通道偏移幅度")
    AUGMENT_CAP: int = Field(default=8, ge=1, description="每张图片的最大复制倍数")

    # ========== 并发配置 ==========
    WORKERS: int = Field(default=4, ge=1, description="逐图处理的线程数")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        """日志级别统一大写"""
        if isinstance(v, str):
            return v.strip().upper()
        return v

    @model_validator(mode="after")
    def validate_ranges(self):
        """校验相互依赖的配置项"""
        if self.AUGMENT_ZOOM_MIN > self.AUGMENT_ZOOM_MAX:
            raise ValueError("AUGMENT_ZOOM_MIN 不能大于 AUGMENT_ZOOM_MAX")
        if self.CROP_SIZE > self.ALIGN_SIZE:
            raise ValueError("CROP_SIZE 不能大于 ALIGN_SIZE")
        return self

    def resolve_seed(self, seed: int) -> int:
        """环境变量中的种子优先于调用方传入的种子"""
        if self.AGE_ENSEMBLE_SEED is not None:
            return self.AGE_ENSEMBLE_SEED
        return seed


# 全局配置实例
settings = Settings()
