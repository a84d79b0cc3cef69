"""
CSV 表格读写工具
统一的缺失文件 / 缺列诊断与 12 位有效数字输出格式
"""
import logging
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence, Union

import pandas as pd

from app.core.exceptions import DataIOError, SchemaError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# 表头占第 1 行，数据从第 2 行开始
FIRST_DATA_ROW = 2


def format_number(value: float) -> str:
    """固定 12 位有效数字的十进制格式"""
    return f"{float(value):.12g}"


def quantize(value: float) -> float:
    """将浮点数截到 12 位有效数字，使写出再读回保持不变"""
    return float(format_number(value))


def read_table(path: PathLike, required: Sequence[str], exact: bool = False) -> pd.DataFrame:
    """
    读取 CSV 为字符串 DataFrame

    Args:
        path: 文件路径
        required: 必需的列名
        exact: 为 True 时列名必须与 required 完全一致（含顺序）

    Raises:
        DataIOError: 文件不存在或不可读
        SchemaError: 表头不符或文件损坏
    """
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"file not found: {path}")
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True, skip_blank_lines=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path} is empty; expected header {','.join(required)}") from e
    except pd.errors.ParserError as e:
        raise SchemaError(f"malformed CSV {path}: {e}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise DataIOError(f"cannot read {path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    columns: List[str] = list(frame.columns)
    if exact and columns != list(required):
        raise SchemaError(f"{path}: expected header {','.join(required)}, got {','.join(columns)}", row=1)
    missing = [c for c in required if c not in columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}", row=1)
    return drop_blank_rows(frame, FIRST_DATA_ROW)


def drop_blank_rows(frame: pd.DataFrame, first_line: int) -> pd.DataFrame:
    """
    以文件行号作为索引并去掉空行，调用方用 frame.index 报告行号

    Args:
        frame: read_csv(skip_blank_lines=False) 的结果
        first_line: 第一条数据在文件中的行号
    """
    frame = frame.fillna("")
    frame.index = pd.RangeIndex(first_line, first_line + len(frame))
    if frame.empty:
        return frame
    blank = frame.apply(lambda col: col.astype(str).str.strip() == "").all(axis=1)
    if blank.any():
        logger.debug(f"Skipping {int(blank.sum())} blank line(s)")
    return frame[~blank.to_numpy(dtype=bool)]


def parse_float(value: str, column: str, row: int) -> float:
    """解析单元格为浮点数，失败时带行号报错"""
    try:
        return float(str(value).strip())
    except ValueError as e:
        raise SchemaError(f"column {column!r}: cannot parse {value!r} as a number", row=row) from e


def write_table(rows: Iterable[Mapping[str, object]], columns: Sequence[str], path: PathLike) -> Path:
    """
    写出 CSV；浮点数按 12 位有效数字格式化，换行符固定为 \\n

    Returns:
        写出的文件路径
    """
    path = Path(path)
    formatted = [
        {c: format_number(row[c]) if isinstance(row[c], float) else row[c] for c in columns}
        for row in rows
    ]
    frame = pd.DataFrame(formatted, columns=list(columns))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(formatted)} rows to {path}")
    return path
