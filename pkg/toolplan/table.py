"""Column-kind classification and CSV I/O for `Table` artifacts (pandas DataFrames)."""

from __future__ import annotations

import enum
import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd
from pandas.api import types as ptypes

logger = logging.getLogger(__name__)

TRACKING_COLUMN = "__is_train__"


class ColumnKind(enum.Enum):
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    CATEGORY = "category"
    TEXT = "text"
    DATETIME = "datetime"

    @property
    def numeric(self) -> bool:
        return self in {ColumnKind.INT, ColumnKind.FLOAT}


class UnknownColumn(KeyError):
    def __init__(self, column: str, available: list[str]):
        self.column = column
        self.available = available
        super().__init__(column)

    def __str__(self) -> str:
        return f"Column {self.column!r} not found. Available columns: {self.available}"


class CsvParseError(ValueError):
    def __init__(self, path: str | Path, row: int | None, col: int | None, detail: str):
        self.path = str(path)
        self.row = row
        self.col = col
        super().__init__(f"Could not parse {self.path} (row {row}, column {col}): {detail}")


class ToolkitIoError(OSError):
    """File-system failure while reading or writing an artifact."""


def column_kind(series: pd.Series) -> ColumnKind:
    dtype = series.dtype
    if ptypes.is_bool_dtype(dtype):
        return ColumnKind.BOOL
    if ptypes.is_integer_dtype(dtype):
        return ColumnKind.INT
    if ptypes.is_float_dtype(dtype):
        return ColumnKind.FLOAT
    if isinstance(dtype, pd.CategoricalDtype):
        return ColumnKind.CATEGORY
    if ptypes.is_datetime64_any_dtype(dtype):
        return ColumnKind.DATETIME
    return ColumnKind.TEXT


def missing_column(dtype: object, n_rows: int) -> pd.Series:
    """An all-missing column whose dtype is the nullable counterpart of `dtype`."""
    if isinstance(dtype, pd.CategoricalDtype) or ptypes.is_datetime64_any_dtype(dtype):
        return pd.Series([pd.NA] * n_rows, dtype=object).astype(dtype)
    if ptypes.is_bool_dtype(dtype):
        target: object = "boolean"
    elif ptypes.is_integer_dtype(dtype):
        target = "Int64"
    elif ptypes.is_float_dtype(dtype):
        target = "Float64"
    else:
        target = "string"
    return pd.Series(pd.array([pd.NA] * n_rows, dtype=target))


def kinds(df: pd.DataFrame) -> dict[str, ColumnKind]:
    return {str(name): column_kind(df[name]) for name in df.columns}


def require_columns(df: pd.DataFrame, columns: list[str]) -> None:
    for column in columns:
        if column not in df.columns:
            raise UnknownColumn(column, [str(c) for c in df.columns])


def as_list(columns: str | list[str] | None) -> list[str] | None:
    if columns is None:
        return None
    if isinstance(columns, str):
        return [columns]
    return list(columns)


def numeric_values(series: pd.Series) -> np.ndarray:
    """Float view of an int/float/bool column with NaN for missing cells."""
    return series.astype("Float64").to_numpy(dtype="float64", na_value=np.nan)


def read_csv(filepath: str | Path) -> pd.DataFrame:
    """Read a CSV with a header row into nullable dtypes (int ⊂ float ⊂ text, True/False → bool)."""
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"[Errno 2] No such file or directory: '{filepath}'")
    try:
        df = pd.read_csv(path, dtype_backend="numpy_nullable", keep_default_na=False, na_values=[""])
    except pd.errors.EmptyDataError as cause:
        raise CsvParseError(path, 0, None, "no header row") from cause
    except pd.errors.ParserError as cause:
        row, col = _parser_error_location(str(cause))
        raise CsvParseError(path, row, col, str(cause)) from cause
    for name in df.columns:
        if df[name].dtype == object:
            df[name] = df[name].astype("string")
    logger.debug("Read %s: %d rows x %d columns", path, len(df), len(df.columns))
    return df


def _parser_error_location(message: str) -> tuple[int | None, int | None]:
    # pandas: "Error tokenizing data. C error: Expected 2 fields in line 3, saw 3"
    match = re.search(r"Expected (\d+) fields in line (\d+), saw (\d+)", message)
    if match is None:
        return None, None
    return int(match.group(2)), int(match.group(3))


def write_csv(df: pd.DataFrame, filepath: str | Path) -> Path:
    """Write with a header row and minimal RFC-4180 quoting; bool cells become True/False."""
    path = Path(filepath)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, lineterminator="\n")
    except OSError as cause:
        raise ToolkitIoError(f"Could not write {path}: {cause}") from cause
    return path


def missing_cells(df: pd.DataFrame) -> int:
    return int(df.isna().sum().sum())
