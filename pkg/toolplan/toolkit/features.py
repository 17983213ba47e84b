"""Feature-engineering and DataFrame inspection tools."""

from __future__ import annotations

import logging
from typing import Annotated, Any, Literal

import numpy as np
import pandas as pd

from toolplan import expr, table
from toolplan.scratchpad import ObjectKind
from toolplan.table import TRACKING_COLUMN, ColumnKind
from toolplan.toolkit.base import ANY_DATA, TABLE, FeatureTargetSplit, tool

logger = logging.getLogger(__name__)

GroupAggFunc = Literal["mean", "median", "sum", "min", "max", "count", "std", "nunique"]
NormalizeMethod = Literal["standard", "minmax"]

_CAST_TYPES = {
    "int": "Int64",
    "int64": "Int64",
    "integer": "Int64",
    "float": "Float64",
    "float64": "Float64",
    "bool": "boolean",
    "boolean": "boolean",
    "category": "category",
    "str": "string",
    "string": "string",
    "text": "string",
    "object": "string",
    "datetime": "datetime64[ns]",
}


def _infer(values: list[Any], index: pd.Index) -> pd.Series:
    return pd.Series(values, index=index, dtype=object).convert_dtypes(dtype_backend="numpy_nullable")


def _set_column(df: pd.DataFrame, name: str, values: pd.Series) -> pd.DataFrame:
    out = df.copy()
    out[name] = values
    return out


def _encodable(df: pd.DataFrame, columns: str | list[str] | None) -> list[str]:
    """Columns an encoder should touch: category/text by default, category/text/bool when listed."""
    requested = table.as_list(columns)
    if requested is None:
        return [
            name
            for name, kind in table.kinds(df).items()
            if kind in {ColumnKind.CATEGORY, ColumnKind.TEXT} and name != TRACKING_COLUMN
        ]
    table.require_columns(df, requested)
    return [
        name
        for name in requested
        if table.column_kind(df[name]) in {ColumnKind.CATEGORY, ColumnKind.TEXT, ColumnKind.BOOL}
    ]


def categories_of(series: pd.Series) -> list[str]:
    """Observed categories in lexicographic order of their string form."""
    return sorted({str(value) for value in series.dropna().tolist()})


def _as_strings(series: pd.Series) -> pd.Series:
    return pd.Series([None if pd.isna(v) else str(v) for v in series.tolist()], index=series.index, dtype="string")


def _numeric_columns(df: pd.DataFrame, columns: str | list[str] | None) -> list[str]:
    requested = table.as_list(columns)
    if requested is None:
        return [name for name, kind in table.kinds(df).items() if kind.numeric]
    table.require_columns(df, requested)
    return requested


@tool(output=ObjectKind.TABLE)
def create_numeric_feature(df: Annotated[pd.DataFrame, TABLE], name: str, expression: str) -> pd.DataFrame:
    """
    Create a numeric feature using an arithmetic expression over existing columns.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    name : str
        Name of the new feature
    expression : str
        Arithmetic expression (e.g., 'col1 + col2', 'col1 / (col2 + 1)')

    Returns:
    --------
    pd.DataFrame
        DataFrame with the new feature
    """
    return _set_column(df, name, expr.eval_numeric(expr.parse(expression), df))


@tool(output=ObjectKind.TABLE)
def create_categorical_feature(
    df: Annotated[pd.DataFrame, TABLE], name: str, source_column: str, mapping: dict[str, Any]
) -> pd.DataFrame:
    """
    Create a categorical feature by mapping values from a source column.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    name : str
        Name of the new feature
    source_column : str
        Column whose values are mapped
    mapping : Dict[str, Any]
        Mapping from source values (as strings) to new values; unmapped values become missing

    Returns:
    --------
    pd.DataFrame
        DataFrame with the new feature
    """
    table.require_columns(df, [source_column])
    keys = {str(key): value for key, value in mapping.items()}
    values = [None if pd.isna(v) else keys.get(str(v)) for v in df[source_column].tolist()]
    return _set_column(df, name, _infer(values, df.index))


@tool(output=ObjectKind.TABLE)
def create_conditional_feature(
    df: Annotated[pd.DataFrame, TABLE], name: str, condition: str, true_value: Any, false_value: Any
) -> pd.DataFrame:
    """
    Create a feature based on a condition.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    name : str
        Name of the new feature
    condition : str
        Boolean condition expression (e.g., 'Age > 30 and Fare < 100'); rows with missing operands take false_value
    true_value : Any
        Value where the condition holds
    false_value : Any
        Value elsewhere

    Returns:
    --------
    pd.DataFrame
        DataFrame with the new feature
    """
    mask = expr.eval_mask(expr.parse(condition), df)
    values = [true_value if hit else false_value for hit in mask.tolist()]
    return _set_column(df, name, _infer(values, df.index))


@tool(output=ObjectKind.TABLE)
def create_group_aggregation(
    df: Annotated[pd.DataFrame, TABLE], name: str, group_column: str, agg_column: str, agg_func: GroupAggFunc = "mean"
) -> pd.DataFrame:
    """
    Create feature by aggregating within groups.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    name : str
        Name of the new feature
    group_column : str
        Column to group by
    agg_column : str
        Column to aggregate
    agg_func : str, default='mean'
        One of 'mean', 'median', 'sum', 'min', 'max', 'count', 'std', 'nunique'

    Returns:
    --------
    pd.DataFrame
        DataFrame where every row carries its group's aggregate
    """
    table.require_columns(df, [group_column, agg_column])
    values = df.groupby(group_column, dropna=True, sort=True)[agg_column].transform(agg_func)
    return _set_column(df, name, values)


@tool()
def get_group_aggregation(
    df: Annotated[pd.DataFrame, TABLE], group_column: str, agg_column: str, agg_func: GroupAggFunc = "mean"
) -> pd.DataFrame:
    """
    Get aggregation result without adding it to the DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    group_column : str
        Column to group by
    agg_column : str
        Column to aggregate
    agg_func : str, default='mean'
        One of 'mean', 'median', 'sum', 'min', 'max', 'count', 'std', 'nunique'

    Returns:
    --------
    pd.DataFrame
        One row per group with the aggregate
    """
    table.require_columns(df, [group_column, agg_column])
    return df.groupby(group_column, dropna=True, sort=True)[agg_column].agg(agg_func).reset_index()


@tool(output=ObjectKind.TABLE)
def cast_columns(df: Annotated[pd.DataFrame, TABLE], column_type_mapping: dict[str, str]) -> pd.DataFrame:
    """
    Cast columns to specified data types.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    column_type_mapping : Dict[str, str]
        Mapping from column name to one of 'int', 'float', 'bool', 'category', 'str', 'datetime'

    Returns:
    --------
    pd.DataFrame
        DataFrame with the casted columns
    """
    table.require_columns(df, list(column_type_mapping))
    out = df.copy()
    for column, type_name in column_type_mapping.items():
        dtype = _CAST_TYPES.get(type_name.lower())
        if dtype is None:
            raise ValueError(f"Unknown type {type_name!r}; expected one of {sorted(set(_CAST_TYPES))}")
        series = out[column]
        if dtype in {"Int64", "Float64"} and table.column_kind(series) is ColumnKind.TEXT:
            series = pd.to_numeric(series)
        out[column] = series.astype(dtype)
    return out


@tool(output=ObjectKind.TABLE)
def cast_numeric_columns(
    df: Annotated[pd.DataFrame, TABLE],
    columns: str | list[str] | None = None,
    target_type: Literal["int", "float"] = "float",
) -> pd.DataFrame:
    """
    Cast numeric columns to specified type.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to cast. If None, casts all numeric columns.
    target_type : str, default='float'
        'int' or 'float'

    Returns:
    --------
    pd.DataFrame
        DataFrame with the casted columns
    """
    dtype = {"int": "Int64", "float": "Float64"}.get(target_type)
    if dtype is None:
        raise ValueError(f"target_type must be 'int' or 'float', got {target_type!r}")
    out = df.copy()
    for column in _numeric_columns(df, columns):
        series = out[column]
        if table.column_kind(series) is ColumnKind.TEXT:
            series = pd.to_numeric(series)
        out[column] = series.astype(dtype)
    return out


@tool(output=ObjectKind.TABLE)
def cast_integer_columns_to_float(
    df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None
) -> pd.DataFrame:
    """
    Cast integer columns to float type.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to cast. If None, casts all integer columns.

    Returns:
    --------
    pd.DataFrame
        DataFrame with the casted columns
    """
    requested = table.as_list(columns)
    if requested is None:
        requested = [name for name, kind in table.kinds(df).items() if kind is ColumnKind.INT]
    table.require_columns(df, requested)
    out = df.copy()
    for column in requested:
        out[column] = out[column].astype("Float64")
    return out


@tool(output=ObjectKind.TABLE)
def cast_categorical_columns(
    df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None
) -> pd.DataFrame:
    """
    Cast categorical columns to category type.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to cast. If None, casts all text columns.

    Returns:
    --------
    pd.DataFrame
        DataFrame with the casted columns
    """
    requested = table.as_list(columns)
    if requested is None:
        requested = [
            name for name, kind in table.kinds(df).items() if kind is ColumnKind.TEXT and name != TRACKING_COLUMN
        ]
    table.require_columns(df, requested)
    out = df.copy()
    for column in requested:
        out[column] = out[column].astype("category")
    return out


@tool(output=ObjectKind.TABLE)
def one_hot_encode(
    df: Annotated[pd.DataFrame, TABLE],
    columns: str | list[str] | None = None,
    drop_first: bool = True,
    prefix: str | list[str] | None = None,
) -> pd.DataFrame:
    """
    One-hot encode categorical columns.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to encode. If None, encodes all object/category columns.
    drop_first : bool, default=True
        Whether to drop the first category of each column
    prefix : str or List[str], optional
        Prefix(es) for the new column names. Defaults to the source column names.

    Returns:
    --------
    pd.DataFrame
        DataFrame with one 0/1 column per category, named '<prefix>_<category>'
    """
    targets = _encodable(df, columns)
    prefixes = table.as_list(prefix) or targets
    if len(prefixes) != len(targets):
        raise ValueError(f"Got {len(prefixes)} prefixes for {len(targets)} columns to encode")
    dummies: dict[str, pd.Series] = {}
    for column, column_prefix in zip(targets, prefixes):
        as_str = _as_strings(df[column])
        categories = categories_of(df[column])
        for category in categories[1:] if drop_first else categories:
            name = f"{column_prefix}_{category}"
            if name in dummies or (name in df.columns and name not in targets):
                raise ValueError(f"One-hot column {name!r} already exists")
            dummies[name] = (as_str == category).fillna(False).astype("int64")
    if not targets:
        return df.copy()
    return pd.concat([df.drop(columns=targets), pd.DataFrame(dummies, index=df.index)], axis=1)


@tool(output=ObjectKind.TABLE)
def label_encode(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None) -> pd.DataFrame:
    """
    Label encode categorical columns.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to encode. If None, encodes all object/category columns.

    Returns:
    --------
    pd.DataFrame
        DataFrame with each category replaced by its rank in lexicographic order
    """
    out = df.copy()
    for column in _encodable(df, columns):
        ranks = {category: index for index, category in enumerate(categories_of(df[column]))}
        out[column] = _as_strings(df[column]).map(ranks).astype("Int64")
    return out


def _normalize(series: pd.Series, method: str) -> pd.Series:
    values = table.numeric_values(series)
    observed = values[~np.isnan(values)]
    result = np.full(len(values), np.nan)
    if observed.size:
        if method == "standard":
            center, scale = observed.mean(), observed.std(ddof=0)
        elif method == "minmax":
            center, scale = observed.min(), observed.max() - observed.min()
        else:
            raise ValueError(f"method must be 'standard' or 'minmax', got {method!r}")
        result = np.zeros(len(values)) if scale == 0 else (values - center) / scale
        result[np.isnan(values)] = np.nan
    return pd.Series(pd.array(result, dtype="Float64"), index=series.index)


@tool(output=ObjectKind.TABLE)
def normalize_features(
    df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None, method: NormalizeMethod = "standard"
) -> pd.DataFrame:
    """
    Normalize numeric features.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to normalize. If None, normalizes all numeric columns.
    method : str, default='standard'
        'standard' for (x - mean) / std or 'minmax' for (x - min) / (max - min); constant columns become 0

    Returns:
    --------
    pd.DataFrame
        DataFrame with normalized columns
    """
    targets = _numeric_columns(df, columns)
    for column in targets:
        if not table.column_kind(df[column]).numeric:
            raise TypeError(f"Cannot normalize non-numeric column {column!r} of dtype {df[column].dtype}")
    out = df.copy()
    for column in targets:
        out[column] = _normalize(df[column], method)
    return out


@tool(output=ObjectKind.TABLE)
def encode_all_categorical_columns(
    df: Annotated[pd.DataFrame, TABLE], method: Literal["one_hot", "label"] = "one_hot", drop_first: bool = True
) -> pd.DataFrame:
    """
    Encode all categorical/object columns using specified method.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    method : str, default='one_hot'
        'one_hot' or 'label'
    drop_first : bool, default=True
        For one-hot encoding, whether to drop the first category

    Returns:
    --------
    pd.DataFrame
        DataFrame with every category/text column encoded
    """
    if method == "one_hot":
        return one_hot_encode(df, None, drop_first)
    if method == "label":
        return label_encode(df, None)
    raise ValueError(f"method must be 'one_hot' or 'label', got {method!r}")


@tool(output=ObjectKind.TABLE)
def normalize_all_numerical_columns(
    df: Annotated[pd.DataFrame, TABLE], method: NormalizeMethod = "standard"
) -> pd.DataFrame:
    """
    Normalize all numerical columns using specified method.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    method : str, default='standard'
        'standard' or 'minmax'

    Returns:
    --------
    pd.DataFrame
        DataFrame with every int/float column normalized
    """
    return normalize_features(df, None, method)


@tool(output=ObjectKind.TABLE)
def drop_feature(df: Annotated[pd.DataFrame, TABLE], column: str | list[str]) -> pd.DataFrame:
    """
    Drop feature(s) from the DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    column : str or List[str]
        Name(s) of the column(s) to drop

    Returns:
    --------
    pd.DataFrame
        DataFrame without the dropped columns
    """
    targets = table.as_list(column) or []
    table.require_columns(df, targets)
    return df.drop(columns=targets)


@tool(output=ObjectKind.TABLE)
def get_features(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str]) -> pd.DataFrame:
    """
    Extract specific features (columns) from the DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str]
        Column(s) to keep, in the order given

    Returns:
    --------
    pd.DataFrame
        DataFrame with only the requested columns
    """
    targets = table.as_list(columns) or []
    table.require_columns(df, targets)
    return df[targets].copy()


@tool(output=ObjectKind.TABLE)
def rename_feature(
    df: Annotated[pd.DataFrame, TABLE], old_name: str | list[str], new_name: str | list[str]
) -> pd.DataFrame:
    """
    Rename feature(s).

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    old_name : str or List[str]
        Current column name(s)
    new_name : str or List[str]
        New column name(s), matched positionally with old_name

    Returns:
    --------
    pd.DataFrame
        DataFrame with renamed columns
    """
    old = table.as_list(old_name) or []
    new = table.as_list(new_name) or []
    if len(old) != len(new):
        raise ValueError(f"Got {len(old)} old names but {len(new)} new names")
    table.require_columns(df, old)
    renamed = df.rename(columns=dict(zip(old, new)))
    duplicated = renamed.columns[renamed.columns.duplicated()].tolist()
    if duplicated:
        raise ValueError(f"Renaming would create duplicate columns: {duplicated}")
    return renamed


@tool()
def get_unique_values(
    df: Annotated[pd.DataFrame, TABLE], column: str, sort: bool = True, include_counts: bool = True
) -> pd.DataFrame:
    """
    Get unique values from a column as a DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    column : str
        Column to inspect
    sort : bool, default=True
        Sort values lexicographically by their string form
    include_counts : bool, default=True
        Include a 'count' column

    Returns:
    --------
    pd.DataFrame
        One row per distinct observed value
    """
    table.require_columns(df, [column])
    counts: dict[Any, int] = {}
    for value in df[column].dropna().tolist():
        counts[value] = counts.get(value, 0) + 1
    values = sorted(counts, key=str) if sort else list(counts)
    result = pd.DataFrame({column: values})
    if include_counts:
        result["count"] = [counts[v] for v in values]
    return result


@tool()
def get_dataframe_dtypes_summary(df: Annotated[pd.DataFrame, TABLE]) -> pd.DataFrame:
    """
    Get comprehensive summary of the dtypes in the entire DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame

    Returns:
    --------
    pd.DataFrame
        One row per column with its dtype, kind, number of unique values and missing count
    """
    rows = [
        {
            "column": name,
            "dtype": str(df[name].dtype),
            "kind": kind.value,
            "n_unique": int(df[name].nunique(dropna=True)),
            "missing": int(df[name].isna().sum()),
        }
        for name, kind in table.kinds(df).items()
    ]
    return pd.DataFrame(rows, columns=["column", "dtype", "kind", "n_unique", "missing"])


@tool(output=ObjectKind.TABLE)
def filter_dataframe(df: Annotated[pd.DataFrame, TABLE], condition: str) -> pd.DataFrame:
    """
    Filter DataFrame using a boolean condition.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    condition : str
        Boolean condition expression (e.g., 'col1 > 0', 'col1 == "value"', 'col1 > 0 and col2 < 100', 'col1.notna()')

    Returns:
    --------
    pd.DataFrame
        Rows where the condition holds; rows with a missing operand are dropped
    """
    mask = expr.eval_mask(expr.parse(condition), df)
    return df[mask.to_numpy()].reset_index(drop=True)


@tool(output=ObjectKind.TABLE)
def concatenate_dataframes(
    df1: Annotated[pd.DataFrame, TABLE], df2: Annotated[pd.DataFrame, TABLE], axis: Literal[0, 1] = 0
) -> pd.DataFrame:
    """
    Concatenate two DataFrames.

    Parameters:
    -----------
    df1 : pd.DataFrame
        First DataFrame
    df2 : pd.DataFrame
        Second DataFrame
    axis : int, default=0
        0 stacks rows, 1 places the columns side by side (row counts must match)

    Returns:
    --------
    pd.DataFrame
        Concatenated DataFrame
    """
    if axis == 1:
        if len(df1) != len(df2):
            raise ValueError(f"Cannot concatenate columns of frames with {len(df1)} and {len(df2)} rows")
        overlap = [str(c) for c in df2.columns if c in df1.columns]
        if overlap:
            raise ValueError(f"Columns present in both frames: {overlap}")
        return pd.concat([df1.reset_index(drop=True), df2.reset_index(drop=True)], axis=1)
    if axis != 0:
        raise ValueError(f"axis must be 0 or 1, got {axis!r}")
    return pd.concat([df1, df2], axis=0, ignore_index=True)


@tool(output=ObjectKind.TABLE)
def convert_to_dataframe(data: Annotated[Any, ANY_DATA], column_name: str | None = None) -> pd.DataFrame:
    """
    Convert various data types to pandas DataFrame.

    Parameters:
    -----------
    data : Any
        A DataFrame, a column (e.g. a target vector), a features/target split or a report
    column_name : str, optional
        Column name to use when data is a single column

    Returns:
    --------
    pd.DataFrame
        The data as a DataFrame
    """
    if isinstance(data, FeatureTargetSplit):
        frame = data.X.copy()
        if data.y is not None:
            frame[data.target_column] = data.y.to_numpy()
        return frame
    if isinstance(data, pd.Series):
        return data.to_frame(name=column_name or data.name or "value").reset_index(drop=True)
    if isinstance(data, pd.DataFrame):
        return data.copy()
    if isinstance(data, dict):
        return pd.DataFrame([data])
    raise TypeError(f"Cannot convert {type(data).__name__} to a DataFrame")
