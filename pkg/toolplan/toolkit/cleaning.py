"""Missing-value tools."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Annotated, Any, Literal

import pandas as pd

from toolplan import expr, table
from toolplan.scratchpad import ObjectKind
from toolplan.table import ColumnKind
from toolplan.toolkit.base import TABLE, NonNumericForMean, tool

logger = logging.getLogger(__name__)

AggFunc = Literal["mean", "median", "mode", "min", "max"]


def fill_missing(df: pd.DataFrame, column: str, value: Any, mask: pd.Series | None = None) -> None:
    """Fill missing cells of `column` in place, restricted to `mask` when given."""
    series = df[column]
    missing = series.isna()
    if mask is not None:
        missing &= mask
    if not missing.any():
        return
    kind = table.column_kind(series)
    if kind is ColumnKind.INT and isinstance(value, float) and not value.is_integer():
        series = series.astype("Float64")
    elif kind is ColumnKind.TEXT:
        value = str(value)
    elif kind is ColumnKind.CATEGORY and value not in series.cat.categories:
        series = series.cat.add_categories([value])
    series = series.copy()
    series[missing] = value
    df[column] = series


def _numeric_targets(df: pd.DataFrame, columns: str | list[str] | None, strategy: str) -> list[str]:
    requested = table.as_list(columns)
    if requested is None:
        return [
            name
            for name, kind in table.kinds(df).items()
            if kind.numeric and df[name].isna().any() and df[name].notna().any()
        ]
    table.require_columns(df, requested)
    for name in requested:
        if not table.column_kind(df[name]).numeric:
            raise NonNumericForMean(name, strategy, str(df[name].dtype))
        if not df[name].notna().any():
            raise ValueError(f"Column {name!r} has no observed values to take the {strategy} of")
    return requested


def mode_of(series: pd.Series) -> Any:
    """Most frequent observed value; ties go to the value seen first."""
    observed = series.dropna().tolist()
    if not observed:
        raise ValueError(f"Column {series.name!r} has no observed values to take the mode of")
    return Counter(observed).most_common(1)[0][0]


def aggregate(series: pd.Series, agg_func: str) -> Any:
    observed = series.dropna()
    if observed.empty:
        return None
    match agg_func:
        case "mean":
            return float(observed.astype("float64").mean())
        case "median":
            return float(observed.astype("float64").median())
        case "mode":
            return mode_of(series)
        case "min":
            return observed.min()
        case "max":
            return observed.max()
    raise ValueError(f"Unknown agg_func {agg_func!r}; expected one of mean, median, mode, min, max")


@tool(output=ObjectKind.TABLE)
def fillna_with_value(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str], value: Any) -> pd.DataFrame:
    """
    Fill missing values with a specific value.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str]
        Column(s) to fill
    value : Any
        Value used to fill the missing cells

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled
    """
    targets = table.as_list(columns) or []
    table.require_columns(df, targets)
    out = df.copy()
    for column in targets:
        fill_missing(out, column, value)
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_mean(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None) -> pd.DataFrame:
    """
    Fill missing values with mean of the column.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to fill. If None, fills all numeric columns.

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled
    """
    out = df.copy()
    for column in _numeric_targets(df, columns, "mean"):
        fill_missing(out, column, aggregate(df[column], "mean"))
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_median(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None) -> pd.DataFrame:
    """
    Fill missing values with median of the column.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to fill. If None, fills all numeric columns.

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled
    """
    out = df.copy()
    for column in _numeric_targets(df, columns, "median"):
        fill_missing(out, column, aggregate(df[column], "median"))
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_mode(df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None) -> pd.DataFrame:
    """
    Fill missing values with mode of the column.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Column(s) to fill. If None, fills every column that has missing values.

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled
    """
    requested = table.as_list(columns)
    if requested is None:
        requested = [str(c) for c in df.columns if df[c].isna().any() and df[c].notna().any()]
    table.require_columns(df, requested)
    out = df.copy()
    for column in requested:
        fill_missing(out, column, mode_of(df[column]))
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_condition(
    df: Annotated[pd.DataFrame, TABLE], target_column: str, condition: str, fill_value: Any
) -> pd.DataFrame:
    """
    Fill missing values in a column based on a condition.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    target_column : str
        Column whose missing values are filled
    condition : str
        Boolean condition expression selecting the rows to fill (e.g., 'Age > 30')
    fill_value : Any
        Value to use where the condition holds

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled where the condition holds
    """
    table.require_columns(df, [target_column])
    mask = expr.eval_mask(expr.parse(condition), df)
    out = df.copy()
    fill_missing(out, target_column, fill_value, mask)
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_multiple_conditions(
    df: Annotated[pd.DataFrame, TABLE],
    target_column: str,
    conditions_and_values: list[list[Any]] | dict[str, Any],
) -> pd.DataFrame:
    """
    Fill missing values in a column based on multiple conditions.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    target_column : str
        Column whose missing values are filled
    conditions_and_values : List[[str, Any]] or Dict[str, Any]
        Ordered (condition, value) pairs; the first condition that holds for a row decides its value

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled
    """
    table.require_columns(df, [target_column])
    pairs = list(conditions_and_values.items()) if isinstance(conditions_and_values, dict) else conditions_and_values
    out = df.copy()
    for pair in pairs:
        if len(pair) != 2:
            raise ValueError(f"Expected a [condition, value] pair, got {pair!r}")
        condition, value = pair
        fill_missing(out, target_column, value, expr.eval_mask(expr.parse(str(condition)), df))
    return out


@tool(output=ObjectKind.TABLE)
def fillna_with_conditional_aggregation(
    df: Annotated[pd.DataFrame, TABLE],
    target_column: str,
    condition_column: str,
    condition_values: list[Any],
    agg_func: AggFunc = "mean",
) -> pd.DataFrame:
    """
    Fill missing values using conditional aggregation based on another column's values.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    target_column : str
        Column whose missing values are filled
    condition_column : str
        Column used to group the rows
    condition_values : List[Any]
        Values of condition_column; each group is filled with its own aggregate
    agg_func : str, default='mean'
        One of 'mean', 'median', 'mode', 'min', 'max'

    Returns:
    --------
    pd.DataFrame
        DataFrame with missing values filled per group
    """
    table.require_columns(df, [target_column, condition_column])
    if agg_func in {"mean", "median"} and not table.column_kind(df[target_column]).numeric:
        raise NonNumericForMean(target_column, agg_func, str(df[target_column].dtype))
    out = df.copy()
    for value in condition_values:
        group = (df[condition_column] == value).fillna(False).astype(bool)
        fill = aggregate(df.loc[group, target_column], agg_func)
        if fill is not None:
            fill_missing(out, target_column, fill, group)
    return out


@tool(output=ObjectKind.TABLE)
def drop_rows_with_missing(
    df: Annotated[pd.DataFrame, TABLE], columns: str | list[str] | None = None, threshold: int | None = None
) -> pd.DataFrame:
    """
    Drop rows with missing values.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    columns : str or List[str], optional
        Only consider missing values in these columns
    threshold : int, optional
        Keep rows with at least this many non-missing values

    Returns:
    --------
    pd.DataFrame
        DataFrame without the dropped rows
    """
    subset = table.as_list(columns)
    if subset is not None:
        table.require_columns(df, subset)
    if threshold is None:
        out = df.dropna(subset=subset)
    else:
        out = df.dropna(subset=subset, thresh=threshold)
    logger.debug("Dropped %d of %d rows", len(df) - len(out), len(df))
    return out.reset_index(drop=True)


@tool()
def get_missing_summary(df: Annotated[pd.DataFrame, TABLE]) -> pd.DataFrame:
    """
    Get a summary of missing values in the DataFrame.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame

    Returns:
    --------
    pd.DataFrame
        One row per column with the missing count and the missing fraction
    """
    counts = df.isna().sum()
    n_rows = len(df)
    return pd.DataFrame(
        {
            "column": [str(c) for c in df.columns],
            "missing_count": [int(counts[c]) for c in df.columns],
            "missing_fraction": [int(counts[c]) / n_rows if n_rows else 0.0 for c in df.columns],
        }
    )
