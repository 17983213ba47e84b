"""Tools that move between separate train/test frames, the combined frame and features/target splits."""

from __future__ import annotations

import logging
from typing import Annotated

import numpy as np
import pandas as pd

from toolplan import table
from toolplan.scratchpad import ObjectKind
from toolplan.table import TRACKING_COLUMN, ColumnKind
from toolplan.toolkit.base import (
    PAIR,
    TABLE,
    FeatureTargetSplit,
    IncompatibleSchemas,
    NamedOutput,
    TargetMissingValues,
    ToolOutput,
    TrackingColumnMissing,
    tool,
)

logger = logging.getLogger(__name__)


def _align(train: pd.Series, test: pd.Series, column: str) -> tuple[pd.Series, pd.Series]:
    left, right = table.column_kind(train), table.column_kind(test)
    if left is right and left is not ColumnKind.CATEGORY:
        return train, test
    if train.isna().all():
        return table.missing_column(test.dtype, len(train)), test
    if test.isna().all():
        return train, table.missing_column(train.dtype, len(test))
    if left.numeric and right.numeric:
        return train.astype("Float64"), test.astype("Float64")
    textual = {ColumnKind.CATEGORY, ColumnKind.TEXT}
    if left in textual and right in textual:
        return train.astype("string"), test.astype("string")
    raise IncompatibleSchemas(column, f"{train.dtype} ({left.value})", f"{test.dtype} ({right.value})")


@tool(output=ObjectKind.TRAIN_TEST_PAIR)
def concatenate_train_test(
    train_df: Annotated[pd.DataFrame, TABLE], test_df: Annotated[pd.DataFrame, TABLE]
) -> pd.DataFrame:
    """
    Concatenate train and test data with tracking columns for proper splitting.

    Parameters:
    -----------
    train_df : pd.DataFrame
        Training DataFrame
    test_df : pd.DataFrame
        Test DataFrame; columns it lacks (such as the target) are added as missing

    Returns:
    --------
    pd.DataFrame
        Combined DataFrame with a boolean '__is_train__' tracking column
    """
    for frame_name, frame in (("train", train_df), ("test", test_df)):
        if TRACKING_COLUMN in frame.columns:
            raise ValueError(f"The {frame_name} data already has a {TRACKING_COLUMN!r} column")
    extra = [str(c) for c in test_df.columns if c not in train_df.columns]
    if extra:
        raise IncompatibleSchemas(extra[0], "absent from train", str(test_df[extra[0]].dtype))

    train = train_df.reset_index(drop=True).copy()
    test = pd.DataFrame(index=pd.RangeIndex(len(test_df)))
    for column in train.columns:
        if column in test_df.columns:
            train[column], test[column] = _align(train[column], test_df[column].reset_index(drop=True), str(column))
        else:
            test[column] = table.missing_column(train[column].dtype, len(test))

    categorical = [c for c in train.columns if isinstance(train_df[c].dtype, pd.CategoricalDtype)]
    combined = pd.concat([train, test[train.columns]], axis=0, ignore_index=True)
    for column in categorical:
        combined[column] = combined[column].astype("category")
    combined[TRACKING_COLUMN] = np.arange(len(combined)) < len(train)
    logger.debug("Combined %d train and %d test rows", len(train), len(test))
    return combined


@tool()
def split_combined_into_train_test(combined: Annotated[pd.DataFrame, PAIR]) -> ToolOutput:
    """
    Split combined data back into train and test using tracking columns.

    Parameters:
    -----------
    combined : pd.DataFrame
        Combined DataFrame with tracking columns

    Returns:
    --------
    tuple
        (train_df, test_df), saved as 'train_df' and 'test_df' (or '<output>_train' and '<output>_test' when an
        output name is given)
    """
    if TRACKING_COLUMN not in combined.columns:
        raise TrackingColumnMissing(TRACKING_COLUMN)
    flags = combined[TRACKING_COLUMN]
    if flags.isna().any() or table.column_kind(flags) is not ColumnKind.BOOL:
        raise TrackingColumnMissing(TRACKING_COLUMN)
    is_train = flags.to_numpy(dtype=bool)
    train = combined[is_train].drop(columns=[TRACKING_COLUMN]).reset_index(drop=True)
    test = combined[~is_train].drop(columns=[TRACKING_COLUMN]).reset_index(drop=True)
    return ToolOutput(
        named=(
            NamedOutput("train_df", ObjectKind.TABLE, train, suffix="train"),
            NamedOutput("test_df", ObjectKind.TABLE, test, suffix="test"),
        ),
    )


@tool(output=ObjectKind.FEATURE_TARGET_SPLIT)
def convert_dataframe_to_features_target(
    df: Annotated[pd.DataFrame, TABLE], target_column: str, is_train: bool = True
) -> ToolOutput:
    """
    Convert DataFrame to features and target format.

    Parameters:
    -----------
    df : pd.DataFrame
        Input DataFrame
    target_column : str
        Name of the target column
    is_train : bool
        Whether the DataFrame is the training data. Training data yields features 'X_train' and target 'Y_train';
        test data yields features 'X_test' and its target column, if any, is dropped.

    Returns:
    --------
    tuple
        (X, y) with y None when is_train is False
    """
    if is_train:
        table.require_columns(df, [target_column])
        y = df[target_column].reset_index(drop=True)
        if y.isna().any():
            raise TargetMissingValues()
        X = df.drop(columns=[target_column]).reset_index(drop=True)
        split = FeatureTargetSplit(X=X, y=y, target_column=target_column, is_train=True)
        named = (
            NamedOutput("X_train", ObjectKind.TABLE, X),
            NamedOutput("Y_train", ObjectKind.COLUMN, y),
        )
    else:
        X = df.drop(columns=[c for c in [target_column] if c in df.columns]).reset_index(drop=True)
        split = FeatureTargetSplit(X=X, y=None, target_column=target_column, is_train=False)
        named = (NamedOutput("X_test", ObjectKind.TABLE, X),)
    return ToolOutput(value=split, named=named)
