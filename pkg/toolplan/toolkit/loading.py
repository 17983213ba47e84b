"""Data loading and persistence tools."""

from __future__ import annotations

import logging
from typing import Annotated

import pandas as pd

from toolplan import table
from toolplan.models import ModelArtifact, load_artifact, save_artifact
from toolplan.scratchpad import ObjectKind
from toolplan.toolkit.base import MODEL, TABLE, tool

logger = logging.getLogger(__name__)


@tool(output=ObjectKind.TABLE)
def read_data(filepath: str) -> pd.DataFrame:
    """
    Read CSV data into a pandas DataFrame.

    Parameters:
    -----------
    filepath : str
        Path to the CSV file

    Returns:
    --------
    pd.DataFrame
        Loaded DataFrame
    """
    return table.read_csv(filepath)


@tool()
def save_dataframe_to_csv(df: Annotated[pd.DataFrame, TABLE], filepath: str) -> str:
    """
    Save a DataFrame to CSV file.

    Parameters:
    -----------
    df : pd.DataFrame
        DataFrame to save
    filepath : str
        Path where the CSV file will be written

    Returns:
    --------
    str
        Confirmation message
    """
    path = table.write_csv(df, filepath)
    logger.info("Wrote %d rows to %s", len(df), path)
    return f"DataFrame saved to {filepath}"


@tool()
def save_model(model: Annotated[ModelArtifact, MODEL], filepath: str = "model.pkl") -> str:
    """
    Save the trained model to disk.

    Parameters:
    -----------
    model : Any
        Trained model
    filepath : str, default='model.pkl'
        Path where the model file will be written

    Returns:
    --------
    str
        Confirmation message
    """
    save_artifact(model, filepath)
    return f"Model saved to {filepath}"


@tool(output=ObjectKind.MODEL)
def load_model(filepath: str) -> ModelArtifact:
    """
    Load a trained model from disk.

    Parameters:
    -----------
    filepath : str
        Path to a model file written by save_model

    Returns:
    --------
    Any
        The trained model
    """
    return load_artifact(filepath)
