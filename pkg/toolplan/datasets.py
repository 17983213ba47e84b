"""Deterministic synthetic competitions, generated into the data directory on first use."""

from __future__ import annotations

import logging
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pandas as pd

from toolplan import table

logger = logging.getLogger(__name__)

DEFAULT_ROWS = 1200
_REGIONS = np.array(["east", "north", "south", "west"], dtype=object)
_SEGMENTS = np.array(["basic", "plus", "premium"], dtype=object)
_SPECIES = np.array(["alpha", "beta", "gamma"], dtype=object)


class UnknownGenerator(LookupError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"No synthetic generator named {name!r}; available: {sorted(GENERATORS)}")


def _blank(values: np.ndarray, rng: np.random.Generator, fraction: float) -> pd.Series:
    """Copy of `values` with a seeded `fraction` of cells missing."""
    series = pd.Series(values)
    mask = rng.random(len(series)) < fraction
    return series.mask(mask)


def regression(rows: int = DEFAULT_ROWS, seed: int = 0) -> pd.DataFrame:
    """A linear signal in three numeric features plus a region offset and Gaussian noise."""
    rng = np.random.default_rng(seed)
    x1, x2, x3 = rng.normal(size=(3, rows))
    region = rng.choice(_REGIONS, size=rows)
    offset = pd.Series(region).map({"east": 0.0, "north": 1.5, "south": -1.0, "west": 0.5}).to_numpy()
    price = 3.0 * x1 - 2.0 * x2 + 0.5 * x3 + offset + rng.normal(scale=0.3, size=rows) + 10.0
    return pd.DataFrame(
        {
            "id": np.arange(1, rows + 1),
            "x1": x1.round(4),
            "x2": _blank(x2.round(4), rng, 0.05),
            "x3": x3.round(4),
            "region": _blank(region, rng, 0.03),
            "price": price.round(4),
        }
    )


def binary(rows: int = DEFAULT_ROWS, seed: int = 0) -> pd.DataFrame:
    """Two classes separated by a margin around `f1 + f2 = 0`; the label is boolean."""
    rng = np.random.default_rng(seed)
    f1, f2 = rng.normal(size=(2, rows))
    margin = f1 + f2
    shift = np.where(margin >= 0, 0.5, -0.5)
    f1, f2 = f1 + shift, f2 + shift
    segment = rng.choice(_SEGMENTS, size=rows)
    return pd.DataFrame(
        {
            "id": np.arange(1, rows + 1),
            "f1": _blank(f1.round(4), rng, 0.05),
            "f2": f2.round(4),
            "age": rng.integers(18, 80, size=rows),
            "segment": _blank(segment, rng, 0.05),
            "Transported": margin >= 0,
        }
    )


def multiclass(rows: int = DEFAULT_ROWS, seed: int = 0) -> pd.DataFrame:
    """Three text classes by thresholds on `length`, with an informative and a noisy width feature."""
    rng = np.random.default_rng(seed)
    length = rng.uniform(0.0, 9.0, size=rows)
    width = length / 3.0 + rng.normal(scale=0.2, size=rows)
    species = _SPECIES[np.clip((length // 3).astype(int), 0, 2)]
    zone = rng.choice(_REGIONS, size=rows)
    return pd.DataFrame(
        {
            "id": np.arange(1, rows + 1),
            "length": _blank(length.round(4), rng, 0.04),
            "width": width.round(4),
            "zone": _blank(zone, rng, 0.04),
            "species": species,
        }
    )


GENERATORS: dict[str, Callable[..., pd.DataFrame]] = {
    "regression": regression,
    "binary": binary,
    "multiclass": multiclass,
}


def ensure_generated(generator: str, path: Path, *, rows: int = DEFAULT_ROWS, seed: int = 0) -> Path:
    """Write the generator's table to `path` unless a file is already there."""
    if generator not in GENERATORS:
        raise UnknownGenerator(generator)
    if path.exists():
        return path
    frame = GENERATORS[generator](rows=rows, seed=seed)
    table.write_csv(frame, path)
    logger.info("Generated synthetic %s data (%d rows) at %s", generator, rows, path)
    return path
