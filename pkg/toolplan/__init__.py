"""Tool-augmented planning over tabular ML workflows, with a benchmark harness."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

from toolplan.config import DecodeError as DecodeError
from toolplan.config import RunConfig as RunConfig
from toolplan.config import load_config as load_config

try:
    __version__ = version("toolplan")
except PackageNotFoundError:  # pragma: no cover - local editable installs
    __version__ = "0.1.0"

__all__ = [
    "DecodeError",
    "RunConfig",
    "load_config",
    "__version__",
]
