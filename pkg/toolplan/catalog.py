"""Load the packaged tool catalog and build a registry from the toolkit implementations."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from toolplan import toolkit
from toolplan.config import DecodeError, decode, packaged_toml, read_toml
from toolplan.registry import CatalogError, ToolRegistry, WrapperKind, describe_function
from toolplan.rewards import StageId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CatalogEntry:
    wrapper: WrapperKind
    stages: list[StageId]


@dataclass(frozen=True)
class Omitted:
    tools: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Catalog:
    tools: dict[str, CatalogEntry]
    omitted: Omitted = field(default_factory=Omitted)


def read_catalog(path: str | Path | None = None) -> Catalog:
    data = packaged_toml("catalog.toml") if path is None else read_toml(path)
    try:
        catalog: Catalog = decode(data, Catalog)
    except DecodeError as error:
        raise CatalogError(f"Invalid tool catalog: {error}") from error
    return catalog


def _check_entry(name: str, entry: CatalogEntry, ref_count: int, has_output: bool) -> None:
    if not entry.stages:
        raise CatalogError(f"Tool {name!r} has no stage tags")
    if entry.wrapper is WrapperKind.SET and ref_count:
        raise CatalogError(f"Set tool {name!r} reads from the scratchpad")
    if entry.wrapper is not WrapperKind.SET and not ref_count:
        raise CatalogError(f"{entry.wrapper.value} tool {name!r} has no scratchpad parameter")
    if entry.wrapper is WrapperKind.GET and has_output:
        raise CatalogError(f"Get tool {name!r} declares an output kind")
    if entry.wrapper is WrapperKind.OVERRIDE and not has_output:
        raise CatalogError(f"Override tool {name!r} declares no output kind")


def build_registry(path: str | Path | None = None, *, masking: bool = True) -> ToolRegistry:
    """A registry holding every catalog tool, checked against the registered implementations."""
    catalog = read_catalog(path)
    implemented = toolkit.IMPLEMENTATIONS
    missing = sorted(set(catalog.tools) - set(implemented))
    if missing:
        raise CatalogError(f"Catalog tools without an implementation: {missing}")
    declared_omitted = sorted(set(catalog.omitted.tools) & set(catalog.tools))
    if declared_omitted:
        raise CatalogError(f"Tools both cataloged and omitted: {declared_omitted}")
    uncatalogued = sorted(set(implemented) - set(catalog.tools))
    if uncatalogued:
        logger.warning("Implementations not in the catalog are not registered: %s", uncatalogued)

    registry = ToolRegistry()
    registry.masking = masking
    for name, entry in catalog.tools.items():
        function = implemented[name]
        desc = describe_function(
            function.fn,
            wrapper=entry.wrapper,
            stages=frozenset(entry.stages),
            output_kind=function.output_kind,
            name=name,
        )
        _check_entry(name, entry, len(desc.ref_params), function.output_kind is not None)
        registry.register(desc, function.fn)
    logger.debug("Registered %d tools", len(registry))
    return registry
