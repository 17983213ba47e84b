"""Named-object store with per-node ownership and path-union resolution."""

from __future__ import annotations

import enum
import logging
import warnings
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)


class ObjectKind(enum.Enum):
    """Tag of a stored artifact; tools declare the tags they accept per parameter."""

    TABLE = "Table"
    MODEL = "Model"
    FEATURE_TARGET_SPLIT = "FeatureTargetSplit"
    TRAIN_TEST_PAIR = "TrainTestPair"
    PREDICTION_TABLE = "PredictionTable"
    METRICS_REPORT = "MetricsReport"
    SCALAR = "Scalar"
    TEXT = "Text"
    COLUMN = "Column"


class ScratchpadError(Exception):
    """Base class for scratchpad failures."""


class EmptyName(ScratchpadError, ValueError):
    def __init__(self) -> None:
        super().__init__("Scratchpad names must be non-empty")


class DuplicateNameInNode(ScratchpadError, ValueError):
    def __init__(self, name: str, node: str):
        self.name = name
        self.node = node
        super().__init__(f"Name {name!r} is already defined in node {node!r}")


class NameNotFound(ScratchpadError, KeyError):
    def __init__(self, name: str, available: list[str]):
        self.name = name
        self.available = available
        super().__init__(name)

    def __str__(self) -> str:
        return f"Name {self.name!r} not found in the scratchpad. Available names: {self.available}"


class ScratchpadSealed(ScratchpadError, RuntimeError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"Scratchpad of node {node!r} is sealed")


class ScratchpadCapWarning(UserWarning):
    """Emitted when a path holds more entries than the configured soft cap."""


@dataclass(frozen=True)
class ScratchpadEntry:
    name: str
    kind: ObjectKind
    value: Any = field(compare=False)
    created_by: str


class NodeScratchpad:
    """Objects produced by the tool call at one node. Sealed once the node is finalized."""

    def __init__(self, owner_node: str):
        self.owner_node = owner_node
        self._entries: dict[str, ScratchpadEntry] = {}
        self._sealed = False

    def put(self, name: str, kind: ObjectKind, value: Any, *, created_by: str = "") -> NodeScratchpad:
        if not name:
            raise EmptyName()
        if self._sealed:
            raise ScratchpadSealed(self.owner_node)
        if name in self._entries:
            raise DuplicateNameInNode(name, self.owner_node)
        self._entries[name] = ScratchpadEntry(name=name, kind=kind, value=value, created_by=created_by)
        return self

    def seal(self) -> None:
        self._sealed = True

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def entries(self) -> Mapping[str, ScratchpadEntry]:
        return self._entries

    def get(self, name: str) -> ScratchpadEntry | None:
        return self._entries.get(name)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ScratchpadEntry]:
        return iter(self._entries.values())

    def __repr__(self) -> str:
        return f"NodeScratchpad({self.owner_node!r}, {list(self._entries)})"


class ScratchpadStore:
    """Owns the scratchpads of every node in one search tree."""

    def __init__(self) -> None:
        self._pads: dict[str, NodeScratchpad] = {}

    def pad(self, node: str) -> NodeScratchpad:
        pad = self._pads.get(node)
        if pad is None:
            pad = self._pads[node] = NodeScratchpad(node)
        return pad

    def view(self, *path: str) -> PathView:
        for node in path:
            self.pad(node)
        return PathView(self, tuple(path))

    def __contains__(self, node: object) -> bool:
        return node in self._pads


@dataclass(frozen=True)
class PathView:
    """Read-only view over the pads along a root→node path; deeper entries shadow shallower ones."""

    store: ScratchpadStore = field(repr=False, compare=False)
    path: tuple[str, ...]

    @property
    def leaf(self) -> str:
        return self.path[-1]

    def pads(self) -> Iterator[NodeScratchpad]:
        for node in self.path:
            yield self.store.pad(node)

    def resolve(self, name: str) -> ScratchpadEntry:
        for node in reversed(self.path):
            entry = self.store.pad(node).get(name)
            if entry is not None:
                return entry
        raise NameNotFound(name, self.names())

    def get(self, name: str) -> ScratchpadEntry | None:
        try:
            return self.resolve(name)
        except NameNotFound:
            return None

    def names(self) -> list[str]:
        """Visible names, sorted."""
        return sorted({entry.name for pad in self.pads() for entry in pad})

    def visible(self) -> dict[str, ScratchpadEntry]:
        merged: dict[str, ScratchpadEntry] = {}
        for pad in self.pads():
            for entry in pad:
                merged[entry.name] = entry
        return merged

    def latest(self, *kinds: ObjectKind) -> ScratchpadEntry | None:
        """The most recently created entry (deepest node) of any of `kinds`."""
        for node in reversed(self.path):
            candidates = [entry for entry in self.store.pad(node) if entry.kind in kinds]
            if candidates:
                return candidates[-1]
        return None

    def entries_of(self, *kinds: ObjectKind) -> list[ScratchpadEntry]:
        """All entries of `kinds` along the path, shadowed ones included, root first."""
        return [entry for pad in self.pads() for entry in pad if entry.kind in kinds]

    def find_created_by(self, call_id: str) -> list[ScratchpadEntry]:
        return [entry for pad in self.pads() for entry in pad if entry.created_by == call_id]

    def size(self) -> int:
        return sum(len(pad) for pad in self.pads())

    def branch(self, child: str) -> PathView:
        return PathView(self.store, self.path + (child,))

    def check_soft_cap(self, cap: int) -> None:
        size = self.size()
        if size > cap:
            logger.warning("Path ending at %s holds %d scratchpad entries (soft cap %d)", self.leaf, size, cap)
            warnings.warn(
                f"path ending at {self.leaf!r} holds {size} entries, above the soft cap of {cap}",
                ScratchpadCapWarning,
                stacklevel=2,
            )


def summarize(value: Any) -> str:
    shape = getattr(value, "shape", None)
    if shape is not None:
        return f"{type(value).__name__} shape={tuple(shape)}"
    text = repr(value)
    return text if len(text) <= 80 else text[:77] + "..."


def dump_path(view: PathView) -> list[dict[str, Any]]:
    """Debug dump: one record per node with `{name, kind, summary}` entries."""
    return [
        {
            "node": pad.owner_node,
            "entries": [{"name": e.name, "kind": e.kind.value, "summary": summarize(e.value)} for e in pad],
        }
        for pad in view.pads()
    ]


def render_dump(records: list[dict[str, Any]]) -> str:
    lines = []
    for record in records:
        lines.append(f"{record['node']}:")
        for entry in record["entries"]:
            lines.append(f"  {entry['name']} [{entry['kind']}] {entry['summary']}")
    return "\n".join(lines)
