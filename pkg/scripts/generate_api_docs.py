#!/usr/bin/env python3
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class CatalogRow:
    name: str
    wrapper: str
    stages: list[str]
    summary: str


def _escape_cell(text: str) -> str:
    return text.replace("|", "\\|")


def _rows() -> tuple[list[CatalogRow], list[str]]:
    from toolplan.catalog import build_registry, read_catalog

    registry = build_registry()
    rows: list[CatalogRow] = []
    for desc in registry:
        stages = [stage.value for stage in sorted(desc.stages, key=lambda stage: stage.index)]
        rows.append(
            CatalogRow(
                name=desc.name,
                wrapper=desc.wrapper.value,
                stages=stages,
                summary=desc.summary or "No documentation provided.",
            )
        )
    return rows, list(read_catalog().omitted.tools)


def _render_table(rows: list[CatalogRow]) -> str:
    lines = [
        "| Tool | Wrapper | Stages | Summary |",
        "|---|---|---|---|",
    ]
    for row in rows:
        stages = ", ".join(f"`{stage}`" for stage in row.stages)
        lines.append(f"| `{_escape_cell(row.name)}` | {row.wrapper} | {stages} | {_escape_cell(row.summary)} |")
    return "\n".join(lines)


def _render(rows: list[CatalogRow], omitted: list[Any]) -> str:
    omitted_lines = "\n".join(f"- `{name}`" for name in omitted)
    return (
        "# Tool Catalog\n\n"
        "_Generated from the packaged catalog by `scripts/generate_api_docs.py`. Do not edit by hand._\n\n"
        "Every tool below is registered by `toolplan.catalog.build_registry()`. Stage tags decide which subtask\n"
        "exposes a tool when hierarchical search masks the toolset.\n\n"
        f"## Registered Tools ({len(rows)})\n\n"
        f"{_render_table(rows)}\n\n"
        "## Omitted Tools\n\n"
        "Listed in the catalog's `[omitted]` table and never registered:\n\n"
        f"{omitted_lines}\n"
    )


def _write_or_check(path: Path, content: str, check: bool) -> int:
    normalized = content if content.endswith("\n") else content + "\n"
    if check:
        if not path.exists():
            print(f"[ERROR] Missing generated file: {path}")
            return 1
        existing = path.read_text(encoding="utf-8")
        if existing != normalized:
            print(f"[ERROR] Generated file is out of date: {path}")
            print("Run: python scripts/generate_api_docs.py")
            return 1
        return 0

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(normalized, encoding="utf-8")
    print(f"[OK] Wrote {path}")
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description="Generate the tool catalog reference from the packaged catalog.")
    parser.add_argument("--check", action="store_true", help="Fail if the generated file is out of date.")
    args = parser.parse_args()

    repo_root = Path(__file__).resolve().parents[1]
    if str(repo_root) not in sys.path:
        sys.path.insert(0, str(repo_root))

    rows, omitted = _rows()
    return _write_or_check(repo_root / "docs" / "tool-catalog.md", _render(rows, omitted), args.check)


if __name__ == "__main__":
    raise SystemExit(main())
