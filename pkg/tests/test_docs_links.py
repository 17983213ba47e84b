from __future__ import annotations

import importlib.util
import sys
from pathlib import Path
from types import ModuleType

ROOT = Path(__file__).resolve().parents[1]


def _checker() -> ModuleType:
    spec = importlib.util.spec_from_file_location("check_docs_links", ROOT / "scripts" / "check_docs_links.py")
    assert spec is not None and spec.loader is not None
    module = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = module
    spec.loader.exec_module(module)
    return module


def test_repository_docs_have_no_broken_links() -> None:
    errors = _checker().check_repository(ROOT)
    assert not errors, "\n".join(map(str, errors))


def test_broken_links_and_nav_gaps_are_reported(tmp_path: Path) -> None:
    docs = tmp_path / "docs"
    docs.mkdir()
    (tmp_path / "README.md").write_text(
        "See [search](docs/search.md#uct-selection) and [logs](docs/logs.md).\n\n```\n[skipped](nowhere.md)\n```\n",
        encoding="utf-8",
    )
    (docs / "index.md").write_text("# toolplan\n\n[Search](search.md#hierarchical-search)\n", encoding="utf-8")
    (docs / "search.md").write_text("# Search\n\n## Hierarchical Search\n", encoding="utf-8")
    (tmp_path / "mkdocs.yml").write_text("nav:\n  - Home: index.md\n  - Benchmark: benchmark.md\n", encoding="utf-8")

    problems = {(error.file.name, error.target): error.message for error in _checker().check_repository(tmp_path)}
    assert problems == {
        ("README.md", "docs/search.md#uct-selection"): "no heading #uct-selection in search.md",
        ("README.md", "docs/logs.md"): "no such file docs/logs.md",
        ("mkdocs.yml", "benchmark.md"): "nav entry has no page under docs/",
        ("mkdocs.yml", "search.md"): "page is missing from the nav",
    }
