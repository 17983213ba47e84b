#!/usr/bin/env python3
"""Check relative links and heading anchors in the Markdown docs, and that mkdocs.yml lists every docs page."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import unquote

LINK_RE = re.compile(r"(?<!!)\[[^\]]+\]\(([^)\s]+)(?:\s+\"[^\"]*\")?\)")
HEADING_RE = re.compile(r"^\s{0,3}#{1,6}\s+(.*)$")
SCHEME_RE = re.compile(r"^[a-zA-Z][a-zA-Z0-9+.-]*:")
NAV_RE = re.compile(r"^\s*-\s+[^:]+:\s+(\S+\.md)\s*$")
FENCE = "```"


@dataclass(frozen=True)
class LinkError:
    file: Path
    line: int
    target: str
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}: {self.target} -> {self.message}"


def slugify(text: str) -> str:
    """Anchor of a heading as the `toc` extension renders it."""
    text = re.sub(r"\s+#+\s*$", "", text.strip().lower())
    text = re.sub(r"[^\w\s-]", "", text)
    return re.sub(r"\s+", "-", text)


def heading_slugs(path: Path) -> set[str]:
    slugs: set[str] = set()
    counts: dict[str, int] = {}
    in_code = False
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.lstrip().startswith(FENCE):
            in_code = not in_code
            continue
        match = None if in_code else HEADING_RE.match(line)
        if match is None:
            continue
        base = slugify(match.group(1))
        if not base:
            continue
        count = counts.get(base, 0)
        slugs.add(base if count == 0 else f"{base}-{count}")
        counts[base] = count + 1
    return slugs


def markdown_files(root: Path) -> list[Path]:
    files = [root / name for name in ("README.md", "CONTRIBUTING.md") if (root / name).exists()]
    files.extend(sorted((root / "docs").rglob("*.md")))
    return files


def check_target(source: Path, target: str, root: Path) -> str | None:
    """What is wrong with one link target, or None."""
    if SCHEME_RE.match(target):
        return None
    path_part, _, anchor = target.partition("#")
    resolved = (source.parent / path_part).resolve() if path_part else source
    if not resolved.is_relative_to(root.resolve()):
        return "link points outside the repository"
    if not resolved.exists():
        return f"no such file {resolved.relative_to(root.resolve())}"
    if anchor and resolved.suffix == ".md" and slugify(unquote(anchor)) not in heading_slugs(resolved):
        return f"no heading #{anchor} in {resolved.name}"
    return None


def check_links(path: Path, root: Path) -> list[LinkError]:
    errors: list[LinkError] = []
    in_code = False
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.lstrip().startswith(FENCE):
            in_code = not in_code
            continue
        if in_code:
            continue
        for match in LINK_RE.finditer(line):
            target = match.group(1).strip("<>")
            problem = check_target(path, target, root)
            if problem is not None:
                errors.append(LinkError(path, line_no, target, problem))
    return errors


def check_nav(root: Path) -> list[LinkError]:
    """Pages named in the mkdocs nav exist, and every page under docs/ is in the nav."""
    config = root / "mkdocs.yml"
    if not config.exists():
        return []
    docs = root / "docs"
    listed: set[str] = set()
    errors: list[LinkError] = []
    for line_no, line in enumerate(config.read_text(encoding="utf-8").splitlines(), start=1):
        match = NAV_RE.match(line)
        if match is None:
            continue
        page = match.group(1)
        listed.add(page)
        if not (docs / page).exists():
            errors.append(LinkError(config, line_no, page, "nav entry has no page under docs/"))
    for page in sorted(docs.rglob("*.md")):
        name = page.relative_to(docs).as_posix()
        if name not in listed:
            errors.append(LinkError(config, 0, name, "page is missing from the nav"))
    return errors


def check_repository(root: Path) -> list[LinkError]:
    errors = [error for path in markdown_files(root) for error in check_links(path, root)]
    return errors + check_nav(root)


def main() -> int:
    errors = check_repository(Path(__file__).resolve().parents[1])
    if errors:
        print("[ERROR] Documentation link check failed:")
        for error in errors:
            print(f"- {error}")
        return 1
    print("[OK] Documentation link check passed.")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
