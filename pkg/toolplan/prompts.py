"""System prompts, subtask prefixes and competition prompt rendering."""

from __future__ import annotations

import functools
import string
from collections.abc import Mapping
from dataclasses import dataclass

from toolplan.config import DecodeError, decode, packaged_toml
from toolplan.rewards import StageId


@dataclass(frozen=True)
class Prompts:
    system: str
    judge: str
    judge_format: str
    hierarchical: str
    prefixes: dict[str, str]

    def subtask_system(self, stage: StageId) -> str:
        return self.hierarchical.format(prefix=self.prefixes[stage.value].rstrip().removesuffix("."))

    def judge_system(self) -> str:
        return f"{self.judge} {self.judge_format}"


@functools.cache
def load_prompts() -> Prompts:
    prompts: Prompts = decode(packaged_toml("prompts.toml"), Prompts)
    missing = [stage.value for stage in StageId if stage.value not in prompts.prefixes]
    if missing:
        raise DecodeError("$.prefixes", f"a prefix for every stage ({missing} missing)", "an incomplete table")
    return prompts


def render_template(template: str, fields: Mapping[str, object]) -> str:
    """Fill `{name}` placeholders; unknown placeholders are a configuration error."""
    names = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    unknown = sorted(names - set(fields))
    if unknown:
        raise DecodeError("$.prompt", f"placeholders among {sorted(fields)}", f"unknown {unknown}")
    return template.format(**fields)
