"""Prompt templates: wrap a commit message around a single mask slot.

A pattern is plain text with exactly one ``{input}`` slot (the commit
message) and exactly one ``{mask}`` slot (the backend's sentinel token).
The default pattern appends "This commit is {mask}." to the message.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CommitExample
from .errors import ConfigError

DEFAULT_PATTERN = "{input} This commit is {mask}."
DEFAULT_MASK_MARKER = "<extra_id_0>"


@dataclass(frozen=True)
class PromptTemplate:
    pattern: str
    name: str = "default"

    def __post_init__(self):
        n_input = self.pattern.count("{input}")
        n_mask = self.pattern.count("{mask}")
        if n_mask != 1:
            raise ConfigError(f"template {self.name!r}: {n_mask} mask slots, need exactly 1")
        if n_input != 1:
            raise ConfigError(f"template {self.name!r}: {n_input} input slots, need exactly 1")
        stripped = self.pattern.replace("{input}", "").replace("{mask}", "").strip()
        if not stripped:
            raise ConfigError(f"template {self.name!r}: empty apart from slots")


@dataclass(frozen=True)
class WrappedInput:
    """A rendered prompt.

    ``content_span`` marks where the commit message sits inside ``text``;
    truncation may shorten that span only, so the template suffix (and
    with it the mask marker) always survives.
    """

    text: str
    mask_marker: str
    source_id: str
    content_span: tuple[int, int] = field(default=(0, 0))

    def __post_init__(self):
        if self.text.count(self.mask_marker) != 1:
            raise ConfigError(
                f"wrapped input {self.source_id!r}: mask marker "
                f"{self.mask_marker!r} must occur exactly once"
            )
        start, end = self.content_span
        if not (0 <= start <= end <= len(self.text)):
            raise ConfigError(f"wrapped input {self.source_id!r}: bad content span")

    @property
    def content(self) -> str:
        start, end = self.content_span
        return self.text[start:end]

    def with_content(self, new_content: str) -> "WrappedInput":
        """Re-render with the message portion replaced (used for truncation)."""
        start, end = self.content_span
        return WrappedInput(
            text=self.text[:start] + new_content + self.text[end:],
            mask_marker=self.mask_marker,
            source_id=self.source_id,
            content_span=(start, start + len(new_content)),
        )


def validate_template(pattern: str, name: str = "default") -> PromptTemplate:
    return PromptTemplate(pattern=pattern, name=name)


def neutralize_marker(message: str, mask_marker: str) -> str:
    """Break up literal sentinel text inside a message so it can't collide.

    A space is injected after the marker's first character; the message
    stays readable but no longer tokenizes to the sentinel.
    """
    if not mask_marker or mask_marker not in message:
        return message
    warnings.warn(
        f"message contains the mask marker {mask_marker!r}; neutralizing it",
        stacklevel=2,
    )
    broken = mask_marker[0] + " " + mask_marker[1:]
    out = message.replace(mask_marker, broken)
    if mask_marker in out:  # marker survives splitting (e.g. one char): drop it
        out = out.replace(mask_marker, " ")
    return out


def render(
    template: PromptTemplate,
    x: CommitExample,
    mask_marker: str = DEFAULT_MASK_MARKER,
) -> WrappedInput:
    """Substitute the message and sentinel into the template pattern."""
    message = neutralize_marker(x.message, mask_marker)
    input_pos = template.pattern.index("{input}")
    prefix = template.pattern[:input_pos].replace("{mask}", mask_marker)
    suffix = template.pattern[input_pos + len("{input}") :].replace("{mask}", mask_marker)
    return WrappedInput(
        text=prefix + message + suffix,
        mask_marker=mask_marker,
        source_id=x.id,
        content_span=(len(prefix), len(prefix) + len(message)),
    )


def load_templates(path: str | Path) -> list[PromptTemplate]:
    """Read patterns from a text file, one per line; ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"template file not found: {path}")
    templates = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            templates.append(validate_template(line, name=f"{path.name}:{line_no}"))
    if not templates:
        raise ConfigError(f"{path}: no templates found")
    return templates
