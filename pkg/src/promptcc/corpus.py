"""Commit datasets: loading, validation, stratified splits, and few-shot episodes.

Input files are CSV/TSV with a header row and at least ``message`` and
``label`` columns. An ``id`` column is optional (the 0-based data row index
is used when absent); any further columns are preserved untouched in
``CommitExample.extra``.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DataError

SPLITS = ("train", "val", "test")

# Known dataset layouts. Both curated schemas carry plain message/label
# columns; they differ from generic_csv only in how strictly the label set
# is validated.
SCHEMAS = ("dataset1_binary", "dataset2_ternary", "generic_csv")
_SCHEMA_CLASS_COUNT = {"dataset1_binary": 2, "dataset2_ternary": 3}


@dataclass(frozen=True)
class CommitExample:
    """One labeled commit message."""

    id: str
    message: str
    label: str
    split: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.message.strip():
            raise DataError(f"example {self.id!r}: empty message")
        if self.split is not None and self.split not in SPLITS:
            raise DataError(f"example {self.id!r}: bad split {self.split!r}")


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class names for one dataset.

    The order is fixed (lexicographic for loaded datasets) and defines
    argmax tie-breaking and confusion-matrix row order everywhere else.
    """

    classes: tuple[str, ...]
    dataset_id: str

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise DataError(f"duplicate class names in {self.dataset_id!r}")
        if not self.classes:
            raise DataError(f"empty label space for {self.dataset_id!r}")

    def index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise DataError(
                f"label {label!r} not in label space {list(self.classes)}"
            ) from None

    def __len__(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class FewShotEpisode:
    """Support/query sets for one N-way K-shot run."""

    support: tuple[CommitExample, ...]
    query: tuple[CommitExample, ...]
    n_way: int
    k_shot: int
    seed: int
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.support) != self.n_way * self.k_shot:
            raise DataError(
                f"support size {len(self.support)} != n_way*k_shot "
                f"{self.n_way * self.k_shot}"
            )
        support_ids = {ex.id for ex in self.support}
        if len(support_ids) != len(self.support):
            raise DataError("duplicate example ids in support set")
        overlap = support_ids & {ex.id for ex in self.query}
        if overlap:
            raise DataError(f"support/query overlap on ids {sorted(overlap)[:5]}")


def load_dataset(path: str | Path, schema: str) -> tuple[list[CommitExample], LabelSpace]:
    """Read one commit dataset file.

    Returns the examples (split unassigned) and the label space derived
    from the distinct labels, ordered lexicographically.
    """
    if schema not in SCHEMAS:
        raise ConfigError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")

    delimiter = "\t" if path.suffix.lower() == ".tsv" else ","
    examples: list[CommitExample] = []
    seen_ids: set[str] = set()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f, delimiter=delimiter)
        if reader.fieldnames is None:
            raise DataError(f"{path}: no rows")
        missing = {"message", "label"} - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path}: missing required columns {sorted(missing)}")
        has_id = "id" in reader.fieldnames
        for i, row in enumerate(reader):
            line_no = i + 2  # header is line 1
            message = (row.get("message") or "").strip()
            if not message:
                raise DataError(f"{path}:{line_no}: missing or empty message")
            label = (row.get("label") or "").strip()
            if not label:
                raise DataError(f"{path}:{line_no}: missing label")
            ex_id = (row["id"] or "").strip() if has_id else str(i)
            if not ex_id:
                raise DataError(f"{path}:{line_no}: empty id")
            if ex_id in seen_ids:
                raise DataError(f"{path}:{line_no}: duplicate id {ex_id!r}")
            seen_ids.add(ex_id)
            extra = {
                k: v for k, v in row.items()
                if k not in ("id", "message", "label") and k is not None
            }
            examples.append(CommitExample(id=ex_id, message=message, label=label, extra=extra))

    if not examples:
        raise DataError(f"{path}: no rows")

    classes = tuple(sorted({ex.label for ex in examples}))
    expected = _SCHEMA_CLASS_COUNT.get(schema)
    if expected is not None and len(classes) != expected:
        raise DataError(
            f"{path}: schema {schema!r} expects {expected} classes, "
            f"found {len(classes)}: {list(classes)}"
        )
    dataset_id = schema if schema != "generic_csv" else path.stem
    return examples, LabelSpace(classes=classes, dataset_id=dataset_id)


def split_dataset(
    examples: Sequence[CommitExample],
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> list[CommitExample]:
    """Assign train/test/val splits, stratified by label.

    ``ratios`` is (train, test, val). Per class the counts are floored and
    leftover examples go to train first, then test, then val, so every
    split stays within one example of the stratified target.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1.0, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"split ratios must be non-negative, got {ratios}")

    by_label: dict[str, list[CommitExample]] = {}
    for ex in examples:
        by_label.setdefault(ex.label, []).append(ex)

    out: list[CommitExample] = []
    rng = random.Random(seed)
    for label in sorted(by_label):
        group = sorted(by_label[label], key=lambda ex: ex.id)
        if len(group) < 3 and all(r > 0 for r in ratios):
            raise DataError(
                f"class {label!r} has only {len(group)} examples; "
                "cannot stratify into 3 splits"
            )
        rng.shuffle(group)
        n = len(group)
        counts = [int(n * r) for r in ratios]
        # leftovers to train, then test, then val
        for j in range(n - sum(counts)):
            counts[j % 3] += 1
        order = ("train", "test", "val")
        pos = 0
        for split_name, count in zip(order, counts):
            for ex in group[pos:pos + count]:
                out.append(replace(ex, split=split_name))
            pos += count
    out.sort(key=lambda ex: ex.id)
    return out


def split_counts(examples: Iterable[CommitExample]) -> dict[str, int]:
    counts = {s: 0 for s in SPLITS}
    for ex in examples:
        if ex.split:
            counts[ex.split] += 1
    return counts


def by_split(examples: Iterable[CommitExample], split: str) -> list[CommitExample]:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    return [ex for ex in examples if ex.split == split]


def sample_episode(
    train_pool: Sequence[CommitExample],
    n_way: int,
    k_shot: int,
    seed: int,
    query: Sequence[CommitExample],
    label_space: LabelSpace | None = None,
) -> FewShotEpisode:
    """Draw a support set of ``k_shot`` examples per class from the train pool.

    Classes are the first ``n_way`` entries of the label space (or of the
    sorted labels present in the pool). Sampling is uniform without
    replacement and fully determined by ``seed``. ``k_shot=0`` yields an
    empty support set (zero-shot mode). The query set is passed in (the
    fixed test split, by convention) and filtered to the episode classes.
    """
    if k_shot < 0 or n_way < 1:
        raise ConfigError(f"invalid episode shape n_way={n_way} k_shot={k_shot}")
    all_classes = (
        label_space.classes if label_space is not None
        else tuple(sorted({ex.label for ex in train_pool}))
    )
    if n_way > len(all_classes):
        raise ConfigError(
            f"n_way={n_way} exceeds the {len(all_classes)} available classes"
        )
    classes = all_classes[:n_way]

    pools = {c: sorted((ex for ex in train_pool if ex.label == c), key=lambda e: e.id)
             for c in classes}
    for c in classes:
        if len(pools[c]) < k_shot:
            raise DataError(
                f"class {c!r} has {len(pools[c])} train examples, "
                f"need k_shot={k_shot} (short by {k_shot - len(pools[c])})"
            )

    rng = random.Random(seed)
    support: list[CommitExample] = []
    for c in classes:  # label-space order keeps the draw reproducible
        support.extend(rng.sample(pools[c], k_shot))
    query_kept = tuple(ex for ex in query if ex.label in classes)
    return FewShotEpisode(
        support=tuple(support),
        query=query_kept,
        n_way=n_way,
        k_shot=k_shot,
        seed=seed,
        classes=classes,
    )


def write_split_manifest(examples: Iterable[CommitExample], path: str | Path) -> None:
    """Emit the {id -> split} manifest as JSON."""
    manifest = {ex.id: ex.split for ex in examples}
    Path(path).write_text(json.dumps(manifest, indent=0, sort_keys=True))
