"""Offline related-words graph and Jaccard-based label-word expansion.

The snapshot file is UTF-8 JSON-lines, one object per line:
``{"word": str, "neighbors": [[str, float], ...]}``. Scores live in [0, 1].
The library never talks to the network; ``promptcc fetch-snapshot`` can
build such a file from the public service.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import DataError

DEFAULT_N_KG = 20
_KEY_RE = re.compile(r"[^a-z0-9]+")


def class_key(class_name: str) -> str:
    """Lookup key for a class name: lowercase, non-alphanumerics stripped."""
    return _KEY_RE.sub("", class_name.lower())


@dataclass(frozen=True)
class KnowledgeSnapshot:
    """Immutable word -> [(neighbor, score)] graph, scores descending."""

    entries: Mapping[str, tuple[tuple[str, float], ...]]

    def neighbor_words(self, word: str) -> frozenset[str]:
        return frozenset(n for n, _ in self.entries.get(word, ()))

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CandidateSet:
    """Ranked label-word candidates for one class.

    The class's own lookup key sits at rank 0 with score 1.0; scores are
    non-increasing and the set never exceeds ``size_limit`` words.
    """

    class_name: str
    candidates: tuple[tuple[str, float], ...]
    size_limit: int

    def __post_init__(self):
        if len(self.candidates) > self.size_limit:
            raise DataError(
                f"{self.class_name}: {len(self.candidates)} candidates exceed "
                f"limit {self.size_limit}"
            )
        scores = [s for _, s in self.candidates]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise DataError(f"{self.class_name}: candidate scores not non-increasing")

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(w for w, _ in self.candidates)


def load_snapshot(path: str | Path) -> KnowledgeSnapshot:
    """Parse and validate a snapshot file.

    Words are lowercased, self-loops dropped, duplicate neighbors merged
    keeping the max score, and neighbor lists sorted by descending score
    (ties by word).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"snapshot file not found: {path}")
    entries: dict[str, tuple[tuple[str, float], ...]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                word = obj["word"].lower()
                raw = [(str(n).lower(), float(s)) for n, s in obj["neighbors"]]
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
                raise DataError(f"{path}:{line_no}: malformed snapshot line ({e})") from None
            best: dict[str, float] = {}
            for n, s in raw:
                if n == word:
                    continue  # self-loop
                if not 0.0 <= s <= 1.0:
                    raise DataError(f"{path}:{line_no}: score {s} outside [0, 1]")
                if n not in best or s > best[n]:
                    best[n] = s
            entries[word] = tuple(sorted(best.items(), key=lambda kv: (-kv[1], kv[0])))
    if not entries:
        raise DataError(f"{path}: empty snapshot")
    return KnowledgeSnapshot(entries=entries)


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """|a ∩ b| / |a ∪ b|; defined as 0 when both sets are empty."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def expand_class(
    snapshot: KnowledgeSnapshot, class_name: str, n_kg: int = DEFAULT_N_KG
) -> CandidateSet:
    """Rank snapshot words against a class by neighbor-set Jaccard overlap.

    Returns the class key itself (score 1.0) plus up to ``n_kg - 1``
    further words, ordered by descending similarity with lexicographic
    tie-breaks. Zero-similarity words are never included. A class missing
    from the snapshot degrades, with a warning, to the singleton set.
    """
    if n_kg < 1:
        raise DataError(f"n_kg must be >= 1, got {n_kg}")
    key = class_key(class_name)
    if key not in snapshot:
        warnings.warn(
            f"class {class_name!r} (key {key!r}) not in snapshot; "
            "falling back to the class name alone",
            stacklevel=2,
        )
        return CandidateSet(class_name=class_name, candidates=((key, 1.0),), size_limit=n_kg)

    base = snapshot.neighbor_words(key)
    scored = []
    for word in snapshot.entries:
        if word == key:
            continue
        sim = jaccard(base, snapshot.neighbor_words(word))
        if sim > 0.0:
            scored.append((word, sim))
    scored.sort(key=lambda ws: (-ws[1], ws[0]))
    candidates = ((key, 1.0),) + tuple(scored[: n_kg - 1])
    return CandidateSet(class_name=class_name, candidates=candidates, size_limit=n_kg)
