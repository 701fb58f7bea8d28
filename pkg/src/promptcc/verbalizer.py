"""Verbalizers: turn mask-position predictions into class probabilities.

Two kinds:

* manual -- each class owns a fixed list of label words; the class score
  is the mean probability of its words, renormalized across classes.
* prototype -- each class owns an embedding row w_y; class probabilities
  are softmax(W h) over the mask-position hidden state h. Rows start as
  the mean embedding of the class's candidate words (the zero-shot
  initialization) and may be tuned.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import LabelSpace
from .errors import DataError
from .knowledge import CandidateSet

Embedder = Callable[[str], "np.ndarray | None"]


@dataclass(frozen=True)
class ManualVerbalizer:
    labels: LabelSpace
    label_words: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        owner: dict[str, str] = {}
        for cls in self.labels.classes:
            words = self.label_words.get(cls)
            if not words:
                raise DataError(f"class {cls!r} has no label words")
            for w in words:
                if w in owner and owner[w] != cls:
                    raise DataError(
                        f"label word {w!r} assigned to both {owner[w]!r} and {cls!r}"
                    )
                owner[w] = cls
        extra = set(self.label_words) - set(self.labels.classes)
        if extra:
            raise DataError(f"label words given for unknown classes: {sorted(extra)}")


@dataclass(frozen=True, eq=False)
class PrototypeVerbalizer:
    """Class-ordered row matrix W (N x D), one prototype per class."""

    labels: LabelSpace
    matrix: np.ndarray
    source: tuple[CandidateSet, ...] | None = None
    trainable: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.labels.classes):
            raise DataError(
                f"prototype matrix shape {m.shape} does not match "
                f"{len(self.labels.classes)} classes"
            )
        if not np.all(np.isfinite(m)):
            raise DataError("prototype matrix contains NaN or Inf")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def with_matrix(self, matrix: np.ndarray) -> "PrototypeVerbalizer":
        return PrototypeVerbalizer(
            labels=self.labels, matrix=matrix, source=self.source, trainable=self.trainable
        )


def build_manual(
    label_words: Mapping[str, Sequence[str]], labels: LabelSpace
) -> ManualVerbalizer:
    frozen = {cls: tuple(ws) for cls, ws in label_words.items()}
    return ManualVerbalizer(labels=labels, label_words=frozen)


def build_prototype(
    candidates: Sequence[CandidateSet],
    embedder: Embedder,
    labels: LabelSpace,
    trainable: bool = True,
) -> PrototypeVerbalizer:
    """Initialize each class row as the mean of its candidate-word embeddings."""
    by_class = {c.class_name: c for c in candidates}
    if set(by_class) != set(labels.classes) or len(by_class) != len(candidates):
        raise DataError(
            f"candidate sets {sorted(by_class)} do not match classes "
            f"{list(labels.classes)} one-to-one"
        )
    rows = []
    for cls in labels.classes:
        vecs = []
        for word in by_class[cls].words:
            vec = embedder(word)
            if vec is None:
                warnings.warn(f"candidate {word!r} for class {cls!r} not embeddable; skipped")
                continue
            vecs.append(np.asarray(vec, dtype=np.float64))
        if not vecs:
            raise DataError(f"class {cls!r}: no embeddable candidate words")
        rows.append(np.mean(vecs, axis=0))
    return PrototypeVerbalizer(
        labels=labels, matrix=np.stack(rows), source=tuple(candidates), trainable=trainable
    )


def manual_class_probs(
    word_probs: Mapping[str, float], v: ManualVerbalizer
) -> np.ndarray:
    """Mean label-word probability per class, renormalized to a distribution."""
    scores = np.zeros(len(v.labels.classes), dtype=np.float64)
    for i, cls in enumerate(v.labels.classes):
        vals = []
        for word in v.label_words[cls]:
            if word not in word_probs:
                warnings.warn(f"label word {word!r} missing from word probabilities; using 0")
                vals.append(0.0)
            else:
                vals.append(float(word_probs[word]))
        scores[i] = float(np.mean(vals))
    total = scores.sum()
    if total <= 0.0:
        raise DataError("verbalizer words absent from vocabulary")
    return scores / total


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis, float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def prototype_class_probs(h: np.ndarray, v: PrototypeVerbalizer) -> np.ndarray:
    """P(y | x) = softmax over classes of w_y . h."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (v.dim,):
        raise DataError(f"hidden vector shape {h.shape} does not match D={v.dim}")
    if not np.all(np.isfinite(h)):
        raise DataError("hidden vector contains NaN or Inf")
    return softmax(v.matrix @ h)


def argmax_class(probs: np.ndarray, labels: LabelSpace) -> str:
    """Highest-probability class; ties go to the lowest class index."""
    return labels.classes[int(np.argmax(probs))]


def save_manual(v: ManualVerbalizer, path: str | Path) -> None:
    payload = {cls: list(v.label_words[cls]) for cls in v.labels.classes}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manual(path: str | Path, labels: LabelSpace) -> ManualVerbalizer:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manual verbalizer file not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return build_manual(payload, labels)


def _matrix_checksum(matrix: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(matrix).tobytes()).hexdigest()


def save_prototype(v: PrototypeVerbalizer, out_dir: str | Path) -> None:
    """Write the matrix as .npy plus a JSON sidecar with provenance."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "prototypes.npy", v.matrix)
    sidecar = {
        "classes": list(v.labels.classes),
        "dataset_id": v.labels.dataset_id,
        "dim": v.dim,
        "trainable": v.trainable,
        "checksum": _matrix_checksum(v.matrix),
        "candidates": None
        if v.source is None
        else {c.class_name: [[w, s] for w, s in c.candidates] for c in v.source},
    }
    (out_dir / "prototypes.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_prototype(in_dir: str | Path) -> PrototypeVerbalizer:
    in_dir = Path(in_dir)
    npy, sidecar_path = in_dir / "prototypes.npy", in_dir / "prototypes.json"
    if not npy.exists() or not sidecar_path.exists():
        raise DataError(f"prototype verbalizer files missing under {in_dir}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    matrix = np.load(npy)
    if _matrix_checksum(matrix) != sidecar["checksum"]:
        raise DataError(f"{npy}: checksum mismatch, file corrupted")
    labels = LabelSpace(
        classes=tuple(sidecar["classes"]), dataset_id=sidecar["dataset_id"]
    )
    source = None
    if sidecar.get("candidates"):
        source = tuple(
            CandidateSet(
                class_name=cls,
                candidates=tuple((w, float(s)) for w, s in pairs),
                size_limit=max(len(pairs), 1),
            )
            for cls, pairs in sidecar["candidates"].items()
        )
    return PrototypeVerbalizer(
        labels=labels, matrix=matrix, source=source, trainable=bool(sidecar["trainable"])
    )
