"""Classification metrics, confusion reports, and the few-shot sweep protocol.

Row order of every confusion matrix is the label-space class order; rows
are gold labels, columns predictions. Macro averaging (unweighted class
mean) is the headline; weighted averaging is also available.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import LabelSpace
from .errors import ConfigError, DataError

AVERAGING = ("macro", "weighted")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True, eq=False)
class RunMetrics:
    labels: LabelSpace
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str
    per_class: Mapping[str, ClassMetrics]
    confusion: np.ndarray

    def __post_init__(self):
        total = int(self.confusion.sum())
        if total <= 0:
            raise DataError("empty confusion matrix")
        if abs(float(np.trace(self.confusion)) / total - self.accuracy) > 1e-12:
            raise DataError("accuracy does not equal confusion trace / total")
        for v in (self.accuracy, self.precision, self.recall, self.f1):
            if not 0.0 <= v <= 1.0:
                raise DataError(f"metric {v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "averaging": self.averaging,
            "per_class": {
                cls: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for cls, m in self.per_class.items()
            },
            "confusion": self.confusion.astype(int).tolist(),
            "classes": list(self.labels.classes),
        }


def compute_metrics(
    gold: Sequence[str],
    pred: Sequence[str],
    labels: LabelSpace,
    averaging: str = "macro",
) -> RunMetrics:
    """Accuracy, P/R/F1 (macro or weighted), per-class values, confusion."""
    if averaging not in AVERAGING:
        raise ConfigError(f"averaging must be one of {AVERAGING}, got {averaging!r}")
    if len(gold) != len(pred):
        raise DataError(f"gold/pred length mismatch: {len(gold)} vs {len(pred)}")
    if not gold:
        raise DataError("cannot compute metrics on zero examples")

    n = len(labels)
    confusion = np.zeros((n, n), dtype=np.int64)
    for g, p in zip(gold, pred):
        confusion[labels.index(g), labels.index(p)] += 1

    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / float(total)
    per_class: dict[str, ClassMetrics] = {}
    ps, rs, fs, supports = [], [], [], []
    for i, cls in enumerate(labels.classes):
        tp = float(confusion[i, i])
        gold_i = float(confusion[i, :].sum())
        pred_i = float(confusion[:, i].sum())
        p = tp / pred_i if pred_i > 0 else 0.0
        r = tp / gold_i if gold_i > 0 else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        per_class[cls] = ClassMetrics(precision=p, recall=r, f1=f, support=int(gold_i))
        ps.append(p)
        rs.append(r)
        fs.append(f)
        supports.append(gold_i)

    if averaging == "macro":
        avg_p, avg_r, avg_f = (float(np.mean(v)) for v in (ps, rs, fs))
    else:
        weights = np.asarray(supports) / float(total)
        avg_p, avg_r, avg_f = (
            float(np.dot(weights, v)) for v in (ps, rs, fs)
        )
    return RunMetrics(
        labels=labels,
        accuracy=accuracy,
        precision=avg_p,
        recall=avg_r,
        f1=avg_f,
        averaging=averaging,
        per_class=per_class,
        confusion=confusion,
    )


def confusion_report(metrics: RunMetrics) -> str:
    """CSV: one row per gold class, prediction counts, then recall.

    Recall doubles as the per-class "accuracy" some reports quote. A class
    with no gold examples gets recall 0 and a ``no_gold`` flag.
    """
    classes = metrics.labels.classes
    lines = ["gold," + ",".join(classes) + ",recall,flags"]
    for i, cls in enumerate(classes):
        counts = ",".join(str(int(c)) for c in metrics.confusion[i])
        recall = metrics.per_class[cls].recall
        flag = "no_gold" if metrics.per_class[cls].support == 0 else ""
        lines.append(f"{cls},{counts},{recall:.4f},{flag}")
    return "\n".join(lines) + "\n"


def render_confusion_image(metrics: RunMetrics, path: str | Path) -> None:
    """Optional heatmap render; needs matplotlib installed."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise ConfigError(f"confusion image needs matplotlib: {e}") from None
    classes = metrics.labels.classes
    fig, ax = plt.subplots(figsize=(1.2 * len(classes) + 2, 1.2 * len(classes) + 1.5))
    ax.imshow(metrics.confusion, cmap="Blues")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    for i in range(len(classes)):
        for j in range(len(classes)):
            ax.text(j, i, str(int(metrics.confusion[i, j])), ha="center", va="center")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def metrics_record(
    metrics: RunMetrics,
    dataset: str,
    model_id: str,
    tune_mode: str,
    verbalizer_kind: str,
    shot: int,
    seed: int,
    wall_time_s: float,
) -> dict:
    record = {
        "dataset": dataset,
        "model_id": model_id,
        "tune_mode": tune_mode,
        "verbalizer_kind": verbalizer_kind,
        "shot": shot,
        "seed": seed,
        "wall_time_s": wall_time_s,
    }
    record.update(metrics.to_dict())
    return record


def write_json(payload: dict, path: str | Path) -> None:
    """Atomic JSON write (temp file + rename) so crashes never corrupt."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class SweepResult:
    shots: list[int]
    seeds: list[int]
    per_shot: dict[int, dict[int, dict]]

    def cell(self, shot: int, seed: int) -> dict:
        return self.per_shot[shot][seed]

    def mean_accuracy(self, shot: int) -> float:
        vals = [
            c["accuracy"] for c in self.per_shot[shot].values() if "failed" not in c
        ]
        if not vals:
            return math.nan
        return float(np.mean(vals))

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "seeds": self.seeds,
            "per_shot": {
                str(shot): {str(seed): cell for seed, cell in cells.items()}
                for shot, cells in self.per_shot.items()
            },
        }


def run_sweep(
    shots: Sequence[int],
    seeds: Sequence[int],
    run_cell: Callable[[int, int], dict],
    out_path: str | Path | None = None,
) -> SweepResult:
    """Run every (shot, seed) cell, surviving single-cell failures.

    Results are re-serialized after each cell, so a crash loses at most
    the cell in flight.
    """
    if not shots or not seeds:
        raise ConfigError("sweep needs at least one shot count and one seed")
    result = SweepResult(shots=list(shots), seeds=list(seeds), per_shot={})
    for shot in shots:
        result.per_shot[shot] = {}
        for seed in seeds:
            try:
                cell = run_cell(shot, seed)
            except Exception as e:  # single-cell failure is recorded, not fatal
                cell = {"failed": f"{type(e).__name__}: {e}"}
            result.per_shot[shot][seed] = cell
            if out_path is not None:
                write_json(result.to_dict(), out_path)
    return result


def summarize_sweep(result: SweepResult) -> str:
    """Plain-text mean ± std accuracy and F1 per shot count."""
    lines = [f"{'shot':>6} {'acc mean':>9} {'acc std':>8} {'f1 mean':>8} {'f1 std':>7} {'cells':>6}"]
    for shot in result.shots:
        cells = [c for c in result.per_shot[shot].values() if "failed" not in c]
        failed = len(result.per_shot[shot]) - len(cells)
        if cells:
            accs = [c["accuracy"] for c in cells]
            f1s = [c["f1"] for c in cells]
            lines.append(
                f"{shot:>6} {np.mean(accs):>9.4f} {np.std(accs):>8.4f} "
                f"{np.mean(f1s):>8.4f} {np.std(f1s):>7.4f} "
                f"{len(cells)}/{len(cells) + failed:>4}"
            )
        else:
            lines.append(f"{shot:>6} {'-':>9} {'-':>8} {'-':>8} {'-':>7} 0/{failed}")
    return "\n".join(lines) + "\n"
