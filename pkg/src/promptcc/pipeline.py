"""End-to-end orchestration: data prep, verbalizer construction, episode
runs, zero-shot evaluation, checkpoint evaluation, and prediction.

With a frozen backbone each example's hidden vector is a constant, so a
``FeatureCache`` computes h once per example id and every downstream step
(training, validation, query scoring) reads from it.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import backend as be
from . import trainer as tr
from .config import RunConfig, default_snapshot_path, resolve_template
from .corpus import (
    CommitExample,
    LabelSpace,
    by_split,
    load_dataset,
    sample_episode,
    split_dataset,
    write_split_manifest,
)
from .errors import ConfigError, DataError
from .evaluation import compute_metrics, metrics_record
from .knowledge import expand_class, load_snapshot
from .prompting import PromptTemplate, render
from .verbalizer import (
    ManualVerbalizer,
    PrototypeVerbalizer,
    build_manual,
    build_prototype,
    load_manual,
    load_prototype,
    manual_class_probs,
    softmax,
)


class FeatureCache:
    """Hidden vectors keyed by example id, filled lazily in batches.

    One cache is only valid for one (backend, template, max_len) triple;
    callers own that scoping.
    """

    def __init__(self):
        self._feats: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._feats)

    def ensure(
        self,
        handle: be.BackendHandle,
        template: PromptTemplate,
        examples: Sequence[CommitExample],
        batch_size: int = 64,
    ) -> Mapping[str, np.ndarray]:
        missing = [ex for ex in examples if ex.id not in self._feats]
        if missing:
            self._feats.update(tr.featurize(handle, template, missing, batch_size))
        return self._feats


@dataclass
class PreparedRun:
    """A run config resolved into live objects."""

    config: RunConfig
    labels: LabelSpace
    train_pool: list[CommitExample]
    val_pool: list[CommitExample]
    test_pool: list[CommitExample]
    handle: be.BackendHandle
    template: PromptTemplate


def prepare(config: RunConfig, handle: be.BackendHandle | None = None) -> PreparedRun:
    examples, labels = load_dataset(config.dataset.path, config.dataset.schema)
    split = split_dataset(examples, seed=config.dataset.split_seed)
    if handle is None:
        handle = be.load_backend(config.backend.model_id, config.backend.max_len)
    return PreparedRun(
        config=config,
        labels=labels,
        train_pool=by_split(split, "train"),
        val_pool=by_split(split, "val"),
        test_pool=by_split(split, "test"),
        handle=handle,
        template=resolve_template(config.template),
    )


def make_verbalizer(
    config: RunConfig,
    labels: LabelSpace,
    handle: be.BackendHandle,
    trainable: bool = True,
) -> tuple[PrototypeVerbalizer | ManualVerbalizer, str]:
    """Build the configured verbalizer plus a human-readable report."""
    vcfg = config.verbalizer
    if vcfg.kind == "manual":
        verb = build_manual(vcfg.label_words, labels)
        lines = []
        for cls in labels.classes:
            lines.append(f"class {cls} ({len(verb.label_words[cls])} label words):")
            lines.extend(f"  {w}" for w in verb.label_words[cls])
        return verb, "\n".join(lines) + "\n"

    snapshot_path = vcfg.snapshot_path or default_snapshot_path()
    snapshot = load_snapshot(snapshot_path)
    candidates = [expand_class(snapshot, cls, vcfg.n_kg) for cls in labels.classes]
    verb = build_prototype(
        candidates,
        embedder=lambda w: be.embed_word(handle, w),
        labels=labels,
        trainable=trainable,
    )
    lines = []
    for cand in candidates:
        lines.append(f"class {cand.class_name} ({len(cand.candidates)} candidates):")
        lines.extend(f"  {w:<20} {s:.4f}" for w, s in cand.candidates)
    return verb, "\n".join(lines) + "\n"


def predict_prototype(
    verbalizer: PrototypeVerbalizer,
    features: Mapping[str, np.ndarray],
    examples: Sequence[CommitExample],
) -> tuple[list[str], np.ndarray]:
    """Predictions and class probabilities from cached hidden vectors."""
    H = np.stack([features[ex.id] for ex in examples])
    probs = softmax(H @ verbalizer.matrix.T)
    classes = verbalizer.labels.classes
    preds = [classes[i] for i in np.argmax(probs, axis=1)]
    return preds, probs


def predict_manual(
    handle: be.BackendHandle,
    template: PromptTemplate,
    verbalizer: ManualVerbalizer,
    examples: Sequence[CommitExample],
    batch_size: int = 64,
) -> tuple[list[str], np.ndarray]:
    """Predictions via mean label-word probability at the mask position."""
    word_ids: dict[str, int | None] = {}
    for cls in verbalizer.labels.classes:
        for word in verbalizer.label_words[cls]:
            toks = handle.tokenizer(word, add_special_tokens=False)["input_ids"]
            if len(toks) == 1 and toks[0] != handle.tokenizer.unk_token_id:
                word_ids[word] = toks[0]
            else:
                word_ids[word] = None
                warnings.warn(
                    f"label word {word!r} is not a single known token; "
                    "it contributes probability 0"
                )
    preds, rows = [], []
    classes = verbalizer.labels.classes
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        seqs = [
            be.encode(handle, render(template, ex, handle.mask_marker)) for ex in chunk
        ]
        outs = be.forward_mask_batch(handle, seqs)
        for out in outs:
            vocab_probs = np.exp(out.word_logprobs)
            word_probs = {
                w: (float(vocab_probs[i]) if i is not None else 0.0)
                for w, i in word_ids.items()
            }
            p = manual_class_probs(word_probs, verbalizer)
            rows.append(p)
            preds.append(classes[int(np.argmax(p))])
    return preds, np.stack(rows)


def episode_label_space(labels: LabelSpace, classes: tuple[str, ...]) -> LabelSpace:
    if classes == labels.classes:
        return labels
    return LabelSpace(classes=classes, dataset_id=labels.dataset_id)


def run_episode(
    prep: PreparedRun,
    shot: int,
    seed: int,
    out_dir: str | Path,
    cache: FeatureCache | None = None,
) -> dict:
    """One N-way K-shot cell: sample, (optionally) train, score the test split.

    ``shot=0`` skips training and scores the frozen initial prototypes.
    The trainer's validation set is the standard val split, filtered to
    the episode's classes when n_way excludes some.
    """
    t0 = time.monotonic()
    config = prep.config
    if config.verbalizer.kind == "manual" and shot > 0 and config.train.tune_mode == "prompt_only":
        raise ConfigError(
            "manual verbalizer has no trainable parameters in prompt_only mode"
        )
    cache = cache if cache is not None else FeatureCache()
    n_way = config.n_way or len(prep.labels)
    episode = sample_episode(
        prep.train_pool, n_way, shot, seed, query=prep.test_pool, label_space=prep.labels
    )
    ep_labels = episode_label_space(prep.labels, episode.classes)
    verbalizer, _ = make_verbalizer(config, ep_labels, prep.handle, trainable=shot > 0)
    out_dir = Path(out_dir)

    if shot == 0:
        tune_mode = "none"
        if isinstance(verbalizer, PrototypeVerbalizer):
            feats = cache.ensure(
                prep.handle, prep.template, episode.query, config.train.batch_size
            )
            preds, _ = predict_prototype(verbalizer, feats, episode.query)
        else:
            preds, _ = predict_manual(
                prep.handle, prep.template, verbalizer, episode.query,
                config.train.batch_size,
            )
    else:
        tune_mode = config.train.tune_mode
        val = [ex for ex in prep.val_pool if ex.label in episode.classes]
        train_cfg = _reseeded(config.train, seed)
        if tune_mode == "prompt_only":
            feats = cache.ensure(
                prep.handle,
                prep.template,
                list(episode.support) + val + list(episode.query),
                config.train.batch_size,
            )
            verbalizer, _state = tr.train(
                episode.support, val, prep.handle, verbalizer, prep.template,
                train_cfg, out_dir / "checkpoint", features=feats,
            )
            preds, _ = predict_prototype(verbalizer, feats, episode.query)
        else:
            verbalizer, _state = tr.train(
                episode.support, val, prep.handle, verbalizer, prep.template,
                train_cfg, out_dir / "checkpoint",
            )
            if isinstance(verbalizer, PrototypeVerbalizer):
                fresh = tr.featurize(
                    prep.handle, prep.template, episode.query, config.train.batch_size
                )
                preds, _ = predict_prototype(verbalizer, fresh, episode.query)
            else:
                preds, _ = predict_manual(
                    prep.handle, prep.template, verbalizer, episode.query,
                    config.train.batch_size,
                )

    gold = [ex.label for ex in episode.query]
    metrics = compute_metrics(gold, preds, ep_labels, config.eval.averaging)
    return metrics_record(
        metrics,
        dataset=prep.labels.dataset_id,
        model_id=prep.handle.model_id,
        tune_mode=tune_mode,
        verbalizer_kind=config.verbalizer.kind,
        shot=shot,
        seed=seed,
        wall_time_s=round(time.monotonic() - t0, 3),
    )


def _reseeded(train_cfg: tr.TrainConfig, seed: int) -> tr.TrainConfig:
    payload = train_cfg.to_json()
    payload["seed"] = seed
    return tr.TrainConfig(**payload)


def train_checkpoint(prep: PreparedRun, out_dir: str | Path) -> tuple[Path, tr.TrainState]:
    """The ``train`` command: full train split or one sampled episode."""
    config = prep.config
    out_dir = Path(out_dir)
    if config.k_shot is not None and config.k_shot == 0:
        raise ConfigError("k_shot=0 means zero-shot; use eval instead of train")
    if config.k_shot is None:
        support = prep.train_pool
        classes = prep.labels.classes
        ep_labels = prep.labels
    else:
        n_way = config.n_way or len(prep.labels)
        episode = sample_episode(
            prep.train_pool, n_way, config.k_shot, config.train.seed,
            query=prep.test_pool, label_space=prep.labels,
        )
        support = list(episode.support)
        classes = episode.classes
        ep_labels = episode_label_space(prep.labels, classes)
    val = [ex for ex in prep.val_pool if ex.label in classes]
    verbalizer, _ = make_verbalizer(config, ep_labels, prep.handle)
    _trained, state = tr.train(
        support, val, prep.handle, verbalizer, prep.template,
        config.train, out_dir,
    )
    write_split_manifest(
        prep.train_pool + prep.val_pool + prep.test_pool, out_dir / "splits.json"
    )
    write_run_manifest(prep, out_dir, classes)
    return out_dir, state


def write_run_manifest(
    prep: PreparedRun, out_dir: str | Path, classes: tuple[str, ...]
) -> None:
    config = prep.config
    payload = {
        "model_id": prep.handle.model_id,
        "max_len": prep.handle.max_len,
        "template": prep.template.pattern,
        "dataset_path": config.dataset.path,
        "dataset_schema": config.dataset.schema,
        "dataset_id": prep.labels.dataset_id,
        "split_seed": config.dataset.split_seed,
        "classes": list(classes),
        "verbalizer_kind": config.verbalizer.kind,
        "tune_mode": config.train.tune_mode,
        "backbone_saved": config.train.tune_mode == "full",
    }
    out = Path(out_dir) / "run.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_run_manifest(checkpoint_dir: str | Path) -> dict:
    path = Path(checkpoint_dir) / "run.json"
    if not path.exists():
        raise DataError(f"checkpoint manifest missing: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_checkpoint(
    checkpoint_dir: str | Path,
) -> tuple[dict, be.BackendHandle, PrototypeVerbalizer | ManualVerbalizer, PromptTemplate]:
    """Rehydrate a checkpoint directory for evaluation or prediction."""
    checkpoint_dir = Path(checkpoint_dir)
    manifest = load_run_manifest(checkpoint_dir)
    model_ref = (
        str(checkpoint_dir / "backbone")
        if manifest.get("backbone_saved")
        else manifest["model_id"]
    )
    handle = be.load_backend(model_ref, manifest["max_len"])
    labels = LabelSpace(
        classes=tuple(manifest["classes"]), dataset_id=manifest["dataset_id"]
    )
    if manifest["verbalizer_kind"] == "manual":
        verbalizer = load_manual(checkpoint_dir / "manual_verbalizer.json", labels)
    else:
        verbalizer = load_prototype(checkpoint_dir)
    template = resolve_template(manifest["template"])
    return manifest, handle, verbalizer, template


def evaluate_examples(
    handle: be.BackendHandle,
    template: PromptTemplate,
    verbalizer: PrototypeVerbalizer | ManualVerbalizer,
    examples: Sequence[CommitExample],
    averaging: str,
    batch_size: int = 64,
    cache: FeatureCache | None = None,
):
    if not examples:
        raise DataError("no examples to evaluate")
    if isinstance(verbalizer, PrototypeVerbalizer):
        cache = cache if cache is not None else FeatureCache()
        feats = cache.ensure(handle, template, examples, batch_size)
        preds, probs = predict_prototype(verbalizer, feats, examples)
    else:
        preds, probs = predict_manual(handle, template, verbalizer, examples, batch_size)
    gold = [ex.label for ex in examples]
    return compute_metrics(gold, preds, verbalizer.labels, averaging), preds, probs


def predict_rows(
    checkpoint_dir: str | Path,
    messages: Sequence[tuple[str, str]],
    batch_size: int = 64,
) -> list[dict]:
    """Classify raw (id, message) pairs with a saved checkpoint."""
    _manifest, handle, verbalizer, template = load_checkpoint(checkpoint_dir)
    examples = [
        CommitExample(id=mid, message=msg, label="") for mid, msg in messages
    ]
    if isinstance(verbalizer, PrototypeVerbalizer):
        feats = tr.featurize(handle, template, examples, batch_size)
        preds, probs = predict_prototype(verbalizer, feats, examples)
    else:
        preds, probs = predict_manual(handle, template, verbalizer, examples, batch_size)
    classes = verbalizer.labels.classes
    return [
        {
            "id": ex.id,
            "message": ex.message,
            "predicted_label": pred,
            "class_probs": {cls: float(p) for cls, p in zip(classes, row)},
        }
        for ex, pred, row in zip(examples, preds, probs)
    ]
