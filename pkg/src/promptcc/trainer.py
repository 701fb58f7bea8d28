"""Prompt-tuning loop: cross-entropy on class probabilities, AdamW,
early stopping on validation accuracy.

Two tune modes:

* ``prompt_only`` -- the backbone is frozen, so each example's hidden
  vector h is fixed; training reduces to optimizing the prototype matrix
  W on precomputed features.
* ``full`` -- backbone and prototype matrix are optimized jointly, with
  an optional auxiliary span-denoising LM loss added as ``ce + λ·lm``.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from . import backend as be
from .corpus import CommitExample
from .errors import ConfigError, DataError
from .prompting import PromptTemplate, render
from .verbalizer import ManualVerbalizer, PrototypeVerbalizer, save_prototype

EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    batch_size: int = 64
    optimizer: str = "adamw"
    patience_epochs: int = 10
    max_epochs: int = 100
    seed: int = 0
    tune_mode: str = "prompt_only"
    aux_lm_weight: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience_epochs < 1:
            raise ConfigError(f"patience_epochs must be >= 1, got {self.patience_epochs}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.optimizer.lower() != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.tune_mode not in ("full", "prompt_only"):
            raise ConfigError(f"unknown tune_mode {self.tune_mode!r}")
        if self.aux_lm_weight < 0:
            raise ConfigError(f"aux_lm_weight must be >= 0, got {self.aux_lm_weight}")

    def to_json(self) -> dict:
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "patience_epochs": self.patience_epochs,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "tune_mode": self.tune_mode,
            "aux_lm_weight": self.aux_lm_weight,
        }


@dataclass
class TrainState:
    epoch: int = 0
    best_val_acc: float = -1.0
    epochs_since_improve: int = 0
    checkpoint_path: Path | None = None
    diverged: bool = False
    stopped_reason: str = ""
    history: list[dict] = field(default_factory=list)


def cross_entropy(y: Sequence[float], y_hat: Sequence[float]) -> float:
    """CE = -sum y_i log(clamp(y_hat_i)) with clamp floor 1e-12."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise DataError(f"distribution lengths differ: {y.shape} vs {y_hat.shape}")
    return float(-(y * np.log(np.clip(y_hat, EPS, 1.0))).sum())


def total_loss(ce: float, lm_loss: float, weight: float) -> float:
    if not (np.isfinite(ce) and np.isfinite(lm_loss)):
        raise DataError(f"non-finite loss terms ce={ce} lm={lm_loss}")
    return ce + weight * lm_loss


def prototype_loss_and_grad(
    W: np.ndarray, H: np.ndarray, y_idx: Sequence[int]
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(H Wᵀ) and its gradient w.r.t. W.

    Reference implementation in plain numpy; the torch training path is
    cross-checked against it.
    """
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    y_idx = np.asarray(y_idx, dtype=np.int64)
    if H.shape[0] != y_idx.shape[0] or W.shape[1] != H.shape[1]:
        raise DataError(
            f"shape mismatch: W {W.shape}, H {H.shape}, y {y_idx.shape}"
        )
    logits = H @ W.T
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    n = H.shape[0]
    picked = np.clip(probs[np.arange(n), y_idx], EPS, 1.0)
    loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), y_idx] -= 1.0
    dlogits /= n
    return loss, dlogits.T @ H


def _predict_indices(W: torch.Tensor, H: torch.Tensor) -> torch.Tensor:
    return torch.argmax(H @ W.T, dim=1)


def _write_log_line(log_path: Path, record: dict) -> None:
    with open(log_path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def featurize(
    handle: be.BackendHandle,
    template: PromptTemplate,
    examples: Sequence[CommitExample],
    batch_size: int = 64,
) -> dict[str, np.ndarray]:
    """h vector per example id, computed in deterministic batches."""
    feats: dict[str, np.ndarray] = {}
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        seqs = [be.encode(handle, render(template, ex, handle.mask_marker)) for ex in chunk]
        outs = be.forward_mask_batch(handle, seqs)
        for ex, out in zip(chunk, outs):
            feats[ex.id] = out.h
    return feats


def _gather(
    examples: Sequence[CommitExample],
    features: Mapping[str, np.ndarray],
    verbalizer: PrototypeVerbalizer,
) -> tuple[torch.Tensor, torch.Tensor]:
    H = torch.tensor(
        np.stack([features[ex.id] for ex in examples]), dtype=torch.float64
    )
    y = torch.tensor(
        [verbalizer.labels.index(ex.label) for ex in examples], dtype=torch.long
    )
    return H, y


def train(
    support: Sequence[CommitExample],
    val: Sequence[CommitExample],
    handle: be.BackendHandle,
    verbalizer: PrototypeVerbalizer | ManualVerbalizer,
    template: PromptTemplate,
    config: TrainConfig,
    out_dir: str | Path,
    features: Mapping[str, np.ndarray] | None = None,
) -> tuple[PrototypeVerbalizer | ManualVerbalizer, TrainState]:
    """Tune the verbalizer (and backbone, in full mode) on a support set.

    The checkpoint with the best validation accuracy is what ends up in
    ``out_dir``; training stops after ``patience_epochs`` epochs without
    improvement, at ``max_epochs``, or on a non-finite loss (divergence
    keeps the last good checkpoint).
    """
    if not val:
        raise ConfigError("validation split is empty")
    if isinstance(verbalizer, ManualVerbalizer):
        if config.tune_mode == "prompt_only":
            raise ConfigError(
                "manual verbalizer has no trainable parameters in prompt_only mode"
            )
        return _train_full(support, val, handle, verbalizer, template, config, out_dir)
    if verbalizer.dim != handle.embed_dim:
        raise ConfigError(
            f"verbalizer D={verbalizer.dim} != backend D={handle.embed_dim}"
        )
    if config.tune_mode == "full":
        return _train_full(support, val, handle, verbalizer, template, config, out_dir)
    return _train_prompt_only(
        support, val, handle, verbalizer, template, config, out_dir, features
    )


def _train_prompt_only(
    support,
    val,
    handle,
    verbalizer: PrototypeVerbalizer,
    template,
    config,
    out_dir,
    features,
) -> tuple[PrototypeVerbalizer, TrainState]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "metrics_log.jsonl"
    log_path.write_text("")
    (out_dir / "train_config.json").write_text(
        json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n"
    )

    state = TrainState()
    if not support:
        state.stopped_reason = "empty_support"
        save_prototype(verbalizer, out_dir)
        state.checkpoint_path = out_dir
        return verbalizer, state

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    needed = list(support) + list(val)
    if features is None:
        features = featurize(handle, template, needed, config.batch_size)
    else:
        missing = [ex.id for ex in needed if ex.id not in features]
        if missing:
            raise DataError(f"feature cache missing ids: {missing[:5]}")

    Hs, ys = _gather(support, features, verbalizer)
    Hv, yv = _gather(val, features, verbalizer)
    W = torch.tensor(verbalizer.matrix, dtype=torch.float64, requires_grad=True)
    opt = torch.optim.AdamW([W], lr=config.lr)
    best_W = W.detach().clone()

    n = len(support)
    order = list(range(n))
    for epoch in range(1, config.max_epochs + 1):
        rng.shuffle(order)
        loss_sum = 0.0
        t0 = time.monotonic()
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = Hs[idx] @ W.T
            loss = torch.nn.functional.cross_entropy(logits, ys[idx])
            if not torch.isfinite(loss):
                state.diverged = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
        if state.diverged:
            state.stopped_reason = "nan_loss"
            break
        state.epoch = epoch
        with torch.no_grad():
            val_acc = float((_predict_indices(W, Hv) == yv).double().mean())
        record = {
            "epoch": epoch,
            "train_loss": loss_sum / n,
            "val_acc": val_acc,
            "seconds": round(time.monotonic() - t0, 4),
        }
        state.history.append(record)
        _write_log_line(log_path, record)
        if val_acc > state.best_val_acc:
            state.best_val_acc = val_acc
            state.epochs_since_improve = 0
            best_W = W.detach().clone()
        else:
            state.epochs_since_improve += 1
            if state.epochs_since_improve >= config.patience_epochs:
                state.stopped_reason = "early_stop"
                break
    if not state.stopped_reason:
        state.stopped_reason = "max_epochs"

    trained = verbalizer.with_matrix(best_W.numpy())
    save_prototype(trained, out_dir)
    state.checkpoint_path = out_dir
    return trained, state


def _token_batch(handle, seqs, pad):
    width = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), width), pad, dtype=torch.long)
    mask = torch.zeros((len(seqs), width), dtype=torch.long)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(list(s), dtype=torch.long)
        mask[i, : len(s)] = 1
    return ids, mask


def _label_batch(seqs):
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), -100, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(list(s), dtype=torch.long)
    return out


def _manual_word_ids(handle, verbalizer: ManualVerbalizer) -> list[list[int]]:
    """Single-token vocabulary ids per class; multi-token words warn upstream."""
    import warnings

    per_class = []
    for cls in verbalizer.labels.classes:
        ids = []
        for word in verbalizer.label_words[cls]:
            toks = handle.tokenizer(word, add_special_tokens=False)["input_ids"]
            if len(toks) != 1:
                warnings.warn(
                    f"label word {word!r} is not a single token; "
                    "it contributes probability 0 in manual mode"
                )
                continue
            ids.append(toks[0])
        if not ids:
            raise DataError(f"class {cls!r}: no single-token label words")
        per_class.append(ids)
    return per_class


def _train_full(
    support, val, handle, verbalizer, template, config, out_dir
) -> tuple[PrototypeVerbalizer | ManualVerbalizer, TrainState]:
    """Joint tuning of backbone (and prototype matrix when present)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "metrics_log.jsonl"
    log_path.write_text("")
    (out_dir / "train_config.json").write_text(
        json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n"
    )

    state = TrainState()
    if not support:
        raise ConfigError("full tuning requires a non-empty support set")

    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)
    model = handle.model
    pad = model.config.pad_token_id
    labels_space = verbalizer.labels
    is_proto = isinstance(verbalizer, PrototypeVerbalizer)

    def seq_of(ex):
        return be.encode(handle, render(template, ex, handle.mask_marker))

    sup_seqs = [seq_of(ex) for ex in support]
    val_seqs = [seq_of(ex) for ex in val]
    sup_y = torch.tensor([labels_space.index(ex.label) for ex in support])
    val_y = torch.tensor([labels_space.index(ex.label) for ex in val])

    params = [{"params": list(model.parameters())}]
    if is_proto:
        W = torch.tensor(verbalizer.matrix, dtype=torch.float32, requires_grad=True)
        params.append({"params": [W]})
    else:
        W = None
        word_ids = _manual_word_ids(handle, verbalizer)
    opt = torch.optim.AdamW(params, lr=config.lr)

    def class_logprobs(h, vocab_logits):
        if is_proto:
            return torch.log_softmax(h @ W.T, dim=1)
        probs = torch.softmax(vocab_logits, dim=1)
        scores = torch.stack(
            [probs[:, ids].mean(dim=1) for ids in word_ids], dim=1
        )
        scores = scores / scores.sum(dim=1, keepdim=True).clamp_min(EPS)
        return torch.log(scores.clamp_min(EPS))

    def forward_batch(seqs, grad: bool):
        ids, mask = _token_batch(handle, seqs, pad)
        dec = torch.tensor(
            [[handle.decoder_start_id, handle.mask_token_id]] * len(seqs)
        )
        ctx = torch.enable_grad() if grad else torch.no_grad()
        with ctx:
            out = model(
                input_ids=ids,
                attention_mask=mask,
                decoder_input_ids=dec,
                output_hidden_states=True,
            )
        h = out.decoder_hidden_states[-1][:, -1, :]
        return h, out.logits[:, -1, :]

    best_payload = None
    n = len(support)
    order = list(range(n))
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        rng.shuffle(order)
        loss_sum = 0.0
        t0 = time.monotonic()
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_seqs = [sup_seqs[i] for i in idx]
            h, vocab_logits = forward_batch(batch_seqs, grad=True)
            ce = torch.nn.functional.nll_loss(
                class_logprobs(h, vocab_logits), sup_y[idx]
            )
            loss = ce
            if config.aux_lm_weight > 0:
                pairs = [p for p in (be.denoise_pair(handle, s, rng) for s in batch_seqs) if p]
                if pairs:
                    in_ids, in_mask = _token_batch(handle, [p[0] for p in pairs], pad)
                    lm = model(
                        input_ids=in_ids,
                        attention_mask=in_mask,
                        labels=_label_batch([p[1] for p in pairs]),
                    ).loss
                    loss = ce + config.aux_lm_weight * lm
            if not torch.isfinite(loss):
                state.diverged = True
                break
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(idx)
        if state.diverged:
            state.stopped_reason = "nan_loss"
            break
        state.epoch = epoch
        model.eval()
        correct = 0
        for start in range(0, len(val_seqs), config.batch_size):
            chunk = val_seqs[start : start + config.batch_size]
            h, vocab_logits = forward_batch(chunk, grad=False)
            pred = torch.argmax(class_logprobs(h, vocab_logits), dim=1)
            correct += int((pred == val_y[start : start + len(chunk)]).sum())
        val_acc = correct / len(val)
        record = {
            "epoch": epoch,
            "train_loss": loss_sum / n,
            "val_acc": val_acc,
            "seconds": round(time.monotonic() - t0, 4),
        }
        state.history.append(record)
        _write_log_line(log_path, record)
        if val_acc > state.best_val_acc:
            state.best_val_acc = val_acc
            state.epochs_since_improve = 0
            best_payload = (
                {k: v.detach().clone() for k, v in model.state_dict().items()},
                None if W is None else W.detach().clone(),
            )
        else:
            state.epochs_since_improve += 1
            if state.epochs_since_improve >= config.patience_epochs:
                state.stopped_reason = "early_stop"
                break
    if not state.stopped_reason:
        state.stopped_reason = "max_epochs"

    if best_payload is not None:
        model.load_state_dict(best_payload[0])
        if W is not None:
            W = best_payload[1]
    model.eval()
    model.save_pretrained(out_dir / "backbone")
    handle.tokenizer.save_pretrained(out_dir / "backbone")
    if is_proto:
        trained = verbalizer.with_matrix(W.double().numpy())
        save_prototype(trained, out_dir)
    else:
        from .verbalizer import save_manual

        trained = verbalizer
        save_manual(verbalizer, out_dir / "manual_verbalizer.json")
    state.checkpoint_path = out_dir
    return trained, state
