"""Text-to-text model backend: tokenization, mask-position forward passes.

The mask slot is realized as the first sentinel token (``<extra_id_0>``)
of a T5-family checkpoint. For an input ``... This commit is <extra_id_0>.``
the decoder is fed ``[start, <extra_id_0>]`` and we read position 1: its
vocabulary distribution predicts the sentinel's filler word, and its
hidden state is the single vector h consumed by the prototype verbalizer.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigError, DataError
from .prompting import WrappedInput

DEFAULT_MODEL_ID = "t5-small"
DEFAULT_MAX_LEN = 256


@dataclass(eq=False)
class BackendHandle:
    """One loaded checkpoint plus its tokenizer and capability facts."""

    model_id: str
    tokenizer: object
    model: torch.nn.Module
    vocab_size: int
    embed_dim: int
    max_len: int
    mask_marker: str
    mask_token_id: int
    decoder_start_id: int

    def capabilities(self) -> dict:
        return {
            "model_id": self.model_id,
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "max_len": self.max_len,
            "mask_marker": self.mask_marker,
        }


@dataclass(frozen=True, eq=False)
class MaskOutput:
    """Per-input mask-position outputs from one forward pass."""

    word_logprobs: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.word_logprobs)):
            raise DataError("mask-position log-probabilities contain NaN or Inf")
        total = float(np.exp(self.word_logprobs).sum())
        if abs(total - 1.0) > 1e-4:
            raise DataError(f"mask-position probabilities sum to {total}, not 1")


@dataclass(frozen=True)
class TrainableParams:
    """What a tuning mode would optimize, as counts of scalars."""

    mode: str
    backbone_count: int
    verbalizer_count: int

    @property
    def total(self) -> int:
        return self.backbone_count + self.verbalizer_count


def load_backend(
    model_id: str = DEFAULT_MODEL_ID,
    max_len: int = DEFAULT_MAX_LEN,
) -> BackendHandle:
    """Load a checkpoint by hub id or local directory path."""
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    if max_len < 8:
        raise ConfigError(f"max_len={max_len} too small to hold any template")
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForSeq2SeqLM.from_pretrained(model_id)
    except Exception as e:
        raise ConfigError(f"cannot load checkpoint {model_id!r}: {e}") from None
    model.eval()

    marker = "<extra_id_0>"
    marker_ids = tokenizer(marker, add_special_tokens=False)["input_ids"]
    if len(marker_ids) != 1:
        raise ConfigError(
            f"{model_id!r}: mask marker {marker!r} tokenizes to "
            f"{len(marker_ids)} tokens, need exactly 1"
        )
    cfg = model.config
    return BackendHandle(
        model_id=model_id,
        tokenizer=tokenizer,
        model=model,
        vocab_size=model.get_input_embeddings().weight.shape[0],
        embed_dim=cfg.d_model,
        max_len=max_len,
        mask_marker=marker,
        mask_token_id=marker_ids[0],
        decoder_start_id=cfg.decoder_start_token_id,
    )


def _token_ids(handle: BackendHandle, text: str) -> list[int]:
    try:
        return handle.tokenizer(text, add_special_tokens=True)["input_ids"]
    except Exception as e:
        raise DataError(f"tokenizer failed on {text!r}: {e}") from None


def encode(handle: BackendHandle, w: WrappedInput) -> list[int]:
    """Tokenize a wrapped input, shortening only the message portion.

    If the full render exceeds ``max_len``, binary-search the longest
    message prefix that fits. The template suffix (with the sentinel)
    is never cut.
    """
    ids = _token_ids(handle, w.text)
    if len(ids) > handle.max_len:
        content = w.content
        lo, hi = 0, len(content)  # chars kept; fit is monotone in hi
        while lo < hi:
            mid = (lo + hi + 1) // 2
            probe = _token_ids(handle, w.with_content(content[:mid]).text)
            if len(probe) <= handle.max_len:
                lo = mid
            else:
                hi = mid - 1
        ids = _token_ids(handle, w.with_content(content[:lo]).text)
        if len(ids) > handle.max_len:
            raise DataError(
                f"{w.source_id!r}: template alone exceeds max_len={handle.max_len}"
            )
    if ids.count(handle.mask_token_id) != 1:
        raise DataError(
            f"{w.source_id!r}: encoded sequence must contain the sentinel exactly once"
        )
    return ids


def forward_mask_batch(
    handle: BackendHandle, token_seqs: Sequence[Sequence[int]]
) -> list[MaskOutput]:
    """Mask-position distribution and hidden state for a batch of inputs."""
    if not token_seqs:
        return []
    for seq in token_seqs:
        if handle.mask_token_id not in seq:
            raise DataError("token sequence without the sentinel token")
    pad = handle.model.config.pad_token_id
    width = max(len(s) for s in token_seqs)
    input_ids = torch.full((len(token_seqs), width), pad, dtype=torch.long)
    attention = torch.zeros((len(token_seqs), width), dtype=torch.long)
    for i, seq in enumerate(token_seqs):
        input_ids[i, : len(seq)] = torch.tensor(list(seq), dtype=torch.long)
        attention[i, : len(seq)] = 1
    decoder_ids = torch.tensor(
        [[handle.decoder_start_id, handle.mask_token_id]] * len(token_seqs),
        dtype=torch.long,
    )
    handle.model.eval()
    with torch.no_grad():
        out = handle.model(
            input_ids=input_ids,
            attention_mask=attention,
            decoder_input_ids=decoder_ids,
            output_hidden_states=True,
        )
        logits = out.logits[:, -1, :].double()
        logprobs = torch.log_softmax(logits, dim=-1).numpy()
        hidden = out.decoder_hidden_states[-1][:, -1, :].double().numpy()
    return [MaskOutput(word_logprobs=lp, h=hv) for lp, hv in zip(logprobs, hidden)]


def forward_mask(handle: BackendHandle, tokens: Sequence[int]) -> MaskOutput:
    return forward_mask_batch(handle, [tokens])[0]


def embed_word(handle: BackendHandle, word: str) -> np.ndarray | None:
    """Mean input embedding of a word's subword pieces; None if unembeddable.

    A word whose every piece is the unknown token carries no information,
    so it reports as unembeddable rather than aliasing other such words.
    """
    ids = handle.tokenizer(word, add_special_tokens=False)["input_ids"]
    unk = handle.tokenizer.unk_token_id
    ids = [i for i in ids if i != unk]
    if not ids:
        return None
    table = handle.model.get_input_embeddings().weight.detach().double().numpy()
    return table[ids].mean(axis=0)


def trainable_params(
    handle: BackendHandle, mode: str, n_classes: int
) -> TrainableParams:
    """Count the scalars a tuning mode exposes to the optimizer."""
    if mode not in ("full", "prompt_only"):
        raise ConfigError(f"unknown tune mode {mode!r}")
    verb = n_classes * handle.embed_dim
    if mode == "prompt_only":
        return TrainableParams(mode=mode, backbone_count=0, verbalizer_count=verb)
    backbone = sum(p.numel() for p in handle.model.parameters())
    return TrainableParams(mode=mode, backbone_count=backbone, verbalizer_count=verb)


def backbone_checksum(handle: BackendHandle) -> str:
    """Digest over all backbone weights; detects any training mutation."""
    digest = hashlib.sha256()
    for name, param in sorted(handle.model.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().float().numpy().tobytes())
    return digest.hexdigest()


def denoise_pair(
    handle: BackendHandle, ids: Sequence[int], rng: random.Random
) -> tuple[list[int], list[int]] | None:
    """Single-span corruption of a token sequence for the auxiliary LM loss.

    One contiguous span (1-3 tokens) is replaced by a spare sentinel
    (``<extra_id_1>``, since the prompt may already hold ``<extra_id_0>``);
    the target is sentinel + span + eos. The prompt's own mask token is
    never part of the span. Sequences too short to corrupt return None.
    """
    eos = handle.tokenizer.eos_token_id
    spare = handle.tokenizer.convert_tokens_to_ids("<extra_id_1>")
    body = [i for i in ids if i != eos]
    if len(body) < 3:
        return None
    span = min(len(body) - 1, rng.randint(1, 3))
    starts = [
        s
        for s in range(len(body) - span + 1)
        if handle.mask_token_id not in body[s : s + span]
    ]
    if not starts:
        return None
    start = rng.choice(starts)
    corrupted = body[:start] + [spare] + body[start + span :] + [eos]
    target = [spare] + body[start : start + span] + [eos]
    return corrupted, target
