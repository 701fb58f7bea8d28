"""Build the tiny test checkpoint: word-level tokenizer + small T5,
pretrained with span denoising on the synthetic commit world.

The result lands in tests/fixtures/tiny_t5 and is what the test suite
loads instead of a hub checkpoint (the suite must run offline). After
training, the script verifies the fixture actually carries the signal
the tests rely on: single-token sentinel and label words, the sky/blue
regression probe, and zero-shot separation of core phrasings.
"""

from __future__ import annotations

import argparse
import random
import time
from pathlib import Path

import numpy as np
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import (
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from promptcc import synthdata
from promptcc.knowledge import expand_class, load_snapshot

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "tests" / "fixtures" / "tiny_t5"
SNAPSHOT = ROOT / "src" / "promptcc" / "data" / "related_words.jsonl"


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {"<pad>": 0, "</s>": 1, "<unk>": 2}
    for word in synthdata.all_words():
        vocab[word] = len(vocab)
    tk = Tokenizer(models.WordLevel(vocab=vocab, unk_token="<unk>"))
    tk.normalizer = normalizers.Lowercase()
    tk.pre_tokenizer = pre_tokenizers.Sequence(
        [pre_tokenizers.WhitespaceSplit(), pre_tokenizers.Punctuation()]
    )
    tk.post_processor = processors.TemplateProcessing(
        single="$A </s>", special_tokens=[("</s>", 1)]
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tk,
        pad_token="<pad>",
        eos_token="</s>",
        unk_token="<unk>",
        additional_special_tokens=[f"<extra_id_{i}>" for i in range(100)],
    )


def corrupt(ids: list[int], sentinel: int, rng: random.Random):
    if len(ids) < 3:
        return None
    span = min(len(ids) - 1, rng.randint(1, 3))
    start = rng.randint(0, len(ids) - span)
    inp = ids[:start] + [sentinel] + ids[start + span :] + [1]
    tgt = [sentinel] + ids[start : start + span] + [1]
    return inp, tgt


def batchify(items):
    wi = max(len(a) for a, _ in items)
    wt = max(len(b) for _, b in items)
    x = torch.zeros(len(items), wi, dtype=torch.long)
    am = torch.zeros_like(x)
    y = torch.full((len(items), wt), -100, dtype=torch.long)
    for i, (a, b) in enumerate(items):
        x[i, : len(a)] = torch.tensor(a)
        am[i, : len(a)] = 1
        y[i, : len(b)] = torch.tensor(b)
    return x, am, y


def pretrain(steps: int, seed: int) -> None:
    torch.manual_seed(seed)
    rng = random.Random(seed)
    tok = build_tokenizer()
    cfg = T5Config(
        vocab_size=len(tok),
        d_model=128,
        d_kv=32,
        d_ff=512,
        num_layers=3,
        num_decoder_layers=3,
        num_heads=4,
        dropout_rate=0.0,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=1,
        tie_word_embeddings=True,
    )
    model = T5ForConditionalGeneration(cfg)
    print(f"vocab {len(tok)}, params {sum(p.numel() for p in model.parameters())}")

    sentences = synthdata.pretraining_corpus(rng, 24000)
    encoded = [tok(s, add_special_tokens=False)["input_ids"] for s in sentences]
    sentinel = tok.convert_tokens_to_ids("<extra_id_0>")

    opt = torch.optim.AdamW(model.parameters(), lr=3e-4)
    model.train()
    t0 = time.time()
    for step in range(steps):
        items = []
        while len(items) < 48:
            pair = corrupt(rng.choice(encoded), sentinel, rng)
            if pair:
                items.append(pair)
        x, am, y = batchify(items)
        loss = model(input_ids=x, attention_mask=am, labels=y).loss
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 500 == 0 or step == steps - 1:
            print(f"step {step} loss {loss.item():.3f} ({time.time() - t0:.0f}s)")
    model.eval()
    OUT.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(OUT)
    tok.save_pretrained(OUT)
    print(f"saved to {OUT}")


def verify() -> None:
    from promptcc import backend as be
    from promptcc.corpus import CommitExample
    from promptcc.prompting import validate_template
    from promptcc.trainer import featurize
    from promptcc.verbalizer import build_prototype

    handle = be.load_backend(str(OUT), max_len=64)
    assert handle.embed_dim == 128

    snapshot = load_snapshot(SNAPSHOT)
    for word in snapshot.entries:
        ids = handle.tokenizer(word, add_special_tokens=False)["input_ids"]
        assert ids == [handle.tokenizer.convert_tokens_to_ids(word)], word
        assert ids[0] != handle.tokenizer.unk_token_id, f"{word} is unk"

    # probe: sky -> blue within top-20 fillers
    probe = handle.tokenizer("the sky is <extra_id_0> today", add_special_tokens=True)
    out = be.forward_mask(handle, probe["input_ids"])
    top20 = np.argsort(-out.word_logprobs)[:20]
    top_words = handle.tokenizer.convert_ids_to_tokens([int(t) for t in top20])
    assert "blue" in top_words, f"probe failed: {top_words[:10]}"

    # zero-shot floor on core phrasings for both label sets
    template = validate_template("{input} This commit is {mask}.")
    rng = random.Random(7)

    def zero_shot_acc(class_pools: dict[str, list[str]], n: int) -> float:
        classes = tuple(sorted(class_pools))
        from promptcc.corpus import LabelSpace

        labels = LabelSpace(classes=classes, dataset_id="probe")
        cands = [expand_class(snapshot, c, 20) for c in classes]
        verb = build_prototype(
            cands, lambda w: be.embed_word(handle, w), labels, trainable=False
        )
        examples = []
        for i in range(n):
            cls = rng.choice(classes)
            msg = synthdata._fill(rng, rng.choice(class_pools[cls]))
            examples.append(CommitExample(id=str(i), message=msg, label=cls))
        feats = featurize(handle, template, examples)
        H = np.stack([feats[ex.id] for ex in examples])
        pred = np.argmax(H @ verb.matrix.T, axis=1)
        gold = np.array([labels.index(ex.label) for ex in examples])
        return float((pred == gold).mean())

    acc3 = zero_shot_acc(
        {
            "Corrective": synthdata.CORRECTIVE_CORE,
            "Adaptive": synthdata.ADAPTIVE_CORE,
            "Perfective": synthdata.PERFECTIVE_CORE,
        },
        300,
    )
    ordinary = synthdata.CORRECTIVE_CORE + synthdata.ADAPTIVE_CORE + synthdata.PERFECTIVE_CORE
    acc2 = zero_shot_acc(
        {"Positive": synthdata.POSITIVE_CORE, "Negative": ordinary}, 300
    )
    print(f"zero-shot core accuracy: ternary {acc3:.3f}, binary {acc2:.3f}")
    assert acc3 >= 0.80, acc3
    assert acc2 >= 0.85, acc2
    print("fixture verified")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--verify-only", action="store_true")
    args = parser.parse_args()
    if not args.verify_only:
        pretrain(args.steps, args.seed)
    verify()
