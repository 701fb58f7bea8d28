"""Acceptance suite: one test per gating criterion.

Every test computes its own independent oracle (high-precision math,
exhaustive enumeration, brute-force counting, or byte comparison),
appends a one-line verdict that the terminal summary reprints, and then
asserts. Criteria AC1-AC7 and AC9 gate the build; AC8 checks that the
full-scale recipe is present and well-formed without executing it.
"""

from __future__ import annotations

import json
import py_compile
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import promptcc.backend as be
import promptcc.pipeline as pl
from promptcc.config import build_config, default_snapshot_path
from promptcc.corpus import LabelSpace
from promptcc.evaluation import compute_metrics
from promptcc.knowledge import CandidateSet, expand_class, load_snapshot
from promptcc.trainer import cross_entropy, prototype_loss_and_grad
from promptcc.verbalizer import build_prototype, softmax

REPO_ROOT = Path(__file__).resolve().parents[1]


def verdict(sink: list, ok: bool, name: str, detail: str) -> None:
    line = f"{name} {'PASS' if ok else 'FAIL'} ({detail})"
    sink.append(line)
    print(line)
    assert ok, line


# --- AC1: softmax + cross-entropy vs high-precision oracle ----------------


def test_ac1_verbalizer_math_oracle(acceptance_verdicts):
    from mpmath import mp, mpf

    mp.dps = 50
    rng = np.random.default_rng(7)
    t0 = time.monotonic()

    max_rel = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        logits = rng.uniform(-6.0, 6.0, size=n)
        probs = softmax(logits)
        exps = [mp.e ** mpf(float(z)) for z in logits]
        total = sum(exps)
        oracle = [e / total for e in exps]
        for p, o in zip(probs, oracle):
            max_rel = max(max_rel, abs((mpf(float(p)) - o) / o))
        gold = int(rng.integers(0, n))
        onehot = [1.0 if i == gold else 0.0 for i in range(n)]
        ce = cross_entropy(onehot, probs)
        ce_oracle = -mp.log(oracle[gold])
        max_rel = max(max_rel, abs((mpf(ce) - ce_oracle) / ce_oracle))

    max_abs = 0.0
    for case in range(10):
        dim = int(rng.integers(4, 17))
        classes = tuple(f"K{case}{j}" for j in range(int(rng.integers(2, 5))))
        table = {}
        cand_sets = []
        for cls in classes:
            words = [f"{cls.lower()}w{i}" for i in range(int(rng.integers(1, 7)))]
            for w in words:
                table[w] = rng.normal(size=dim)
            cand_sets.append(
                CandidateSet(
                    class_name=cls,
                    candidates=tuple((w, 1.0) for w in words),
                    size_limit=20,
                )
            )
        verb = build_prototype(
            cand_sets, embedder=table.get,
            labels=LabelSpace(classes=classes, dataset_id="oracle"),
        )
        for row, cand in zip(verb.matrix, cand_sets):
            vecs = [table[w] for w in cand.words]
            mean = [sum(float(v[d]) for v in vecs) / len(vecs) for d in range(dim)]
            max_abs = max(max_abs, max(abs(float(a) - b) for a, b in zip(row, mean)))

    elapsed = time.monotonic() - t0
    ok = max_rel < 1e-9 and max_abs < 1e-6 and elapsed < 60
    verdict(
        acceptance_verdicts, ok, "AC1",
        f"softmax/CE 1000 cases max rel err {float(max_rel):.2e} < 1e-9; "
        f"prototype means max abs err {max_abs:.2e} < 1e-6; {elapsed:.1f}s",
    )


# --- AC2: knowledge expansion vs exhaustive Jaccard ranking ----------------


def _parse_neighbor_sets(path: Path) -> dict[str, set[str]]:
    sets: dict[str, set[str]] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        word = obj["word"].lower()
        sets[word] = {str(n).lower() for n, _ in obj["neighbors"]} - {word}
    return sets


def _brute_rank(sets: dict[str, set[str]], class_name: str, n_kg: int):
    key = "".join(c for c in class_name.lower() if c.isalnum())
    base = sets[key]
    scored = []
    for word, nbs in sets.items():
        if word == key:
            continue
        union = base | nbs
        sim = len(base & nbs) / len(union) if union else 0.0
        if sim > 0.0:
            scored.append((word, sim))
    scored.sort(key=lambda ws: (-ws[1], ws[0]))
    return ((key, 1.0), *scored[: n_kg - 1])


def test_ac2_knowledge_ranking_oracle(acceptance_verdicts, tmp_path):
    t0 = time.monotonic()
    bundled = default_snapshot_path()
    snapshot = load_snapshot(bundled)
    sets = _parse_neighbor_sets(bundled)
    checked = 0
    for cls in ("Adaptive", "Corrective", "Perfective", "Positive", "Negative", "secure"):
        for n_kg in (5, 20):
            got = expand_class(snapshot, cls, n_kg).candidates
            assert got == _brute_rank(sets, cls, n_kg), (cls, n_kg)
            checked += 1

    for trial in range(25):
        rng = random.Random(1000 + trial)
        words = [f"w{i:02d}" for i in range(rng.randint(5, 30))]
        path = tmp_path / f"g{trial}.jsonl"
        with open(path, "w") as f:
            for w in words:
                nbs = rng.sample(words, k=rng.randint(0, min(8, len(words))))
                entry = {
                    "word": w,
                    "neighbors": [[n, round(rng.uniform(0.0, 1.0), 3)] for n in nbs],
                }
                f.write(json.dumps(entry) + "\n")
        snap = load_snapshot(path)
        osets = _parse_neighbor_sets(path)
        n_kg = (1, 3, 7, 50)[trial % 4]
        for key in rng.sample(words, k=3):
            got = expand_class(snap, key, n_kg).candidates
            assert got == _brute_rank(osets, key, n_kg), (trial, key, n_kg)
            checked += 1

    elapsed = time.monotonic() - t0
    ok = elapsed < 60
    verdict(
        acceptance_verdicts, ok, "AC2",
        f"exact ranking match on bundled snapshot ({len(snapshot)} nodes) + 25 "
        f"random graphs, {checked} expansions; {elapsed:.1f}s",
    )


# --- AC3: finite-difference gradient check ---------------------------------


def test_ac3_gradient_check(acceptance_verdicts):
    rng = np.random.default_rng(11)
    step = 1e-4
    worst = 0.0
    for _ in range(5):
        W = rng.normal(size=(3, 8))
        H = rng.normal(size=(12, 8))
        y = rng.integers(0, 3, size=12)
        _, grad = prototype_loss_and_grad(W, H, y)
        for i in range(3):
            for j in range(8):
                up, down = W.copy(), W.copy()
                up[i, j] += step
                down[i, j] -= step
                fd = (prototype_loss_and_grad(up, H, y)[0]
                      - prototype_loss_and_grad(down, H, y)[0]) / (2 * step)
                rel = abs(fd - grad[i, j]) / max(abs(fd), abs(grad[i, j]), 1e-8)
                worst = max(worst, rel)
    ok = worst < 1e-3
    verdict(
        acceptance_verdicts, ok, "AC3",
        f"central differences at step {step:g}, N=3 D=8, 5 draws: "
        f"max rel disagreement {worst:.2e} < 1e-3",
    )


# --- AC4: metrics vs brute-force counting -----------------------------------


def _counting_oracle(gold, pred, classes, averaging):
    idx = {c: i for i, c in enumerate(classes)}
    k, n = len(classes), len(gold)
    conf = [[0] * k for _ in range(k)]
    for g, p in zip(gold, pred):
        conf[idx[g]][idx[p]] += 1
    accuracy = float(sum(conf[i][i] for i in range(k))) / float(n)
    per, ps, rs, fs, supports = {}, [], [], [], []
    for i, cls in enumerate(classes):
        tp = float(conf[i][i])
        gold_i = float(sum(conf[i]))
        pred_i = float(sum(conf[r][i] for r in range(k)))
        p = tp / pred_i if pred_i > 0 else 0.0
        r = tp / gold_i if gold_i > 0 else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        per[cls] = (p, r, f, int(gold_i))
        ps.append(p), rs.append(r), fs.append(f), supports.append(gold_i)
    if averaging == "macro":
        agg = tuple(sum(v) / k for v in (ps, rs, fs))
    else:
        agg = tuple(
            sum(s * x for s, x in zip(supports, v)) / n for v in (ps, rs, fs)
        )
    return conf, accuracy, per, agg


def test_ac4_metric_oracle(acceptance_verdicts):
    rng = random.Random(13)
    worst_weighted = 0.0
    for case in range(500):
        k = rng.randint(2, 5)
        classes = tuple(f"C{i}" for i in range(k))
        n = rng.randint(1, 60)
        gold = [rng.choice(classes) for _ in range(n)]
        pred = [rng.choice(classes) for _ in range(n)]
        labels = LabelSpace(classes=classes, dataset_id="oracle")
        for averaging in ("macro", "weighted"):
            m = compute_metrics(gold, pred, labels, averaging)
            conf, accuracy, per, agg = _counting_oracle(gold, pred, classes, averaging)
            assert m.confusion.tolist() == conf, case
            assert m.accuracy == accuracy, case
            for cls in classes:
                cm = m.per_class[cls]
                assert (cm.precision, cm.recall, cm.f1, cm.support) == per[cls], case
            if averaging == "macro":
                assert (m.precision, m.recall, m.f1) == agg, case
            else:
                diffs = [abs(a - b) for a, b in zip((m.precision, m.recall, m.f1), agg)]
                worst_weighted = max(worst_weighted, *diffs)
                assert worst_weighted < 1e-12, case

    reference = [[73, 20, 7], [10, 84, 6], [9, 9, 82]]
    classes = ("Adaptive", "Corrective", "Perfective")
    gold, pred = [], []
    for i, row in enumerate(reference):
        for j, count in enumerate(row):
            gold += [classes[i]] * count
            pred += [classes[j]] * count
    m = compute_metrics(gold, pred, LabelSpace(classes=classes, dataset_id="ref"))
    recalls = [m.per_class[c].recall for c in classes]
    assert recalls == [0.73, 0.84, 0.82]

    verdict(
        acceptance_verdicts, True, "AC4",
        "500 random cases: counts, per-class P/R/F1, accuracy, macro means all "
        f"exact; weighted means within {worst_weighted:.1e}; reference confusion "
        "matrix gives per-class recalls 0.73/0.84/0.82",
    )


# --- AC5: byte-identical repeated run ---------------------------------------


def test_ac5_determinism(acceptance_verdicts, payload_for, tmp_path):
    t0 = time.monotonic()

    def one_run(tag: str) -> str:
        # everything constructed from scratch: backbone, splits, features
        config = build_config(payload_for("d1", n_way=2))
        handle = be.load_backend(config.backend.model_id, config.backend.max_len)
        prep = pl.prepare(config, handle=handle)
        record = pl.run_episode(
            prep, shot=10, seed=1, out_dir=tmp_path / tag, cache=pl.FeatureCache()
        )
        record.pop("wall_time_s")
        return json.dumps(record, sort_keys=True)

    first = one_run("first")
    second = one_run("second")
    elapsed = time.monotonic() - t0
    ok = first == second and elapsed < 900
    acc = json.loads(first)["accuracy"]
    verdict(
        acceptance_verdicts, ok, "AC5",
        f"2-way 10-shot run repeated from scratch: metrics JSON byte-identical, "
        f"accuracy {acc:.4f}; {elapsed:.1f}s < 900s",
    )


# --- AC6 + AC7: few-shot behaviour on the generated corpora -----------------


@pytest.fixture(scope="module")
def d2_sweep(d2_prep, d2_cache, tmp_path_factory):
    root = tmp_path_factory.mktemp("acc_sweep")
    cells = {}
    for shot in (5, 50):
        for seed in (1, 2, 3):
            cells[shot, seed] = pl.run_episode(
                d2_prep, shot, seed, root / f"shot{shot}-seed{seed}", cache=d2_cache
            )
    return cells


def test_ac6_more_shots_help(acceptance_verdicts, d2_sweep):
    mean5 = float(np.mean([d2_sweep[5, s]["accuracy"] for s in (1, 2, 3)]))
    mean50 = float(np.mean([d2_sweep[50, s]["accuracy"] for s in (1, 2, 3)]))
    ok = mean50 > mean5
    verdict(
        acceptance_verdicts, ok, "AC6",
        f"ternary dataset, mean accuracy over seeds 1-3: "
        f"50-shot {mean50:.4f} > 5-shot {mean5:.4f}",
    )


def test_ac7_sanity_floors(acceptance_verdicts, d2_sweep, d1_prep, d1_cache, tmp_path):
    f1_d2 = float(np.mean([d2_sweep[50, s]["f1"] for s in (1, 2, 3)]))
    rec_d1 = pl.run_episode(d1_prep, shot=50, seed=1, out_dir=tmp_path, cache=d1_cache)
    f1_d1 = rec_d1["f1"]
    ok = f1_d2 >= 0.55 and f1_d1 >= 0.60
    verdict(
        acceptance_verdicts, ok, "AC7",
        f"50-shot macro-F1: ternary {f1_d2:.4f} >= 0.55, binary {f1_d1:.4f} >= 0.60 "
        "(smoke floors for the tiny checkpoint, not full-scale results)",
    )


# --- AC8: full-scale recipe is present, compiles, refuses without data ------


def test_ac8_full_scale_recipe(acceptance_verdicts, tmp_path):
    script = REPO_ROOT / "scripts" / "full_scale_repro.py"
    assert script.exists()
    py_compile.compile(str(script), cfile=str(tmp_path / "c.pyc"), doraise=True)
    source = script.read_text(encoding="utf-8")
    assert "--dataset1" in source and "refus" in source

    help_run = subprocess.run(
        [sys.executable, str(script), "--help"], capture_output=True, text=True,
        timeout=120,
    )
    assert help_run.returncode == 0
    assert "--model-id" in help_run.stdout

    refuse = subprocess.run(
        [sys.executable, str(script), "--dataset1", str(tmp_path / "absent.csv")],
        capture_output=True, text=True, timeout=120,
    )
    assert refuse.returncode == 2
    assert "refusing" in refuse.stderr

    verdict(
        acceptance_verdicts, True, "AC8",
        "full-scale script present, compiles, documents usage, refuses without "
        "data; by design it is not executed here (needs GPU + real datasets)",
    )


# --- AC9: zero-shot path ----------------------------------------------------


def test_ac9_zero_shot(acceptance_verdicts, d1_prep, d1_cache, d2_prep, d2_cache):
    results = {}
    for prep, cache in ((d1_prep, d1_cache), (d2_prep, d2_cache)):
        verb, _ = pl.make_verbalizer(prep.config, prep.labels, prep.handle)
        feats = cache.ensure(prep.handle, prep.template, prep.test_pool)
        preds, probs = pl.predict_prototype(verb, feats, prep.test_pool)
        assert np.all(np.isfinite(probs))
        assert np.all(probs >= 0.0)
        assert float(np.abs(probs.sum(axis=1) - 1.0).max()) < 1e-9
        acc = float(np.mean([p == ex.label for p, ex in zip(preds, prep.test_pool)]))
        results[prep.labels.dataset_id] = (acc, 1.0 / len(prep.labels.classes))

    beats = [d for d, (acc, floor) in results.items() if acc > floor]
    detail = "; ".join(
        f"{d}: acc {acc:.4f} vs floor {floor:.3f}" for d, (acc, floor) in results.items()
    )
    verdict(
        acceptance_verdicts, len(beats) >= 1, "AC9",
        f"frozen initial prototypes give valid distributions on both test splits; {detail}",
    )
