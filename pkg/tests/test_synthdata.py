"""The synthetic commit-message world: datasets, pretraining text, graph."""

from __future__ import annotations

import csv
import random
from collections import Counter

import promptcc.synthdata as sd

RARE_LEAD_VERBS = [
    "revert", "rollback", "undo", "silence",
    "bump", "pin", "swap", "retarget",
    "document", "simplify", "tidy", "modernize",
    "redact", "expire", "restrict", "audit",
]


class TestDatasets:
    def test_dataset1_counts(self):
        rows = sd.make_dataset1()
        assert len(rows) == 12694
        counts = Counter(r["label"] for r in rows)
        assert counts == {"Positive": 6347, "Negative": 6347}

    def test_dataset2_counts(self):
        rows = sd.make_dataset2()
        assert len(rows) == 1793
        counts = Counter(r["label"] for r in rows)
        assert counts == {"Corrective": 600, "Adaptive": 590, "Perfective": 603}

    def test_ids_unique_and_zero_padded(self):
        rows = sd.make_dataset2()
        ids = [r["id"] for r in rows]
        assert len(set(ids)) == len(ids)
        assert ids[0] == "d2-0000"
        assert all(len(i) == len("d2-0000") for i in ids)

    def test_deterministic_per_seed(self):
        assert sd.make_dataset2(seed=3) == sd.make_dataset2(seed=3)
        assert sd.make_dataset2(seed=3) != sd.make_dataset2(seed=4)

    def test_messages_nonempty(self):
        assert all(r["message"].strip() for r in sd.make_dataset2())

    def test_noise_pool_shared_across_classes(self):
        # the same neutral phrasings occur under every label
        rows = sd.make_dataset2()
        noise_leads = ("sync", "touch", "revise", "rework", "general", "misc",
                       "various", "weekly")
        labels_with_noise = {
            r["label"] for r in rows if r["message"].startswith(noise_leads)
        }
        assert labels_with_noise == {"Corrective", "Adaptive", "Perfective"}


class TestRareVsPretraining:
    def test_rare_verbs_absent_from_pretraining(self):
        text = " ".join(sd.pretraining_corpus(random.Random(0), 5000))
        words = set(text.split())
        for verb in RARE_LEAD_VERBS:
            assert verb not in words, verb

    def test_rare_verbs_present_in_datasets(self):
        d2 = " ".join(r["message"] for r in sd.make_dataset2())
        d1 = " ".join(r["message"] for r in sd.make_dataset1())
        corpus = set((d1 + " " + d2).split())
        for verb in RARE_LEAD_VERBS:
            assert verb in corpus, verb

    def test_pretraining_pairs_class_words(self):
        text = " ".join(sd.pretraining_corpus(random.Random(1), 4000))
        for word in ("corrective", "adaptive", "perfective", "secure", "routine"):
            assert word in text

    def test_probe_sentence_present(self):
        sents = sd.pretraining_corpus(random.Random(2), 2000)
        assert any("the sky is blue" in s for s in sents)


class TestGraph:
    def test_deterministic(self):
        assert sd.related_words_graph() == sd.related_words_graph()

    def test_scores_in_range(self):
        for neighbors in sd.related_words_graph().values():
            for _, score in neighbors:
                assert 0.0 < score <= 1.0

    def test_no_self_loops(self):
        for word, neighbors in sd.related_words_graph().items():
            assert word not in {nb for nb, _ in neighbors}

    def test_class_nodes_present(self):
        graph = sd.related_words_graph()
        for cls in ("positive", "negative", "corrective", "adaptive",
                    "perfective", "secure"):
            assert cls in graph

    def test_multi_cluster_word_unions_neighbors(self):
        graph = sd.related_words_graph()
        fix_nbs = {nb for nb, _ in graph["fix"]}
        assert "safe" in fix_nbs  # security cluster
        assert "bug" in fix_nbs  # corrective cluster


class TestVocabulary:
    def test_all_words_sorted_unique(self):
        words = sd.all_words()
        assert words == sorted(set(words))

    def test_placeholders_excluded(self):
        words = set(sd.all_words())
        assert not {"x", "w", "m"} & words

    def test_covers_datasets_and_pretraining(self):
        import re

        vocab = set(sd.all_words())
        emitted = set()
        for r in sd.make_dataset1() + sd.make_dataset2():
            emitted.update(re.findall(r"[a-z]+", r["message"]))
        for s in sd.pretraining_corpus(random.Random(0), 3000):
            emitted.update(re.findall(r"[a-z]+", s))
        assert emitted <= vocab


class TestWriter:
    def test_main_writes_both_csvs(self, tmp_path):
        assert sd.main([str(tmp_path)]) == 0
        for name, n in (("dataset1.csv", 12694), ("dataset2.csv", 1793)):
            with open(tmp_path / name, newline="") as f:
                rows = list(csv.DictReader(f))
            assert len(rows) == n
            assert set(rows[0]) == {"id", "message", "label"}
