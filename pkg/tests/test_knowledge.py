"""Knowledge snapshot parsing and neighbor-overlap label-word expansion."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptcc.config import default_snapshot_path
from promptcc.errors import DataError
from promptcc.knowledge import (
    CandidateSet,
    KnowledgeSnapshot,
    class_key,
    expand_class,
    jaccard,
    load_snapshot,
)


def write_snapshot(path, entries: dict[str, list]):
    lines = [
        json.dumps({"word": w, "neighbors": ns}) for w, ns in entries.items()
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def brute_force_expand(entries: dict[str, set], key: str, n_kg: int):
    """Reference ranking: plain-python Jaccard against every node."""
    base = entries[key]
    scored = []
    for word, neigh in entries.items():
        if word == key:
            continue
        inter = len(base & neigh)
        union = len(base | neigh)
        sim = inter / union if union else 0.0
        if sim > 0:
            scored.append((word, sim))
    scored.sort(key=lambda ws: (-ws[1], ws[0]))
    return ((key, 1.0),) + tuple(scored[: n_kg - 1])


def snapshot_file_sets(path) -> dict[str, set]:
    """Parse a snapshot file into neighbor sets without promptcc code."""
    entries = {}
    for line in open(path, encoding="utf-8"):
        if not line.strip():
            continue
        obj = json.loads(line)
        word = obj["word"].lower()
        entries[word] = {str(n).lower() for n, _ in obj["neighbors"] if str(n).lower() != word}
    return entries


class TestClassKey:
    @pytest.mark.parametrize(
        "name,key",
        [
            ("SECURE", "secure"),
            ("Corrective", "corrective"),
            ("Non-Functional", "nonfunctional"),
            ("two words", "twowords"),
        ],
    )
    def test_normalization(self, name, key):
        assert class_key(name) == key


class TestJaccard:
    def test_half_overlap(self):
        assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5

    def test_identical(self):
        assert jaccard({"x"}, {"x"}) == 1.0

    def test_disjoint(self):
        assert jaccard({"x"}, {"y"}) == 0.0

    def test_both_empty_defined_as_zero(self):
        assert jaccard(set(), set()) == 0.0

    @given(
        a=st.frozensets(st.integers(0, 20).map(str), max_size=8),
        b=st.frozensets(st.integers(0, 20).map(str), max_size=8),
    )
    def test_symmetric_and_bounded(self, a, b):
        s = jaccard(a, b)
        assert s == jaccard(b, a)
        assert 0.0 <= s <= 1.0

    @given(a=st.frozensets(st.integers(0, 20).map(str), min_size=1, max_size=8))
    def test_self_similarity_is_one(self, a):
        assert jaccard(a, a) == 1.0


class TestLoadSnapshot:
    def test_bundled_snapshot_loads(self):
        snap = load_snapshot(default_snapshot_path())
        assert len(snap) <= 200
        for word in ("secure", "positive", "negative", "corrective", "adaptive", "perfective"):
            assert word in snap

    def test_lowercased_and_self_loops_dropped(self, tmp_path):
        path = write_snapshot(
            tmp_path / "s.jsonl",
            {"Fix": [["Fix", 0.9], ["Bug", 0.8]]},
        )
        snap = load_snapshot(path)
        assert snap.neighbor_words("fix") == frozenset({"bug"})

    def test_duplicate_neighbors_keep_max_score(self, tmp_path):
        path = write_snapshot(
            tmp_path / "s.jsonl",
            {"secure": [["Fix", 0.7], ["fix", 0.5], ["safe", 0.9]]},
        )
        snap = load_snapshot(path)
        assert snap.entries["secure"] == (("safe", 0.9), ("fix", 0.7))

    def test_neighbors_sorted_by_score_then_word(self, tmp_path):
        path = write_snapshot(
            tmp_path / "s.jsonl",
            {"a": [["c", 0.5], ["b", 0.5], ["d", 0.8]]},
        )
        snap = load_snapshot(path)
        assert snap.entries["a"] == (("d", 0.8), ("b", 0.5), ("c", 0.5))

    def test_score_out_of_range(self, tmp_path):
        path = write_snapshot(tmp_path / "s.jsonl", {"a": [["b", 1.5]]})
        with pytest.raises(DataError, match="outside"):
            load_snapshot(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"word": "a", "neighbors": [["b", 0.5]]}\nnot json\n')
        with pytest.raises(DataError, match=r"s\.jsonl:2"):
            load_snapshot(path)

    def test_missing_keys_is_malformed(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text('{"term": "a"}\n')
        with pytest.raises(DataError, match="malformed"):
            load_snapshot(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.jsonl"
        path.write_text("\n\n")
        with pytest.raises(DataError, match="empty snapshot"):
            load_snapshot(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_snapshot(tmp_path / "gone.jsonl")


@pytest.fixture(scope="module")
def bundled():
    return load_snapshot(default_snapshot_path())


class TestExpandClass:
    def test_secure_expansion_contains_known_words(self, bundled):
        words = expand_class(bundled, "SECURE", 20).words
        for expected in ("safe", "ensure", "fix", "assurance"):
            assert expected in words

    def test_class_key_ranked_first(self, bundled):
        cand = expand_class(bundled, "Corrective", 20)
        assert cand.candidates[0] == ("corrective", 1.0)

    def test_matches_exhaustive_ranking(self, bundled):
        sets = snapshot_file_sets(default_snapshot_path())
        for cls in ("Positive", "Negative", "Corrective", "Adaptive", "Perfective"):
            got = expand_class(bundled, cls, 20).candidates
            want = brute_force_expand(sets, class_key(cls), 20)
            assert got == want

    def test_scores_non_increasing_and_capped(self, bundled):
        cand = expand_class(bundled, "Adaptive", 7)
        scores = [s for _, s in cand.candidates]
        assert scores == sorted(scores, reverse=True)
        assert len(cand.candidates) <= 7

    def test_n_kg_one_keeps_only_class_key(self, bundled):
        cand = expand_class(bundled, "Positive", 1)
        assert cand.candidates == (("positive", 1.0),)

    def test_zero_similarity_words_excluded(self, tmp_path):
        path = write_snapshot(
            tmp_path / "s.jsonl",
            {
                "secure": [["safe", 0.9], ["fix", 0.8]],
                "safe": [["secure", 0.9], ["fix", 0.6]],
                "island": [["ocean", 0.9]],
                "ocean": [["island", 0.9]],
            },
        )
        snap = load_snapshot(path)
        words = expand_class(snap, "secure", 10).words
        assert "safe" in words
        assert "island" not in words and "ocean" not in words

    def test_ties_break_lexicographically(self, tmp_path):
        # beta and zeta have identical neighbor sets, so identical scores
        path = write_snapshot(
            tmp_path / "s.jsonl",
            {
                "core": [["x", 0.5], ["y", 0.5]],
                "zeta": [["x", 0.5]],
                "beta": [["x", 0.5]],
            },
        )
        snap = load_snapshot(path)
        words = expand_class(snap, "core", 10).words
        assert words.index("beta") < words.index("zeta")

    def test_absent_class_degrades_with_warning(self, bundled):
        with pytest.warns(UserWarning, match="not in snapshot"):
            cand = expand_class(bundled, "Volcano", 20)
        assert cand.candidates == (("volcano", 1.0),)

    def test_bad_n_kg(self, bundled):
        with pytest.raises(DataError, match="n_kg"):
            expand_class(bundled, "Positive", 0)

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_random_graphs_match_oracle(self, data):
        words = [f"w{i}" for i in range(data.draw(st.integers(3, 12)))]
        entries = {}
        for w in words:
            others = [o for o in words if o != w]
            neigh = data.draw(
                st.lists(st.sampled_from(others), unique=True, max_size=len(others))
            )
            entries[w] = [[n, 0.5] for n in neigh]
        n_kg = data.draw(st.integers(1, 8))
        snap = KnowledgeSnapshot(
            entries={
                w: tuple(sorted(((n, s) for n, s in ns), key=lambda kv: (-kv[1], kv[0])))
                for w, ns in entries.items()
            }
        )
        key = data.draw(st.sampled_from(words))
        got = expand_class(snap, key, n_kg).candidates
        want = brute_force_expand({w: {n for n, _ in ns} for w, ns in entries.items()}, key, n_kg)
        assert got == want


class TestCandidateSet:
    def test_size_limit_enforced(self):
        with pytest.raises(DataError, match="exceed"):
            CandidateSet(
                class_name="A",
                candidates=(("a", 1.0), ("b", 0.5)),
                size_limit=1,
            )

    def test_scores_must_not_increase(self):
        with pytest.raises(DataError, match="non-increasing"):
            CandidateSet(
                class_name="A",
                candidates=(("a", 0.2), ("b", 0.5)),
                size_limit=5,
            )

    def test_words_property(self):
        cand = CandidateSet(
            class_name="A", candidates=(("a", 1.0), ("b", 0.5)), size_limit=5
        )
        assert cand.words == ("a", "b")
