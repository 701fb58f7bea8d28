"""Regenerate the bundled related-words snapshot from the synthetic world.

Writes src/promptcc/data/related_words.jsonl and sanity-checks that the
expansion of SECURE surfaces the expected security words and that the
graph stays small enough for exhaustive-oracle testing.
"""

from __future__ import annotations

import json
from pathlib import Path

from promptcc.knowledge import expand_class, load_snapshot
from promptcc.synthdata import related_words_graph

OUT = Path(__file__).resolve().parent.parent / "src" / "promptcc" / "data" / "related_words.jsonl"


def main() -> None:
    graph = related_words_graph()
    assert len(graph) <= 200, f"graph too large for oracle tests: {len(graph)} nodes"
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as f:
        for word in sorted(graph):
            entry = {"word": word, "neighbors": [[n, s] for n, s in graph[word]]}
            f.write(json.dumps(entry, sort_keys=True) + "\n")

    snapshot = load_snapshot(OUT)
    secure = expand_class(snapshot, "SECURE", 20)
    words = set(secure.words)
    for expected in ("safe", "ensure", "fix", "assurance"):
        assert expected in words, f"SECURE expansion missing {expected!r}: {secure.words}"
    for cls in ("Positive", "Negative", "Corrective", "Adaptive", "Perfective"):
        cand = expand_class(snapshot, cls, 20)
        assert len(cand.candidates) >= 5, f"{cls} expansion too small: {cand.words}"
    print(f"wrote {len(graph)} nodes to {OUT}")
    print("SECURE top candidates:", ", ".join(secure.words[:10]))


if __name__ == "__main__":
    main()
