"""Synthetic commit-message world for desk-scale runs and tests.

Generates two datasets that mirror the shapes of the public corpora this
package targets:

* dataset 1 -- binary security relevance, 12694 rows, labels
  ``Positive``/``Negative`` (6347 each);
* dataset 2 -- ternary maintenance type, 1793 rows, labels
  ``Corrective`` (600) / ``Adaptive`` (590) / ``Perfective`` (603).

Each class mixes three kinds of messages: *core* phrasings (also used to
pretrain the tiny fixture checkpoint, so zero-shot already separates
them), *rare* phrasings whose key verbs never occur in pretraining text
(only labeled examples can teach them -- this is what makes more shots
help), and *noise* phrasings drawn from one shared neutral pool for every
class (irreducible error).

The same module defines the related-words graph used to build the
bundled knowledge snapshot, so tokenizer vocabulary, pretraining text,
datasets, and graph stay mutually consistent.
"""

from __future__ import annotations

import argparse
import csv
import random
import re
from pathlib import Path

NOUNS = [
    "user", "login", "profile", "payment", "database", "image", "cache",
    "parser", "search", "session", "config", "report", "upload", "account",
    "admin", "dashboard", "export", "network", "storage", "api", "queue",
    "index", "form", "token", "invoice",
]

# words paired with each class in fixture pretraining ("this commit is <w>")
CLASS_WORDS = {
    "corrective": ["corrective", "fixed", "repaired", "corrected", "debugged", "remedial"],
    "adaptive": ["adaptive", "migrated", "ported", "adjusted", "converted", "updated"],
    "perfective": ["perfective", "enhanced", "improved", "optimized", "polished", "refined"],
    "positive": ["secure", "safe", "protected", "hardened", "guarded", "defensive"],
    "negative": ["routine", "ordinary", "mundane", "regular", "everyday", "plain"],
}

CORRECTIVE_CORE = [
    "fix crash in {m}",
    "fixed null pointer error in {m}",
    "resolve bug in {m}",
    "patch memory leak in {m}",
    "fix regression in {m} handling",
    "correct faulty {m} validation",
    "fixed exception when {m} is empty",
    "resolve race condition in {m}",
    "fix critical bug in {m}",
    "repair broken {m} logic",
]
ADAPTIVE_CORE = [
    "migrate {m} to the new framework",
    "update {m} for the latest library version",
    "port {m} to the updated runtime",
    "adapt {m} to the changed api",
    "convert {m} to the new schema",
    "switch {m} to the newer protocol",
    "migrate {m} storage to the new backend",
    "update {m} client for protocol changes",
    "adapt {m} reader to the revised format",
    "port {m} module to the current platform",
]
PERFECTIVE_CORE = [
    "add new {m} feature",
    "introduce new {m} page",
    "implement {m} gateway feature",
    "extend {m} with export capability",
    "improve {m} documentation and examples",
    "polish {m} layout and styling",
    "optimize {m} for faster loading",
    "refactor {m} for readability",
    "enhance {m} progress reporting",
    "add {m} endpoint to the api",
]
POSITIVE_CORE = [
    "add encryption to stored {m} passwords",
    "fix xss vulnerability in {m} page",
    "sanitize {m} input to prevent injection",
    "remove exposed {m} endpoint",
    "update {m} library to fix security vulnerability",
    "harden {m} authentication checks",
    "rotate leaked {m} credentials",
    "patch {m} exploit in session handling",
    "enforce https for {m} requests",
    "escape {m} output to block script attacks",
]

# rare phrasings: the lead verbs below never appear in pretraining text
CORRECTIVE_RARE = [
    "revert {m} change",
    "rollback {m} deployment",
    "undo accidental {m} deletion",
    "silence spurious {m} warnings",
]
ADAPTIVE_RARE = [
    "bump {m} dependency to current release",
    "pin {m} package version",
    "swap {m} backend implementation",
    "retarget {m} build to the new toolchain",
]
PERFECTIVE_RARE = [
    "document {m} module internals",
    "simplify {m} logic",
    "tidy {m} imports",
    "modernize {m} codebase style",
]
POSITIVE_RARE = [
    "redact {m} values from logs",
    "expire stale {m} sessions",
    "restrict {m} permissions",
    "audit {m} access trail",
]

# shared neutral pool: assigned to whichever class needs its quota filled
NOISE_POOL = [
    "sync {m} data",
    "touch {m} files",
    "revise {m} module",
    "rework {m} layer",
    "general work on {m}",
    "misc {m} updates",
    "various {m} changes",
    "weekly {m} cleanup",
]

# pretraining-only security sentences that teach the snapshot's extra
# candidate words (ensure, assurance, shield, defense) a security context
POSITIVE_PRETRAIN_ONLY = [
    "ensure {m} access stays safe",
    "provide assurance for {m} integrity",
    "shield {m} from external attacks",
    "strengthen {m} defense layer",
]

PROBES = [
    "the sky is blue today",
    "the sky is blue",
    "rain falls and the sky is blue",
    "the grass is green and the sky is blue",
]

PAIR_PATTERNS = [
    "{x} . this commit is {w} .",
    "{x} this commit is {w} .",
    "{x} and the commit is {w}",
    "the change is {w} : {x}",
]

_SUFFIXES = ["", " in the {m2} service", " for the {m2} module"]

CORE3 = {
    "Corrective": CORRECTIVE_CORE,
    "Adaptive": ADAPTIVE_CORE,
    "Perfective": PERFECTIVE_CORE,
}
RARE3 = {
    "Corrective": CORRECTIVE_RARE,
    "Adaptive": ADAPTIVE_RARE,
    "Perfective": PERFECTIVE_RARE,
}

DATASET1_COUNTS = {"Positive": 6347, "Negative": 6347}
DATASET2_COUNTS = {"Corrective": 600, "Adaptive": 590, "Perfective": 603}


def _fill(rng: random.Random, template: str) -> str:
    noun = rng.choice(NOUNS)
    text = template.format(m=noun)
    suffix = rng.choice(_SUFFIXES)
    if suffix:
        others = [n for n in NOUNS if n != noun]
        text += suffix.format(m2=rng.choice(others))
    return text


def _bucket_counts(total: int, core_frac: float, rare_frac: float) -> tuple[int, int, int]:
    n_core = int(total * core_frac)
    n_rare = int(total * rare_frac)
    return n_core, n_rare, total - n_core - n_rare


def _rows_for_class(
    rng: random.Random,
    label: str,
    total: int,
    core_pool: list[str],
    rare_pool: list[str],
    core_frac: float,
    rare_frac: float,
) -> list[tuple[str, str]]:
    n_core, n_rare, n_noise = _bucket_counts(total, core_frac, rare_frac)
    rows = []
    for pool, count in ((core_pool, n_core), (rare_pool, n_rare), (NOISE_POOL, n_noise)):
        for _ in range(count):
            rows.append((_fill(rng, rng.choice(pool)), label))
    return rows


def _assemble(rng: random.Random, rows: list[tuple[str, str]], prefix: str) -> list[dict]:
    rng.shuffle(rows)
    width = len(str(len(rows) - 1))
    return [
        {"id": f"{prefix}-{i:0{width}d}", "message": msg, "label": label}
        for i, (msg, label) in enumerate(rows)
    ]


def make_dataset1(seed: int = 0) -> list[dict]:
    """Binary security-relevance rows: 6347 Positive + 6347 Negative."""
    rng = random.Random(seed)
    ordinary_core = CORRECTIVE_CORE + ADAPTIVE_CORE + PERFECTIVE_CORE
    ordinary_rare = CORRECTIVE_RARE + ADAPTIVE_RARE + PERFECTIVE_RARE
    rows = _rows_for_class(
        rng, "Positive", DATASET1_COUNTS["Positive"],
        POSITIVE_CORE, POSITIVE_RARE, core_frac=0.70, rare_frac=0.18,
    )
    rows += _rows_for_class(
        rng, "Negative", DATASET1_COUNTS["Negative"],
        ordinary_core, ordinary_rare, core_frac=0.70, rare_frac=0.18,
    )
    return _assemble(rng, rows, "d1")


def make_dataset2(seed: int = 0) -> list[dict]:
    """Ternary maintenance-type rows: 600/590/603 = 1793 total."""
    rng = random.Random(seed)
    rows: list[tuple[str, str]] = []
    for label, total in DATASET2_COUNTS.items():
        rows += _rows_for_class(
            rng, label, total, CORE3[label], RARE3[label],
            core_frac=0.60, rare_frac=0.25,
        )
    return _assemble(rng, rows, "d2")


def write_dataset(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "message", "label"])
        writer.writeheader()
        writer.writerows(rows)


def pretraining_corpus(rng: random.Random, n: int) -> list[str]:
    """Sentences for fixture-checkpoint pretraining.

    Pairs core phrasings with their class words so the mask slot learns
    the association; rare-pool verbs are deliberately absent.
    """
    maintenance = [
        ("corrective", CORRECTIVE_CORE),
        ("adaptive", ADAPTIVE_CORE),
        ("perfective", PERFECTIVE_CORE),
    ]
    security_pool = POSITIVE_CORE + POSITIVE_PRETRAIN_ONLY
    ordinary_pool = CORRECTIVE_CORE + ADAPTIVE_CORE + PERFECTIVE_CORE
    plain_pool = ordinary_pool + POSITIVE_CORE + NOISE_POOL + POSITIVE_PRETRAIN_ONLY
    out = []
    for _ in range(n):
        r = rng.random()
        if r < 0.45:
            cls, pool = rng.choice(maintenance)
            x = _fill(rng, rng.choice(pool))
            w = rng.choice(CLASS_WORDS[cls])
            out.append(rng.choice(PAIR_PATTERNS).format(x=x, w=w))
        elif r < 0.70:
            if rng.random() < 0.5:
                x = _fill(rng, rng.choice(security_pool))
                w = rng.choice(CLASS_WORDS["positive"])
            else:
                x = _fill(rng, rng.choice(ordinary_pool))
                w = rng.choice(CLASS_WORDS["negative"])
            out.append(rng.choice(PAIR_PATTERNS).format(x=x, w=w))
        elif r < 0.90:
            out.append(_fill(rng, rng.choice(plain_pool)))
        else:
            out.append(rng.choice(PROBES))
    return out


# related-words graph: near-clique clusters; class nodes sit inside the
# cluster that carries their candidate words
_GRAPH_CLUSTERS = {
    "secure": [
        "secure", "safe", "ensure", "fix", "assurance", "protected", "guarded",
        "harden", "encryption", "defense", "shield", "sanitize",
    ],
    "insecure": [
        "insecure", "vulnerable", "exposed", "leaked", "unsafe", "risky",
        "exploitable", "breach", "attack",
    ],
    "positive": [
        "positive", "secure", "safe", "protected", "hardened", "guarded",
        "defensive", "encryption", "harden",
    ],
    "negative": [
        "negative", "routine", "ordinary", "mundane", "regular", "everyday",
        "plain", "typical", "usual",
    ],
    "corrective": [
        "corrective", "fixed", "repaired", "corrected", "debugged", "remedial",
        "fix", "bug", "crash", "error", "patch", "resolve",
    ],
    "adaptive": [
        "adaptive", "migrated", "ported", "adjusted", "converted", "updated",
        "migrate", "port", "adapt", "convert", "switch", "platform",
    ],
    "perfective": [
        "perfective", "enhanced", "improved", "optimized", "polished", "refined",
        "add", "extend", "improve", "polish", "refactor", "feature",
    ],
    # filler neighborhoods so rankings compete against unrelated words
    "storage": ["storage", "database", "cache", "index", "queue", "disk", "memory", "archive"],
    "interface": ["interface", "dashboard", "page", "layout", "form", "styling", "widget"],
    "network": ["network", "request", "endpoint", "api", "protocol", "socket", "gateway"],
    "identity": ["identity", "user", "account", "profile", "admin", "session", "login"],
    "artifact": ["artifact", "report", "export", "upload", "image", "search", "invoice"],
}


def related_words_graph() -> dict[str, list[tuple[str, float]]]:
    """Word -> [(neighbor, score)] with deterministic scores.

    A word belonging to several clusters (e.g. "fix") gets the union of
    their members as neighbors.
    """
    rng = random.Random(42)
    neighbor_sets: dict[str, set[str]] = {}
    for members in _GRAPH_CLUSTERS.values():
        for w in members:
            neighbor_sets.setdefault(w, set()).update(m for m in members if m != w)
    graph = {}
    for word in sorted(neighbor_sets):
        scored = [
            (nb, round(rng.uniform(0.35, 0.95), 3))
            for nb in sorted(neighbor_sets[word])
        ]
        scored.sort(key=lambda p: (-p[1], p[0]))
        graph[word] = scored
    return graph


def all_words() -> list[str]:
    """Every word the synthetic world can emit (tokenizer vocabulary)."""
    words: set[str] = set()

    def harvest(text: str) -> None:
        words.update(re.findall(r"[a-z]+", text.lower()))

    for pool in (
        CORRECTIVE_CORE, ADAPTIVE_CORE, PERFECTIVE_CORE, POSITIVE_CORE,
        CORRECTIVE_RARE, ADAPTIVE_RARE, PERFECTIVE_RARE, POSITIVE_RARE,
        NOISE_POOL, POSITIVE_PRETRAIN_ONLY, PROBES, PAIR_PATTERNS, _SUFFIXES,
    ):
        for t in pool:
            harvest(t)
    for family in CLASS_WORDS.values():
        words.update(family)
    words.update(NOUNS)
    for word, neighbors in related_words_graph().items():
        words.add(word)
        words.update(nb for nb, _ in neighbors)
    words.discard("x")  # pattern placeholder residue
    words.discard("w")
    words.discard("m")
    return sorted(words)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Write the synthetic commit datasets as CSV files."
    )
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    write_dataset(make_dataset1(args.seed), args.out_dir / "dataset1.csv")
    write_dataset(make_dataset2(args.seed), args.out_dir / "dataset2.csv")
    print(f"wrote dataset1.csv and dataset2.csv under {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
