"""Command-line interface.

Commands: ``build-verbalizer``, ``train``, ``eval``, ``predict``,
``sweep``, ``fetch-snapshot``. Exit codes: 0 ok, 2 configuration error,
3 data error, 4 anything else. Every config value can be overridden with
repeated ``--set section.key=value`` flags (CLI > file > defaults).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import ConfigError, DataError, PromptCCError


def _load_config(args):
    from .config import load_config

    return load_config(args.config, args.set or [])


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path(config.output_dir)


def cmd_build_verbalizer(args) -> int:
    from . import backend as be
    from .config import load_config
    from .corpus import load_dataset
    from .pipeline import make_verbalizer
    from .verbalizer import ManualVerbalizer, save_manual, save_prototype

    config = load_config(args.config, args.set or [])
    _examples, labels = load_dataset(config.dataset.path, config.dataset.schema)
    handle = None
    if config.verbalizer.kind == "knowledgeable":
        handle = be.load_backend(config.backend.model_id, config.backend.max_len)
    verbalizer, report = make_verbalizer(config, labels, handle)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(verbalizer, ManualVerbalizer):
        save_manual(verbalizer, out / "manual_verbalizer.json")
    else:
        save_prototype(verbalizer, out)
    (out / "report.txt").write_text(report, encoding="utf-8")
    print(report, end="")
    print(f"verbalizer written to {out}")
    return 0


def cmd_train(args) -> int:
    from .pipeline import prepare, train_checkpoint

    config = _load_config(args)
    prep = prepare(config)
    out = _out_dir(args, config)
    _path, state = train_checkpoint(prep, out)
    print(
        f"trained to epoch {state.epoch} "
        f"(best val acc {state.best_val_acc:.4f}, stop: {state.stopped_reason}); "
        f"checkpoint at {out}"
    )
    if state.diverged:
        print("warning: loss went non-finite; best earlier checkpoint kept", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    from .evaluation import metrics_record, write_json
    from .pipeline import evaluate_examples, load_checkpoint, prepare, run_episode

    config = _load_config(args)
    out = _out_dir(args, config)

    if args.checkpoint:
        manifest, handle, verbalizer, template = load_checkpoint(args.checkpoint)
        prep = prepare(config, handle=handle)
        if tuple(manifest["classes"]) != prep.labels.classes:
            raise ConfigError(
                f"checkpoint classes {manifest['classes']} do not match "
                f"dataset classes {list(prep.labels.classes)}"
            )
        metrics, _preds, _probs = evaluate_examples(
            handle, template, verbalizer, prep.test_pool,
            config.eval.averaging, config.train.batch_size,
        )
        shot = manifest.get("k_shot")
        record = metrics_record(
            metrics,
            dataset=prep.labels.dataset_id,
            model_id=manifest["model_id"],
            tune_mode=manifest["tune_mode"],
            verbalizer_kind=manifest["verbalizer_kind"],
            shot=-1 if shot is None else shot,
            seed=config.train.seed,
            wall_time_s=0.0,
        )
    elif args.zero_shot or config.k_shot == 0:
        prep = prepare(config)
        record = run_episode(prep, shot=0, seed=config.train.seed, out_dir=out)
    else:
        raise ConfigError("eval needs --checkpoint DIR, --zero-shot, or k_shot=0")

    out.mkdir(parents=True, exist_ok=True)
    write_json(record, out / "metrics.json")
    _write_confusion(record, out, args.image)
    print(
        f"accuracy {record['accuracy']:.4f}  f1 {record['f1']:.4f} "
        f"({record['averaging']}); metrics at {out / 'metrics.json'}"
    )
    return 0


def _write_confusion(record: dict, out: Path, image: bool) -> None:
    import numpy as np

    from .corpus import LabelSpace
    from .evaluation import compute_metrics

    classes = record["classes"]
    confusion = np.asarray(record["confusion"])
    gold, pred = [], []
    for i, row in enumerate(confusion):
        for j, count in enumerate(row):
            gold += [classes[i]] * int(count)
            pred += [classes[j]] * int(count)
    labels = LabelSpace(classes=tuple(classes), dataset_id=record["dataset"])
    metrics = compute_metrics(gold, pred, labels, record["averaging"])
    from .evaluation import confusion_report, render_confusion_image

    (out / "confusion.csv").write_text(confusion_report(metrics), encoding="utf-8")
    if image:
        render_confusion_image(metrics, out / "confusion.png")


def cmd_predict(args) -> int:
    from .pipeline import predict_rows

    messages = _read_messages(Path(args.input))
    rows = predict_rows(args.checkpoint, messages)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(
            f, fieldnames=["id", "message", "predicted_label", "class_probs"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    "id": row["id"],
                    "message": row["message"],
                    "predicted_label": row["predicted_label"],
                    "class_probs": json.dumps(row["class_probs"], sort_keys=True),
                }
            )
    print(f"wrote {len(rows)} predictions to {out}")
    return 0


def _read_messages(path: Path) -> list[tuple[str, str]]:
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    if path.suffix.lower() in (".csv", ".tsv"):
        delim = "\t" if path.suffix.lower() == ".tsv" else ","
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f, delimiter=delim)
            if reader.fieldnames is None or "message" not in reader.fieldnames:
                raise DataError(f"{path}: need a 'message' column")
            return [
                ((row.get("id") or str(i)), row["message"])
                for i, row in enumerate(reader)
            ]
    lines = path.read_text(encoding="utf-8").splitlines()
    return [(str(i), line) for i, line in enumerate(lines) if line.strip()]


def cmd_sweep(args) -> int:
    from .evaluation import run_sweep, summarize_sweep
    from .pipeline import FeatureCache, prepare, run_episode

    config = _load_config(args)
    prep = prepare(config)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    cache = FeatureCache()

    def run_cell(shot: int, seed: int) -> dict:
        return run_episode(
            prep, shot, seed, out / f"cell-shot{shot}-seed{seed}", cache=cache
        )

    result = run_sweep(
        config.eval.shots, config.eval.seeds, run_cell, out_path=out / "sweep.json"
    )
    summary = summarize_sweep(result)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    print(f"sweep results at {out / 'sweep.json'}")
    return 0


def cmd_fetch_snapshot(args) -> int:
    import urllib.error
    import urllib.parse
    import urllib.request

    words_file = Path(args.words)
    if not words_file.exists():
        raise DataError(f"word list not found: {words_file}")
    words = [w.strip().lower() for w in words_file.read_text().splitlines() if w.strip()]
    if not words:
        raise DataError(f"{words_file}: no words")
    entries = []
    for word in words:
        url = "https://relatedwords.org/api/related?" + urllib.parse.urlencode(
            {"term": word}
        )
        try:
            with urllib.request.urlopen(url, timeout=15) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as e:
            raise PromptCCError(
                f"fetching related words for {word!r} failed ({e}); "
                "this command needs network access"
            ) from None
        scores = [(str(p["word"]).lower(), float(p["score"])) for p in payload]
        top = max((s for _, s in scores), default=0.0)
        neighbors = [
            [w, round(s / top, 6)] for w, s in scores[: args.limit] if top > 0
        ]
        entries.append({"word": word, "neighbors": neighbors})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    print(f"wrote snapshot with {len(entries)} words to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptcc",
        description="Prompt-tuned commit classification with knowledge-enhanced verbalizers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override a config value, e.g. train.lr=0.05",
        )
        p.add_argument("--out", help="output directory (default: config output_dir)")

    p = sub.add_parser("build-verbalizer", help="expand label words and build verbalizer files")
    add_common(p)
    p.set_defaults(func=cmd_build_verbalizer)

    p = sub.add_parser("train", help="prompt-tune on the train split or one episode")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint or the zero-shot verbalizer")
    add_common(p)
    p.add_argument("--checkpoint", help="checkpoint directory from train")
    p.add_argument("--zero-shot", action="store_true", help="score frozen initial prototypes")
    p.add_argument("--image", action="store_true", help="also render confusion.png")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify raw messages with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV with a message column, or plain text lines")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="run the shots x seeds few-shot protocol")
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fetch-snapshot", help="build a knowledge snapshot from the public service (network)")
    p.add_argument("--words", required=True, help="file with one word per line")
    p.add_argument("--out", required=True, help="snapshot JSONL path to write")
    p.add_argument("--limit", type=int, default=80, help="neighbors kept per word")
    p.set_defaults(func=cmd_fetch_snapshot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except PromptCCError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except Exception as e:  # runtime failures map to 4, not a traceback
        print(f"unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
