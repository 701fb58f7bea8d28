"""Run configuration: JSON file + command-line overrides + defaults.

Precedence is CLI ``--set`` overrides > config file > built-in defaults.
Every unknown key is rejected by name, and cross-field requirements
(e.g. a manual verbalizer needs label words) are checked before any
work starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .backend import DEFAULT_MAX_LEN, DEFAULT_MODEL_ID
from .errors import ConfigError
from .knowledge import DEFAULT_N_KG
from .prompting import DEFAULT_PATTERN, PromptTemplate, load_templates, validate_template
from .trainer import TrainConfig

VERBALIZER_KINDS = ("manual", "knowledgeable")


@dataclass(frozen=True)
class DatasetConfig:
    path: str = ""
    schema: str = "generic_csv"
    split_seed: int = 0


@dataclass(frozen=True)
class VerbalizerConfig:
    kind: str = "knowledgeable"
    snapshot_path: str | None = None  # None -> bundled snapshot
    n_kg: int = DEFAULT_N_KG
    label_words: dict | None = None

    def __post_init__(self):
        if self.kind not in VERBALIZER_KINDS:
            raise ConfigError(
                f"verbalizer.kind must be one of {VERBALIZER_KINDS}, got {self.kind!r}"
            )
        if self.n_kg < 1:
            raise ConfigError(f"verbalizer.n_kg must be >= 1, got {self.n_kg}")
        if self.kind == "manual" and not self.label_words:
            raise ConfigError("verbalizer.label_words is required for the manual kind")


@dataclass(frozen=True)
class BackendConfig:
    model_id: str = DEFAULT_MODEL_ID
    max_len: int = DEFAULT_MAX_LEN


@dataclass(frozen=True)
class EvalConfig:
    averaging: str = "macro"
    seeds: tuple[int, ...] = (1, 2, 3)
    shots: tuple[int, ...] = (5, 10, 15, 20, 50)

    def __post_init__(self):
        if self.averaging not in ("macro", "weighted"):
            raise ConfigError(f"eval.averaging invalid: {self.averaging!r}")
        if not self.seeds or not self.shots:
            raise ConfigError("eval.seeds and eval.shots must be non-empty")
        if any(s < 0 for s in self.shots):
            raise ConfigError(f"eval.shots must be >= 0, got {self.shots}")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    template: str = DEFAULT_PATTERN
    verbalizer: VerbalizerConfig = field(default_factory=VerbalizerConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/out"
    n_way: int | None = None  # None -> all classes
    k_shot: int | None = None  # None -> full train split; 0 -> zero-shot

    def __post_init__(self):
        if not self.dataset.path:
            raise ConfigError("dataset.path is required")
        if self.n_way is not None and self.n_way < 2:
            raise ConfigError(f"n_way must be >= 2, got {self.n_way}")
        if self.k_shot is not None and self.k_shot < 0:
            raise ConfigError(f"k_shot must be >= 0, got {self.k_shot}")


def default_snapshot_path() -> Path:
    """Path of the knowledge snapshot bundled with the package."""
    return Path(resources.files("promptcc").joinpath("data/related_words.jsonl"))


def resolve_template(spec: str) -> PromptTemplate:
    """A string with slots is a pattern; otherwise it must be a template file."""
    if "{mask}" in spec:
        return validate_template(spec)
    path = Path(spec)
    if path.exists():
        return load_templates(path)[0]
    raise ConfigError(
        f"template {spec!r} is neither a pattern with a {{mask}} slot "
        "nor an existing file"
    )


_SECTIONS = {
    "dataset": DatasetConfig,
    "verbalizer": VerbalizerConfig,
    "backend": BackendConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}
_SCALAR_KEYS = ("template", "output_dir", "n_way", "k_shot")


def _build_section(cls, payload: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} config keys: {sorted(unknown)}")
    coerced = dict(payload)
    for f in fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    try:
        return cls(**coerced)
    except TypeError as e:
        raise ConfigError(f"bad {section} config: {e}") from None


def build_config(payload: dict) -> RunConfig:
    """Validate a plain dict (parsed JSON) into a RunConfig."""
    unknown = set(payload) - set(_SECTIONS) - set(_SCALAR_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        raw = payload.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        kwargs[section] = _build_section(cls, raw, section)
    for key in _SCALAR_KEYS:
        if key in payload:
            kwargs[key] = payload[key]
    return RunConfig(**kwargs)


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Parse a JSON config file and apply ``section.key=value`` overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top-level JSON object expected")
    return build_config(apply_overrides(payload, overrides or []))


def apply_overrides(payload: dict, overrides: list[str]) -> dict:
    """Apply ``a.b=value`` strings onto a config dict (values parsed as JSON
    when possible, else kept as strings)."""
    out = json.loads(json.dumps(payload))  # deep copy
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {item!r} has an empty key component")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-object")
        node[keys[-1]] = value
    return out
