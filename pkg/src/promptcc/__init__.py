"""Commit-message classification via prompt tuning.

Messages are wrapped into a template with a single mask slot; a
pretrained text-to-text model scores the mask filler; and a verbalizer
(hand-written label words, or prototype embeddings expanded through a
related-words graph) turns those scores into class probabilities.
"""

from .corpus import CommitExample, FewShotEpisode, LabelSpace
from .errors import ConfigError, DataError, PromptCCError
from .knowledge import CandidateSet, KnowledgeSnapshot, expand_class, jaccard, load_snapshot
from .prompting import PromptTemplate, WrappedInput, render, validate_template
from .trainer import TrainConfig, cross_entropy
from .verbalizer import (
    ManualVerbalizer,
    PrototypeVerbalizer,
    build_manual,
    build_prototype,
    manual_class_probs,
    prototype_class_probs,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "CommitExample",
    "ConfigError",
    "DataError",
    "FewShotEpisode",
    "KnowledgeSnapshot",
    "LabelSpace",
    "ManualVerbalizer",
    "PromptCCError",
    "PromptTemplate",
    "PrototypeVerbalizer",
    "TrainConfig",
    "WrappedInput",
    "build_manual",
    "build_prototype",
    "cross_entropy",
    "expand_class",
    "jaccard",
    "load_snapshot",
    "manual_class_probs",
    "prototype_class_probs",
    "render",
    "validate_template",
    "__version__",
]
