"""Contrastive representation learning on text-attributed graphs.

The pipeline: augment node texts through an LLM (or a deterministic mock),
encode original and augmented texts into feature matrices, train a shared
graph encoder with an InfoNCE objective, and score the frozen embeddings
with a repeated-split linear probe.
"""

__version__ = "0.1.0"

from tagcl.graph import TextAttributedGraph, SyntheticSpec, SplitAssignment
from tagcl.augment import AugmentationKind, AugmentationRecord, AugmentedCorpus
from tagcl.contrastive import LossConfig, TrainConfig, TrainResult
from tagcl.evaluate import MetricsReport

__all__ = [
    "TextAttributedGraph",
    "SyntheticSpec",
    "SplitAssignment",
    "AugmentationKind",
    "AugmentationRecord",
    "AugmentedCorpus",
    "LossConfig",
    "TrainConfig",
    "TrainResult",
    "MetricsReport",
    "__version__",
]
