"""Linear evaluation of frozen embeddings over repeated random splits.

A multinomial logistic-regression probe (hinge objective available
behind a flag) is trained full-batch on each split's train nodes and
scored on the test nodes with accuracy and macro precision/recall/F1;
the report aggregates mean and sample standard deviation over repeats.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tagcl.autodiff import (
    add,
    add_bias,
    backward,
    lift_parameters,
    logsumexp,
    matmul,
    multiply,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    subtract,
)
from tagcl.cache import canonical_json
from tagcl.graph import SplitAssignment, split_plan
from tagcl.optim import AdamState, adam_step

_METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


@dataclass(frozen=True)
class ProbeHyper:
    learning_rate: float = 0.01
    epochs: int = 200
    l2: float = 1e-4
    objective: str = "logistic"  # or "hinge"

    def __post_init__(self):
        if self.objective not in ("logistic", "hinge"):
            raise ValueError(f"unknown probe objective {self.objective!r}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.l2 < 0:
            raise ValueError("invalid probe hyperparameters")


@dataclass(frozen=True)
class ProbeParams:
    weight: np.ndarray  # d x C
    bias: np.ndarray    # C
    hyper: ProbeHyper
    loss_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class MetricRecord:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in _METRICS}


@dataclass(frozen=True)
class MetricsReport:
    per_repeat: tuple[MetricRecord, ...]
    means: dict[str, float]
    stds: dict[str, float]
    config_digest: str
    metadata: dict = field(default_factory=dict)


def _probe_loss(params, x, onehot, hyper: ProbeHyper):
    logits = add_bias(matmul(x, params["weight"]), params["bias"])
    true_logit = reduce_sum(multiply(logits, onehot), axis=1)
    if hyper.objective == "logistic":
        data_term = reduce_mean(subtract(logsumexp(logits, axis=1), true_logit))
    else:
        # Weston-Watkins multiclass hinge; the c == y column contributes
        # relu(1) = 1 and is masked out below.
        margins = relu(add(subtract(logits, reshape(true_logit, (-1, 1))), 1.0))
        data_term = scale(reduce_sum(multiply(margins, 1.0 - onehot)), 1.0 / x.shape[0])
    penalty = scale(reduce_sum(multiply(params["weight"], params["weight"])), hyper.l2)
    return add(data_term, penalty)


def train_linear_probe(
    embeddings: np.ndarray,
    labels,
    split: SplitAssignment,
    hyper: ProbeHyper = ProbeHyper(),
) -> ProbeParams:
    """Full-batch Adam on the split's train nodes only; zero-initialized."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train_ids = np.asarray(split.train_ids, dtype=np.int64)
    x = embeddings[train_ids]
    y = labels[train_ids]
    if len(np.unique(y)) < 2:
        raise ValueError("train split covers fewer than 2 classes")
    n_classes = int(labels.max()) + 1
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = 1.0

    arrays = {
        "weight": np.zeros((embeddings.shape[1], n_classes)),
        "bias": np.zeros(n_classes),
    }
    adam = AdamState()
    trace = []
    for _ in range(hyper.epochs):
        params = lift_parameters(arrays)
        loss = _probe_loss(params, x, onehot, hyper)
        if not np.isfinite(loss.value):
            raise ValueError("non-finite probe loss")
        trace.append(float(loss.value))
        grads = backward(loss)
        arrays, adam = adam_step(arrays, grads, adam, hyper.learning_rate)
    return ProbeParams(
        weight=arrays["weight"], bias=arrays["bias"], hyper=hyper, loss_trace=tuple(trace)
    )


def evaluate_probe(probe: ProbeParams, embeddings, labels, test_ids) -> MetricRecord:
    """Score argmax predictions; ties resolve to the lowest class index.

    Per-class precision/recall/F1 treat empty denominators as 0 and are
    averaged uniformly over all C classes, including classes absent from
    this test split.
    """
    test_ids = np.asarray(list(test_ids), dtype=np.int64)
    if len(test_ids) == 0:
        raise ValueError("empty test set")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    logits = embeddings[test_ids] @ probe.weight + probe.bias
    predicted = np.argmax(logits, axis=1)
    truth = labels[test_ids]
    n_classes = probe.weight.shape[1]

    accuracy = float(np.mean(predicted == truth))
    precisions, recalls, f1s = [], [], []
    for c in range(n_classes):
        tp = float(np.sum((predicted == c) & (truth == c)))
        fp = float(np.sum((predicted == c) & (truth != c)))
        fn = float(np.sum((predicted != c) & (truth == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    return MetricRecord(
        accuracy=accuracy,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
    )


def run_protocol(
    embeddings,
    labels,
    repeats: int = 5,
    seed: int = 0,
    train_frac: float = 0.2,
    test_frac: float = 0.1,
    hyper: ProbeHyper = ProbeHyper(),
    stratified: bool = False,
) -> MetricsReport:
    """Train and score a fresh probe on each repeated split, then aggregate.

    Deterministic given (embeddings, labels, seed, hyper): splits derive
    from seed XOR repeat index and the probe itself has no randomness.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    splits = split_plan(
        len(labels), labels.tolist(), train_frac, test_frac, repeats, seed, stratified
    )
    records = []
    for split in splits:
        probe = train_linear_probe(embeddings, labels, split, hyper)
        records.append(evaluate_probe(probe, embeddings, labels, split.test_ids))

    means, stds = {}, {}
    for name in _METRICS:
        values = np.array([getattr(r, name) for r in records])
        means[name] = float(values.mean())
        stds[name] = float(values.std(ddof=1)) if repeats > 1 else 0.0
    digest_source = canonical_json({
        "repeats": repeats,
        "seed": seed,
        "train_frac": train_frac,
        "test_frac": test_frac,
        "stratified": stratified,
        "hyper": {
            "learning_rate": hyper.learning_rate,
            "epochs": hyper.epochs,
            "l2": hyper.l2,
            "objective": hyper.objective,
        },
    })
    metadata = {"repeats": repeats, "seed": seed}
    if repeats == 1:
        metadata["std_convention"] = "reported as 0 for a single repeat"
    return MetricsReport(
        per_repeat=tuple(records),
        means=means,
        stds=stds,
        config_digest=hashlib.sha256(digest_source.encode("utf-8")).hexdigest(),
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_report(report: MetricsReport, path, format: str = "csv") -> None:
    """CSV keeps full float precision; markdown renders percent cells."""
    if not report.per_repeat:
        raise ValueError("refusing to write a report with no repeats")
    path = Path(path)
    if format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["metric", "mean", "std"]
                + [f"repeat_{i}" for i in range(len(report.per_repeat))]
            )
            for name in _METRICS:
                writer.writerow(
                    [name, repr(report.means[name]), repr(report.stds[name])]
                    + [repr(getattr(r, name)) for r in report.per_repeat]
                )
    elif format == "markdown":
        def cell(name: str) -> str:
            return f"{report.means[name] * 100:.2f} (std {report.stds[name] * 100:.2f})"

        lines = [
            "| Accuracy (%) | Precision (%) | Recall (%) | F1 (%) |",
            "| --- | --- | --- | --- |",
            "| " + " | ".join(cell(name) for name in _METRICS) + " |",
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path) -> MetricsReport:
    """Parse a CSV report back; values round-trip exactly."""
    rows = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_repeats = len(header) - 3
        for row in reader:
            rows[row[0]] = row[1:]
    records = []
    for i in range(n_repeats):
        records.append(MetricRecord(**{name: float(rows[name][2 + i]) for name in _METRICS}))
    means = {name: float(rows[name][0]) for name in _METRICS}
    stds = {name: float(rows[name][1]) for name in _METRICS}
    return MetricsReport(
        per_repeat=tuple(records),
        means=means,
        stds=stds,
        config_digest="",
        metadata={"source": str(path)},
    )
