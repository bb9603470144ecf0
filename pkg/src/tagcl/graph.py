"""Text-attributed graphs: data model, jsonl ingestion, splits, synthesis.

A graph is nodes with raw text attributes plus an undirected, unweighted
edge set. Node ids in files may be arbitrary integers; internally they are
remapped to dense 0..N-1 in first-seen order so matrices index cleanly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from tagcl.errors import GraphFormatError
from tagcl.rng import Rng, sample_without_replacement
from tagcl.sparse import SparseMatrixCSR, adjacency_from_edges


@dataclass(frozen=True)
class TextAttributedGraph:
    """Immutable graph; safe to share across threads once built.

    `edges` holds unordered pairs normalized to (low, high); no self-loops
    are stored (the encoder adds them during adjacency normalization).
    """

    node_count: int
    texts: tuple[str, ...]
    edges: frozenset[tuple[int, int]]
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be nonnegative")
        if len(self.texts) != self.node_count:
            raise ValueError(
                f"expected {self.node_count} texts, got {len(self.texts)}"
            )
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop ({a},{a}) in edge set")
            if a > b:
                raise ValueError(f"edge ({a},{b}) not normalized to (low, high)")
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise ValueError(f"edge ({a},{b}) out of range [0,{self.node_count})")
        if self.labels is not None:
            if len(self.labels) != self.node_count:
                raise ValueError(
                    f"expected {self.node_count} labels, got {len(self.labels)}"
                )
            if any(lbl < 0 for lbl in self.labels):
                raise ValueError("labels must be nonnegative class indices")

    @staticmethod
    def create(texts, edges, labels=None) -> "TextAttributedGraph":
        norm = frozenset((min(a, b), max(a, b)) for a, b in edges)
        return TextAttributedGraph(
            node_count=len(tuple(texts)),
            texts=tuple(texts),
            edges=norm,
            labels=None if labels is None else tuple(int(x) for x in labels),
        )

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            raise ValueError("graph has no labels")
        return max(self.labels) + 1 if self.labels else 0

    @cached_property
    def adjacency(self) -> SparseMatrixCSR:
        """Symmetric binary adjacency with a zero diagonal."""
        return adjacency_from_edges(self.node_count, sorted(self.edges))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(frozen=True)
class SplitAssignment:
    repeat_index: int
    train_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids overlap")


@dataclass(frozen=True)
class SyntheticSpec:
    """Stochastic-block-model stand-in for real text-attributed graphs."""

    classes: int
    nodes_per_class: int
    p_in: float
    p_out: float
    vocab_per_class: int
    tokens_per_node: int
    noise_token_fraction: float

    def __post_init__(self):
        for name in ("classes", "nodes_per_class", "vocab_per_class", "tokens_per_node"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("p_in", "p_out", "noise_token_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")


# ---------------------------------------------------------------------------
# file ingestion
# ---------------------------------------------------------------------------

def _read_jsonl(path: Path):
    try:
        raw = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise GraphFormatError("file not found", path=str(path)) from None
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"invalid JSON ({exc.msg})", str(path), lineno) from None
        if not isinstance(record, dict):
            raise GraphFormatError("record is not a JSON object", str(path), lineno)
        yield lineno, record


def _require_int(record, key, path, lineno):
    value = record.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise GraphFormatError(f"field {key!r} missing or not an integer", path, lineno)
    return value


def load_graph(nodes_path, edges_path) -> TextAttributedGraph:
    """Load a graph from line-delimited JSON node and edge files.

    Node records: {"id": int, "text": str, "label": int optional}. Edge
    records: {"src": int, "dst": int}. External ids are remapped to dense
    0..N-1 in first-seen order; duplicate and reversed edges collapse to
    one undirected edge; self-loop records are rejected.
    """
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    id_map: dict[int, int] = {}
    texts: list[str] = []
    labels: list[int | None] = []
    for lineno, record in _read_jsonl(nodes_path):
        ext_id = _require_int(record, "id", str(nodes_path), lineno)
        if ext_id in id_map:
            raise GraphFormatError(f"duplicate node id {ext_id}", str(nodes_path), lineno)
        text = record.get("text")
        if not isinstance(text, str):
            raise GraphFormatError("field 'text' missing or not a string", str(nodes_path), lineno)
        label = record.get("label")
        if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
            raise GraphFormatError("field 'label' not an integer", str(nodes_path), lineno)
        id_map[ext_id] = len(texts)
        texts.append(text)
        labels.append(label)

    labeled = [lbl is not None for lbl in labels]
    if any(labeled) and not all(labeled):
        missing = labeled.index(False) + 1
        raise GraphFormatError(
            "labels must be present on all nodes or none", str(nodes_path), missing
        )

    edges: set[tuple[int, int]] = set()
    for lineno, record in _read_jsonl(edges_path):
        src = _require_int(record, "src", str(edges_path), lineno)
        dst = _require_int(record, "dst", str(edges_path), lineno)
        if src == dst:
            raise GraphFormatError(f"self-loop edge on id {src}", str(edges_path), lineno)
        for ext in (src, dst):
            if ext not in id_map:
                raise GraphFormatError(f"edge references unknown node id {ext}", str(edges_path), lineno)
        a, b = id_map[src], id_map[dst]
        edges.add((min(a, b), max(a, b)))

    return TextAttributedGraph.create(
        texts=texts,
        edges=edges,
        labels=[lbl for lbl in labels] if all(labeled) and labels else None,
    )


def read_node_texts(nodes_path) -> list[str]:
    """Texts from a nodes file alone, in file order (no edges needed)."""
    texts = []
    for lineno, record in _read_jsonl(Path(nodes_path)):
        text = record.get("text")
        if not isinstance(text, str):
            raise GraphFormatError("field 'text' missing or not a string", str(nodes_path), lineno)
        texts.append(text)
    return texts


def save_graph(graph: TextAttributedGraph, nodes_path, edges_path) -> None:
    """Write a graph as jsonl files with dense internal ids."""
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    with nodes_path.open("w", encoding="utf-8") as fh:
        for i in range(graph.node_count):
            record = {"id": i, "text": graph.texts[i]}
            if graph.labels is not None:
                record["label"] = graph.labels[i]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    with edges_path.open("w", encoding="utf-8") as fh:
        for a, b in graph.sorted_edges():
            fh.write(json.dumps({"src": a, "dst": b}) + "\n")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _stratified_counts(labels, ids, total: int) -> dict[int, int]:
    """Largest-remainder allocation of `total` draws across classes."""
    classes: dict[int, int] = {}
    for i in ids:
        classes[labels[i]] = classes.get(labels[i], 0) + 1
    n = len(ids)
    quotas = {c: total * cnt / n for c, cnt in classes.items()}
    counts = {c: min(int(q), classes[c]) for c, q in quotas.items()}
    remaining = total - sum(counts.values())
    remainders = sorted(
        classes, key=lambda c: (-(quotas[c] - int(quotas[c])), c)
    )
    for c in remainders:
        if remaining <= 0:
            break
        if counts[c] < classes[c]:
            counts[c] += 1
            remaining -= 1
    return counts


def split_plan(
    n_nodes: int,
    labels,
    train_frac: float,
    test_frac: float,
    repeats: int,
    seed: int,
    stratified: bool = False,
) -> list[SplitAssignment]:
    """Repeated train/test node splits, deterministic given (seed, n_nodes).

    Train size is round-half-up of train_frac*N; the test pool is the
    remaining nodes and the test size is round-half-up of test_frac over
    that pool. Repeat r draws from a generator seeded with seed XOR r.
    """
    if labels is None:
        raise ValueError("splits require labels")
    if not (0.0 < train_frac < 1.0) or not (0.0 < test_frac <= 1.0):
        raise ValueError("fractions out of range")
    if train_frac + test_frac * (1.0 - train_frac) > 1.0 + 1e-12:
        raise ValueError("train and test fractions exceed the node budget")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    n_train = _round_half_up(train_frac * n_nodes)
    assignments = []
    for r in range(repeats):
        derived = (seed ^ r) & ((1 << 64) - 1)
        rng = Rng(derived)
        if stratified:
            counts = _stratified_counts(labels, range(n_nodes), n_train)
            train: list[int] = []
            for c in sorted(counts):
                members = [i for i in range(n_nodes) if labels[i] == c]
                picks = sample_without_replacement(rng, len(members), counts[c])
                train.extend(members[p] for p in picks)
            train_ids = tuple(sorted(train))
        else:
            train_ids = sample_without_replacement(rng, n_nodes, n_train)
        pool = sorted(set(range(n_nodes)) - set(train_ids))
        n_test = _round_half_up(test_frac * len(pool))
        picks = sample_without_replacement(rng, len(pool), n_test)
        test_ids = tuple(pool[p] for p in picks)
        assignments.append(
            SplitAssignment(repeat_index=r, train_ids=train_ids, test_ids=test_ids, seed=derived)
        )
    return assignments


def make_splits(
    graph: TextAttributedGraph,
    train_frac: float = 0.2,
    test_frac: float = 0.1,
    repeats: int = 5,
    seed: int = 0,
    stratified: bool = False,
) -> list[SplitAssignment]:
    if graph.labels is None:
        raise ValueError("cannot split an unlabeled graph")
    return split_plan(
        graph.node_count, graph.labels, train_frac, test_frac, repeats, seed, stratified
    )


# ---------------------------------------------------------------------------
# synthetic graphs
# ---------------------------------------------------------------------------

def generate_synthetic(spec: SyntheticSpec, seed: int) -> TextAttributedGraph:
    """Stochastic-block-model graph with class-conditioned token texts.

    Within-class pairs link with probability p_in, cross-class with p_out.
    Each node's text is tokens_per_node draws from its class vocabulary,
    with noise_token_fraction of draws replaced by tokens from a shared
    noise vocabulary (same size as a class vocabulary). Bitwise
    reproducible for a fixed seed.
    """
    rng = Rng(seed)
    n = spec.classes * spec.nodes_per_class
    labels = [i // spec.nodes_per_class for i in range(n)]

    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            p = spec.p_in if labels[i] == labels[j] else spec.p_out
            if p > 0.0 and rng.uniform() < p:
                edges.add((i, j))

    texts = []
    for i in range(n):
        c = labels[i]
        tokens = []
        for _ in range(spec.tokens_per_node):
            if rng.uniform() < spec.noise_token_fraction:
                tokens.append(f"noise{rng.randrange(spec.vocab_per_class)}")
            else:
                tokens.append(f"c{c}w{rng.randrange(spec.vocab_per_class)}")
        texts.append(" ".join(tokens))

    return TextAttributedGraph.create(texts=texts, edges=edges, labels=labels)
