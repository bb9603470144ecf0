"""InfoNCE contrastive training over two text views of one graph.

Per target node, the positive is its own augmented embedding and the
negatives are the original and augmented embeddings of other nodes from
the same mini-batch (2M terms for M sampled nodes). Losses use a
log-sum-exp form: -s_pos/tau + lse([s_pos/tau, s_negs/tau']) where tau'
is tau when tau_on_negatives is set and 1 otherwise.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from tagcl.autodiff import (
    Node,
    add,
    backward,
    concat,
    gather_rows,
    l2_normalize_rows,
    lift,
    logsumexp,
    matmul,
    reduce_mean,
    reshape,
    scale,
    subtract,
    transpose,
)
from tagcl.encoder import AdaptorConfig, EncoderStack, GCN, encoder_forward, init_params, propagation_matrix
from tagcl.errors import NumericsError
from tagcl.graph import TextAttributedGraph
from tagcl.optim import AdamState, adam_step
from tagcl.rng import Rng, mix_seed, sample_without_replacement

# Named sub-streams of the run seed; epochs use their own small indices.
_INIT_STREAM = (1 << 32) + 1
_NEG_STREAM = (1 << 32) + 2


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.5
    negatives_per_target: int | str = "all"  # "all" = whole batch minus the target
    tau_on_negatives: bool = True
    symmetric_views: bool = False

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        m = self.negatives_per_target
        if m != "all" and (not isinstance(m, int) or m < 1):
            raise ValueError("negatives_per_target must be 'all' or an integer >= 1")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    epochs: int = 10
    learning_rate: float = 2e-5
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    adaptor: AdaptorConfig = field(default_factory=AdaptorConfig)
    encoder_kind: str = GCN
    num_layers: int = 2
    hidden_dim: int = 256
    output_dim: int = 256

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        # 0 is tolerated (freezes the optimizer, useful as a control arm);
        # negative rates are always a bug.
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    stack: EncoderStack
    h_final: np.ndarray
    loss_trace: tuple[float, ...]
    epoch_seconds: tuple[float, ...]
    metadata: dict

    def __post_init__(self):
        if len(self.loss_trace) != len(self.epoch_seconds):
            raise ValueError("trace lengths disagree")


# ---------------------------------------------------------------------------
# similarity and loss
# ---------------------------------------------------------------------------

def cosine_sim(u, v) -> float:
    """Plain cosine similarity; zero if either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"cosine_sim expects equal-length vectors, got {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _cos_pair(u: Node, v: Node) -> Node:
    un = l2_normalize_rows(reshape(u, (1, -1)))
    vn = l2_normalize_rows(reshape(v, (1, -1)))
    return reshape(matmul(un, transpose(vn)), ())


def _cos_rows(u: Node, mat: Node) -> Node:
    un = l2_normalize_rows(reshape(u, (1, -1)))
    mn = l2_normalize_rows(mat)
    return reshape(matmul(mn, transpose(un)), (-1,))


def _nce_one_direction(anchor, positive, negs_o, negs_a, tau, tau_neg) -> Node:
    pos = scale(_cos_pair(anchor, positive), 1.0 / tau)
    logits = concat([
        reshape(pos, (1,)),
        scale(_cos_rows(anchor, negs_o), 1.0 / tau_neg),
        scale(_cos_rows(anchor, negs_a), 1.0 / tau_neg),
    ])
    return subtract(logsumexp(logits), pos)


def info_nce(anchor, positive, negatives_orig, negatives_aug, cfg: LossConfig) -> Node:
    """InfoNCE for one target: one positive pair against 2M view negatives."""
    anchor, positive = lift(anchor), lift(positive)
    negs_o, negs_a = lift(negatives_orig), lift(negatives_aug)
    if anchor.value.ndim != 1 or positive.value.shape != anchor.value.shape:
        raise ValueError("anchor and positive must be equal-length vectors")
    d = anchor.value.shape[0]
    if negs_o.value.ndim != 2 or negs_a.value.ndim != 2:
        raise ValueError("negatives must be M x d matrices")
    if negs_o.value.shape[1] != d or negs_a.value.shape[1] != d:
        raise ValueError("negative vectors length mismatch")
    m = negs_o.value.shape[0]
    if m < 1 or negs_a.value.shape[0] != m:
        raise ValueError("need M >= 1 negatives from each view")
    for arr in (anchor.value, positive.value, negs_o.value, negs_a.value):
        if not np.all(np.isfinite(arr)):
            raise NumericsError("non-finite similarity input")
    tau = cfg.temperature
    tau_neg = tau if cfg.tau_on_negatives else 1.0
    loss = _nce_one_direction(anchor, positive, negs_o, negs_a, tau, tau_neg)
    if cfg.symmetric_views:
        mirrored = _nce_one_direction(positive, anchor, negs_o, negs_a, tau, tau_neg)
        loss = scale(add(loss, mirrored), 0.5)
    return loss


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def plan_batches(n: int, batch_size: int, epoch: int, seed: int) -> list[list[int]]:
    """Seeded shuffle of 0..n-1, chunked; a trailing singleton merges backward."""
    if n < 2:
        raise ValueError("need at least 2 nodes to form batches")
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    rng = Rng(mix_seed(seed, epoch))
    order = list(range(n))
    rng.shuffle(order)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1].extend(tail)
    return batches


def sample_negatives(batch, target: int, m, rng: Rng) -> tuple[int, ...]:
    """Uniform M-subset of the batch excluding the target ("all" = everything)."""
    batch = list(batch)
    if target not in batch:
        raise ValueError(f"target {target} not in batch")
    candidates = [b for b in batch if b != target]
    if m == "all":
        return tuple(candidates)
    if not isinstance(m, int) or m < 1:
        raise ValueError("M must be 'all' or a positive integer")
    if m > len(candidates):
        raise ValueError(f"M={m} exceeds the {len(candidates)} available negatives")
    picks = sample_without_replacement(rng, len(candidates), m)
    return tuple(candidates[p] for p in picks)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def _row(node: Node, index: int) -> Node:
    return reshape(gather_rows(node, [index]), (-1,))


def train(
    graph: TextAttributedGraph,
    features: np.ndarray,
    features_aug: np.ndarray,
    cfg: TrainConfig,
) -> TrainResult:
    """Contrastive training of a shared encoder over both views.

    The propagation matrix is built once. Every step runs both views
    through the same parameters, averages per-target InfoNCE losses over
    the batch, and applies one Adam update. The returned embedding matrix
    is the original view's output under the final weights. Deterministic
    given cfg.seed.
    """
    features = np.asarray(features, dtype=np.float64)
    features_aug = np.asarray(features_aug, dtype=np.float64)
    if features.shape != features_aug.shape:
        raise ValueError(
            f"view shapes differ: {features.shape} vs {features_aug.shape}"
        )
    if features.shape[0] != graph.node_count:
        raise ValueError("feature rows do not match the node count")

    prop = propagation_matrix(graph.adjacency, cfg.encoder_kind)
    stack = init_params(
        Rng(mix_seed(cfg.seed, _INIT_STREAM)),
        input_dim=features.shape[1],
        hidden_dim=cfg.hidden_dim,
        output_dim=cfg.output_dim,
        num_layers=cfg.num_layers,
        kind=cfg.encoder_kind,
        adaptor=cfg.adaptor,
    )
    neg_rng = Rng(mix_seed(cfg.seed, _NEG_STREAM))
    adam = AdamState()

    loss_trace: list[float] = []
    epoch_seconds: list[float] = []
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        loss_sum = 0.0
        for batch_index, batch in enumerate(
            plan_batches(graph.node_count, cfg.batch_size, epoch, cfg.seed)
        ):
            params = stack.lift()
            out_orig = encoder_forward(prop, features, stack, params)
            out_aug = encoder_forward(prop, features_aug, stack, params)
            per_target = []
            for i in batch:
                negs = sample_negatives(batch, i, cfg.loss.negatives_per_target, neg_rng)
                per_target.append(reshape(info_nce(
                    _row(out_orig, i),
                    _row(out_aug, i),
                    gather_rows(out_orig, negs),
                    gather_rows(out_aug, negs),
                    cfg.loss,
                ), (1,)))
            batch_loss = reduce_mean(concat(per_target))
            if not np.isfinite(batch_loss.value):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            grads = backward(batch_loss)
            new_params, adam = adam_step(stack.params, grads, adam, cfg.learning_rate)
            stack = stack.with_params(new_params)
            loss_sum += float(batch_loss.value) * len(batch)
        loss_trace.append(loss_sum / graph.node_count)
        epoch_seconds.append(time.perf_counter() - started)

    h_final = encoder_forward(prop, features, stack).value
    metadata = {
        "seed": cfg.seed,
        "encoder_kind": cfg.encoder_kind,
        "num_layers": cfg.num_layers,
        "hidden_dim": cfg.hidden_dim,
        "output_dim": cfg.output_dim,
        "input_dim": features.shape[1],
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "temperature": cfg.loss.temperature,
        "negatives_per_target": cfg.loss.negatives_per_target,
        "tau_on_negatives": cfg.loss.tau_on_negatives,
        "symmetric_views": cfg.loss.symmetric_views,
        "adaptor_enabled": cfg.adaptor.enabled,
        "adaptor_out_dim": cfg.adaptor.out_dim,
    }
    return TrainResult(
        stack=stack,
        h_final=h_final,
        loss_trace=tuple(loss_trace),
        epoch_seconds=tuple(epoch_seconds),
        metadata=metadata,
    )


def write_trace(result: TrainResult, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "wall_seconds"])
        for epoch, (loss, secs) in enumerate(
            zip(result.loss_trace, result.epoch_seconds)
        ):
            writer.writerow([epoch, repr(loss), repr(secs)])
