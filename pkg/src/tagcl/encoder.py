"""Graph encoders: adjacency normalization, GCN, GraphSAGE-mean, adaptor.

One encoder stack serves both the original and the augmented view; there
are no per-view parameters anywhere. The optional adaptor is a single
linear layer between the frozen text features and the first graph layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tagcl import matrixio
from tagcl.autodiff import (
    Node,
    add,
    add_bias,
    lift,
    lift_parameters,
    matmul,
    relu,
    sparse_dense_matmul,
)
from tagcl.rng import Rng
from tagcl.sparse import SparseMatrixCSR, csr_from_arrays, is_symmetric

GCN = "gcn"
SAGE_MEAN = "sage-mean"
_KINDS = (GCN, SAGE_MEAN)


@dataclass(frozen=True)
class AdaptorConfig:
    enabled: bool = False
    out_dim: int = 256

    def __post_init__(self):
        if self.out_dim < 1:
            raise ValueError("adaptor out_dim must be >= 1")


@dataclass
class EncoderStack:
    """Trainable parameters plus the wiring needed to run them.

    `params` maps stable names ("adaptor.weight", "layers.0.weight", ...)
    to float64 arrays; insertion order is the checkpoint tensor order.
    """

    kind: str
    input_dim: int
    layer_dims: list[tuple[int, int]]
    adaptor: AdaptorConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims)

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1][1]

    def lift(self) -> dict[str, Node]:
        """Fresh trainable nodes for one training step."""
        return lift_parameters(self.params)

    def with_params(self, params: dict[str, np.ndarray]) -> "EncoderStack":
        if set(params) != set(self.params):
            raise ValueError("parameter name set changed")
        return EncoderStack(self.kind, self.input_dim, list(self.layer_dims), self.adaptor, dict(params))

    def save(self, path) -> None:
        meta = {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "layer_dims": [list(d) for d in self.layer_dims],
            "adaptor_enabled": self.adaptor.enabled,
            "adaptor_out_dim": self.adaptor.out_dim,
        }
        matrixio.write_checkpoint(self.params, meta, path)

    @staticmethod
    def load(path) -> "EncoderStack":
        tensors, meta = matrixio.read_checkpoint(path)
        return EncoderStack(
            kind=meta["kind"],
            input_dim=meta["input_dim"],
            layer_dims=[tuple(d) for d in meta["layer_dims"]],
            adaptor=AdaptorConfig(meta["adaptor_enabled"], meta["adaptor_out_dim"]),
            params=tensors,
        )


def init_params(
    rng: Rng,
    input_dim: int,
    hidden_dim: int = 256,
    output_dim: int = 256,
    num_layers: int = 2,
    kind: str = GCN,
    adaptor: AdaptorConfig = AdaptorConfig(),
) -> EncoderStack:
    """Glorot-uniform weights, zero biases, deterministic given the seed.

    Sampling order is fixed (adaptor first, then layers; row-major within
    each matrix) so identical seeds give identical stacks.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown encoder kind {kind!r}; expected one of {_KINDS}")
    if num_layers < 1:
        raise ValueError("need at least one layer")

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        u = rng.uniform_array(fan_in * fan_out)
        return ((2.0 * u - 1.0) * bound).reshape(fan_in, fan_out)

    params: dict[str, np.ndarray] = {}
    first_in = input_dim
    if adaptor.enabled:
        params["adaptor.weight"] = glorot(input_dim, adaptor.out_dim)
        params["adaptor.bias"] = np.zeros(adaptor.out_dim)
        first_in = adaptor.out_dim

    widths = [first_in] + [hidden_dim] * (num_layers - 1) + [output_dim]
    layer_dims = []
    for k in range(num_layers):
        fan_in, fan_out = widths[k], widths[k + 1]
        layer_dims.append((fan_in, fan_out))
        if kind == GCN:
            params[f"layers.{k}.weight"] = glorot(fan_in, fan_out)
        else:
            params[f"layers.{k}.w_self"] = glorot(fan_in, fan_out)
            params[f"layers.{k}.w_nbr"] = glorot(fan_in, fan_out)
        params[f"layers.{k}.bias"] = np.zeros(fan_out)

    return EncoderStack(kind, input_dim, layer_dims, adaptor, params)


# ---------------------------------------------------------------------------
# adjacency preprocessing
# ---------------------------------------------------------------------------

def normalize_adjacency(a: SparseMatrixCSR) -> SparseMatrixCSR:
    """Symmetric normalization with self-loops: entry (i,j) = 1/sqrt(di*dj).

    di counts row i's neighbors plus its self-loop, so isolated nodes get
    a lone diagonal 1. Requires a symmetric binary matrix with an empty
    diagonal.
    """
    if a.rows != a.cols:
        raise ValueError("adjacency must be square")
    if len(a.values) and not np.all(a.values == 1.0):
        raise ValueError("adjacency must be binary")
    rows = a.expanded_rows()
    if np.any(rows == a.col_indices):
        raise ValueError("adjacency diagonal must be empty")
    if not is_symmetric(a):
        raise ValueError("adjacency must be symmetric")
    deg = a.row_counts().astype(np.float64) + 1.0
    n = a.rows
    all_rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    all_cols = np.concatenate([a.col_indices, np.arange(n, dtype=np.int64)])
    values = 1.0 / np.sqrt(deg[all_rows] * deg[all_cols])
    return csr_from_arrays(n, n, all_rows, all_cols, values)


def mean_aggregation_matrix(a: SparseMatrixCSR) -> SparseMatrixCSR:
    """Row-stochastic neighbor averaging; isolated nodes keep an empty row."""
    deg = a.row_counts().astype(np.float64)
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    values = inv[a.expanded_rows()]
    return SparseMatrixCSR(a.rows, a.cols, a.row_offsets, a.col_indices, values)


# ---------------------------------------------------------------------------
# forward passes (differentiable)
# ---------------------------------------------------------------------------

def adaptor_forward(h, stack: EncoderStack, params: dict[str, Node] | None = None) -> Node:
    """Linear refinement of frozen text features; identity when disabled."""
    h = lift(h)
    if not stack.adaptor.enabled:
        return h
    p = params if params is not None else stack.lift()
    return add_bias(matmul(h, p["adaptor.weight"]), p["adaptor.bias"])


def gcn_forward(a_hat: SparseMatrixCSR, x, stack: EncoderStack, params=None) -> Node:
    """K-layer graph convolution: propagate, project, bias, ReLU between layers."""
    if stack.kind != GCN:
        raise ValueError(f"stack kind is {stack.kind!r}, not {GCN!r}")
    p = params if params is not None else stack.lift()
    h = lift(x)
    if a_hat.rows != h.value.shape[0]:
        raise ValueError("adjacency and feature row counts differ")
    for k in range(stack.num_layers):
        h = add_bias(
            matmul(sparse_dense_matmul(a_hat, h), p[f"layers.{k}.weight"]),
            p[f"layers.{k}.bias"],
        )
        if k < stack.num_layers - 1:
            h = relu(h)
    return h


def sage_forward(a: SparseMatrixCSR, x, stack: EncoderStack, params=None) -> Node:
    """GraphSAGE with mean aggregation over full neighborhoods.

    Per layer: self projection plus a projection of the neighbor mean;
    isolated nodes contribute a zero neighbor mean.
    """
    if stack.kind != SAGE_MEAN:
        raise ValueError(f"stack kind is {stack.kind!r}, not {SAGE_MEAN!r}")
    p = params if params is not None else stack.lift()
    mean_mat = mean_aggregation_matrix(a)
    h = lift(x)
    if a.rows != h.value.shape[0]:
        raise ValueError("adjacency and feature row counts differ")
    for k in range(stack.num_layers):
        own = matmul(h, p[f"layers.{k}.w_self"])
        nbr = matmul(sparse_dense_matmul(mean_mat, h), p[f"layers.{k}.w_nbr"])
        h = add_bias(add(own, nbr), p[f"layers.{k}.bias"])
        if k < stack.num_layers - 1:
            h = relu(h)
    return h


def encoder_forward(prop: SparseMatrixCSR, x, stack: EncoderStack, params=None) -> Node:
    """Adaptor plus graph encoder, dispatched on the stack kind.

    `prop` is the normalized adjacency for GCN and the raw adjacency for
    GraphSAGE.
    """
    p = params if params is not None else stack.lift()
    h = adaptor_forward(x, stack, p)
    if stack.kind == GCN:
        return gcn_forward(prop, h, stack, p)
    return sage_forward(prop, h, stack, p)


def propagation_matrix(adjacency: SparseMatrixCSR, kind: str) -> SparseMatrixCSR:
    """The graph operator each encoder kind consumes (built once per run)."""
    if kind == GCN:
        return normalize_adjacency(adjacency)
    if kind == SAGE_MEAN:
        return adjacency
    raise ValueError(f"unknown encoder kind {kind!r}")
