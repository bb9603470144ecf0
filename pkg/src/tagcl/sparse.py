"""Compressed-sparse-row matrices for adjacency structure.

Kept deliberately small: construction from edge lists, validation,
densify, and the two matvec kernels the graph encoders need. Dense
payloads are plain float64 numpy arrays throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SparseMatrixCSR:
    rows: int
    cols: int
    row_offsets: np.ndarray  # int64, length rows+1, nondecreasing
    col_indices: np.ndarray  # int64, strictly increasing within a row
    values: np.ndarray       # float64, same length as col_indices

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", vals)
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative matrix dimensions")
        if ro.shape != (self.rows + 1,):
            raise ValueError("row_offsets must have length rows+1")
        if ro[0] != 0 or ro[-1] != len(ci) or np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing from 0 to nnz")
        if len(ci) != len(vals):
            raise ValueError("col_indices and values length mismatch")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.cols):
            raise ValueError("column index out of range")
        if len(ci) > 1:
            rows_of_entries = np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(ro))
            same_row = np.diff(rows_of_entries) == 0
            if np.any(same_row & (np.diff(ci) <= 0)):
                raise ValueError("columns not strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def expanded_rows(self) -> np.ndarray:
        """Row index of every stored entry (length nnz)."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), self.row_counts())

    def densify(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        out[self.expanded_rows(), self.col_indices] = self.values
        return out

    def matmul_dense(self, dense: np.ndarray) -> np.ndarray:
        """self @ dense with a deterministic (storage-order) reduction."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.cols:
            raise ValueError(
                f"shape mismatch: ({self.rows}x{self.cols}) @ {dense.shape}"
            )
        out = np.zeros((self.rows, dense.shape[1]), dtype=np.float64)
        np.add.at(out, self.expanded_rows(), self.values[:, None] * dense[self.col_indices])
        return out

    def transpose_matmul_dense(self, dense: np.ndarray) -> np.ndarray:
        """self.T @ dense, used by the backward pass of matmul_dense."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.rows:
            raise ValueError(
                f"shape mismatch: ({self.cols}x{self.rows}) @ {dense.shape}"
            )
        out = np.zeros((self.cols, dense.shape[1]), dtype=np.float64)
        np.add.at(out, self.col_indices, self.values[:, None] * dense[self.expanded_rows()])
        return out


def csr_from_arrays(rows: int, cols: int, r, c, v) -> SparseMatrixCSR:
    """Build a CSR matrix from parallel (row, col, value) arrays; duplicates error."""
    r = np.asarray(r, dtype=np.int64)
    c = np.asarray(c, dtype=np.int64)
    v = np.asarray(v, dtype=np.float64)
    if len(r):
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if np.any((np.diff(r) == 0) & (np.diff(c) == 0)):
            raise ValueError("duplicate entries in sparse construction")
    offsets = np.zeros(rows + 1, dtype=np.int64)
    np.add.at(offsets, r + 1, 1)
    offsets = np.cumsum(offsets)
    return SparseMatrixCSR(rows, cols, offsets, c, v)


def csr_from_entries(rows: int, cols: int, entries) -> SparseMatrixCSR:
    """Build a CSR matrix from (row, col, value) triples; duplicates are an error."""
    entries = list(entries)
    return csr_from_arrays(
        rows, cols,
        [e[0] for e in entries], [e[1] for e in entries], [e[2] for e in entries],
    )


def adjacency_from_edges(n: int, edges) -> SparseMatrixCSR:
    """Symmetric binary adjacency (zero diagonal) from undirected edge pairs."""
    triples = []
    for a, b in edges:
        if a == b:
            raise ValueError(f"self-loop ({a},{a}) not allowed in adjacency")
        triples.append((a, b, 1.0))
        triples.append((b, a, 1.0))
    return csr_from_entries(n, n, triples)


def is_symmetric(matrix: SparseMatrixCSR) -> bool:
    if matrix.rows != matrix.cols:
        return False
    r = matrix.expanded_rows()
    c = matrix.col_indices
    fwd = sorted(zip(r.tolist(), c.tolist(), matrix.values.tolist()))
    rev = sorted(zip(c.tolist(), r.tolist(), matrix.values.tolist()))
    return fwd == rev
