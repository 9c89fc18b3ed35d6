"""Dense order-d tensors, matricization, and the shared linear-algebra kernels.

Storage convention is lexicographic with the *last* mode index varying
fastest, i.e. the C ordering of :class:`numpy.ndarray`. Every other module
obtains matrix unfoldings through :func:`matricize` / :func:`dematricize`
instead of re-deriving the layout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdownError

#: Singular values below this multiple of the largest one are treated as
#: numerically zero by rank decisions.
NUMERICAL_ZERO = 1e-14

_DEFAULT_DENSE_CAP = 10**7


def dense_cap() -> int:
    """Entry cap for dense materializations (env ``TENSORMOR_DENSE_CAP``)."""
    value = os.environ.get("TENSORMOR_DENSE_CAP")
    if value is None:
        return _DEFAULT_DENSE_CAP
    return int(value)


class DenseTensor:
    """Dense order-d array of finite 64-bit floats.

    Parameters
    ----------
    array : array_like
        Values in canonical layout. Lists are accepted; the data is stored
        as a C-contiguous ``float64`` ndarray.
    """

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.array(array, dtype=np.float64, order="C")
        if arr.ndim < 1:
            raise ValueError("a tensor must have order d >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        self.array = arr

    @classmethod
    def from_flat(cls, shape, data) -> "DenseTensor":
        """Build from mode sizes and flat data in canonical order."""
        shape = tuple(int(n) for n in shape)
        if any(n <= 0 for n in shape):
            raise ValueError(f"mode sizes must be positive, got {shape}")
        flat = np.asarray(data, dtype=np.float64)
        if flat.size != int(np.prod(shape)):
            raise ValueError(
                f"data length {flat.size} does not match shape {shape}"
            )
        return cls(flat.reshape(shape))

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def order(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return self.array.size

    def ravel(self) -> np.ndarray:
        """Flat copy of the entries in canonical order."""
        return self.array.reshape(-1).copy()

    def norm(self) -> float:
        """Frobenius norm."""
        return float(np.linalg.norm(self.array.reshape(-1)))

    def __getitem__(self, idx):
        return self.array[idx]

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


def as_dense_array(t) -> np.ndarray:
    """Coerce a :class:`DenseTensor` or array_like to a float ndarray."""
    if isinstance(t, DenseTensor):
        return t.array
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


@dataclass
class Matricization:
    """Matrix unfolding of a tensor along a mode split.

    ``row_modes`` keeps the order it was requested in; ``col_modes`` is the
    complement in ascending order. Index maps are lexicographic (last listed
    mode fastest) within each group.
    """

    row_modes: tuple
    col_modes: tuple
    matrix: np.ndarray


def matricize(t, row_modes) -> Matricization:
    """Unfold a tensor into a matrix grouping ``row_modes`` against the rest.

    Parameters
    ----------
    t : DenseTensor or ndarray
    row_modes : sequence of int
        Nonempty proper subset of ``range(t.ndim)`` (0-based modes).
    """
    arr = as_dense_array(t)
    d = arr.ndim
    rows = tuple(int(m) for m in row_modes)
    if len(set(rows)) != len(rows):
        raise ValueError(f"duplicate modes in {rows}")
    if any(m < 0 or m >= d for m in rows):
        raise ValueError(f"modes {rows} out of range for order {d}")
    if len(rows) == 0 or len(rows) == d:
        raise ValueError("row modes must be a nonempty proper subset")
    cols = tuple(m for m in range(d) if m not in rows)
    nrow = int(np.prod([arr.shape[m] for m in rows]))
    mat = arr.transpose(rows + cols).reshape(nrow, -1)
    return Matricization(rows, cols, np.ascontiguousarray(mat))


def dematricize(m: Matricization, shape) -> DenseTensor:
    """Invert :func:`matricize` back to a tensor of the given shape."""
    shape = tuple(int(n) for n in shape)
    perm = m.row_modes + m.col_modes
    permuted_shape = tuple(shape[p] for p in perm)
    arr = m.matrix.reshape(permuted_shape)
    inverse = np.argsort(perm)
    return DenseTensor(arr.transpose(inverse))


@dataclass
class SvdResult:
    """Thin SVD with ``matrix = left @ diag(s) @ right.T``."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self, rank=None) -> np.ndarray:
        """Rank-truncated reconstruction (full rank by default)."""
        r = len(self.singular_values) if rank is None else int(rank)
        u = self.left_vectors[:, :r]
        v = self.right_vectors[:, :r]
        return (u * self.singular_values[:r]) @ v.T

    def tail_norm(self, rank: int) -> float:
        """Frobenius error of the rank-``rank`` truncation."""
        return float(np.sqrt(np.sum(self.singular_values[rank:] ** 2)))


def svd(m) -> SvdResult:
    """Thin singular value decomposition of an order-2 tensor."""
    arr = as_dense_array(m)
    if arr.ndim != 2:
        raise ValueError(f"svd expects an order-2 tensor, got order {arr.ndim}")
    u, s, vt = np.linalg.svd(arr, full_matrices=False)
    return SvdResult(s, u, vt.T)


def numerical_rank(singular_values, tol: float = 0.0) -> int:
    """Count singular values at or above ``tol * sigma_1``.

    Values below ``NUMERICAL_ZERO * sigma_1`` are treated as zero; exact
    ties at the threshold are retained.
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    cutoff = max(float(tol), NUMERICAL_ZERO) * s[0]
    return int(np.sum(s >= cutoff))


def cholesky_spd(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NumericalBreakdownError
        On the first nonpositive pivot, carrying its index.
    ValueError
        If the matrix is not symmetric to 1e-10 relative.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if scale > 0 and np.linalg.norm(a - a.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric to 1e-10 relative")
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not np.isfinite(pivot) or pivot <= 0.0:
            raise NumericalBreakdownError(
                f"nonpositive pivot {pivot:.3e} at index {j}", pivot=j
            )
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``."""
    low = cholesky_spd(as_dense_array(a))
    b = np.asarray(b, dtype=np.float64)
    y = np.linalg.solve(low, b)
    return np.linalg.solve(low.T, y)


def lstsq(a, b) -> np.ndarray:
    """Minimum-norm least-squares solution of ``a @ x = b``."""
    a = as_dense_array(a)
    b = np.asarray(b, dtype=np.float64)
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    return x
