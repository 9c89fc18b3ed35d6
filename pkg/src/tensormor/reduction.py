"""Order-two reduction of parameter-dependent solutions.

Weighted POD from snapshots, orthogonal projection onto subspaces, and the
computable mean-square width curve. POD is computed through the SVD of the
sqrt-weight-scaled snapshot matrix rather than by forming the correlation
operator, for conditioning.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import cholesky_spd


class SnapshotSet:
    """Solution samples u(xi^k) as columns, with positive quadrature weights.

    Uniform weights ``1/K`` (the default) realize the empirical correlation
    estimate; arbitrary positive weights realize its quadrature-rule
    generalization.
    """

    __slots__ = ("vectors", "weights", "params")

    def __init__(self, vectors, weights=None, params=None):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError("vectors must be an M x K matrix with K >= 1")
        k = vectors.shape[1]
        if weights is None:
            weights = np.full(k, 1.0 / k)
        else:
            weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (k,):
            raise ValueError("one weight per snapshot column is required")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise ValueError("weights must be strictly positive and finite")
        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape[0] != k:
                raise ValueError("one parameter point per column is required")
        self.vectors = vectors
        self.weights = weights
        self.params = params

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def scaled_matrix(self) -> np.ndarray:
        """Snapshot matrix with columns scaled by sqrt of their weights."""
        return self.vectors * np.sqrt(self.weights)[None, :]


class Subspace:
    """Subspace of R^M stored as a basis with orthonormal columns.

    When ``gram`` is supplied the columns are orthonormal with respect to
    the inner product ``(x, y) -> x.T @ gram @ y`` instead of the Euclidean
    one, and projections use that inner product.
    """

    __slots__ = ("basis", "gram")

    def __init__(self, basis, gram=None):
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 2:
            raise ValueError("basis must be an M x m matrix")
        if gram is not None:
            gram = np.asarray(gram, dtype=np.float64)
        check = basis.T @ (basis if gram is None else gram @ basis)
        m = basis.shape[1]
        if m > 0 and np.max(np.abs(check - np.eye(m))) > 1e-12:
            raise ValueError("basis columns are not orthonormal")
        self.basis = basis
        self.gram = gram

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]


@dataclass
class ErrorRecord:
    m: int
    error: float
    p: float  # norm kind: 2 or inf
    seconds: float = 0.0


@dataclass
class ErrorReport:
    """Per-rank (or per-iteration) error records with strictly growing m."""

    records: list = field(default_factory=list)

    def add(self, m, error, p=2.0, seconds=0.0):
        if self.records and m <= self.records[-1].m:
            raise ValueError("ranks must be strictly increasing")
        if error < 0:
            raise ValueError("errors must be nonnegative")
        self.records.append(ErrorRecord(int(m), float(error), float(p), seconds))

    @property
    def ms(self) -> list:
        return [r.m for r in self.records]

    @property
    def errors(self) -> list:
        return [r.error for r in self.records]


def pod(snapshots: SnapshotSet, m: int, weight_matrix=None):
    """Weighted POD basis of dimension ``m`` plus the error decay report.

    Returns the dominant eigenspace of the weighted empirical correlation
    operator as a :class:`Subspace`, and an :class:`ErrorReport` whose
    entry at rank ``j`` is ``sqrt(sum_{i>j} lambda_i)``.

    An SPD ``weight_matrix`` changes the inner product on the state space;
    it is applied through its Cholesky factor and the returned basis is
    orthonormal with respect to it.
    """
    if m < 1 or m > min(snapshots.dim, snapshots.count):
        raise ValueError(
            f"m={m} out of range for {snapshots.dim} x {snapshots.count} snapshots"
        )
    start = time.perf_counter()
    scaled = snapshots.scaled_matrix()
    chol = None
    if weight_matrix is not None:
        chol = cholesky_spd(weight_matrix)
        scaled = chol.T @ scaled
    u, s, _ = np.linalg.svd(scaled, full_matrices=False)
    basis = u[:, :m]
    # deterministic sign: first nonzero component made positive
    for j in range(m):
        nonzero = np.nonzero(np.abs(basis[:, j]) > 1e-14)[0]
        if nonzero.size and basis[nonzero[0], j] < 0:
            basis[:, j] = -basis[:, j]
    if chol is not None:
        basis = np.linalg.solve(chol.T, basis)
        space = Subspace(basis, gram=np.asarray(weight_matrix, dtype=np.float64))
    else:
        space = Subspace(basis)
    elapsed = time.perf_counter() - start
    report = ErrorReport()
    eigs = s**2
    for j in range(1, m + 1):
        report.add(j, float(np.sqrt(max(eigs[j:].sum(), 0.0))), 2.0, elapsed)
    return space, report


def project(space: Subspace, x) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the subspace."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != space.ambient_dim:
        raise ValueError(
            f"vector of length {x.shape[0]} does not match ambient "
            f"dimension {space.ambient_dim}"
        )
    b = space.basis
    if space.gram is None:
        return b @ (b.T @ x)
    return b @ (b.T @ (space.gram @ x))


def width_l2(snapshots: SnapshotSet, m_max: int) -> ErrorReport:
    """Mean-square width curve ``error(m) = sqrt(sum_{i>m} sigma_i^2)``.

    Computed from the singular values of the sqrt-weight-scaled snapshot
    matrix, for m = 0..m_max.
    """
    if m_max > min(snapshots.dim, snapshots.count):
        raise ValueError(f"m_max={m_max} exceeds snapshot rank bound")
    start = time.perf_counter()
    s = np.linalg.svd(snapshots.scaled_matrix(), compute_uv=False)
    eigs = s**2
    elapsed = time.perf_counter() - start
    report = ErrorReport()
    for m in range(m_max + 1):
        report.add(m, float(np.sqrt(max(eigs[m:].sum(), 0.0))), 2.0, elapsed)
    return report
