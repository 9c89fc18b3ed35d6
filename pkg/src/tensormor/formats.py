"""Rank-structured tensor formats: canonical (CP), Tucker, and Tensor Train.

Construction from dense tensors, entry evaluation, arithmetic, rounding and
rank diagnosis. Dense materialization is guarded by the entry cap from
:func:`tensormor.core.dense_cap`.
"""

from __future__ import annotations

import numpy as np

from .core import (
    NUMERICAL_ZERO,
    DenseTensor,
    as_dense_array,
    dense_cap,
    matricize,
    numerical_rank,
)
from .errors import CapacityError


def _check_index(idx, shape):
    idx = tuple(int(i) for i in idx)
    if len(idx) != len(shape):
        raise ValueError(f"index {idx} has wrong length for shape {shape}")
    for i, n in zip(idx, shape):
        if i < 0 or i >= n:
            raise ValueError(f"index {idx} out of range for shape {shape}")
    return idx


def _check_dense_cap(shape):
    total = int(np.prod([int(n) for n in shape]))
    cap = dense_cap()
    if total > cap:
        raise CapacityError(
            f"dense materialization of {total} entries exceeds cap {cap}"
        )
    return total


class CPTensor:
    """Sum of rank-one (elementary) terms with unit-norm factor columns.

    ``weights`` holds the term magnitudes; ``factors[nu]`` is an
    ``(n_nu, r)`` matrix whose column ``i`` is the mode-``nu`` vector of
    term ``i``, normalized to unit Euclidean norm (magnitudes are folded
    into the weights on construction).
    """

    __slots__ = ("weights", "factors")

    def __init__(self, weights, factors):
        weights = np.asarray(weights, dtype=np.float64).copy()
        factors = [np.asarray(f, dtype=np.float64).copy() for f in factors]
        if weights.ndim != 1:
            raise ValueError("weights must be a 1-d sequence")
        r = weights.size
        if not factors:
            raise ValueError("at least one mode is required")
        for nu, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(
                    f"factor {nu} must have {r} columns, got shape {f.shape}"
                )
        # fold column norms into the weights
        for f in factors:
            norms = np.linalg.norm(f, axis=0)
            nonzero = norms > 0.0
            f[:, nonzero] /= norms[nonzero]
            weights *= norms
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.weights = weights
        self.factors = factors

    @classmethod
    def from_terms(cls, terms) -> "CPTensor":
        """Build from ``[(a_i, [v_i^1, ..., v_i^d]), ...]`` elementary terms."""
        if not terms:
            raise ValueError("at least one term is required")
        d = len(terms[0][1])
        weights = np.array([a for a, _ in terms], dtype=np.float64)
        factors = []
        for nu in range(d):
            cols = [np.asarray(vs[nu], dtype=np.float64) for _, vs in terms]
            factors.append(np.stack(cols, axis=1))
        return cls(weights, factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    def eval(self, idx) -> float:
        idx = _check_index(idx, self.shape)
        prod = self.weights.copy()
        for f, i in zip(self.factors, idx):
            prod *= f[i, :]
        return float(prod.sum())

    def to_dense(self) -> DenseTensor:
        _check_dense_cap(self.shape)
        out = np.zeros(self.shape)
        for i in range(self.rank):
            term = self.weights[i]
            for f in self.factors:
                term = np.multiply.outer(term, f[:, i])
            out += term
        return DenseTensor(out)

    def storage_count(self) -> int:
        return self.rank + self.rank * sum(self.shape)

    def __repr__(self):
        return f"CPTensor(shape={self.shape}, rank={self.rank})"


class TuckerTensor:
    """Core tensor contracted with per-mode orthonormal factor matrices."""

    __slots__ = ("core", "factors")

    def __init__(self, core, factors):
        core = as_dense_array(core)
        factors = [np.asarray(f, dtype=np.float64).copy() for f in factors]
        if core.ndim != len(factors):
            raise ValueError("core order must match the number of factors")
        for nu, f in enumerate(factors):
            if f.ndim != 2 or f.shape[1] != core.shape[nu]:
                raise ValueError(
                    f"factor {nu} has shape {f.shape}, core wants "
                    f"{core.shape[nu]} columns"
                )
            gram = f.T @ f
            if np.max(np.abs(gram - np.eye(f.shape[1]))) > 1e-12:
                raise ValueError(f"factor {nu} columns are not orthonormal")
        self.core = DenseTensor(core)
        self.factors = factors

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    def eval(self, idx) -> float:
        idx = _check_index(idx, self.shape)
        out = self.core.array
        for f, i in zip(self.factors, idx):
            out = np.tensordot(f[i, :], out, axes=([0], [0]))
        return float(out)

    def to_dense(self) -> DenseTensor:
        _check_dense_cap(self.shape)
        out = self.core.array
        for nu, f in enumerate(self.factors):
            out = np.moveaxis(np.tensordot(f, out, axes=([1], [nu])), 0, nu)
        return DenseTensor(out)

    def storage_count(self) -> int:
        return int(np.prod(self.ranks)) + sum(
            n * r for n, r in zip(self.shape, self.ranks)
        )

    def __repr__(self):
        return f"TuckerTensor(shape={self.shape}, ranks={self.ranks})"


class TTTensor:
    """Tensor Train: chain of order-3 cores with boundary ranks 1."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=np.float64).copy() for c in cores]
        if not cores:
            raise ValueError("at least one core is required")
        for nu, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {nu} must be order-3, got {c.ndim}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for nu in range(len(cores) - 1):
            if cores[nu].shape[2] != cores[nu + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {nu} and {nu + 1}"
                )
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        """Interior TT ranks (r_1, ..., r_{d-1})."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    def eval(self, idx) -> float:
        idx = _check_index(idx, self.shape)
        chain = self.cores[0][:, idx[0], :]
        for c, i in zip(self.cores[1:], idx[1:]):
            chain = chain @ c[:, i, :]
        return float(chain[0, 0])

    def to_dense(self) -> DenseTensor:
        _check_dense_cap(self.shape)
        out = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for c in self.cores[1:]:
            out = out @ c.reshape(c.shape[0], -1)
            out = out.reshape(-1, c.shape[2])
        return DenseTensor(out.reshape(self.shape))

    def storage_count(self) -> int:
        return sum(c.size for c in self.cores)

    def copy(self) -> "TTTensor":
        return TTTensor([c.copy() for c in self.cores])

    def __repr__(self):
        return f"TTTensor(shape={self.shape}, ranks={self.ranks})"


def _select_rank(s, tail_budget, max_rank=None):
    """Smallest rank whose discarded tail stays within ``tail_budget``."""
    if s.size == 0:
        return 1
    keep = numerical_rank(s, 0.0)
    tails = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tails[k] = ||s[k:]||
    r = keep
    for k in range(keep + 1):
        if k == s.size or tails[k] <= tail_budget:
            r = k
            break
    r = max(r, 1)
    if max_rank is not None:
        r = min(r, int(max_rank))
    return r


def tt_svd(t, tol: float = 0.0, max_ranks=None) -> TTTensor:
    """Compress a dense tensor into TT format at relative tolerance ``tol``.

    Each of the ``d - 1`` sequential splits is truncated with Frobenius
    budget ``tol * ||t|| / sqrt(d - 1)`` so the aggregate error satisfies
    ``||t - result|| <= tol * ||t||``.
    """
    arr = as_dense_array(t)
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    d = arr.ndim
    shape = arr.shape
    if max_ranks is not None:
        max_ranks = tuple(int(r) for r in max_ranks)
        if len(max_ranks) != d - 1:
            raise ValueError(f"max_ranks must have {d - 1} entries")
    if d == 1:
        return TTTensor([arr.reshape(1, shape[0], 1)])
    norm = np.linalg.norm(arr.reshape(-1))
    budget = tol * norm / np.sqrt(d - 1)
    cores = []
    rest = arr.reshape(1, -1)
    r_prev = 1
    for nu in range(d - 1):
        mat = rest.reshape(r_prev * shape[nu], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        cap = None if max_ranks is None else max_ranks[nu]
        r = _select_rank(s, budget, cap)
        cores.append(u[:, :r].reshape(r_prev, shape[nu], r))
        rest = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1))
    return TTTensor(cores)


def _right_orthogonalize(cores):
    """Make cores 1..d-1 right-orthogonal, accumulating into core 0."""
    cores = [c.copy() for c in cores]
    for nu in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[nu].shape
        mat = cores[nu].reshape(r0, n * r1)
        q, rfac = np.linalg.qr(mat.T)  # mat = rfac.T @ q.T
        rank = q.shape[1]
        cores[nu] = q.T.reshape(rank, n, r1)
        cores[nu - 1] = np.tensordot(cores[nu - 1], rfac.T, axes=([2], [0]))
    return cores


def tt_round(t: TTTensor, tol: float = 0.0) -> TTTensor:
    """Recompress a TT tensor; ranks never increase.

    Guarantees ``||t - result|| <= tol * ||t||`` in the Frobenius norm,
    with the same per-split budget aggregation as :func:`tt_svd`.
    """
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    d = t.order
    if d == 1:
        return t.copy()
    cores = _right_orthogonalize(t.cores)
    norm = np.linalg.norm(cores[0].reshape(-1))
    budget = tol * norm / np.sqrt(d - 1)
    out = []
    carry = cores[0]
    for nu in range(d - 1):
        r0, n, r1 = carry.shape
        u, s, vt = np.linalg.svd(carry.reshape(r0 * n, r1), full_matrices=False)
        r = _select_rank(s, budget, max_rank=t.cores[nu].shape[2])
        out.append(u[:, :r].reshape(r0, n, r))
        carry = np.tensordot(
            (s[:r, None] * vt[:r]), cores[nu + 1], axes=([1], [0])
        )
    out.append(carry)
    return TTTensor(out)


def tt_add(a: TTTensor, b: TTTensor) -> TTTensor:
    """Sum of two TT tensors; interior ranks add."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a.order
    if d == 1:
        return TTTensor([a.cores[0] + b.cores[0]])
    cores = []
    for nu in range(d):
        ca, cb = a.cores[nu], b.cores[nu]
        if nu == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif nu == d - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            ra0, n, ra1 = ca.shape
            rb0, _, rb1 = cb.shape
            block = np.zeros((ra0 + rb0, n, ra1 + rb1))
            block[:ra0, :, :ra1] = ca
            block[ra0:, :, ra1:] = cb
            cores.append(block)
    return TTTensor(cores)


def tt_scale(a: TTTensor, c: float) -> TTTensor:
    """Scalar multiple of a TT tensor."""
    cores = [core.copy() for core in a.cores]
    cores[0] = cores[0] * float(c)
    return TTTensor(cores)


def tt_dot(a: TTTensor, b: TTTensor) -> float:
    """Euclidean inner product of two TT tensors of the same shape."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    acc = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        acc = np.einsum("ij,ink,jnl->kl", acc, ca, cb, optimize=True)
    return float(acc[0, 0])


def tt_norm(a: TTTensor) -> float:
    """Frobenius norm via left orthogonalization (stable near zero)."""
    carry = a.cores[0]
    for nxt in a.cores[1:]:
        r0, n, r1 = carry.shape
        q, rfac = np.linalg.qr(carry.reshape(r0 * n, r1))
        carry = np.tensordot(rfac, nxt, axes=([1], [0]))
    return float(np.linalg.norm(carry.reshape(-1)))


def cp_to_tt(t: CPTensor) -> TTTensor:
    """Embed a CP tensor as a TT tensor with all interior ranks = rank."""
    r = t.rank
    d = t.order
    if d == 1:
        return TTTensor([(t.factors[0] * t.weights).sum(axis=1).reshape(1, -1, 1)])
    cores = [t.factors[0][None, :, :]]
    for nu in range(1, d - 1):
        n = t.factors[nu].shape[0]
        core = np.zeros((r, n, r))
        for i in range(r):
            core[i, :, i] = t.factors[nu][:, i]
        cores.append(core)
    last = (t.factors[-1] * t.weights).T[:, :, None]
    cores.append(last)
    return TTTensor(cores)


def hosvd(t, ranks) -> TuckerTensor:
    """Higher-order SVD truncation to the requested multilinear ranks.

    Factors are the dominant left singular vectors of the single-mode
    unfoldings; the error obeys the quasi-optimality aggregation
    ``||t - result|| <= sqrt(sum_nu tail_nu^2)``.
    """
    arr = as_dense_array(t)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != arr.ndim:
        raise ValueError(f"expected {arr.ndim} ranks, got {len(ranks)}")
    for nu, (r, n) in enumerate(zip(ranks, arr.shape)):
        if r < 1 or r > n:
            raise ValueError(f"rank {r} out of range for mode {nu} (size {n})")
    factors = []
    for nu, r in enumerate(ranks):
        mat = matricize(arr, (nu,)).matrix
        u, _, _ = np.linalg.svd(mat, full_matrices=False)
        factors.append(u[:, :r])
    core = arr
    for nu, f in enumerate(factors):
        core = np.moveaxis(np.tensordot(f.T, core, axes=([1], [nu])), 0, nu)
    return TuckerTensor(core, factors)


def alpha_rank(t, row_modes, tol: float = 0.0) -> int:
    """Numerical rank of the unfolding grouping ``row_modes`` vs the rest."""
    mat = matricize(t, row_modes).matrix
    s = np.linalg.svd(mat, compute_uv=False)
    return numerical_rank(s, tol)
