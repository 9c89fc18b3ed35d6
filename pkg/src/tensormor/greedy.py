"""Greedy construction of sample-spanned subspaces.

Strong greedy over snapshot sets (select the worst-approximated sample),
weak greedy driven by a computable indicator with online reduced solves,
generalized-interpolation (magic point) functionals, and greedy affine
approximation of parameter-dependent operator families.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError
from .reduction import ErrorReport, SnapshotSet, Subspace
from .rom import (
    AffineOperator,
    CoefficientFunction,
    ParameterDomain,
    ParametricLinearModel,
    build_reduced,
    full_solve,
)

_GS_BREAKDOWN = 1e-12


class TrainSet:
    """Candidate parameter points, optionally with selection weights."""

    __slots__ = ("points", "weights")

    def __init__(self, points, weights=None):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] < 1:
            raise ValueError("at least one candidate point is required")
        uniq = np.unique(points, axis=0)
        if uniq.shape[0] != points.shape[0]:
            raise ValueError("candidate points must be distinct")
        if weights is not None:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (points.shape[0],):
                raise ValueError("one weight per candidate point is required")
            if np.any(weights <= 0):
                raise ValueError("weights must be positive")
        self.points = points
        self.weights = weights

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class GreedyResult:
    """Selected points, spanned subspace, and per-step diagnostics."""

    selected: list
    space: Subspace
    report: ErrorReport
    degenerate: bool = False
    gamma: float | None = None
    functional_indices: list | None = None
    interpolation_matrix: np.ndarray | None = None
    condition_number: float | None = None
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        data = {
            "selected": [int(i) for i in self.selected],
            "max_errors": self.report.errors,
            "degenerate": self.degenerate,
            "gamma": self.gamma,
            "warnings": self.warnings,
        }
        if self.functional_indices is not None:
            data["functional_indices"] = [
                int(i) for i in self.functional_indices
            ]
            data["condition_number"] = self.condition_number
        return json.dumps(data, indent=2) + "\n"


def _orthonormal_extend(basis_columns, vector):
    """Twice-repeated Gram-Schmidt; None on breakdown below threshold."""
    v = np.asarray(vector, dtype=np.float64).copy()
    scale = np.linalg.norm(v)
    if scale == 0.0:
        return None
    for _ in range(2):
        for b in basis_columns:
            v -= (b @ v) * b
    norm = np.linalg.norm(v)
    if norm <= _GS_BREAKDOWN * scale:
        return None
    return v / norm


def _argmax_lowest_index(values) -> int:
    values = np.asarray(values)
    best = np.max(values)
    return int(np.argmax(values == best))


def strong_greedy(snapshots: SnapshotSet, m: int) -> GreedyResult:
    """Select snapshots maximizing the current projection error.

    At each step the candidate with the largest Euclidean distance to the
    span of the already-selected snapshots is taken (ties break to the
    lowest index). Stops early with ``degenerate=True`` if the snapshot
    family runs out of independent directions before reaching ``m``.
    """
    if m < 1 or m > snapshots.count:
        raise ValueError(f"m={m} out of range for {snapshots.count} snapshots")
    start = time.perf_counter()
    vectors = snapshots.vectors
    basis = []
    selected = []
    report = ErrorReport()
    residual = vectors.copy()
    degenerate = False
    for step in range(m):
        errors = np.linalg.norm(residual, axis=0)
        pick = _argmax_lowest_index(errors)
        new_dir = _orthonormal_extend(basis, vectors[:, pick])
        if new_dir is None:
            degenerate = True
            break
        selected.append(pick)
        basis.append(new_dir)
        report.add(step + 1, float(errors[pick]), np.inf,
                   time.perf_counter() - start)
        residual -= np.outer(new_dir, new_dir @ residual)
    space = Subspace(np.stack(basis, axis=1) if basis
                     else np.zeros((snapshots.dim, 0)))
    return GreedyResult(selected, space, report, degenerate=degenerate)


def weak_greedy(model: ParametricLinearModel, indicator: str, train: TrainSet,
                m: int, weight_matrix=None) -> GreedyResult:
    """Greedy selection driven by a computable error indicator.

    ``indicator='exact'`` uses the true projection error (requires full
    solves at every train point and coincides with :func:`strong_greedy`
    on those snapshots). ``indicator='residual'`` uses the online residual
    norm of the reduced solution, needing one full solve per selected
    point only. The suboptimality factor ``gamma`` is reported when the
    model carries analytic ``alpha_lb`` / ``beta_ub`` bounds.
    """
    if indicator not in ("exact", "residual"):
        raise ValueError(f"unknown indicator {indicator!r}")
    if m < 1 or m > train.count:
        raise ValueError(f"m={m} out of range for {train.count} candidates")
    gamma = None
    if model.alpha_lb is not None and model.beta_ub is not None:
        gamma = (model.alpha_lb / model.beta_ub) ** 2
    start = time.perf_counter()
    sel_weights = (np.ones(train.count) if train.weights is None
                   else train.weights)
    result_warnings = []

    if indicator == "exact":
        columns = np.stack(
            [full_solve(model, xi) for xi in train.points], axis=1
        )
        snaps = SnapshotSet(columns, params=train.points)
        base = strong_greedy(snaps, m)
        base.gamma = gamma
        base.warnings = result_warnings
        return base

    basis: list = []
    selected: list = []
    report = ErrorReport()
    degenerate = False
    excluded = np.zeros(train.count, dtype=bool)
    for step in range(m):
        space = Subspace(np.stack(basis, axis=1) if basis
                         else np.zeros((model.dim, 0)))
        rm = build_reduced(model, space, weight_matrix=weight_matrix)
        indicators = np.full(train.count, -np.inf)
        for k, xi in enumerate(train.points):
            if excluded[k]:
                continue
            try:
                _, delta, _ = rm.solve(xi)
            except Exception as exc:  # noqa: BLE001 - excluded, not fatal
                excluded[k] = True
                result_warnings.append(
                    f"indicator failed at train point {k}: {exc}"
                )
                continue
            indicators[k] = sel_weights[k] * delta
        if not np.any(np.isfinite(indicators)):
            degenerate = True
            break
        pick = _argmax_lowest_index(indicators)
        new_dir = _orthonormal_extend(basis, full_solve(model, train.points[pick]))
        if new_dir is None:
            degenerate = True
            break
        selected.append(pick)
        basis.append(new_dir)
        report.add(step + 1, float(indicators[pick]), np.inf,
                   time.perf_counter() - start)
    space = Subspace(np.stack(basis, axis=1) if basis
                     else np.zeros((model.dim, 0)))
    return GreedyResult(selected, space, report, degenerate=degenerate,
                        gamma=gamma, warnings=result_warnings)


def geim_functionals(basis_vectors) -> GreedyResult:
    """Magic-point interpolation functionals dual to a vector family.

    Coordinates are selected greedily: the first point maximizes the first
    vector's magnitude, each next point maximizes the residual of the next
    vector after interpolation on the current points. The functionals are
    ``phi_i(v) = (B^{-1} v[p])_i`` with ``B[k, j] = w_j[p_k]``, so that
    ``phi_i(w_j) = delta_ij``.
    """
    w = np.asarray(basis_vectors, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] < 1:
        raise ValueError("basis_vectors must be an M x m matrix")
    m = w.shape[1]
    points = []
    for j in range(m):
        if j == 0:
            residual = w[:, 0]
        else:
            bmat = w[np.ix_(points, range(j))]
            try:
                coeff = np.linalg.solve(bmat, w[points, j])
            except np.linalg.LinAlgError as exc:
                raise DegeneracyError(
                    f"singular interpolation matrix at step {j}", step=j
                ) from exc
            residual = w[:, j] - w[:, :j] @ coeff
        scale = np.linalg.norm(w[:, j])
        if np.max(np.abs(residual)) <= _GS_BREAKDOWN * max(scale, 1.0):
            raise DegeneracyError(
                f"vector {j} is interpolated exactly by its predecessors",
                step=j,
            )
        points.append(_argmax_lowest_index(np.abs(residual)))
    bmat = w[np.ix_(points, range(m))]
    cond = float(np.linalg.cond(bmat))
    report = ErrorReport()
    space_basis, _ = np.linalg.qr(w)
    return GreedyResult(
        selected=list(points), space=Subspace(space_basis), report=report,
        functional_indices=list(points), interpolation_matrix=bmat,
        condition_number=cond,
    )


def geim_interpolate(result: GreedyResult, basis_vectors, v) -> np.ndarray:
    """Apply the generalized interpolation operator to a vector."""
    w = np.asarray(basis_vectors, dtype=np.float64)
    coeff = np.linalg.solve(result.interpolation_matrix,
                            np.asarray(v)[result.functional_indices])
    return w @ coeff


def affine_approximate(params, samples, n_terms, entry_provider=None,
                       tol=1e-12):
    """Greedy affine approximation of an operator family from samples.

    ``samples[k]`` is the operator value (matrix or vector) at
    ``params[k]``. Selected samples are orthonormalized into the fixed
    terms; the coefficients are magic-entry interpolation functionals, so
    the representation reproduces the family exactly on the span of the
    selected samples and interpolates exactly at the selected parameter
    points. Stops early when the sample family has rank below ``n_terms``.

    Returns ``(operator, info)`` where ``info`` carries the selected
    sample indices, the achieved number of terms and the per-step maximum
    projection errors.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 1:
        params = params[:, None]
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if len(samples) != params.shape[0]:
        raise ValueError("one sample per parameter point is required")
    if n_terms < 1 or n_terms > len(samples):
        raise ValueError(f"n_terms={n_terms} out of range")
    shape = samples[0].shape
    columns = np.stack([s.reshape(-1) for s in samples], axis=1)

    basis: list = []
    selected: list = []
    step_errors = []
    residual = columns.copy()
    for _ in range(n_terms):
        errors = np.linalg.norm(residual, axis=0)
        pick = _argmax_lowest_index(errors)
        if errors[pick] <= tol * max(np.linalg.norm(columns[:, pick]), 1.0):
            break
        new_dir = _orthonormal_extend(basis, columns[:, pick])
        if new_dir is None:
            break
        selected.append(pick)
        step_errors.append(float(errors[pick]))
        basis.append(new_dir)
        residual -= np.outer(new_dir, new_dir @ residual)
    achieved = len(basis)
    if achieved == 0:
        raise DegeneracyError("sample family is numerically zero", step=0)
    q = np.stack(basis, axis=1)

    magic = geim_functionals(q)
    entry_idx = magic.functional_indices
    bmat = magic.interpolation_matrix  # (achieved, achieved)
    coeff_table = np.linalg.solve(bmat, columns[entry_idx, :])  # (achieved, K)

    lo = params.min(axis=0)
    hi = params.max(axis=0)
    domain = ParameterDomain(list(zip(lo, hi)), measure="user")
    coefficients = []
    for i in range(achieved):
        provider = None
        if entry_provider is not None:
            flat_idx = [np.unravel_index(p, shape) for p in entry_idx]

            def provider(xi, _idx=flat_idx):
                sample = np.asarray(entry_provider(xi), dtype=np.float64)
                return np.array([sample[j] for j in _idx])

        coefficients.append(CoefficientFunction.tabulated(
            params, coeff_table[i], entry_indices=list(entry_idx),
            solve_matrix=bmat, row=i, entry_provider=provider,
        ))
    terms = [(q[:, i].reshape(shape), coefficients[i])
             for i in range(achieved)]
    if len(shape) == 2 and shape[0] == shape[1]:
        operator = AffineOperator(terms, domain)
    else:
        from .rom import AffineVector

        operator = AffineVector(terms, domain)
    info = {
        "selected": selected,
        "achieved": achieved,
        "step_errors": step_errors,
        "condition_number": magic.condition_number,
    }
    return operator, info
