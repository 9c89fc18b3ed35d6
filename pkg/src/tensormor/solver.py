"""Direct low-rank solution of tensor-structured equations A u = b.

The operator is a sum of Kronecker products of per-mode matrices. Solvers:
truncated Richardson iteration in TT format and progressive rank-one
corrections (alternating minimization on the quadratic residual functional)
in canonical format.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import NUMERICAL_ZERO, dense_cap, solve_spd
from .errors import (
    CapacityError,
    DivergenceError,
    NumericalBreakdownError,
    UnsupportedCoefficientError,
)
from .formats import CPTensor, TTTensor, cp_to_tt, tt_add, tt_norm, tt_round, tt_scale
from .rom import ParametricLinearModel


class KroneckerOperator:
    """``A = sum_i A_i^0 x A_i^1 x ... x A_i^D`` with square per-mode factors."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        if not terms:
            raise ValueError("at least one Kronecker term is required")
        parsed = []
        for term in terms:
            mats = [np.asarray(m, dtype=np.float64) for m in term]
            for m in mats:
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    raise ValueError("per-mode factors must be square")
            parsed.append(mats)
        first = tuple(m.shape[0] for m in parsed[0])
        for mats in parsed[1:]:
            if tuple(m.shape[0] for m in mats) != first:
                raise ValueError("all terms must share their mode dimensions")
        self.terms = parsed

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def mode_dims(self) -> tuple:
        return tuple(m.shape[0] for m in self.terms[0])

    @property
    def order(self) -> int:
        return len(self.terms[0])

    def to_dense_matrix(self) -> np.ndarray:
        """Full Kronecker-sum matrix (guarded by the dense cap)."""
        total = int(np.prod(self.mode_dims))
        if total * total > dense_cap():
            raise CapacityError(
                f"dense operator of {total}^2 entries exceeds the cap"
            )
        out = np.zeros((total, total))
        for mats in self.terms:
            kron = mats[0]
            for m in mats[1:]:
                kron = np.kron(kron, m)
            out += kron
        return out

    def extreme_eigenvalues(self, iterations=30, rng=None):
        """(lambda_min, lambda_max) estimates by dense power iterations.

        Desk-scale only: the operator is materialized densely. The maximum
        uses plain power iteration, the minimum inverse iteration through a
        Cholesky factorization (the operator must be SPD).
        """
        from .core import cholesky_spd

        a = self.to_dense_matrix()
        n = a.shape[0]
        rng = np.random.default_rng(0) if rng is None else rng
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam_max = 0.0
        for _ in range(iterations):
            w = a @ v
            lam_max = float(v @ w)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
        low = cholesky_spd(a)
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lam_min = lam_max
        for _ in range(iterations):
            w = np.linalg.solve(low.T, np.linalg.solve(low, v))
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            lam_min = float(v @ (a @ v))
        return lam_min, lam_max


def op_apply(op: KroneckerOperator, x: TTTensor) -> TTTensor:
    """Apply the operator to a TT tensor; result ranks <= L * ranks(x)."""
    if x.shape != op.mode_dims:
        raise ValueError(
            f"operand shape {x.shape} does not match operator modes "
            f"{op.mode_dims}"
        )
    result = None
    for mats in op.terms:
        cores = [
            np.einsum("mn,rns->rms", mat, core)
            for mat, core in zip(mats, x.cores)
        ]
        term = TTTensor(cores)
        result = term if result is None else tt_add(result, term)
    return result


def cp_apply(op: KroneckerOperator, x: CPTensor) -> CPTensor:
    """Apply the operator to a CP tensor; result rank <= L * rank(x)."""
    if x.shape != op.mode_dims:
        raise ValueError(
            f"operand shape {x.shape} does not match operator modes "
            f"{op.mode_dims}"
        )
    weights = []
    columns = [[] for _ in range(x.order)]
    for mats in op.terms:
        for i in range(x.rank):
            weights.append(x.weights[i])
            for nu, mat in enumerate(mats):
                columns[nu].append(mat @ x.factors[nu][:, i])
    factors = [np.stack(cols, axis=1) for cols in columns]
    return CPTensor(np.array(weights), factors)


def assemble_from_affine(model: ParametricLinearModel, grids):
    """Tensorize an affine model over per-dimension parameter grids.

    Every operator coefficient must factorize as a product of univariate
    functions; the per-dimension factors become diagonal matrices of grid
    evaluations. Returns the Kronecker operator and the right-hand side as
    a TT tensor over modes ``(M, n_1, ..., n_d)``.
    """
    grids = [np.asarray(g, dtype=np.float64) for g in grids]
    d = len(grids)
    op_terms = []
    for t, (mat, coeff) in enumerate(
        zip(model.operator.arrays, model.operator.coefficients)
    ):
        facs = coeff.factorize(d)
        if facs is None:
            raise UnsupportedCoefficientError(
                f"operator term {t} coefficient (kind {coeff.kind!r}) does "
                f"not factorize per dimension", term=t,
            )
        term = [mat]
        term += [np.diag(np.asarray(f(g), dtype=np.float64))
                 for f, g in zip(facs, grids)]
        op_terms.append(term)
    rhs_cp = _affine_rhs_cp(model, grids)
    return KroneckerOperator(op_terms), cp_to_tt(rhs_cp)


def _affine_rhs_cp(model: ParametricLinearModel, grids) -> CPTensor:
    d = len(grids)
    terms = []
    for t, (vec, coeff) in enumerate(
        zip(model.rhs.arrays, model.rhs.coefficients)
    ):
        facs = coeff.factorize(d)
        if facs is None:
            raise UnsupportedCoefficientError(
                f"right-hand side term {t} coefficient (kind {coeff.kind!r}) "
                f"does not factorize per dimension", term=t,
            )
        vectors = [vec] + [np.asarray(f(g), dtype=np.float64)
                           for f, g in zip(facs, grids)]
        terms.append((1.0, vectors))
    return CPTensor.from_terms(terms)


def affine_rhs_cp(model: ParametricLinearModel, grids) -> CPTensor:
    """Right-hand side of the tensorized model in canonical format."""
    return _affine_rhs_cp(model, [np.asarray(g, dtype=np.float64)
                                  for g in grids])


@dataclass
class TraceRecord:
    k: int
    ranks: tuple
    resid: float
    functional: float
    seconds: float


@dataclass
class SolveTrace:
    """Per-iteration solver records plus termination metadata."""

    records: list = field(default_factory=list)
    converged: bool = False
    stagnated: bool = False
    breakdown: bool = False

    def add(self, k, ranks, resid, functional, seconds):
        if not np.isfinite(resid):
            raise ValueError("residual must be finite")
        self.records.append(
            TraceRecord(int(k), tuple(int(r) for r in ranks), float(resid),
                        float(functional), float(seconds))
        )

    @property
    def residuals(self) -> list:
        return [r.resid for r in self.records]


def truncated_richardson(op: KroneckerOperator, b: TTTensor, step=None,
                         eps=1e-8, maxit=200, target_resid=0.0,
                         beta_ub=None):
    """Rank-truncated Richardson iteration ``u <- round(u + step * (b - A u))``.

    ``step=None`` selects ``2 / (lambda_min + lambda_max)`` from dense
    power-iteration estimates. Residual norms are taken on the residual
    rounded at ``eps / 10`` so rank growth stays bounded. Terminates on
    ``target_resid``, ``maxit``, or stagnation (relative residual change
    below ``eps / 10`` across 5 iterations).
    """
    if step is None:
        lam_min, lam_max = op.extreme_eigenvalues()
        if lam_min <= 0:
            raise NumericalBreakdownError(
                f"operator not positive definite (lambda_min={lam_min:.3e})"
            )
        step = 2.0 / (lam_min + lam_max)
    step = float(step)
    if step <= 0:
        raise ValueError("step size must be positive")
    if beta_ub is not None and step >= 2.0 / float(beta_ub):
        raise ValueError(
            f"step {step:.3e} violates the bound 2/beta_ub = "
            f"{2.0 / float(beta_ub):.3e}"
        )
    inner_tol = eps / 10.0
    norm_b = tt_norm(b)
    u = tt_scale(b, 0.0)
    u = tt_round(u, 0.0)
    trace = SolveTrace()
    start = time.perf_counter()
    resid_history = []
    for k in range(maxit + 1):
        residual = tt_round(tt_add(b, tt_scale(op_apply(op, u), -1.0)),
                            inner_tol)
        resid = tt_norm(residual)
        trace.add(k, u.ranks, resid, resid**2, time.perf_counter() - start)
        resid_history.append(resid)
        rel = resid / norm_b if norm_b > 0 else resid
        if rel <= target_resid:
            trace.converged = True
            break
        if len(resid_history) > 10 and resid > 10.0 * resid_history[-11]:
            raise DivergenceError(
                f"residual grew 10x over 10 iterations (now {resid:.3e}); "
                f"try a smaller step than {step:.3e}"
            )
        if len(resid_history) > 5:
            prev = resid_history[-6]
            if prev > 0 and abs(resid - prev) < inner_tol * prev:
                trace.stagnated = True
                break
        if k == maxit:
            break
        u = tt_round(tt_add(u, tt_scale(residual, step)), eps)
    return u, trace


def _cp_terms(weights, factors):
    """Flatten a CP tensor into (coefficient, [vectors]) term list."""
    terms = []
    for i in range(len(weights)):
        terms.append((weights[i], [f[:, i] for f in factors]))
    return terms


def _terms_dot(terms_a, terms_b) -> float:
    """Inner product of two term lists via separable factor products."""
    total = 0.0
    for ca, vecs_a in terms_a:
        for cb, vecs_b in terms_b:
            prod = ca * cb
            for va, vb in zip(vecs_a, vecs_b):
                prod *= float(va @ vb)
            total += prod
    return total


def _apply_terms(op: KroneckerOperator, terms):
    out = []
    for c, vecs in terms:
        for mats in op.terms:
            out.append((c, [m @ v for m, v in zip(mats, vecs)]))
    return out


def greedy_rank_one(op: KroneckerOperator, b: CPTensor, m_max=10,
                    inner_sweeps=20, tol=1e-10, seed=0):
    """Progressive rank-one corrections minimizing ``J(v) = ||A v - b||^2``.

    Each correction is computed by alternating minimization over its
    per-mode factors, every sub-step solving its normal equations exactly.
    ``J`` is non-increasing across corrections by construction. Returns the
    canonical-format solution and the per-correction trace.
    """
    if b.shape != op.mode_dims:
        raise ValueError(
            f"right-hand side shape {b.shape} does not match operator modes "
            f"{op.mode_dims}"
        )
    rng = np.random.default_rng(seed)
    d = len(op.mode_dims)
    b_terms = _cp_terms(b.weights, b.factors)
    b_sq = _terms_dot(b_terms, b_terms)
    sol_weights: list = []
    sol_factors = [[] for _ in range(d)]
    trace = SolveTrace()
    start = time.perf_counter()

    def current_terms():
        if not sol_weights:
            return []
        facs = [np.stack(cols, axis=1) for cols in sol_factors]
        return _cp_terms(np.array(sol_weights), facs)

    def functional(extra=None):
        terms = current_terms()
        if extra is not None:
            terms = terms + [extra]
        au = _apply_terms(op, terms)
        return (
            _terms_dot(au, au) - 2.0 * _terms_dot(au, b_terms) + b_sq
        )

    j_value = functional()
    j_floor = tol * max(b_sq, 0.0)
    trace.add(0, (0,), np.sqrt(max(j_value, 0.0)), j_value, 0.0)
    for m in range(1, m_max + 1):
        residual_terms = [(-c, vecs) for c, vecs in
                          _apply_terms(op, current_terms())]
        residual_terms += b_terms
        correction, ok = _rank_one_als(
            op, residual_terms, d, inner_sweeps, tol, rng
        )
        if not ok:
            # restart once with a fresh init before flagging breakdown
            correction, ok = _rank_one_als(
                op, residual_terms, d, inner_sweeps, tol, rng
            )
        if not ok:
            if j_value > j_floor:
                trace.breakdown = True
            break
        new_j = functional(extra=correction)
        if new_j > j_value + 1e-12 * max(1.0, abs(j_value)):
            # exact sub-solves cannot increase J; treat as converged plateau
            break
        c, vecs = correction
        sol_weights.append(c)
        for nu in range(d):
            sol_factors[nu].append(vecs[nu])
        j_value = new_j
        trace.add(m, (m,), np.sqrt(max(j_value, 0.0)), j_value,
                  time.perf_counter() - start)
        if j_value <= j_floor:
            trace.converged = True
            break
    if not sol_weights:
        solution = CPTensor(np.zeros(1),
                            [np.zeros((n, 1)) for n in op.mode_dims])
    else:
        solution = CPTensor(
            np.array(sol_weights),
            [np.stack(cols, axis=1) for cols in sol_factors],
        )
    return solution, trace


def _rank_one_als(op, residual_terms, d, sweeps, tol, rng):
    """Minimize ``||A w - r||^2`` over rank-one w by mode-cycling ALS."""
    vecs = [rng.standard_normal(n) for n in op.mode_dims]
    vecs = [v / np.linalg.norm(v) for v in vecs]
    coeff = 1.0
    prev = None
    for _ in range(max(1, sweeps)):
        for mu in range(d):
            gram, rhs = _mode_normal_equations(
                op, residual_terms, vecs, coeff, mu
            )
            scale = np.linalg.norm(gram)
            if scale == 0.0 or not np.isfinite(scale):
                return (coeff, vecs), False
            try:
                w = solve_spd(gram, rhs)
            except NumericalBreakdownError:
                w = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            norm_w = np.linalg.norm(w)
            if norm_w < NUMERICAL_ZERO:
                return (coeff, vecs), False
            vecs[mu] = w / norm_w
            coeff = norm_w
        term = (coeff, vecs)
        a_term = _apply_terms(op, [term])
        value = (
            _terms_dot(a_term, a_term)
            - 2.0 * _terms_dot(a_term, residual_terms)
        )
        if prev is not None and abs(prev - value) <= tol * max(1.0, abs(prev)):
            prev = value
            break
        prev = value
    return (coeff, [v.copy() for v in vecs]), True


def _mode_normal_equations(op, residual_terms, vecs, coeff, mu):
    """Normal equations for the mode-``mu`` factor with the others fixed."""
    n = op.mode_dims[mu]
    gram = np.zeros((n, n))
    for mats_i in op.terms:
        for mats_j in op.terms:
            weight = 1.0
            for nu in range(len(vecs)):
                if nu == mu:
                    continue
                weight *= float(
                    (mats_i[nu] @ vecs[nu]) @ (mats_j[nu] @ vecs[nu])
                )
            gram += weight * (mats_i[mu].T @ mats_j[mu])
    rhs = np.zeros(n)
    for mats_i in op.terms:
        for c, rvecs in residual_terms:
            weight = c
            for nu in range(len(vecs)):
                if nu == mu:
                    continue
                weight *= float((mats_i[nu] @ vecs[nu]) @ rvecs[nu])
            rhs += weight * (mats_i[mu].T @ rvecs[mu])
    return gram, rhs
