"""Affine parametric linear models and minimal-residual Galerkin reduction.

A model is ``A(xi) u = b(xi)`` with ``A(xi) = sum_i alpha_i(xi) A_i`` and
``b(xi) = sum_j beta_j(xi) b_j``. The reduced model precomputes every
full-dimension quantity so that online solves at a new parameter touch only
objects of size polynomial in the term counts and the reduced dimension.
"""

from __future__ import annotations

import numpy as np

from .core import cholesky_spd, solve_spd
from .errors import (
    DomainError,
    NumericalBreakdownError,
    UnsupportedCoefficientError,
)
from .reduction import Subspace


class CoefficientFunction:
    """Declarative scalar function of the parameter vector xi.

    Supported kinds: multivariate ``monomial`` (exponent tuple and scale),
    the named analytic registry (``constant``, ``affine`` xi_nu,
    ``exp`` of c*xi_nu, ``reciprocal`` 1/(c+xi_nu)), and ``tabulated``
    interpolation coefficients produced by the affine approximation of an
    operator family.
    """

    def __init__(self, kind, **params):
        self.kind = kind
        self.params = params

    # -- constructors -------------------------------------------------------

    @classmethod
    def monomial(cls, exponents, scale=1.0):
        return cls("monomial", exponents=tuple(int(e) for e in exponents),
                   scale=float(scale))

    @classmethod
    def constant(cls, value=1.0):
        return cls("constant", value=float(value))

    @classmethod
    def affine(cls, dim, scale=1.0):
        return cls("affine", dim=int(dim), scale=float(scale))

    @classmethod
    def exp(cls, dim, rate=1.0):
        return cls("exp", dim=int(dim), rate=float(rate))

    @classmethod
    def reciprocal(cls, dim, shift=1.0):
        return cls("reciprocal", dim=int(dim), shift=float(shift))

    @classmethod
    def tabulated(cls, points, values, entry_indices=None, solve_matrix=None,
                  row=None, entry_provider=None):
        """Interpolation coefficient over selected parameter points.

        ``values[k]`` is the coefficient at ``points[k]``. At a new point
        the L x L interpolation system ``solve_matrix`` is re-solved against
        the entries returned by ``entry_provider`` and component ``row`` is
        taken.
        """
        return cls(
            "tabulated",
            points=np.asarray(points, dtype=np.float64),
            values=np.asarray(values, dtype=np.float64),
            entry_indices=entry_indices,
            solve_matrix=None if solve_matrix is None
            else np.asarray(solve_matrix, dtype=np.float64),
            row=row,
            entry_provider=entry_provider,
        )

    # -- evaluation ---------------------------------------------------------

    def __call__(self, xi) -> float:
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        kind = self.kind
        p = self.params
        if kind == "monomial":
            exps = p["exponents"]
            if len(exps) != xi.size:
                raise ValueError("exponent tuple does not match parameter dim")
            return float(p["scale"] * np.prod(xi**np.asarray(exps)))
        if kind == "constant":
            return p["value"]
        if kind == "affine":
            return float(p["scale"] * xi[p["dim"]])
        if kind == "exp":
            return float(np.exp(p["rate"] * xi[p["dim"]]))
        if kind == "reciprocal":
            return float(1.0 / (p["shift"] + xi[p["dim"]]))
        if kind == "tabulated":
            return self._eval_tabulated(xi)
        raise ValueError(f"unknown coefficient kind {kind!r}")

    def _eval_tabulated(self, xi) -> float:
        points = self.params["points"]
        match = np.where(np.all(np.abs(points - xi[None, :]) < 1e-12, axis=1))[0]
        if match.size:
            return float(self.params["values"][match[0]])
        provider = self.params["entry_provider"]
        if provider is None:
            raise ValueError(
                "tabulated coefficient has no entry provider; it is only "
                "evaluable at its interpolation points"
            )
        entries = np.asarray(provider(xi), dtype=np.float64)
        coeffs = np.linalg.solve(self.params["solve_matrix"], entries)
        return float(coeffs[self.params["row"]])

    # -- per-dimension factorization (for tensorized assembly) ---------------

    def factorize(self, d):
        """Univariate callables g_1..g_d with ``self(xi) = prod g_nu(xi_nu)``.

        Returns None when the coefficient does not factorize.
        """
        kind = self.kind
        p = self.params
        if kind == "monomial":
            exps = p["exponents"]
            if len(exps) != d:
                raise ValueError("exponent tuple does not match dimension")
            scale = p["scale"]

            def power(e, s):
                return lambda x: s * np.asarray(x, dtype=np.float64) ** e

            facs = [power(exps[0], scale)]
            facs += [power(e, 1.0) for e in exps[1:]]
            return facs
        if kind == "constant":
            value = p["value"]
            facs = [lambda x: np.full_like(np.asarray(x, dtype=np.float64), value)]
            facs += [
                lambda x: np.ones_like(np.asarray(x, dtype=np.float64))
                for _ in range(d - 1)
            ]
            return facs
        if kind in ("affine", "exp", "reciprocal"):
            dim = p["dim"]

            if kind == "affine":
                scale = p["scale"]
                var = lambda x: scale * np.asarray(x, dtype=np.float64)
            elif kind == "exp":
                rate = p["rate"]
                var = lambda x: np.exp(rate * np.asarray(x, dtype=np.float64))
            else:
                shift = p["shift"]
                var = lambda x: 1.0 / (shift + np.asarray(x, dtype=np.float64))
            ones = lambda x: np.ones_like(np.asarray(x, dtype=np.float64))
            return [var if nu == dim else ones for nu in range(d)]
        return None

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "tabulated":
            return {
                "kind": "tabulated",
                "points": self.params["points"].tolist(),
                "values": self.params["values"].tolist(),
            }
        out = {"kind": self.kind}
        out.update(self.params)
        return out

    @classmethod
    def from_dict(cls, data) -> "CoefficientFunction":
        kind = data["kind"]
        args = {k: v for k, v in data.items() if k != "kind"}
        if kind == "monomial":
            return cls.monomial(args["exponents"], args.get("scale", 1.0))
        if kind == "constant":
            return cls.constant(args.get("value", 1.0))
        if kind == "affine":
            return cls.affine(args["dim"], args.get("scale", 1.0))
        if kind == "exp":
            return cls.exp(args["dim"], args.get("rate", 1.0))
        if kind == "reciprocal":
            return cls.reciprocal(args["dim"], args.get("shift", 1.0))
        if kind == "tabulated":
            return cls.tabulated(args["points"], args["values"])
        raise ValueError(f"unknown coefficient kind {kind!r}")


class ParameterDomain:
    """Product-of-intervals parameter box with a measure tag."""

    MEASURES = ("uniform", "gaussian-truncated", "user")

    def __init__(self, box, measure="uniform"):
        box = [(float(lo), float(hi)) for lo, hi in box]
        if any(hi < lo for lo, hi in box):
            raise ValueError("empty interval in parameter box")
        if measure not in self.MEASURES:
            raise ValueError(f"unknown measure tag {measure!r}")
        self.box = box
        self.measure = measure

    @property
    def dim(self) -> int:
        return len(self.box)

    def contains(self, xi) -> bool:
        xi = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        if xi.size != self.dim:
            return False
        return all(
            lo - 1e-12 <= x <= hi + 1e-12 for x, (lo, hi) in zip(xi, self.box)
        )

    def sample(self, count, rng) -> np.ndarray:
        """Draw ``count`` points; shape (count, dim)."""
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        if self.measure == "uniform":
            return lo + (hi - lo) * rng.random((count, self.dim))
        if self.measure == "gaussian-truncated":
            mid = 0.5 * (lo + hi)
            sd = (hi - lo) / 4.0
            out = np.empty((count, self.dim))
            for k in range(count):
                for j in range(self.dim):
                    while True:
                        x = rng.normal(mid[j], sd[j]) if sd[j] > 0 else mid[j]
                        if lo[j] <= x <= hi[j]:
                            out[k, j] = x
                            break
            return out
        raise ValueError("cannot sample from a user-quadrature domain")

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "measure": self.measure}

    @classmethod
    def from_dict(cls, data) -> "ParameterDomain":
        return cls(data["box"], data.get("measure", "uniform"))


class _AffineSum:
    """Shared machinery of AffineOperator / AffineVector."""

    def __init__(self, terms, domain: ParameterDomain):
        if not terms:
            raise ValueError("at least one affine term is required")
        arrays = []
        coeffs = []
        for arr, coeff in terms:
            arrays.append(np.asarray(arr, dtype=np.float64))
            coeffs.append(coeff)
        first = arrays[0].shape
        for a in arrays[1:]:
            if a.shape != first:
                raise ValueError("all affine terms must share their shape")
        self.arrays = arrays
        self.coefficients = coeffs
        self.domain = domain

    @property
    def n_terms(self) -> int:
        return len(self.arrays)

    def coefficient_values(self, xi) -> np.ndarray:
        if not self.domain.contains(xi):
            raise DomainError(f"parameter {xi} outside the declared box")
        return np.array([c(xi) for c in self.coefficients])

    def assemble(self, xi) -> np.ndarray:
        values = self.coefficient_values(xi)
        out = np.zeros_like(self.arrays[0])
        for v, a in zip(values, self.arrays):
            out += v * a
        return out


class AffineOperator(_AffineSum):
    """``A(xi) = sum_i alpha_i(xi) A_i`` with square matrix terms."""

    def __init__(self, terms, domain):
        super().__init__(terms, domain)
        shape = self.arrays[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError("operator terms must be square matrices")

    @property
    def dim(self) -> int:
        return self.arrays[0].shape[0]


class AffineVector(_AffineSum):
    """``b(xi) = sum_j beta_j(xi) b_j`` with vector terms."""

    def __init__(self, terms, domain):
        super().__init__(terms, domain)
        if self.arrays[0].ndim != 1:
            raise ValueError("vector terms must be 1-d")

    @property
    def dim(self) -> int:
        return self.arrays[0].shape[0]


class ParametricLinearModel:
    """Affine operator and right-hand side, plus optional stability bounds.

    ``alpha_lb`` / ``beta_ub`` are uniform lower/upper bounds on the
    operator's extreme singular values over the box (floats), used for
    suboptimality constants of weak greedy selection; ``spd`` declares the
    operator symmetric positive definite throughout the box.
    """

    def __init__(self, operator: AffineOperator, rhs: AffineVector,
                 spd=False, alpha_lb=None, beta_ub=None):
        if operator.dim != rhs.dim:
            raise ValueError("operator and right-hand side dimensions differ")
        self.operator = operator
        self.rhs = rhs
        self.spd = bool(spd)
        self.alpha_lb = None if alpha_lb is None else float(alpha_lb)
        self.beta_ub = None if beta_ub is None else float(beta_ub)

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def domain(self) -> ParameterDomain:
        return self.operator.domain


def assemble(model: ParametricLinearModel, xi):
    """Materialize ``(A(xi), b(xi))`` by term-wise summation."""
    return model.operator.assemble(xi), model.rhs.assemble(xi)


def full_solve(model: ParametricLinearModel, xi) -> np.ndarray:
    """Solve the full-order system at ``xi`` to relative residual 1e-10."""
    a, b = assemble(model, xi)
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalBreakdownError(
            f"singular assembly at xi={xi}: {exc}", cond=np.inf
        ) from exc
    norm_b = np.linalg.norm(b)
    resid = np.linalg.norm(a @ x - b)
    if norm_b > 0 and resid > 1e-10 * norm_b:
        cond = float(np.linalg.cond(a))
        raise NumericalBreakdownError(
            f"ill-conditioned assembly at xi={xi}: relative residual "
            f"{resid / norm_b:.3e}", cond=cond
        )
    return x


def stability_bounds_dense(model: ParametricLinearModel, xi):
    """Extreme singular values (alpha(xi), beta(xi)) by dense eigensolves."""
    a, _ = assemble(model, xi)
    if model.spd:
        eigs = np.linalg.eigvalsh(a)
        return float(eigs[0]), float(eigs[-1])
    s = np.linalg.svd(a, compute_uv=False)
    return float(s[-1]), float(s[0])


class ReducedModel:
    """Minimal-residual Galerkin reduced model with offline/online split.

    All cross terms between operator terms, right-hand side terms and the
    basis are precomputed; :meth:`solve` and :meth:`residual_norm` touch
    only arrays of size (L, R, m) and never the full dimension.
    """

    def __init__(self, space, gram, cross_h, rhs_gram, alpha_coeffs,
                 beta_coeffs, domain, model=None):
        self.space = space
        self._gram = gram          # (L, L, m, m)
        self._cross = cross_h      # (L, R, m)
        self._rhs_gram = rhs_gram  # (R, R)
        self._alpha = alpha_coeffs
        self._beta = beta_coeffs
        self.domain = domain
        self.model = model

    @property
    def dim(self) -> int:
        return self._gram.shape[-1]

    def _coeff_values(self, xi):
        if not self.domain.contains(xi):
            raise DomainError(f"parameter {xi} outside the declared box")
        a = np.array([c(xi) for c in self._alpha])
        b = np.array([c(xi) for c in self._beta])
        return a, b

    def normal_system(self, xi):
        """Reduced normal matrix and right-hand side at ``xi``."""
        a, b = self._coeff_values(xi)
        normal = np.einsum("i,j,ijkl->kl", a, a, self._gram)
        rhs = np.einsum("i,j,ijk->k", a, b, self._cross)
        const = float(b @ self._rhs_gram @ b)
        return normal, rhs, const

    def solve(self, xi):
        """Reduced coefficients and residual norm; no M-sized data touched."""
        normal, rhs, const = self.normal_system(xi)
        if self.dim == 0:
            return np.zeros(0), float(np.sqrt(max(const, 0.0))), const
        try:
            s = solve_spd(normal, rhs)
        except NumericalBreakdownError as exc:
            raise NumericalBreakdownError(
                f"reduced normal matrix not SPD at xi={xi} "
                f"(alpha(xi) <= 0 or severe ill-conditioning)",
                pivot=exc.pivot,
            ) from exc
        raw = float(s @ normal @ s - 2.0 * s @ rhs + const)
        return s, float(np.sqrt(max(raw, 0.0))), raw

    def residual_norm(self, s, xi, with_raw=False):
        """W-norm of ``A(xi) V s - b(xi)`` from precomputed terms.

        The squared value is clamped at zero; pass ``with_raw=True`` to
        also obtain the unclamped value.
        """
        normal, rhs, const = self.normal_system(xi)
        s = np.asarray(s, dtype=np.float64)
        raw = float(s @ normal @ s - 2.0 * s @ rhs + const)
        delta = float(np.sqrt(max(raw, 0.0)))
        return (delta, raw) if with_raw else delta

    def lift(self, s) -> np.ndarray:
        """Expand reduced coefficients to the full space (touches M)."""
        return self.space.basis @ np.asarray(s, dtype=np.float64)


def build_reduced(model: ParametricLinearModel, space: Subspace,
                  weight_matrix=None) -> ReducedModel:
    """Precompute all reduced cross terms for minres-Galerkin solves.

    ``weight_matrix`` is an optional SPD matrix defining the residual norm;
    it is applied through its Cholesky factor (identity by default).
    """
    basis = space.basis
    if basis.shape[0] != model.dim:
        raise ValueError(
            f"basis rows {basis.shape[0]} do not match model dimension "
            f"{model.dim}"
        )
    a_terms = model.operator.arrays
    b_terms = model.rhs.arrays
    if weight_matrix is not None:
        chol = cholesky_spd(weight_matrix)
        av = [chol.T @ (a @ basis) for a in a_terms]
        bw = [chol.T @ b for b in b_terms]
    else:
        av = [a @ basis for a in a_terms]
        bw = list(b_terms)
    n_l, n_r, m = len(av), len(bw), basis.shape[1]
    gram = np.empty((n_l, n_l, m, m))
    for i in range(n_l):
        for j in range(n_l):
            gram[i, j] = av[i].T @ av[j]
    cross = np.empty((n_l, n_r, m))
    for i in range(n_l):
        for j in range(n_r):
            cross[i, j] = av[i].T @ bw[j]
    rhs_gram = np.empty((n_r, n_r))
    for i in range(n_r):
        for j in range(n_r):
            rhs_gram[i, j] = bw[i] @ bw[j]
    return ReducedModel(
        space, gram, cross, rhs_gram,
        list(model.operator.coefficients), list(model.rhs.coefficients),
        model.domain, model=model,
    )


def solve_reduced(rm: ReducedModel, xi):
    """Minres-Galerkin solution at ``xi``.

    Returns ``(s, lifted, delta)``: reduced coefficients, the lifted vector
    ``V s``, and the W-residual norm computed offline/online.
    """
    s, delta, _ = rm.solve(xi)
    return s, rm.lift(s), delta


def residual_indicator(rm: ReducedModel, s, xi, with_raw=False):
    """Residual-norm error indicator for arbitrary reduced coefficients."""
    return rm.residual_norm(s, xi, with_raw=with_raw)
