"""Built-in benchmark problems: an affine diffusion model and test functions."""

from __future__ import annotations

import numpy as np

from .rom import (
    AffineOperator,
    AffineVector,
    CoefficientFunction,
    ParameterDomain,
    ParametricLinearModel,
)


def laplacian_stiffness(n: int) -> np.ndarray:
    """1D Dirichlet Laplacian stiffness matrix tridiag(-1, 2, -1)."""
    mat = 2.0 * np.eye(n)
    off = np.arange(n - 1)
    mat[off, off + 1] = -1.0
    mat[off + 1, off] = -1.0
    return mat


def _tridiag_eig_bounds(n: int):
    """Extreme eigenvalues of tridiag(-1,2,-1): 2 - 2 cos(k pi / (n+1))."""
    lo = 2.0 - 2.0 * np.cos(np.pi / (n + 1))
    hi = 2.0 - 2.0 * np.cos(n * np.pi / (n + 1))
    return lo, hi


def diffusion_affine(size: int = 64, dim: int = 4, xi_low: float = 0.1,
                     xi_high: float = 1.0) -> ParametricLinearModel:
    """Parametric diffusion: ``A(xi) = A_0 + sum_nu xi_nu A_nu``.

    ``A_0`` is the 1D Laplacian stiffness of the full index range and each
    ``A_nu`` contributes a local stiffness block on one of ``dim``
    contiguous sub-ranges, so the operator is SPD throughout the box with
    analytic bounds ``alpha_lb = lambda_min(A_0)`` and ``beta_ub =
    lambda_max(A_0) + sum_nu lambda_max(A_nu)``. Coefficients factorize
    per dimension, so the model tensorizes onto parameter grids.
    """
    if size < 2 * dim:
        raise ValueError("need at least two rows per parameter block")
    a0 = laplacian_stiffness(size)
    blocks = np.array_split(np.arange(size), dim)
    terms = [(a0, CoefficientFunction.constant(1.0))]
    alpha_lb, beta_ub = _tridiag_eig_bounds(size)
    for nu, rows in enumerate(blocks):
        block = np.zeros((size, size))
        block[np.ix_(rows, rows)] = laplacian_stiffness(len(rows))
        terms.append((block, CoefficientFunction.affine(nu)))
        beta_ub += xi_high * _tridiag_eig_bounds(len(rows))[1]
    domain = ParameterDomain([(xi_low, xi_high)] * dim, measure="uniform")
    rhs = AffineVector([(np.ones(size), CoefficientFunction.constant(1.0))],
                       domain)
    return ParametricLinearModel(
        AffineOperator(terms, domain), rhs, spd=True,
        alpha_lb=alpha_lb, beta_ub=beta_ub,
    )


class FunctionGenerator:
    """Deterministic multivariate test function over a parameter box."""

    def __init__(self, name, fn, box):
        self.name = name
        self._fn = fn
        self.domain = ParameterDomain(box, measure="uniform")

    def __call__(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[None, :]
        return self._fn(points)

    @property
    def dim(self) -> int:
        return self.domain.dim


def additive_fn(dim: int = 4, box=None) -> FunctionGenerator:
    """``u(xi) = sum_nu sin((nu + 1) pi xi_nu)``; every alpha-rank <= 2."""
    box = [(0.0, 1.0)] * dim if box is None else box

    def fn(points):
        out = np.zeros(points.shape[0])
        for nu in range(dim):
            out += np.sin((nu + 1) * np.pi * points[:, nu])
        return out

    return FunctionGenerator("additive-fn", fn, box)


def rank_one_fn(dim: int = 4, box=None) -> FunctionGenerator:
    """``u(xi) = prod_nu (1 + 0.5 cos((nu + 1) xi_nu))``; all ranks 1."""
    box = [(0.0, 1.0)] * dim if box is None else box

    def fn(points):
        out = np.ones(points.shape[0])
        for nu in range(dim):
            out *= 1.0 + 0.5 * np.cos((nu + 1) * points[:, nu])
        return out

    return FunctionGenerator("rank-one-fn", fn, box)


def multiquadric_fn(dim: int = 4, c: float = 1.0, box=None) -> FunctionGenerator:
    """``u(xi) = sqrt(c + ||xi||^2)``; genuinely full-rank decay study."""
    box = [(0.0, 1.0)] * dim if box is None else box

    def fn(points):
        return np.sqrt(c + np.sum(points**2, axis=1))

    return FunctionGenerator("multiquadric-fn", fn, box)


GENERATORS = {
    "diffusion-affine": diffusion_affine,
    "additive-fn": additive_fn,
    "rank-one-fn": rank_one_fn,
    "multiquadric-fn": multiquadric_fn,
}


def make_generator(name, **params):
    """Instantiate a registered generator; raises KeyError for unknown names."""
    if name not in GENERATORS:
        raise KeyError(f"unknown generator {name!r}")
    return GENERATORS[name](**params)
