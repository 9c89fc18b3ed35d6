"""Low-rank approximation of multivariate functions from point samples.

Canonical-format alternating least squares with ridge regularization,
cross-validation over rank/ridge grids, and tensorized-grid interpolation
or quadrature projection (the entry point of the grid-compression
pipeline).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import DenseTensor, dense_cap, solve_spd
from .errors import CapacityError, NumericalBreakdownError
from .formats import CPTensor


class SampleSet:
    """Point/value pairs ``(xi^k, y^k)`` inside a declared parameter box."""

    __slots__ = ("points", "values", "box")

    def __init__(self, points, values, box=None):
        points = np.asarray(points, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must be a K x d array with K >= 1")
        if values.shape != (points.shape[0],):
            raise ValueError("one value per sample point is required")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(values))):
            raise ValueError("samples must be finite")
        if box is not None:
            box = [(float(lo), float(hi)) for lo, hi in box]
            if len(box) != points.shape[1]:
                raise ValueError("box dimension does not match points")
            for j, (lo, hi) in enumerate(box):
                col = points[:, j]
                if col.min() < lo - 1e-12 or col.max() > hi + 1e-12:
                    raise ValueError(f"samples leave the box in dimension {j}")
        self.points = points
        self.values = values
        self.box = box

    @classmethod
    def from_function(cls, fn, box, count, seed):
        """Draw ``count`` uniform samples of ``fn`` over the box."""
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in box], dtype=np.float64)
        hi = np.array([b[1] for b in box], dtype=np.float64)
        points = lo + (hi - lo) * rng.random((count, len(box)))
        return cls(points, np.asarray(fn(points), dtype=np.float64), box=box)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


class FeatureBasis:
    """Per-dimension univariate families: monomials or orthonormal Legendre.

    Legendre polynomials are shifted to the per-dimension interval and
    normalized against the uniform probability measure on it, so their
    Gram matrix under Gauss quadrature is the identity.
    """

    def __init__(self, kinds, degrees, intervals):
        if not (len(kinds) == len(degrees) == len(intervals)):
            raise ValueError("kinds, degrees and intervals must align")
        for k in kinds:
            if k not in ("monomial", "legendre"):
                raise ValueError(f"unknown basis kind {k!r}")
        self.kinds = list(kinds)
        self.degrees = [int(n) for n in degrees]
        self.intervals = [(float(a), float(b)) for a, b in intervals]

    @classmethod
    def uniform(cls, d, degree, interval=(-1.0, 1.0), kind="legendre"):
        """Same kind/degree/interval in every dimension."""
        return cls([kind] * d, [degree] * d, [interval] * d)

    @property
    def dim(self) -> int:
        return len(self.kinds)

    def size(self, nu) -> int:
        """Number of functions in dimension ``nu`` (degree + 1)."""
        return self.degrees[nu] + 1

    @property
    def sizes(self) -> tuple:
        return tuple(self.size(nu) for nu in range(self.dim))

    def eval_dim(self, nu, x) -> np.ndarray:
        """Evaluation matrix of shape ``(len(x), size(nu))``."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        n = self.size(nu)
        a, b = self.intervals[nu]
        if self.kinds[nu] == "monomial":
            return np.vander(x, n, increasing=True)
        t = 2.0 * (x - a) / (b - a) - 1.0
        out = np.empty((x.size, n))
        out[:, 0] = 1.0
        if n > 1:
            out[:, 1] = t
        for k in range(2, n):
            out[:, k] = ((2 * k - 1) * t * out[:, k - 1]
                         - (k - 1) * out[:, k - 2]) / k
        return out * np.sqrt(2.0 * np.arange(n) + 1.0)

    def eval_rows(self, points):
        """Per-dimension evaluation matrices for a (K, d) point array."""
        points = np.asarray(points, dtype=np.float64)
        return [self.eval_dim(nu, points[:, nu]) for nu in range(self.dim)]

    def gauss_grid(self, nu, count):
        """Gauss points/weights on the interval, weights summing to one."""
        nodes, weights = leggauss(count)
        a, b = self.intervals[nu]
        return 0.5 * (a + b) + 0.5 * (b - a) * nodes, 0.5 * weights


def predict(coeffs: CPTensor, basis: FeatureBasis, points) -> np.ndarray:
    """Evaluate a coefficient-space CP tensor at sample points."""
    rows = basis.eval_rows(points)
    prod = np.ones((rows[0].shape[0], coeffs.rank))
    for feat, fac in zip(rows, coeffs.factors):
        prod *= feat @ fac
    return prod @ coeffs.weights


@dataclass
class FitReport:
    rank: int
    ridge: float
    seed: int
    sweeps_run: int
    train_rmse: float
    validation_rmse: float | None
    objective_history: list = field(default_factory=list)
    sample_ratio: float = 0.0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "ridge": self.ridge,
            "seed": self.seed,
            "sweeps_run": self.sweeps_run,
            "train_rmse": self.train_rmse,
            "validation_rmse": self.validation_rmse,
            "sample_ratio": self.sample_ratio,
            "warnings": self.warnings,
        }


def cp_als_fit(samples: SampleSet, basis: FeatureBasis, rank: int,
               ridge: float = 0.0, sweeps: int = 50, seed: int = 0,
               holdout: SampleSet | None = None, rel_tol: float = 1e-14):
    """Fit a rank-``rank`` canonical expansion by alternating least squares.

    Each mode update solves a ridge-regularized least-squares problem on
    that mode's coefficient block; the regularized objective (equal to the
    mean squared error when ``ridge=0``) is non-increasing at every mode
    update. Stops early when its relative change per sweep drops below
    ``rel_tol``.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if basis.dim != samples.dim:
        raise ValueError("basis dimension does not match samples")
    rng = np.random.default_rng(seed)
    k_samples = samples.count
    d = samples.dim
    y = samples.values
    feats = basis.eval_rows(samples.points)  # per-dim (K, n_nu)
    report_warnings = []
    free_params = rank * sum(basis.sizes)
    ratio = k_samples / free_params
    if ratio < 3.0:
        report_warnings.append(
            f"sample count {k_samples} below 3x the {free_params} free "
            f"parameters (ratio {ratio:.2f})"
        )
    blocks = [rng.standard_normal((basis.size(nu), rank)) for nu in range(d)]
    blocks = [b / np.linalg.norm(b, axis=0) for b in blocks]
    per_term = [feats[nu] @ blocks[nu] for nu in range(d)]  # (K, rank)

    def objective():
        pred = np.prod(per_term, axis=0).sum(axis=1)
        mse = float(np.mean((y - pred) ** 2))
        reg = sum(float(np.sum(b**2)) for b in blocks)
        return mse + ridge * reg / k_samples, mse

    history = []
    obj, _ = objective()
    sweeps_run = 0
    for sweep in range(sweeps):
        prev_obj = obj
        for mu in range(d):
            others = np.ones((k_samples, rank))
            for nu in range(d):
                if nu != mu:
                    others *= per_term[nu]
            design = np.einsum("ki,kt->kit", others, feats[mu])
            design = design.reshape(k_samples, rank * basis.size(mu))
            if ridge > 0.0:
                gram = design.T @ design + ridge * np.eye(design.shape[1])
                try:
                    coef = solve_spd(gram, design.T @ y)
                except NumericalBreakdownError:
                    coef = np.linalg.lstsq(design, y, rcond=None)[0]
            else:
                coef, _, eff_rank, _ = np.linalg.lstsq(design, y, rcond=None)
                if eff_rank < design.shape[1]:
                    msg = (
                        f"underdetermined mode-{mu} update (rank {eff_rank} "
                        f"of {design.shape[1]}); minimum-norm solution used"
                    )
                    report_warnings.append(msg)
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
            blocks[mu] = coef.reshape(rank, basis.size(mu)).T
            per_term[mu] = feats[mu] @ blocks[mu]
            obj, mse = objective()
            history.append(obj)
        sweeps_run = sweep + 1
        if prev_obj > 0 and abs(prev_obj - obj) <= rel_tol * prev_obj:
            break
    _, train_mse = objective()
    weights = np.ones(rank)
    coeffs = CPTensor(weights, blocks)
    validation = None
    if holdout is not None:
        resid = holdout.values - predict(coeffs, basis, holdout.points)
        validation = float(np.sqrt(np.mean(resid**2)))
    report = FitReport(
        rank=rank, ridge=ridge, seed=seed, sweeps_run=sweeps_run,
        train_rmse=float(np.sqrt(train_mse)), validation_rmse=validation,
        objective_history=history, sample_ratio=ratio,
        warnings=report_warnings,
    )
    return coeffs, report


@dataclass
class CrossValReport:
    table: list           # rows (rank, ridge, mean_rmse)
    best_rank: int
    best_ridge: float
    best_rmse: float

    def to_dict(self) -> dict:
        return {
            "table": [
                {"rank": r, "ridge": lam, "rmse": rm}
                for r, lam, rm in self.table
            ],
            "best_rank": self.best_rank,
            "best_ridge": self.best_ridge,
            "best_rmse": self.best_rmse,
        }


def cross_validate(samples: SampleSet, basis: FeatureBasis, ranks, ridges,
                   folds: int = 5, seed: int = 0, sweeps: int = 30):
    """K-fold selection of rank and ridge by mean validation RMSE.

    The fold split is a seeded shuffle, hence deterministic. Ties pick the
    smaller rank, then the smaller ridge.
    """
    if folds < 2:
        raise ValueError("at least 2 folds are required")
    if folds > samples.count:
        raise ValueError("more folds than samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(samples.count)
    fold_ids = np.array_split(perm, folds)
    table = []
    for rank in sorted(int(r) for r in ranks):
        for lam in sorted(float(v) for v in ridges):
            rmses = []
            for fold in fold_ids:
                mask = np.ones(samples.count, dtype=bool)
                mask[fold] = False
                train = SampleSet(samples.points[mask], samples.values[mask],
                                  box=samples.box)
                valid = SampleSet(samples.points[fold], samples.values[fold],
                                  box=samples.box)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    coeffs, _ = cp_als_fit(
                        train, basis, rank, ridge=lam, sweeps=sweeps,
                        seed=seed,
                    )
                resid = valid.values - predict(coeffs, basis, valid.points)
                rmses.append(float(np.sqrt(np.mean(resid**2))))
            table.append((rank, lam, float(np.mean(rmses))))
    best = min(table, key=lambda row: (row[2], row[0], row[1]))
    return CrossValReport(table, best[0], best[1], best[2])


def grid_project(fn, basis: FeatureBasis, grids, weights=None,
                 mode: str = "interpolation") -> DenseTensor:
    """Evaluate a function on a tensorized grid, optionally projecting.

    In ``interpolation`` mode the result is the value tensor
    ``U[k_1, ..., k_d] = fn(xi_1^{k_1}, ..., xi_d^{k_d})``. In
    ``projection`` mode ``weights`` must hold per-dimension quadrature
    weights and the result is the coefficient tensor of the approximate
    L2 projection onto the (orthonormal) basis.
    """
    if mode not in ("interpolation", "projection"):
        raise ValueError(f"unknown mode {mode!r}")
    grids = [np.asarray(g, dtype=np.float64) for g in grids]
    if len(grids) != basis.dim:
        raise ValueError("one grid per dimension is required")
    total = int(np.prod([g.size for g in grids]))
    if total > dense_cap():
        raise CapacityError(
            f"tensorized grid of {total} entries exceeds the cap "
            f"{dense_cap()}; evaluate on fewer points per dimension and "
            f"compress with tt_svd"
        )
    mesh = np.meshgrid(*grids, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    values = np.asarray(fn(points), dtype=np.float64)
    tensor = values.reshape([g.size for g in grids])
    if mode == "interpolation":
        return DenseTensor(tensor)
    if weights is None:
        raise ValueError("projection mode requires quadrature weights")
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    out = tensor
    for nu, (g, w) in enumerate(zip(grids, weights)):
        proj = basis.eval_dim(nu, g).T * w[None, :]  # (n_nu, len(g))
        out = np.moveaxis(np.tensordot(proj, out, axes=([1], [nu])), 0, nu)
    return DenseTensor(out)
