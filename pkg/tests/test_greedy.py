"""Strong/weak greedy selection, magic-point functionals, affine approximation."""

import numpy as np
import pytest

from tensormor import (
    AffineOperator,
    AffineVector,
    CoefficientFunction,
    DegeneracyError,
    ParameterDomain,
    ParametricLinearModel,
    SnapshotSet,
    TrainSet,
    affine_approximate,
    full_solve,
    geim_functionals,
    geim_interpolate,
    strong_greedy,
    weak_greedy,
    width_l2,
)
from tensormor.generators import diffusion_affine


def greedy_projection_errors(vectors, basis_columns):
    """Exhaustive-scan oracle for per-candidate projection errors."""
    if basis_columns:
        q = np.stack(basis_columns, axis=1)
        resid = vectors - q @ (q.T @ vectors)
    else:
        resid = vectors
    return np.linalg.norm(resid, axis=0)


class TestStrongGreedy:
    def test_orthogonal_norm_ordering(self):
        vectors = np.diag([3.0, 2.0, 1.0])
        snaps = SnapshotSet(vectors)
        result = strong_greedy(snaps, 3)
        assert result.selected == [0, 1, 2]
        assert result.report.errors == pytest.approx([3.0, 2.0, 1.0])

    def test_never_selects_spanned_candidate(self, rng):
        base = rng.standard_normal((6, 2))
        vectors = np.concatenate([base, 10.0 * base[:, :1]], axis=1)
        snaps = SnapshotSet(vectors)
        result = strong_greedy(snaps, 2)
        assert result.selected[0] == 2  # the large duplicate goes first
        assert 0 not in result.selected[1:]

    def test_per_step_argmax_matches_exhaustive_scan(self, rng):
        vectors = rng.standard_normal((10, 30))
        snaps = SnapshotSet(vectors)
        result = strong_greedy(snaps, 8)
        basis = []
        for step, pick in enumerate(result.selected):
            errors = greedy_projection_errors(vectors, basis)
            best = errors.max()
            assert errors[pick] == pytest.approx(best, rel=1e-10)
            assert pick == int(np.argmax(errors >= best * (1 - 1e-12)))
            v = vectors[:, pick].copy()
            for b in basis:
                v -= (b @ v) * b
            for b in basis:
                v -= (b @ v) * b
            basis.append(v / np.linalg.norm(v))

    def test_rank_deficiency_early_stop(self, rng):
        base = rng.standard_normal((8, 3))
        coeffs = rng.standard_normal((3, 10))
        snaps = SnapshotSet(base @ coeffs)
        result = strong_greedy(snaps, 6)
        assert result.degenerate
        assert result.space.dim == 3

    def test_non_increasing_and_above_width(self, rng):
        vectors = rng.standard_normal((12, 25))
        snaps = SnapshotSet(vectors)
        result = strong_greedy(snaps, 10)
        errors = result.report.errors
        assert np.all(np.diff(errors) <= 1e-12)
        widths = width_l2(snaps, 10).errors
        for m, err in zip(result.report.ms, errors):
            assert err >= widths[m] - 1e-12

    def test_m_out_of_range(self, rng):
        snaps = SnapshotSet(rng.standard_normal((5, 4)))
        with pytest.raises(ValueError):
            strong_greedy(snaps, 5)


class TestWeakGreedy:
    def test_exact_indicator_matches_strong(self, rng):
        model = diffusion_affine(size=24, dim=2)
        points = model.domain.sample(30, rng)
        train = TrainSet(points)
        weak = weak_greedy(model, "exact", train, 6)
        columns = np.stack([full_solve(model, xi) for xi in points], axis=1)
        strong = strong_greedy(SnapshotSet(columns, params=points), 6)
        assert weak.selected == strong.selected

    def test_identity_operator_residual_equals_exact(self, rng):
        size = 10
        domain = ParameterDomain([(0.1, 1.0)] * 2)
        op = AffineOperator(
            [(np.eye(size), CoefficientFunction.constant(1.0))], domain
        )
        vecs = [rng.standard_normal(size) for _ in range(2)]
        rhs = AffineVector(
            [(vecs[0], CoefficientFunction.affine(0)),
             (vecs[1], CoefficientFunction.exp(1))], domain,
        )
        model = ParametricLinearModel(op, rhs, spd=True,
                                      alpha_lb=1.0, beta_ub=1.0)
        points = domain.sample(20, rng)
        train = TrainSet(points)
        res_weak = weak_greedy(model, "residual", train, 3)
        res_exact = weak_greedy(model, "exact", train, 3)
        assert res_weak.selected == res_exact.selected
        assert res_weak.gamma == pytest.approx(1.0)

    def test_gamma_inequality_per_step(self, rng):
        model = diffusion_affine(size=24, dim=3)
        points = model.domain.sample(40, rng)
        train = TrainSet(points)
        m = 5
        result = weak_greedy(model, "residual", train, m)
        gamma = result.gamma
        assert gamma is not None and 0 < gamma <= 1
        columns = np.stack([full_solve(model, xi) for xi in points], axis=1)
        basis = []
        for pick in result.selected:
            errors = greedy_projection_errors(columns, basis)
            assert errors[pick] >= gamma * errors.max() * (1 - 1e-10)
            v = columns[:, pick].copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            basis.append(v / np.linalg.norm(v))

    def test_failing_point_excluded_with_warning(self, rng):
        model = diffusion_affine(size=16, dim=2)
        good = model.domain.sample(10, rng)
        bad = np.array([[5.0, 5.0]])  # outside the box: indicator fails
        train = TrainSet(np.concatenate([good, bad], axis=0))
        result = weak_greedy(model, "residual", train, 3)
        assert result.warnings
        assert 10 not in result.selected

    def test_unknown_indicator(self, rng):
        model = diffusion_affine(size=16, dim=2)
        train = TrainSet(model.domain.sample(5, rng))
        with pytest.raises(ValueError):
            weak_greedy(model, "oracle", train, 2)


class TestGeim:
    def test_canonical_vectors(self):
        w = np.eye(5)[:, :3]
        result = geim_functionals(w)
        assert result.functional_indices == [0, 1, 2]
        assert np.allclose(result.interpolation_matrix, np.eye(3))

    def test_single_vector_max_magnitude_entry(self, rng):
        w = np.array([[0.1], [-2.0], [0.5]])
        result = geim_functionals(w)
        assert result.functional_indices == [1]

    def test_reproduces_span_members(self, rng):
        w = rng.standard_normal((12, 4))
        result = geim_functionals(w)
        v = w @ rng.standard_normal(4)
        iv = geim_interpolate(result, w, v)
        assert np.allclose(iv, v, atol=1e-10 * np.linalg.norm(v))

    def test_duality_conditions(self, rng):
        w = rng.standard_normal((10, 4))
        result = geim_functionals(w)
        binv = np.linalg.inv(result.interpolation_matrix)
        for i in range(4):
            for j in range(4):
                phi = float(binv[i] @ w[result.functional_indices, j])
                assert phi == pytest.approx(1.0 if i == j else 0.0,
                                            abs=1e-10)

    def test_idempotence(self, rng):
        w = rng.standard_normal((15, 5))
        result = geim_functionals(w)
        v = rng.standard_normal(15)
        once = geim_interpolate(result, w, v)
        twice = geim_interpolate(result, w, once)
        assert np.allclose(once, twice, atol=1e-10 * np.linalg.norm(v))

    def test_degenerate_family(self, rng):
        col = rng.standard_normal(6)
        w = np.stack([col, 2.0 * col], axis=1)
        with pytest.raises(DegeneracyError) as err:
            geim_functionals(w)
        assert err.value.step == 1


class TestAffineApproximate:
    @staticmethod
    def affine_family(size, rng):
        mats = [rng.standard_normal((size, size)) for _ in range(3)]

        def sample(xi):
            return (mats[0] + np.sin(xi[0]) * mats[1]
                    + xi[1] ** 2 * mats[2])

        return mats, sample

    def test_exact_recovery_of_affine_family(self, rng):
        size = 6
        _, sample = self.affine_family(size, rng)
        params = rng.uniform(0.0, 1.0, (40, 2))
        samples = [sample(xi) for xi in params]
        approx, info = affine_approximate(params, samples, 3)
        assert info["achieved"] == 3
        for k, xi in enumerate(params):
            err = np.linalg.norm(approx.assemble(xi) - samples[k])
            assert err <= 1e-10 * np.linalg.norm(samples[k])

    def test_all_points_exact_when_l_equals_k(self, rng):
        size = 4
        params = rng.uniform(0.0, 1.0, (5, 1))
        samples = [rng.standard_normal((size, size)) for _ in range(5)]
        approx, info = affine_approximate(params, samples, 5)
        assert info["achieved"] == 5
        for k, xi in enumerate(params):
            err = np.linalg.norm(approx.assemble(xi) - samples[k])
            assert err <= 1e-9 * np.linalg.norm(samples[k])

    def test_rank_deficient_early_stop(self, rng):
        base = rng.standard_normal((4, 4))
        params = rng.uniform(0.0, 1.0, (6, 1))
        samples = [float(xi) * base for xi in params[:, 0]]
        _, info = affine_approximate(params, samples, 4)
        assert info["achieved"] == 1

    def test_smooth_family_error_within_lebesgue_bound(self, rng):
        size = 5
        params = np.linspace(0.0, 1.0, 30)[:, None]
        base = [rng.standard_normal((size, size)) for _ in range(4)]

        def sample(xi):
            t = xi[0]
            return (base[0] + np.exp(-t) * base[1] + np.cos(3 * t) * base[2]
                    + t**3 * base[3])

        samples = [sample(xi) for xi in params]
        n_terms = 5
        approx, info = affine_approximate(params, samples, n_terms)
        achieved = info["achieved"]
        columns = np.stack([s.reshape(-1) for s in samples], axis=1)
        # greedy projection error of the selected span over the train set
        q = np.stack(
            [approx.arrays[i].reshape(-1) for i in range(achieved)], axis=1
        )
        q, _ = np.linalg.qr(q)
        proj_err = np.linalg.norm(columns - q @ (q.T @ columns), axis=0)
        # interpolation error <= (1 + Lebesgue-type constant) * projection err
        max_interp = max(
            np.linalg.norm(approx.assemble(xi) - samples[k])
            for k, xi in enumerate(params)
        )
        cond = info["condition_number"]
        assert max_interp <= (1.0 + cond) * proj_err.max() + 1e-12

    def test_interpolates_exactly_at_selected_points(self, rng):
        size = 4
        params = rng.uniform(0.0, 1.0, (12, 2))
        samples = [rng.standard_normal((size, size)) for _ in range(12)]
        approx, info = affine_approximate(params, samples, 4)
        for k in info["selected"]:
            err = np.linalg.norm(approx.assemble(params[k]) - samples[k])
            assert err <= 1e-10 * np.linalg.norm(samples[k])

    def test_entry_provider_extends_to_new_points(self, rng):
        size = 5
        _, sample = self.affine_family(size, rng)
        params = rng.uniform(0.0, 1.0, (30, 2))
        samples = [sample(xi) for xi in params]
        approx, _ = affine_approximate(params, samples, 3,
                                       entry_provider=sample)
        xi_new = np.array([0.123, 0.456])
        err = np.linalg.norm(approx.assemble(xi_new) - sample(xi_new))
        assert err <= 1e-9 * np.linalg.norm(sample(xi_new))
