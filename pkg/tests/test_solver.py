"""Kronecker operators, truncated Richardson, greedy rank-one corrections."""

import numpy as np
import pytest

from tensormor import (
    CPTensor,
    DivergenceError,
    KroneckerOperator,
    TTTensor,
    UnsupportedCoefficientError,
    affine_rhs_cp,
    assemble,
    assemble_from_affine,
    cp_apply,
    cp_to_tt,
    greedy_rank_one,
    op_apply,
    truncated_richardson,
    tt_add,
    tt_norm,
)
from tensormor.generators import diffusion_affine, laplacian_stiffness

from oracles import kron_sum_dense


def laplacian_2d(n=16):
    t = laplacian_stiffness(n)
    eye = np.eye(n)
    return KroneckerOperator([[eye, t], [t, eye]])


def rank_one_tt(vectors):
    return TTTensor([v.reshape(1, -1, 1) for v in vectors])


def random_tt(rng, shape, ranks):
    full = (1,) + tuple(ranks) + (1,)
    return TTTensor([rng.standard_normal((full[i], n, full[i + 1]))
                     for i, n in enumerate(shape)])


class TestOpApply:
    def test_identity_term_leaves_input(self, rng):
        op = KroneckerOperator([[np.eye(3), np.eye(4)]])
        x = random_tt(rng, (3, 4), (2,))
        y = op_apply(op, x)
        assert np.allclose(y.to_dense().array, x.to_dense().array,
                           atol=1e-13)

    def test_rank_bound_on_rank_one_input(self, rng):
        terms = [[rng.standard_normal((3, 3)) for _ in range(3)]
                 for _ in range(4)]
        op = KroneckerOperator(terms)
        x = rank_one_tt([rng.standard_normal(3) for _ in range(3)])
        y = op_apply(op, x)
        assert all(r <= 4 for r in y.ranks)

    def test_matches_dense_kronecker_oracle(self, rng):
        terms = [[rng.standard_normal((4, 4)) for _ in range(3)]
                 for _ in range(3)]
        op = KroneckerOperator(terms)
        x = random_tt(rng, (4, 4, 4), (2, 3))
        dense = kron_sum_dense(terms) @ x.to_dense().array.reshape(-1)
        got = op_apply(op, x).to_dense().array.reshape(-1)
        assert np.allclose(got, dense, atol=1e-10 * np.linalg.norm(dense))

    def test_linearity(self, rng):
        terms = [[rng.standard_normal((3, 3)) for _ in range(2)]
                 for _ in range(2)]
        op = KroneckerOperator(terms)
        x = random_tt(rng, (3, 3), (2,))
        y = random_tt(rng, (3, 3), (2,))
        lhs = op_apply(op, tt_add(x, y)).to_dense().array
        rhs = tt_add(op_apply(op, x), op_apply(op, y)).to_dense().array
        assert np.allclose(lhs, rhs, atol=1e-10 * np.linalg.norm(rhs))

    def test_size_mismatch(self, rng):
        op = KroneckerOperator([[np.eye(3), np.eye(4)]])
        with pytest.raises(ValueError):
            op_apply(op, random_tt(rng, (4, 3), (1,)))

    def test_cp_apply_matches_dense(self, rng):
        terms = [[rng.standard_normal((3, 3)) for _ in range(3)]
                 for _ in range(2)]
        op = KroneckerOperator(terms)
        x = CPTensor(rng.standard_normal(2),
                     [rng.standard_normal((3, 2)) for _ in range(3)])
        dense = kron_sum_dense(terms) @ x.to_dense().array.reshape(-1)
        got = cp_apply(op, x).to_dense().array.reshape(-1)
        assert np.allclose(got, dense, atol=1e-10 * np.linalg.norm(dense))
        assert cp_apply(op, x).rank <= 2 * 2


class TestAssembleFromAffine:
    def test_constant_coefficient_gives_identity_diagonals(self):
        model = diffusion_affine(size=8, dim=2)
        grids = [np.linspace(0.1, 1.0, 3)] * 2
        op, _ = assemble_from_affine(model, grids)
        # first term has the constant coefficient
        for mat in op.terms[0][1:]:
            assert np.allclose(mat, np.eye(3))

    def test_affine_coefficient_evaluations_on_grid(self):
        model = diffusion_affine(size=8, dim=2, xi_low=0.0, xi_high=1.0)
        grids = [np.array([0.0, 0.5, 1.0]), np.array([0.2, 0.4, 0.6])]
        op, _ = assemble_from_affine(model, grids)
        # term 1 carries coefficient xi_0
        assert np.allclose(op.terms[1][1], np.diag([0.0, 0.5, 1.0]))
        assert np.allclose(op.terms[1][2], np.eye(3))
        # term 2 carries coefficient xi_1
        assert np.allclose(op.terms[2][2], np.diag([0.2, 0.4, 0.6]))

    def test_grid_point_contraction_matches_assemble(self, rng):
        model = diffusion_affine(size=6, dim=2)
        grids = [np.linspace(0.1, 1.0, 4), np.linspace(0.1, 1.0, 3)]
        op, rhs_tt = assemble_from_affine(model, grids)
        dense_op = kron_sum_dense(op.terms)
        dense_rhs = rhs_tt.to_dense().array
        size = model.dim
        for _ in range(10):
            k1 = rng.integers(0, 4)
            k2 = rng.integers(0, 3)
            xi = np.array([grids[0][k1], grids[1][k2]])
            a_xi, b_xi = assemble(model, xi)
            v = rng.standard_normal(size)
            x = np.zeros((size, 4, 3))
            x[:, k1, k2] = v
            y = (dense_op @ x.reshape(-1)).reshape(size, 4, 3)
            assert np.allclose(y[:, k1, k2], a_xi @ v,
                               atol=1e-10 * np.linalg.norm(a_xi @ v))
            assert np.allclose(dense_rhs[:, k1, k2], b_xi, atol=1e-12)

    def test_non_factorizable_coefficient_rejected(self, rng):
        from tensormor import (
            AffineOperator,
            AffineVector,
            CoefficientFunction,
            ParameterDomain,
            ParametricLinearModel,
        )

        domain = ParameterDomain([(0.0, 1.0)] * 2)
        tab = CoefficientFunction.tabulated(np.array([[0.5, 0.5]]), [1.0])
        model = ParametricLinearModel(
            AffineOperator([(np.eye(3), tab)], domain),
            AffineVector([(np.ones(3),
                           CoefficientFunction.constant(1.0))], domain),
        )
        with pytest.raises(UnsupportedCoefficientError) as err:
            assemble_from_affine(model, [np.linspace(0, 1, 3)] * 2)
        assert err.value.term == 0

    def test_rhs_cp_matches_tt(self):
        model = diffusion_affine(size=6, dim=2)
        grids = [np.linspace(0.1, 1.0, 3)] * 2
        _, rhs_tt = assemble_from_affine(model, grids)
        rhs_cp = affine_rhs_cp(model, grids)
        assert np.allclose(rhs_cp.to_dense().array, rhs_tt.to_dense().array,
                           atol=1e-12)


class TestTruncatedRichardson:
    def test_identity_converges_in_one_step(self, rng):
        op = KroneckerOperator([[np.eye(4), np.eye(5)]])
        b = rank_one_tt([rng.standard_normal(4), rng.standard_normal(5)])
        u, trace = truncated_richardson(op, b, step=1.0, eps=0.0,
                                        maxit=5, target_resid=1e-12)
        assert trace.converged
        assert trace.records[-1].k <= 1
        assert np.allclose(u.to_dense().array, b.to_dense().array,
                           atol=1e-12)

    def test_2d_laplacian_matches_dense(self, rng):
        op = laplacian_2d(16)
        b = rank_one_tt([np.ones(16), np.ones(16)])
        u, trace = truncated_richardson(op, b, eps=1e-8, maxit=2000,
                                        target_resid=1e-6)
        assert trace.converged
        dense = np.linalg.solve(op.to_dense_matrix(),
                                b.to_dense().array.reshape(-1))
        err = np.linalg.norm(u.to_dense().array.reshape(-1) - dense)
        assert err <= 1e-5 * np.linalg.norm(dense)

    def test_coarse_truncation_stagnates_without_divergence(self):
        op = laplacian_2d(16)
        b = rank_one_tt([np.ones(16), np.ones(16)])
        u, trace = truncated_richardson(op, b, eps=1e-2, maxit=600,
                                        target_resid=0.0)
        dense = np.linalg.solve(op.to_dense_matrix(),
                                b.to_dense().array.reshape(-1))
        plateau = min(trace.residuals)
        assert np.isfinite(plateau)
        assert plateau <= 10.0 * 1e-2 * np.linalg.norm(dense) \
            * np.linalg.norm(op.to_dense_matrix(), 2)

    def test_plateau_improves_with_smaller_eps(self):
        op = laplacian_2d(12)
        b = rank_one_tt([np.ones(12), np.ones(12)])
        plateaus = []
        for eps in (1e-2, 1e-3):
            _, trace = truncated_richardson(op, b, eps=eps, maxit=600,
                                            target_resid=0.0)
            plateaus.append(min(trace.residuals))
        assert plateaus[1] <= plateaus[0] / 2.0

    def test_divergence_error_on_oversized_step(self):
        op = laplacian_2d(8)
        b = rank_one_tt([np.ones(8), np.ones(8)])
        lam_max = 2.0 * (2.0 - 2.0 * np.cos(8 * np.pi / 9.0))
        with pytest.raises(DivergenceError):
            truncated_richardson(op, b, step=4.0 / lam_max, eps=1e-8,
                                 maxit=100)

    def test_step_bound_validated(self):
        op = laplacian_2d(8)
        b = rank_one_tt([np.ones(8), np.ones(8)])
        with pytest.raises(ValueError):
            truncated_richardson(op, b, step=1.0, beta_ub=4.0)

    def test_exact_truncation_monotone_a_norm_error(self):
        op = laplacian_2d(8)
        b = rank_one_tt([np.ones(8), np.ones(8)])
        dense_op = op.to_dense_matrix()
        u_star = np.linalg.solve(dense_op, b.to_dense().array.reshape(-1))
        lam_min, lam_max = op.extreme_eigenvalues()
        step = 1.0 / lam_max  # inside (0, 2/beta)
        u = 0.0 * u_star
        errors = []
        tt_u, trace = truncated_richardson(op, b, step=step, eps=0.0,
                                           maxit=40, target_resid=0.0)
        # replay densely to track the A-norm error of the same iteration
        for _ in range(40):
            e = u - u_star
            errors.append(float(np.sqrt(e @ dense_op @ e)))
            u = u + step * (b.to_dense().array.reshape(-1) - dense_op @ u)
        assert np.all(np.diff(errors) <= 1e-12)
        # the truncated run matches the exact recursion at eps=0
        final = tt_u.to_dense().array.reshape(-1)
        assert np.allclose(final, u, atol=1e-8 * np.linalg.norm(u))


class TestGreedyRankOne:
    def test_identity_rank_one_recovered_immediately(self, rng):
        op = KroneckerOperator([[np.eye(5), np.eye(6)]])
        b = CPTensor.from_terms(
            [(2.0, [rng.standard_normal(5), rng.standard_normal(6)])]
        )
        sol, trace = greedy_rank_one(op, b, m_max=3, inner_sweeps=40,
                                     tol=1e-12, seed=0)
        b_sq = float(b.to_dense().array.reshape(-1)
                     @ b.to_dense().array.reshape(-1))
        assert trace.records[1].functional <= 1e-12 * b_sq
        assert trace.converged

    def test_identity_rank3_orthogonal_factors(self, rng):
        u, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        v, _ = np.linalg.qr(rng.standard_normal((7, 3)))
        svals = np.array([4.0, 2.0, 1.0])
        b = CPTensor(svals, [u, v])
        op = KroneckerOperator([[np.eye(8), np.eye(7)]])
        sol, trace = greedy_rank_one(op, b, m_max=3, inner_sweeps=60,
                                     tol=1e-14, seed=0)
        b_sq = float(np.sum(svals**2))
        assert trace.records[-1].functional <= 1e-10 * b_sq
        # SVD-tail oracle: after m corrections J equals the spectral tail
        for rec in trace.records[1:]:
            tail = float(np.sum(svals[rec.k:] ** 2))
            assert rec.functional <= tail * 1.05 + 1e-10 * b_sq

    def test_diffusion_system_monotone_and_converging(self, rng):
        model = diffusion_affine(size=8, dim=2)
        grids = [np.linspace(0.1, 1.0, 4)] * 2
        op, _ = assemble_from_affine(model, grids)
        b = affine_rhs_cp(model, grids)
        sol, trace = greedy_rank_one(op, b, m_max=10, inner_sweeps=30,
                                     tol=1e-12, seed=0)
        js = [r.functional for r in trace.records]
        assert np.all(np.diff(js) <= 1e-12 * max(js))
        dense_op = kron_sum_dense(op.terms)
        u_star = np.linalg.solve(dense_op, b.to_dense().array.reshape(-1))
        errs = []
        # replay the greedy corrections cumulatively
        for m in range(1, sol.rank + 1):
            sub = CPTensor(sol.weights[:m].copy(),
                           [f[:, :m].copy() for f in sol.factors])
            partial = sub.to_dense().array.reshape(-1)
            errs.append(np.linalg.norm(partial - u_star))
        assert errs[-1] <= 0.1 * errs[0]
        assert errs[-1] <= 5e-2 * np.linalg.norm(u_star)

    def test_zero_rhs_returns_zero_without_breakdown(self):
        op = KroneckerOperator([[np.eye(3), np.eye(3)]])
        b = CPTensor(np.zeros(1), [np.zeros((3, 1)), np.zeros((3, 1))])
        sol, trace = greedy_rank_one(op, b, m_max=2, tol=1e-12, seed=0)
        assert not trace.breakdown
        assert np.allclose(sol.to_dense().array, 0.0)

    def test_quasi_optimality_vs_random_candidates(self, rng):
        model = diffusion_affine(size=6, dim=2)
        grids = [np.linspace(0.1, 1.0, 3)] * 2
        op, _ = assemble_from_affine(model, grids)
        b = affine_rhs_cp(model, grids)
        sol, _ = greedy_rank_one(op, b, m_max=2, inner_sweeps=40,
                                 tol=1e-14, seed=0)
        dense_op = kron_sum_dense(op.terms)
        u_star = np.linalg.solve(dense_op, b.to_dense().array.reshape(-1))
        err = np.linalg.norm(sol.to_dense().array.reshape(-1) - u_star)
        eigs = np.linalg.eigvalsh(dense_op)
        kappa = eigs[-1] / eigs[0]
        best_candidate = np.inf
        for _ in range(20):
            cand = CPTensor(
                rng.standard_normal(2),
                [rng.standard_normal((n, 2)) for n in op.mode_dims],
            )
            best_candidate = min(
                best_candidate,
                np.linalg.norm(cand.to_dense().array.reshape(-1) - u_star),
            )
        assert err <= kappa * best_candidate

    def test_shape_mismatch(self, rng):
        op = KroneckerOperator([[np.eye(3), np.eye(4)]])
        b = CPTensor(np.ones(1), [np.ones((4, 1)), np.ones((3, 1))])
        with pytest.raises(ValueError):
            greedy_rank_one(op, b)
