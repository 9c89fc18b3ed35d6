"""Affine models and minres-Galerkin reduced models."""

import numpy as np
import pytest

from tensormor import (
    AffineOperator,
    AffineVector,
    CoefficientFunction,
    DomainError,
    NumericalBreakdownError,
    ParameterDomain,
    ParametricLinearModel,
    Subspace,
    assemble,
    build_reduced,
    full_solve,
    pod,
    residual_indicator,
    solve_reduced,
    stability_bounds_dense,
)
from tensormor.generators import diffusion_affine
from tensormor.reduction import SnapshotSet


def identity_model(size=6, n_rhs_terms=1, rng=None):
    domain = ParameterDomain([(0.0, 1.0)] * 2)
    op = AffineOperator([(np.eye(size), CoefficientFunction.constant(1.0))],
                        domain)
    rng = np.random.default_rng(7) if rng is None else rng
    terms = []
    for j in range(n_rhs_terms):
        coeff = (CoefficientFunction.constant(1.0) if j == 0
                 else CoefficientFunction.affine(j - 1))
        terms.append((rng.standard_normal(size), coeff))
    return ParametricLinearModel(op, AffineVector(terms, domain), spd=True)


def random_affine_model(size, n_op, n_rhs, rng):
    domain = ParameterDomain([(0.1, 1.0)] * 2)
    op_terms = []
    for i in range(n_op):
        mat = rng.standard_normal((size, size))
        mat = mat @ mat.T / size + np.eye(size)
        coeff = (CoefficientFunction.constant(1.0) if i == 0
                 else CoefficientFunction.monomial((i, 1), scale=0.5))
        op_terms.append((mat, coeff))
    rhs_terms = []
    for j in range(n_rhs):
        coeff = (CoefficientFunction.constant(1.0) if j == 0
                 else CoefficientFunction.exp(0, rate=0.3))
        rhs_terms.append((rng.standard_normal(size), coeff))
    return ParametricLinearModel(
        AffineOperator(op_terms, domain), AffineVector(rhs_terms, domain),
        spd=True,
    )


class TestCoefficientFunction:
    def test_registry_forms(self):
        xi = np.array([0.5, 2.0])
        assert CoefficientFunction.constant(3.0)(xi) == 3.0
        assert CoefficientFunction.affine(1)(xi) == 2.0
        assert CoefficientFunction.exp(0, rate=2.0)(xi) == pytest.approx(
            np.exp(1.0)
        )
        assert CoefficientFunction.reciprocal(1, shift=1.0)(xi) == \
            pytest.approx(1.0 / 3.0)
        assert CoefficientFunction.monomial((2, 1), scale=4.0)(xi) == \
            pytest.approx(4.0 * 0.25 * 2.0)

    @pytest.mark.parametrize("coeff", [
        CoefficientFunction.constant(2.5),
        CoefficientFunction.affine(1),
        CoefficientFunction.exp(0, rate=-0.5),
        CoefficientFunction.reciprocal(1, shift=2.0),
        CoefficientFunction.monomial((1, 2), scale=0.3),
    ])
    def test_factorization_consistent(self, coeff, rng):
        facs = coeff.factorize(2)
        for _ in range(10):
            xi = rng.uniform(0.1, 1.0, 2)
            product = np.prod([float(f(x)) for f, x in zip(facs, xi)])
            assert product == pytest.approx(coeff(xi), rel=1e-12)

    def test_json_roundtrip(self):
        for coeff in [CoefficientFunction.constant(2.0),
                      CoefficientFunction.affine(2),
                      CoefficientFunction.exp(1, rate=0.7),
                      CoefficientFunction.reciprocal(0, shift=0.4),
                      CoefficientFunction.monomial((0, 2, 1), scale=-1.5)]:
            back = CoefficientFunction.from_dict(coeff.to_dict())
            xi = np.array([0.3, 0.6, 0.9])
            assert back(xi) == pytest.approx(coeff(xi), rel=1e-14)

    def test_tabulated_lookup_and_missing_provider(self):
        points = np.array([[0.1, 0.2], [0.3, 0.4]])
        coeff = CoefficientFunction.tabulated(points, [5.0, 7.0])
        assert coeff(np.array([0.3, 0.4])) == 7.0
        with pytest.raises(ValueError):
            coeff(np.array([0.9, 0.9]))


class TestAssemble:
    def test_single_constant_term(self, rng):
        model = identity_model()
        a, b = assemble(model, np.array([0.2, 0.8]))
        assert np.array_equal(a, np.eye(6))
        assert np.array_equal(b, model.rhs.arrays[0])

    def test_vanishing_coefficients_give_zero_matrix(self):
        domain = ParameterDomain([(0.0, 1.0)])
        op = AffineOperator([(np.eye(3), CoefficientFunction.affine(0))],
                            domain)
        rhs = AffineVector([(np.ones(3), CoefficientFunction.constant(1.0))],
                           domain)
        model = ParametricLinearModel(op, rhs)
        a, _ = assemble(model, np.array([0.0]))
        assert np.all(a == 0.0)
        with pytest.raises(NumericalBreakdownError):
            full_solve(model, np.array([0.0]))

    def test_matches_direct_summation(self, rng):
        model = random_affine_model(5, 3, 2, rng)
        xi = np.array([0.4, 0.9])
        a, b = assemble(model, xi)
        a_direct = sum(c(xi) * mat for mat, c in
                       zip(model.operator.arrays,
                           model.operator.coefficients))
        b_direct = sum(c(xi) * vec for vec, c in
                       zip(model.rhs.arrays, model.rhs.coefficients))
        assert np.allclose(a, a_direct, atol=1e-14)
        assert np.allclose(b, b_direct, atol=1e-14)

    def test_outside_domain(self):
        model = identity_model()
        with pytest.raises(DomainError):
            assemble(model, np.array([2.0, 0.5]))


class TestFullSolve:
    def test_identity_returns_rhs(self):
        model = identity_model()
        xi = np.array([0.5, 0.5])
        assert np.allclose(full_solve(model, xi), model.rhs.assemble(xi))

    def test_zero_rhs(self):
        domain = ParameterDomain([(0.0, 1.0)])
        model = ParametricLinearModel(
            AffineOperator([(np.eye(4), CoefficientFunction.constant(1.0))],
                           domain),
            AffineVector([(np.zeros(4), CoefficientFunction.constant(1.0))],
                         domain),
        )
        assert np.allclose(full_solve(model, np.array([0.3])), 0.0)

    def test_diffusion_against_dense_inverse(self, rng):
        model = diffusion_affine(size=24, dim=3)
        xi = np.array([0.3, 0.7, 0.5])
        a, b = assemble(model, xi)
        expected = np.linalg.inv(a) @ b
        got = full_solve(model, xi)
        assert np.allclose(got, expected,
                           atol=1e-9 * np.linalg.norm(expected))


class TestBuildReduced:
    def test_full_space_reproduces_full_solution(self, rng):
        model = random_affine_model(6, 2, 1, rng)
        space = Subspace(np.eye(6))
        rm = build_reduced(model, space)
        xi = np.array([0.5, 0.7])
        s, lifted, delta = solve_reduced(rm, xi)
        expected = full_solve(model, xi)
        assert np.allclose(lifted, expected,
                           atol=1e-8 * np.linalg.norm(expected))
        assert delta <= 1e-10 * np.linalg.norm(model.rhs.assemble(xi))

    def test_single_basis_vector_scalars(self, rng):
        model = random_affine_model(5, 2, 1, rng)
        e1 = np.zeros((5, 1))
        e1[0, 0] = 1.0
        rm = build_reduced(model, Subspace(e1))
        for i in range(2):
            for j in range(2):
                lhs = float(rm._gram[i, j, 0, 0])
                rhs = float((model.operator.arrays[i][:, 0]
                             @ model.operator.arrays[j][:, 0]))
                assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_reduced_residual_matches_direct(self, rng):
        model = random_affine_model(8, 3, 2, rng)
        q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        rm = build_reduced(model, Subspace(q))
        for _ in range(20):
            xi = rng.uniform(0.1, 1.0, 2)
            s = rng.standard_normal(3)
            a, b = assemble(model, xi)
            direct = np.linalg.norm(a @ (q @ s) - b)
            online = residual_indicator(rm, s, xi)
            assert online == pytest.approx(direct, rel=1e-9)

    def test_weighted_residual_matches_direct(self, rng):
        model = random_affine_model(7, 2, 2, rng)
        w = rng.standard_normal((7, 7))
        w = w @ w.T + 7 * np.eye(7)
        q, _ = np.linalg.qr(rng.standard_normal((7, 2)))
        rm = build_reduced(model, Subspace(q), weight_matrix=w)
        xi = np.array([0.6, 0.2])
        s = rng.standard_normal(2)
        a, b = assemble(model, xi)
        r = a @ (q @ s) - b
        direct = float(np.sqrt(r @ w @ r))
        assert residual_indicator(rm, s, xi) == pytest.approx(direct,
                                                              rel=1e-9)

    def test_dimension_mismatch(self, rng):
        model = random_affine_model(6, 2, 1, rng)
        q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        with pytest.raises(ValueError):
            build_reduced(model, Subspace(q))


class TestSolveReduced:
    def test_identity_operator_projects_rhs(self, rng):
        model = identity_model(8, n_rhs_terms=1)
        q, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        rm = build_reduced(model, Subspace(q))
        xi = np.array([0.5, 0.5])
        _, lifted, delta = solve_reduced(rm, xi)
        b = model.rhs.assemble(xi)
        expected = q @ (q.T @ b)
        assert np.allclose(lifted, expected, atol=1e-10)
        assert delta == pytest.approx(np.linalg.norm(b - expected), rel=1e-9)

    def test_quasi_optimality(self, rng):
        model = diffusion_affine(size=32, dim=3)
        points = model.domain.sample(30, rng)
        columns = np.stack([full_solve(model, xi) for xi in points], axis=1)
        space, _ = pod(SnapshotSet(columns), 5)
        rm = build_reduced(model, space)
        for xi in points[:10]:
            u = full_solve(model, xi)
            _, lifted, _ = solve_reduced(rm, xi)
            proj = space.basis @ (space.basis.T @ u)
            best = np.linalg.norm(u - proj)
            if best < 1e-12 * np.linalg.norm(u):
                continue
            alpha, beta = stability_bounds_dense(model, xi)
            factor = np.linalg.norm(u - lifted) / best
            assert factor <= beta / alpha * (1 + 1e-8)

    def test_monotone_delta_under_nested_bases(self, rng):
        model = random_affine_model(10, 2, 1, rng)
        q, _ = np.linalg.qr(rng.standard_normal((10, 6)))
        xi = np.array([0.5, 0.9])
        deltas = []
        for m in range(1, 7):
            rm = build_reduced(model, Subspace(q[:, :m]))
            _, _, delta = solve_reduced(rm, xi)
            deltas.append(delta)
        assert np.all(np.diff(deltas) <= 1e-10)

    def test_breakdown_on_singular_assembly(self):
        domain = ParameterDomain([(0.0, 1.0)])
        op = AffineOperator([(np.eye(4), CoefficientFunction.affine(0))],
                            domain)
        rhs = AffineVector([(np.ones(4), CoefficientFunction.constant(1.0))],
                           domain)
        model = ParametricLinearModel(op, rhs)
        rm = build_reduced(model, Subspace(np.eye(4)[:, :2]))
        with pytest.raises(NumericalBreakdownError):
            rm.solve(np.array([0.0]))


class TestResidualIndicator:
    def test_exact_solution_gives_zero(self, rng):
        model = identity_model(6)
        rm = build_reduced(model, Subspace(np.eye(6)))
        xi = np.array([0.1, 0.9])
        s, _, _ = solve_reduced(rm, xi)
        assert residual_indicator(rm, s, xi) <= \
            1e-10 * np.linalg.norm(model.rhs.assemble(xi))

    def test_zero_coefficients_give_rhs_norm(self, rng):
        model = random_affine_model(6, 2, 2, rng)
        q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        rm = build_reduced(model, Subspace(q))
        xi = np.array([0.4, 0.5])
        b = model.rhs.assemble(xi)
        assert residual_indicator(rm, np.zeros(2), xi) == pytest.approx(
            np.linalg.norm(b), rel=1e-10
        )

    def test_raw_value_exposed(self, rng):
        model = identity_model(5)
        rm = build_reduced(model, Subspace(np.eye(5)))
        xi = np.array([0.5, 0.5])
        s, _, _ = solve_reduced(rm, xi)
        delta, raw = residual_indicator(rm, s, xi, with_raw=True)
        assert delta >= 0.0
        assert raw <= delta**2 + 1e-15


class TestOfflineOnline:
    def test_online_solve_never_touches_basis(self, rng):
        model = random_affine_model(12, 2, 1, rng)
        q, _ = np.linalg.qr(rng.standard_normal((12, 4)))
        rm = build_reduced(model, Subspace(q))
        rm.space = None  # poison: any full-dimension access would fail
        s, delta, _ = rm.solve(np.array([0.5, 0.5]))
        assert s.shape == (4,)
        assert np.isfinite(delta)

    def test_online_data_dimensions_are_reduced(self, rng):
        model = random_affine_model(30, 3, 2, rng)
        q, _ = np.linalg.qr(rng.standard_normal((30, 5)))
        rm = build_reduced(model, Subspace(q))
        assert rm._gram.shape == (3, 3, 5, 5)
        assert rm._cross.shape == (3, 2, 5)
        assert rm._rhs_gram.shape == (2, 2)
