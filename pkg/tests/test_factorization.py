import pytest
import numpy as np

from src.analytic_core import BoundaryGrid, MatrixTaylorSeries, TaylorSeries, boundary_from_taylor
from src.errors import ConvergenceError, HypothesisError
from src.factorization import (
    FactorizationSettings,
    boundary_zeros,
    certify,
    factorization_residuals,
    factorize,
    matrix_defect_grid,
    matrix_outer_factor,
    normalize_gauge,
    outerness_certificate,
    scalar_defect_grid,
    scalar_outer_factor,
    wilson_factor,
)
from src.hb_space import SchurRow, monomial_norm, phi_coefficients
from src.model_library import OMEGA, InnerFunction, example_omega_family, model_from_spec


def _circle(M):
    return np.exp(2j * np.pi * np.arange(M) / M)


@pytest.fixture(scope='module')
def half_row():
    # B = (z/2, 1/2): 1 - BB* = 1/2 and A = [[sqrt(2/3), 0], [-z/(2 sqrt 3), sqrt 3 / 2]]
    return SchurRow.from_components([TaylorSeries([0, 0.5]), TaylorSeries([0.5])], grid_size=64)


@pytest.fixture(scope='module')
def omega_model():
    return example_omega_family(InnerFunction('monomial', 1), degree=32, grid_size=128)


class TestScalarOuterFactor:
    def test_constant_weight(self):
        a = scalar_outer_factor(BoundaryGrid(np.full(64, 4.0)), degree=8)
        np.testing.assert_allclose(a.coeffs, [2, 0, 0, 0, 0, 0, 0, 0, 0], atol=1e-12)

    def test_polynomial_outer_function(self):
        M = 256
        zeta = _circle(M)
        w = np.abs(1 + 0.5 * zeta) ** 2
        a = scalar_outer_factor(BoundaryGrid(w), degree=16)
        expected = np.zeros(17)
        expected[:2] = [1, 0.5]
        np.testing.assert_allclose(a.coeffs, expected, atol=1e-10)

    def test_inner_part_is_discarded(self):
        # |z - 1/2|^2 = |1 - z/2|^2 on the circle; the outer factor is 1 - z/2
        M = 256
        zeta = _circle(M)
        a = scalar_outer_factor(BoundaryGrid(np.abs(zeta - 0.5) ** 2), degree=4)
        np.testing.assert_allclose(a.coeffs, [1, -0.5, 0, 0, 0], atol=1e-10)

    def test_vanishing_weight_refused(self):
        w = np.ones(64)
        w[:8] = 0.0
        with pytest.raises(HypothesisError):
            scalar_outer_factor(BoundaryGrid(w), degree=8)


class TestMatrixOuterFactor:
    def test_identity_weight(self):
        W = np.tile(np.eye(2), (32, 1, 1))
        A = matrix_outer_factor(BoundaryGrid(W), degree=4)
        np.testing.assert_allclose(A.coeffs[0], np.eye(2), atol=1e-12)
        np.testing.assert_allclose(A.coeffs[1:], 0, atol=1e-12)

    def test_known_factor(self, half_row):
        M = 64
        samples = boundary_from_taylor(half_row.row, M).samples
        W = np.eye(2)[None] - np.conj(np.transpose(samples, (0, 2, 1))) @ samples
        A, iterations, history = wilson_factor(BoundaryGrid(W), degree=8)
        expected = np.zeros((9, 2, 2), dtype=complex)
        expected[0] = [[np.sqrt(2 / 3), 0], [0, np.sqrt(3) / 2]]
        expected[1] = [[0, 0], [-1 / (2 * np.sqrt(3)), 0]]
        np.testing.assert_allclose(A.coeffs, expected, atol=1e-8)
        assert iterations >= 1
        assert history[-1] <= history[0]

    def test_not_positive_semidefinite(self):
        W = np.tile(np.diag([1.0, -1.0]), (16, 1, 1))
        with pytest.raises(HypothesisError):
            matrix_outer_factor(BoundaryGrid(W), degree=2)

    def test_unreachable_tolerance_reports_history(self, omega_model):
        samples = boundary_from_taylor(omega_model.B.row, 128).samples
        W = np.eye(2)[None] - np.conj(np.transpose(samples, (0, 2, 1))) @ samples
        settings = FactorizationSettings(tolerance=1e-30, stop_tolerance=1e-40, max_iterations=5)
        with pytest.raises(ConvergenceError) as info:
            wilson_factor(BoundaryGrid(W), degree=32, settings=settings)
        assert len(info.value.history) >= 2


class TestGauge:
    def test_scalar_phase_removed(self):
        a = normalize_gauge(TaylorSeries([1j, 2]))
        assert a.coeffs[0] == pytest.approx(1.0)
        assert a.coeffs[1] == pytest.approx(-2j)

    def test_matrix_origin_positive_definite(self):
        rng = np.random.default_rng(5)
        A = MatrixTaylorSeries(rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2)))
        A0 = normalize_gauge(A).coeffs[0]
        np.testing.assert_allclose(A0, A0.conj().T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(A0) > 0)


class TestOuterness:
    def test_outer_function(self):
        assert outerness_certificate(TaylorSeries([1, 0.5]), 64) < 1e-10

    def test_zero_inside_disk(self):
        assert outerness_certificate(TaylorSeries([0.5, 1]), 256) > 0.5

    def test_determinant_vanishing_at_origin(self):
        A = MatrixTaylorSeries.from_entries([
            [TaylorSeries([0, 1]), TaylorSeries([0])],
            [TaylorSeries([0]), TaylorSeries([1])]
        ])
        assert outerness_certificate(A, 64) == float('inf')

    def test_boundary_zero_still_outer(self, omega_model):
        # a = (1 + omega^2 z) / sqrt 6 vanishes at -omega on the circle
        assert outerness_certificate(omega_model.a, 1024) < 1e-8
        assert outerness_certificate(omega_model.A, 1024) < 1e-8


class TestResiduals:
    def test_exact_factors(self, half_row):
        a = TaylorSeries([1 / np.sqrt(2)])
        A = MatrixTaylorSeries(np.array([
            [[np.sqrt(2 / 3), 0], [0, np.sqrt(3) / 2]],
            [[0, 0], [-1 / (2 * np.sqrt(3)), 0]]
        ]))
        residuals = factorization_residuals(half_row, a, A, 64)
        assert residuals.scalar < 1e-14
        assert residuals.matrix < 1e-14
        assert residuals.relation < 1e-13
        assert residuals.trimmed_fraction == 0.0

    def test_wrong_factor_is_detected(self, half_row):
        residuals = factorization_residuals(half_row, TaylorSeries([1.0]), MatrixTaylorSeries.identity(2, 0), 64)
        assert residuals.scalar == pytest.approx(0.5)
        assert residuals.matrix > 0.1


class TestFactorize:
    def test_half_row(self, half_row):
        result = factorize(half_row, degree=8, grid_size=64)
        assert result.residual_scalar < 1e-8
        assert result.residual_matrix < 1e-8
        assert result.relation_residual < 1e-8
        assert result.outer_gap_a < 1e-8
        assert result.outer_gap_A < 1e-8
        np.testing.assert_allclose(result.a.coeffs[0], 1 / np.sqrt(2), atol=1e-10)

    def test_certify_closed_form(self, omega_model):
        result = certify(omega_model.B, omega_model.a, omega_model.A, 128)
        assert result.iterations == 0
        assert result.residual_scalar < 1e-10
        assert result.residual_matrix < 1e-10
        assert result.relation_residual < 1e-10

    def test_zero_row(self):
        B = SchurRow.from_components([TaylorSeries([0.0])] * 2, grid_size=16)
        result = factorize(B, degree=4, grid_size=16)
        np.testing.assert_allclose(result.A.coeffs[0], np.eye(2), atol=1e-12)
        np.testing.assert_allclose(result.a.coeffs, [1, 0, 0, 0, 0], atol=1e-12)

    def test_boundary_zero_matches_closed_form(self, omega_model):
        result = factorize(omega_model.B, degree=32, grid_size=128)
        assert np.max(np.abs(result.A.coeffs - omega_model.A.coeffs)) < 1e-8
        assert np.max(np.abs(result.a.coeffs - omega_model.a.coeffs)) < 1e-8

    def test_result_serializes(self, half_row):
        data = factorize(half_row, degree=8, grid_size=64).to_dict()
        assert data['degree'] == 8
        assert set(data) >= {'a', 'A', 'residual_scalar', 'residual_matrix', 'relation_residual'}


class TestBoundaryZeros:
    def test_omega_zero_located(self, omega_model):
        zeros = boundary_zeros(scalar_defect_grid(omega_model.B, 128))
        assert len(zeros) == 1
        assert zeros[0] == pytest.approx(-OMEGA, abs=1e-12)

    def test_strict_contraction_has_none(self, half_row):
        assert boundary_zeros(scalar_defect_grid(half_row, 64)) == []

    def test_zero_on_a_grid_point(self):
        # |1 - z|^2 vanishes at z = 1, which is the first grid point
        a = scalar_outer_factor(BoundaryGrid(np.abs(1 - _circle(64)) ** 2), degree=4)
        np.testing.assert_allclose(a.coeffs, [1, -1, 0, 0, 0], atol=1e-12)

    def test_scalar_factor_keeps_the_zero(self):
        w = np.abs(1 + OMEGA ** 2 * _circle(256)) ** 2 / 6
        a = scalar_outer_factor(BoundaryGrid(w), degree=8)
        expected = np.zeros(9, dtype=complex)
        expected[:2] = [1, OMEGA ** 2]
        np.testing.assert_allclose(a.coeffs, expected / np.sqrt(6), atol=1e-12)

    def test_matrix_factor_with_given_zero(self, omega_model):
        W = matrix_defect_grid(omega_model.B, 128)
        A, _, history = wilson_factor(W, degree=32, zeros=[complex(-OMEGA)])
        assert history[-1] < 1e-10
        np.testing.assert_allclose(A.coeffs, omega_model.A.coeffs, atol=1e-8)


class TestFactoredOmegaNorms:
    @pytest.fixture(scope='class')
    def factored_phi(self):
        model = example_omega_family(InnerFunction(), degree=64, grid_size=256)
        result = factorize(model.B, degree=64, grid_size=256)
        return phi_coefficients(model.B, result.A, degree=64)

    @pytest.mark.parametrize('m', [0, 1, 2, 10, 25, 50])
    def test_monomial_norms(self, factored_phi, m):
        assert monomial_norm(m, factored_phi) == pytest.approx(2 + 6 * m, rel=1e-6)

    def test_phi_coefficients(self, factored_phi):
        np.testing.assert_allclose(factored_phi.c[0], [1, 0], atol=1e-9)
        np.testing.assert_allclose(factored_phi.row_norms_sq()[1:51], 6.0, atol=1e-8)


CORPUS = [
    ('zero:n=2', 32, 128),
    ('example-omega:u=z', 32, 128),
    ('example-omega:u=z^2', 32, 128),
    ('example-omega:u=blaschke(0.5)', 64, 256),
    ('rational:z/2;1/2', 16, 64),
    ('rational:0.5z+0.1;z^2/3', 32, 128),
    ('rational:z/3-1.5z', 64, 256),
]


class TestFactorizationCorpus:
    @pytest.mark.parametrize('spec,degree,grid', CORPUS)
    def test_numerical_factors_certify(self, spec, degree, grid):
        model = model_from_spec(spec, degree=degree, grid_size=grid)
        result = factorize(model.B, degree=degree, grid_size=grid)
        assert result.residual_scalar < 1e-8
        assert result.residual_matrix < 1e-8
        assert result.relation_residual < 1e-8
        assert result.outer_gap_a < 1e-8
        assert result.outer_gap_A < 1e-8

    @pytest.mark.parametrize('u', ['z', 'z^2', 'blaschke(0.5)'])
    def test_numerical_factors_match_closed_form(self, u):
        model = example_omega_family(InnerFunction.parse(u), degree=64, grid_size=256)
        result = factorize(model.B, degree=64, grid_size=256)
        assert np.max(np.abs(result.A.coeffs - model.A.coeffs)) < 1e-8
        assert np.max(np.abs(result.a.coeffs - normalize_gauge(model.a).coeffs)) < 1e-8
