import json

import pytest
import numpy as np

from src.analytic_core import TaylorSeries
from src.errors import HypothesisError, SchemaError
from src.hb_space import monomial_norm
from src.model_library import (
    OMEGA,
    InnerFunction,
    example_omega_family,
    load_model,
    model_from_spec,
    parse_polynomial,
    parse_rational,
    rational_symbol,
    refresh_factorization,
    save_model,
    zero_symbol,
)


class TestOmega:
    def test_cube_root_identities(self):
        assert OMEGA ** 3 == pytest.approx(1.0)
        assert 1 + OMEGA + OMEGA ** 2 == pytest.approx(0.0, abs=1e-15)

    def test_unregauged_closed_form(self):
        model = example_omega_family(InnerFunction(), degree=16, grid_size=64, regauge=False)
        A0 = model.A.coeffs[0] * np.sqrt(6)
        np.testing.assert_allclose(A0, [[1, 1], [np.sqrt(2), np.sqrt(2) * OMEGA ** 2]], atol=1e-14)
        np.testing.assert_allclose(model.phi.c[0], [1, 0], atol=1e-14)
        np.testing.assert_allclose(model.phi.c[1], [2 * (-OMEGA ** 2), np.sqrt(2) * (-OMEGA ** 2) * OMEGA ** 2],
                                   atol=1e-12)

    def test_regauged_origin_is_positive_definite(self):
        model = example_omega_family(InnerFunction(), degree=16, grid_size=64)
        A0 = model.A.coeffs[0]
        np.testing.assert_allclose(A0, A0.conj().T, atol=1e-14)
        assert np.all(np.linalg.eigvalsh(A0) > 0)
        assert model.phi.verification_residual < 1e-12

    def test_b_values_at_origin(self):
        model = example_omega_family(InnerFunction(), degree=16, grid_size=64)
        np.testing.assert_allclose(model.B.value_at_origin(), [1 / np.sqrt(6)] * 2)
        assert model.expected['b_norm_sq'] == pytest.approx([2.0, 2.0])

    def test_higher_power_inner_function(self):
        model = example_omega_family(InnerFunction('monomial', 2), degree=32, grid_size=128)
        # phi(z) = phi_1(z^2): odd coefficients vanish
        np.testing.assert_allclose(model.phi.c[1::2], 0, atol=1e-14)
        assert monomial_norm(3, model.phi) == pytest.approx(2 + 6)

    def test_constant_inner_function_rejected(self):
        with pytest.raises(HypothesisError):
            InnerFunction('monomial', 0)
        with pytest.raises(HypothesisError):
            InnerFunction('blaschke', zeros=())


class TestInnerFunction:
    def test_parse(self):
        assert InnerFunction.parse('z') == InnerFunction('monomial', 1)
        assert InnerFunction.parse('z^3') == InnerFunction('monomial', 3)
        u = InnerFunction.parse('blaschke(0.5, (0.1+0.2i))')
        assert u.zeros == (0.5, 0.1 + 0.2j)

    def test_blaschke_series(self):
        u = InnerFunction('blaschke', zeros=(0.5,)).series(40)
        expected = np.concatenate([[-0.5], 0.75 * 0.5 ** np.arange(40)])
        np.testing.assert_allclose(u.coeffs, expected, atol=1e-14)

    def test_unknown_text(self):
        with pytest.raises(SchemaError):
            InnerFunction.parse('sin(z)')


class TestParsing:
    def test_polynomial(self):
        f = parse_polynomial('1 + 2z^3 - (0.5+1i)z^2')
        np.testing.assert_allclose(f.coeffs, [1, 0, -0.5 - 1j, 2])
        assert f.is_polynomial

    def test_repeated_powers_add(self):
        np.testing.assert_allclose(parse_polynomial('z + z - 3').coeffs, [-3, 2])

    def test_exponent_notation(self):
        np.testing.assert_allclose(parse_polynomial('1e-3z').coeffs, [0, 1e-3])

    def test_bad_term(self):
        with pytest.raises(SchemaError):
            parse_polynomial('1 + w')

    def test_rational(self):
        numerator, denominator = parse_rational('z/2')
        np.testing.assert_allclose(numerator.coeffs, [0, 1])
        np.testing.assert_allclose(denominator.coeffs, [2])


class TestRational:
    def test_non_schur_rejected(self):
        with pytest.raises(HypothesisError) as info:
            rational_symbol([(TaylorSeries([0, 1]), TaylorSeries([1])),
                             (TaylorSeries([0, 1]), TaylorSeries([1]))], degree=8, grid_size=32)
        assert 'sup' in str(info.value)

    def test_szego_violation_rejected(self):
        with pytest.raises(HypothesisError):
            rational_symbol([(TaylorSeries([0, 1]), TaylorSeries([1])),
                             (TaylorSeries([0]), TaylorSeries([1]))], degree=8, grid_size=32)

    def test_pole_in_disk_rejected(self):
        with pytest.raises(HypothesisError):
            rational_symbol([(TaylorSeries([0.1]), TaylorSeries([0.5, -1]))], degree=8, grid_size=32)

    def test_genuinely_rational_component(self):
        # b = (z/3) / (1 - z/2), sup |b| = 2/3
        model = rational_symbol([(TaylorSeries([0, 1 / 3]), TaylorSeries([1, -0.5]))], degree=64, grid_size=256)
        result = model.factorization
        assert result.residual_scalar < 1e-8
        assert result.residual_matrix < 1e-8
        assert result.outer_gap_A < 1e-8
        assert model.provenance == 'factored'


class TestSpecs:
    def test_zero(self):
        model = model_from_spec('zero:n=3', degree=8, grid_size=32)
        assert model.B.n == 3
        np.testing.assert_allclose(model.A.coeffs[0], np.eye(3))

    def test_example(self):
        model = model_from_spec('example-omega:u=z', degree=8, grid_size=32)
        assert model.inner_u == InnerFunction('monomial', 1)

    def test_rational(self):
        model = model_from_spec('rational:z/2;1/2', degree=16, grid_size=64)
        assert model.B.n == 2
        assert model.B.boundary_sup == pytest.approx(1 / np.sqrt(2))

    def test_unknown_kind(self):
        with pytest.raises(SchemaError):
            model_from_spec('bessel:n=2')

    def test_closed_form_certificate(self):
        model = zero_symbol(2, degree=8, grid_size=32)
        result = refresh_factorization(model)
        assert result.iterations == 0
        assert result.residual_matrix == 0.0


class TestPersistence:
    def test_round_trip(self, tmp_path):
        model = example_omega_family(InnerFunction('blaschke', zeros=(0.25,)), degree=16, grid_size=64)
        path = tmp_path / 'model.json'
        save_model(model, str(path))
        loaded = load_model(str(path))

        np.testing.assert_array_equal(loaded.A.coeffs, model.A.coeffs)
        np.testing.assert_array_equal(loaded.a.coeffs, model.a.coeffs)
        np.testing.assert_array_equal(loaded.phi.c, model.phi.c)
        for mine, theirs in zip(loaded.B.components, model.B.components):
            np.testing.assert_array_equal(mine.coeffs, theirs.coeffs)
        assert loaded.inner_u == model.inner_u
        assert loaded.provenance == 'closed_form'

    def test_file_spec(self, tmp_path):
        path = tmp_path / 'zero.json'
        save_model(zero_symbol(1, degree=4, grid_size=16), str(path))
        assert model_from_spec(f'file:{path}').B.n == 1

    def test_sorted_keys(self, tmp_path):
        path = tmp_path / 'zero.json'
        save_model(zero_symbol(1, degree=4, grid_size=16), str(path))
        keys = list(json.loads(path.read_text()).keys())
        assert keys == sorted(keys)

    def test_bad_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{not json')
        with pytest.raises(SchemaError):
            load_model(str(path))

    def test_wrong_version(self, tmp_path):
        path = tmp_path / 'old.json'
        path.write_text(json.dumps({'version': 99}))
        with pytest.raises(SchemaError):
            load_model(str(path))

    def test_missing_fields(self, tmp_path):
        path = tmp_path / 'partial.json'
        path.write_text(json.dumps({'version': 1, 'B': []}))
        with pytest.raises(SchemaError):
            load_model(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            load_model(str(tmp_path / 'absent.json'))

    def test_directory_instead_of_file(self, tmp_path):
        with pytest.raises(SchemaError):
            load_model(str(tmp_path))

    def test_missing_file_spec(self, tmp_path):
        with pytest.raises(SchemaError):
            model_from_spec(f'file:{tmp_path / "absent.json"}')


class TestBlaschkeModels:
    @pytest.mark.parametrize('zeros,degree', [
        ((0.25,), 16),
        ((0.5,), 16),
        ((0.1 + 0.2j,), 16),
        ((0.3,), 32),
        ((0.5, -0.4j), 32),
    ])
    def test_builds(self, zeros, degree):
        model = example_omega_family(InnerFunction('blaschke', zeros=zeros), degree=degree,
                                     grid_size=4 * degree)
        assert model.phi.verification_residual < 1e-10
        assert model.phi.degree == degree

    def test_long_truncation(self):
        model = example_omega_family(InnerFunction('blaschke', zeros=(0.3,)), degree=256, grid_size=1024)
        assert model.phi.verification_residual < 1e-10

    def test_inner_series_carries_hint(self):
        u = InnerFunction('blaschke', zeros=(0.5,)).series(64)
        assert not u.is_polynomial
        assert u.decay_hint == pytest.approx(2.0, rel=0.05)
