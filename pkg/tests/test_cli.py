import csv
import json

import pytest
import numpy as np
from click.testing import CliRunner

from scripts.cli import cli
from src.analytic_core import TaylorSeries
from src.config import ConfigManager
from src.hb_space import hb_norm
from src.model_library import InnerFunction, example_omega_family

SMALL = ['--degree', '32', '--grid', '128']


@pytest.fixture
def runner(monkeypatch):
    monkeypatch.setattr(ConfigManager, '_instance', None)
    yield CliRunner(mix_stderr=False)
    ConfigManager._instance = None


def _run(runner, args, tmp_path, name='out.json'):
    out = tmp_path / name
    result = runner.invoke(cli, args + ['--out', str(out)])
    return result, out


class TestFactorizeCommand:
    def test_closed_form_residuals(self, runner, tmp_path):
        result, out = _run(runner, ['factorize', '--model', 'example-omega:u=z'] + SMALL, tmp_path)
        assert result.exit_code == 0, result.stderr
        data = json.loads(out.read_text())
        assert data['provenance'] == 'closed_form'
        assert data['iterations'] == 0
        assert data['residual_scalar'] < 1e-10
        assert data['residual_matrix'] < 1e-10

    def test_zero_symbol_identity(self, runner, tmp_path):
        result, out = _run(runner, ['factorize', '--model', 'zero:n=2'] + SMALL, tmp_path)
        assert result.exit_code == 0
        coeffs = np.asarray(json.loads(out.read_text())['A']['coeffs'], dtype=float)
        np.testing.assert_allclose(coeffs[0, :, 0].reshape(2, 2), np.eye(2))

    def test_unreadable_model_file(self, runner, tmp_path):
        bad = tmp_path / 'bad.json'
        bad.write_text('{"version": 1')
        result = runner.invoke(cli, ['factorize', '--model', f'file:{bad}'] + SMALL)
        assert result.exit_code == 4
        assert 'error' in result.stderr

    def test_missing_model_file(self, runner, tmp_path):
        result = runner.invoke(cli, ['factorize', '--model', f'file:{tmp_path / "nope.json"}'] + SMALL)
        assert result.exit_code == 4

    def test_grid_not_power_of_two(self, runner):
        result = runner.invoke(cli, ['factorize', '--model', 'zero:n=1', '--degree', '8', '--grid', '100'])
        assert result.exit_code == 2


class TestNormCommand:
    def test_z_cubed(self, runner, tmp_path):
        result, out = _run(runner, ['norm', '--model', 'example-omega:u=z', '--f', 'z^3'] + SMALL, tmp_path)
        assert result.exit_code == 0, result.stderr
        data = json.loads(out.read_text())
        assert data['norm_sq'] == pytest.approx(20.0, rel=1e-12)
        assert data['mate_residual'] < 1e-10

    def test_zero_symbol_is_hardy(self, runner, tmp_path):
        result, out = _run(runner, ['norm', '--model', 'zero:n=1', '--f', '1+z'] + SMALL, tmp_path)
        assert result.exit_code == 0
        assert json.loads(out.read_text())['norm_sq'] == pytest.approx(2.0)

    def test_series_file_matches_library(self, runner, tmp_path):
        f = TaylorSeries(0.5 ** np.arange(20), decay_hint=2.0)
        series = tmp_path / 'f.json'
        series.write_text(json.dumps(f.to_dict()))
        result, out = _run(runner, ['norm', '--model', 'example-omega:u=z', '--f-file', str(series)] + SMALL,
                           tmp_path)
        assert result.exit_code == 0, result.stderr

        model = example_omega_family(InnerFunction(), degree=32, grid_size=128)
        expected = hb_norm(f, model.phi).norm_sq
        assert json.loads(out.read_text())['norm_sq'] == pytest.approx(expected, rel=1e-12)

    def test_decay_hint_inside_disk(self, runner, tmp_path):
        series = tmp_path / 'f.json'
        series.write_text(json.dumps(TaylorSeries(np.ones(8), decay_hint=0.9).to_dict()))
        result = runner.invoke(cli, ['norm', '--model', 'zero:n=1', '--f-file', str(series)] + SMALL)
        assert result.exit_code == 2

    def test_needs_exactly_one_input(self, runner):
        result = runner.invoke(cli, ['norm', '--model', 'zero:n=1'] + SMALL)
        assert result.exit_code == 4

    def test_bad_polynomial(self, runner):
        result = runner.invoke(cli, ['norm', '--model', 'zero:n=1', '--f', '1 + w'] + SMALL)
        assert result.exit_code == 4

    def test_oracle_cross_check(self, runner, tmp_path):
        args = ['norm', '--model', 'rational:z/2;1/2', '--f', '1 + z - 0.5z^3', '--oracle'] + SMALL
        result, out = _run(runner, args, tmp_path)
        assert result.exit_code == 0, result.stderr
        data = json.loads(out.read_text())
        oracles = data['oracles']
        assert oracles['agrees'] and oracles['gram_below']
        assert oracles['defect'] == pytest.approx(data['norm_sq'], rel=0.01)

    def test_oracle_tolerance_from_config(self, runner, tmp_path, monkeypatch):
        config = tmp_path / 'hb_space.yaml'
        config.write_text('oracle:\n  tolerance: 1.0e-12\n  relative_change: 0.5\n')
        monkeypatch.setenv('HB_CONFIG', str(config))
        args = ['norm', '--model', 'example-omega:u=z', '--f', 'z^2', '--oracle'] + SMALL
        result, out = _run(runner, args, tmp_path)
        assert result.exit_code == 0, result.stderr
        assert json.loads(out.read_text())['oracles']['agrees'] is False

    def test_oracle_needs_polynomial(self, runner, tmp_path):
        series = tmp_path / 'f.json'
        series.write_text(json.dumps(TaylorSeries(0.5 ** np.arange(20), decay_hint=2.0).to_dict()))
        result = runner.invoke(cli, ['norm', '--model', 'zero:n=1', '--f-file', str(series), '--oracle'] + SMALL)
        assert result.exit_code == 2


class TestScanCommand:
    def test_monomial_scan(self, runner, tmp_path):
        result, out = _run(runner, ['scan', '--model', 'example-omega:u=z', '--m-max', '8'] + SMALL, tmp_path)
        assert result.exit_code == 0, result.stderr
        rows = json.loads(out.read_text())
        assert [row['closed_form'] for row in rows] == pytest.approx([2 + 6 * m for m in range(9)])
        assert max(row['difference'] for row in rows) < 1e-10

    def test_kernel_scan_csv(self, runner, tmp_path):
        args = ['scan', '--model', 'zero:n=2', '--what', 'kernel', '--lambdas', '0,0.3,0.5',
                '--format', 'csv'] + SMALL
        result, out = _run(runner, args, tmp_path, 'scan.csv')
        assert result.exit_code == 0, result.stderr
        with open(out, newline='') as handle:
            rows = list(csv.DictReader(handle))
        assert [float(row['closed_form']) for row in rows] == pytest.approx([1.0, 1 / 0.91, 4 / 3])
        assert all(float(row['difference']) < 1e-10 for row in rows)


class TestCheckCommand:
    def test_omega_not_contained(self, runner, tmp_path):
        args = ['check', '--model', 'example-omega:u=z', '--degree', '64', '--grid', '256']
        result, out = _run(runner, args, tmp_path)
        assert result.exit_code == 0, result.stderr
        data = json.loads(out.read_text())
        assert data['inclusion']['verdict'] == 'not_contains'
        assert data['equals_hardy']['verdict'] == 'not_equal'
        assert 'inclusion: not_contains' in result.stderr

    def test_zero_symbol(self, runner, tmp_path):
        result, out = _run(runner, ['check', '--model', 'zero:n=2'] + SMALL, tmp_path)
        assert result.exit_code == 0
        data = json.loads(out.read_text())
        assert data['inclusion']['verdict'] == 'contains_Hinf'
        assert data['equals_hardy']['verdict'] == 'equal'

    def test_rational_strict_contraction(self, runner, tmp_path):
        result, out = _run(runner, ['check', '--model', 'rational:z/2;1/2'] + SMALL, tmp_path)
        assert result.exit_code == 0, result.stderr
        assert json.loads(out.read_text())['inclusion']['verdict'] == 'contains_Hinf'

    def test_non_schur_rational(self, runner):
        result = runner.invoke(cli, ['check', '--model', 'rational:z;z'] + SMALL)
        assert result.exit_code == 2


class TestExportModel:
    def test_round_trip_through_file_spec(self, runner, tmp_path):
        result, exported = _run(runner, ['export-model', '--model', 'example-omega:u=z'] + SMALL, tmp_path,
                                'model.json')
        assert result.exit_code == 0, result.stderr
        assert json.loads(exported.read_text())['version'] == 1

        result, out = _run(runner, ['norm', '--model', f'file:{exported}', '--f', 'z^2'] + SMALL, tmp_path)
        assert result.exit_code == 0, result.stderr
        assert json.loads(out.read_text())['norm_sq'] == pytest.approx(14.0, rel=1e-12)


class TestByteStability:
    @pytest.mark.parametrize('args', [
        ['factorize', '--model', 'rational:0.5z+0.1;z^2/3'],
        ['norm', '--model', 'example-omega:u=z', '--f', '1 + (0.5+1i)z^2'],
        ['check', '--model', 'rational:z/2;1/2'],
        ['export-model', '--model', 'example-omega:u=blaschke(0.5)'],
    ], ids=['factorize', 'norm', 'check', 'export'])
    def test_repeated_runs_are_identical(self, runner, tmp_path, args):
        first, first_out = _run(runner, args + SMALL, tmp_path, 'first.json')
        ConfigManager._instance = None
        second, second_out = _run(runner, args + SMALL, tmp_path, 'second.json')
        assert first.exit_code == 0, first.stderr
        assert second.exit_code == 0, second.stderr
        assert first_out.read_bytes() == second_out.read_bytes()

    def test_scan_csv_is_identical(self, runner, tmp_path):
        args = ['scan', '--model', 'example-omega:u=z', '--what', 'kernel', '--format', 'csv'] + SMALL
        _, first = _run(runner, args, tmp_path, 'first.csv')
        result, second = _run(runner, args, tmp_path, 'second.csv')
        assert result.exit_code == 0, result.stderr
        assert first.read_bytes() == second.read_bytes()


class TestRunTolerances:
    def test_norm_tolerance_from_config(self, runner, tmp_path, monkeypatch, caplog):
        config = tmp_path / 'hb_space.yaml'
        config.write_text('norm:\n  tolerance: 1.0e-300\n')
        monkeypatch.setenv('HB_CONFIG', str(config))
        series = tmp_path / 'f.json'
        series.write_text(json.dumps(TaylorSeries(0.5 ** np.arange(20), decay_hint=2.0).to_dict()))
        with caplog.at_level('WARNING', logger='src.hb_space'):
            result, _ = _run(runner, ['norm', '--model', 'example-omega:u=z', '--f-file', str(series)] + SMALL,
                             tmp_path)
        assert result.exit_code == 0, result.stderr
        assert any('tail budget' in r.message for r in caplog.records)
