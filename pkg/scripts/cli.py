import csv
import io
import json
import logging
import sys
from functools import wraps
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from src.analytic_core import TaylorSeries
from src.config import ConfigManager, RunConfig
from src.diagnostics import (
    DiagnosticSettings,
    OracleSettings,
    equals_hardy_report,
    inclusion_report,
    oracle_cross_check,
)
from src.errors import HypothesisError, SchemaError, exit_code_for
from src.factorization import FactorizationSettings
from src.hb_space import ScanRow, hb_norm, norm_scan
from src.model_library import (
    ModelInstance,
    model_from_spec,
    model_to_dict,
    parse_polynomial,
    refresh_factorization,
)

logger = logging.getLogger(__name__)

SCAN_HEADER = ['index', 'closed_form', 'series_value', 'difference', 'tail_budget']


class HBService:
    """
    Builds the model a command runs on and wraps the library calls
    """
    def __init__(self, run: RunConfig, config: ConfigManager):
        self.run = run
        self.factorization_settings = FactorizationSettings.from_config(config, run.factorization_tol)
        self.diagnostic_settings = DiagnosticSettings.from_config(config)
        self.oracle_settings = OracleSettings.from_config(config, run.oracle_tol)
        self._model: Optional[ModelInstance] = None

    @property
    def model(self) -> ModelInstance:
        if self._model is None:
            self._model = model_from_spec(
                self.run.model_source,
                degree=self.run.degree,
                grid_size=self.run.grid_size,
                settings=self.factorization_settings
            )
        return self._model

    def factorize(self) -> Dict[str, Any]:
        result = refresh_factorization(self.model)
        payload = result.to_dict()
        payload['provenance'] = self.model.provenance
        return payload

    def norm(self, f: TaylorSeries, with_oracles: bool = False) -> Dict[str, Any]:
        model = self.model
        report = hb_norm(f, model.phi, B=model.B, A=model.A, tolerance=self.run.norm_tol)
        payload = report.to_dict()
        if with_oracles:
            payload['oracles'] = oracle_cross_check(f, model.B, report.norm_sq,
                                                     settings=self.oracle_settings).to_dict()
        return payload

    def scan(self, what: str, values: List, workers: int) -> List[ScanRow]:
        model = self.model
        return norm_scan(what, values, model.phi, B=model.B, A=model.A, workers=workers,
                         tolerance=self.run.norm_tol)

    def check(self) -> Dict[str, Any]:
        model = self.model
        inclusion = inclusion_report(model.B, model.a, model.A, model.phi, self.diagnostic_settings)
        hardy = equals_hardy_report(model.B, model.a, model.A, model.phi, self.diagnostic_settings)
        return {'inclusion': inclusion.to_dict(), 'equals_hardy': hardy.to_dict()}


def _json_default(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, 'item'):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _to_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
        logger.info(f"Wrote {out}")
    else:
        click.echo(text)


def _scan_csv(rows: List[ScanRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(SCAN_HEADER)
    for row in rows:
        writer.writerow([row.index, repr(row.closed_form), repr(row.series_value),
                         repr(row.difference), repr(row.tail_budget)])
    return buffer.getvalue()


def run_options(command):
    """Flags shared by every model-driven command"""
    options = [
        click.option('--model', 'model_source', required=True,
                     help="zero:n=2 | example-omega:u=z | rational:z/2;1/2 | file:model.json"),
        click.option('--degree', type=int, default=None, help='Truncation degree N'),
        click.option('--grid', 'grid_size', type=int, default=None, help='Grid size M (power of two)'),
        click.option('--tol', 'tolerance', type=float, default=None, help='Factorization tolerance'),
        click.option('--out', type=click.Path(dir_okay=False), default=None, help='Output file'),
        click.option('--format', 'output_format', type=click.Choice(['json', 'csv']), default='json'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def handle_errors(command):
    """Turn library exceptions into log lines and exit codes"""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except Exception as e:
            code = exit_code_for(e)
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(code)
    return wrapper


def _service(ctx: click.Context, model_source: str, degree: Optional[int], grid_size: Optional[int],
             tolerance: Optional[float], output_format: str) -> HBService:
    config = ctx.obj
    try:
        run = RunConfig.from_config(config, degree, grid_size, tolerance, output_format, model_source)
    except ValueError as e:
        raise HypothesisError(str(e)) from e
    return HBService(run, config)


@click.group()
@click.option('--log-level', default=None, help='Override logging.level')
@click.pass_context
def cli(ctx, log_level):
    """H(B) toolkit CLI"""
    config = ConfigManager()
    if log_level:
        config.config['logging']['level'] = log_level
    config.setup_logging()
    ctx.obj = config


@cli.command()
@run_options
@click.pass_context
@handle_errors
def factorize(ctx, model_source, degree, grid_size, tolerance, out, output_format):
    """Build a model, factor it if needed and report residuals"""
    service = _service(ctx, model_source, degree, grid_size, tolerance, output_format)
    _emit(_to_json(service.factorize()), out)


@cli.command()
@run_options
@click.option('--f', 'f_spec', default=None, help="Polynomial such as '1 + (0.5+1i)z^2'")
@click.option('--f-file', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Series JSON with optional decay_hint')
@click.option('--oracle', is_flag=True, help='Cross-check against the Gram and Toeplitz defect oracles')
@click.pass_context
@handle_errors
def norm(ctx, model_source, degree, grid_size, tolerance, out, output_format, f_spec, f_file, oracle):
    """H(B) norm, mate and tail budget of one function"""
    if (f_spec is None) == (f_file is None):
        raise SchemaError("give exactly one of --f and --f-file")
    if f_spec is not None:
        f = parse_polynomial(f_spec)
    else:
        try:
            f = TaylorSeries.from_dict(json.loads(Path(f_file).read_text()))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{f_file} is not valid JSON: {e}") from e
        except OSError as e:
            raise SchemaError(f"cannot read {f_file}: {e}") from e
    service = _service(ctx, model_source, degree, grid_size, tolerance, output_format)
    _emit(_to_json(service.norm(f, with_oracles=oracle)), out)


@cli.command()
@run_options
@click.option('--what', type=click.Choice(['monomial', 'kernel']), default='monomial')
@click.option('--m-max', type=int, default=10, help='Largest monomial power')
@click.option('--lambdas', default='0,0.3,0.5,0.7', help='Comma-separated kernel points')
@click.option('--workers', type=int, default=1, help='Worker processes')
@click.pass_context
@handle_errors
def scan(ctx, model_source, degree, grid_size, tolerance, out, output_format, what, m_max, lambdas, workers):
    """Closed-form norms against the series formula, with their difference"""
    if what == 'monomial':
        values = list(range(m_max + 1))
    else:
        values = [complex(item.strip().replace('i', 'j')) for item in lambdas.split(',') if item.strip()]
    service = _service(ctx, model_source, degree, grid_size, tolerance, output_format)
    rows = service.scan(what, values, workers)
    if output_format == 'csv':
        _emit(_scan_csv(rows), out)
    else:
        _emit(_to_json([row._asdict() for row in rows]), out)


@cli.command()
@run_options
@click.pass_context
@handle_errors
def check(ctx, model_source, degree, grid_size, tolerance, out, output_format):
    """Inclusion criteria and the H(B) = H^2 test"""
    service = _service(ctx, model_source, degree, grid_size, tolerance, output_format)
    payload = service.check()
    _emit(_to_json(payload), out)

    inclusion = payload['inclusion']
    click.echo(f"inclusion: {inclusion['verdict']}"
               f"{' (inconclusive)' if inclusion['inconclusive'] else ''}; "
               f"equals H^2: {payload['equals_hardy']['verdict']}", err=True)
    if inclusion['verdict'] == 'inconsistent':
        sys.exit(3)


@cli.command(name='export-model')
@run_options
@click.pass_context
@handle_errors
def export_model(ctx, model_source, degree, grid_size, tolerance, out, output_format):
    """Write the model as a version-1 JSON descriptor"""
    service = _service(ctx, model_source, degree, grid_size, tolerance, output_format)
    _emit(_to_json(model_to_dict(service.model)), out)


def main():
    cli()


if __name__ == "__main__":
    main()
