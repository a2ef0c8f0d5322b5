"""
Model instances (B, a, A, phi): closed-form families, rational symbols
factored numerically, spec-string parsing and JSON persistence.
"""
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .analytic_core import (
    DEFAULT_DEGREE,
    DEFAULT_GRID_SIZE,
    MatrixTaylorSeries,
    TaylorSeries,
    multiply,
    reciprocal,
)
from .errors import HypothesisError, SchemaError, ShapeError
from .factorization import FactorizationResult, FactorizationSettings, certify, factorize
from .hb_space import SchurRow, SymbolPhi, phi_coefficients

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

OMEGA = np.exp(2j * np.pi / 3)

# Identities the omega family relies on
assert abs(OMEGA ** 3 - 1) < 1e-14
assert abs(1 + OMEGA + OMEGA ** 2) < 1e-14
assert abs(np.conj(OMEGA) - OMEGA ** 2) < 1e-14


@dataclass(frozen=True)
class InnerFunction:
    """
    Inner function u: the monomial z^power, or a finite Blaschke product
    """
    kind: str = 'monomial'
    power: int = 1
    zeros: Tuple[complex, ...] = ()

    def __post_init__(self):
        if self.kind not in ('monomial', 'blaschke'):
            raise HypothesisError(f"unknown inner function kind {self.kind!r}")
        if self.kind == 'monomial' and self.power < 1:
            raise HypothesisError("u must be a non-constant inner function")
        if self.kind == 'blaschke':
            if not self.zeros:
                raise HypothesisError("u must be a non-constant inner function")
            if any(abs(z) >= 1 for z in self.zeros):
                raise HypothesisError("Blaschke zeros must lie in the open disk")

    @classmethod
    def parse(cls, text: str) -> 'InnerFunction':
        """Parse 'z', 'z^k' or 'blaschke(a1,a2,...)'"""
        text = text.strip().replace(' ', '')
        if text == 'z':
            return cls('monomial', 1)
        match = re.fullmatch(r'z\^(\d+)', text)
        if match:
            return cls('monomial', int(match.group(1)))
        match = re.fullmatch(r'blaschke\((.+)\)', text)
        if match:
            zeros = tuple(_parse_number(item) for item in _split_top_level(match.group(1), ','))
            return cls('blaschke', 0, zeros)
        raise SchemaError(f"cannot parse inner function {text!r}")

    def series(self, degree: int) -> TaylorSeries:
        if self.kind == 'monomial':
            return TaylorSeries.monomial(self.power).resized(max(degree, self.power))
        product = TaylorSeries.constant(1.0, degree)
        for alpha in self.zeros:
            numerator = TaylorSeries(np.array([-alpha, 1.0]))
            factor = multiply(numerator, reciprocal(TaylorSeries(np.array([1.0, -np.conj(alpha)])), degree), degree)
            product = multiply(product, factor, degree)
        return product

    def value_at_origin(self) -> complex:
        if self.kind == 'monomial':
            return 0j
        return complex(np.prod([-alpha for alpha in self.zeros]))

    def describe(self) -> str:
        if self.kind == 'monomial':
            return 'z' if self.power == 1 else f'z^{self.power}'
        return 'blaschke(' + ','.join(_format_number(z) for z in self.zeros) + ')'

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'power': self.power,
                'zeros': [[z.real, z.imag] for z in map(complex, self.zeros)]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'InnerFunction':
        return cls(data['kind'], int(data.get('power', 0)),
                   tuple(complex(re_, im) for re_, im in data.get('zeros', [])))


@dataclass
class ModelInstance:
    """A Schur row with its outer factors and phi"""
    B: SchurRow
    a: TaylorSeries
    A: MatrixTaylorSeries
    phi: SymbolPhi
    provenance: str
    inner_u: Optional[InnerFunction] = None
    expected: Dict[str, Any] = field(default_factory=dict)
    factorization: Optional[FactorizationResult] = None

    @property
    def degree(self) -> int:
        return self.phi.degree

    @property
    def grid_size(self) -> int:
        return self.B.grid_size


def _regauge(A: MatrixTaylorSeries, phi_row: MatrixTaylorSeries) -> Tuple[MatrixTaylorSeries, MatrixTaylorSeries]:
    unitary, _ = linalg.polar(A.at_origin())
    return A.left_multiply(unitary.conj().T), phi_row.right_multiply(unitary)


def example_omega_family(u: InnerFunction, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID_SIZE,
                         regauge: bool = True) -> ModelInstance:
    """
    Closed-form family with omega = exp(2 pi i / 3):

        b_j = (1 + omega^(j-1) u) / sqrt 6,   a = (1 + omega^2 u) / sqrt 6,
        A = [[1 - u, 1 - omega u], [sqrt 2, sqrt 2 omega^2]] / sqrt 6,
        phi = ((omega - u) / (omega + u), -sqrt 2 omega^2 u / (omega + u)).

    Args:
        u: Non-constant inner function
        degree: Truncation degree N
        grid_size: Grid size M
        regauge: Rotate A (and phi) so that A(0) is positive definite

    Returns:
        ModelInstance with provenance 'closed_form'
    """
    s6, s2 = np.sqrt(6.0), np.sqrt(2.0)
    us = u.series(degree).resized(degree)

    b1 = (1.0 + us) * (1 / s6)
    b2 = (1.0 + OMEGA * us) * (1 / s6)
    a = (1.0 + OMEGA ** 2 * us) * (1 / s6)
    A = MatrixTaylorSeries.from_entries([
        [1.0 - us, 1.0 - OMEGA * us],
        [TaylorSeries.constant(s2, degree), TaylorSeries.constant(s2 * OMEGA ** 2, degree)]
    ]) * (1 / s6)

    inverse_denominator = reciprocal(OMEGA + us, degree)
    phi_row = MatrixTaylorSeries.from_entries([[
        multiply(OMEGA - us, inverse_denominator, degree),
        multiply(us * (-s2 * OMEGA ** 2), inverse_denominator, degree)
    ]])
    if regauge:
        A, phi_row = _regauge(A, phi_row)

    B = SchurRow.from_components([b1, b2], grid_size)
    residual = float(np.max(np.abs(multiply(phi_row, A, degree).coeffs - B.row.resized(degree).coeffs)))
    phi = SymbolPhi.from_series(phi_row, 'closed-form', residual)

    u0 = u.value_at_origin()
    denominator = abs(1 + OMEGA * np.conj(u0)) ** 2
    expected = {
        'b_norm_sq': [2 * (1 + u0.real) / denominator, 2 * (1 + (OMEGA * u0).real) / denominator],
        'boundary_zero_of_a': complex(-OMEGA) if u.kind == 'monomial' and u.power == 1 else None
    }
    if u.kind == 'monomial' and u.power == 1:
        expected.update({'c_norm_sq': 6.0, 'monomial_norm_sq': '2 + 6m'})

    logger.info(f"Built omega family model for u = {u.describe()} at degree {degree}")
    return ModelInstance(B, a, A, phi, 'closed_form', u, expected)


def zero_symbol(n: int, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID_SIZE) -> ModelInstance:
    """B = 0 in n components: a = 1, A = I, phi = 0 and H(B) = H^2 isometrically"""
    if n < 1:
        raise HypothesisError(f"zero symbol needs n >= 1, got {n}")
    zero = TaylorSeries.constant(0.0, degree)
    B = SchurRow.from_components([zero] * n, grid_size)
    phi = SymbolPhi(np.zeros((degree + 1, n), dtype=complex), 0.0, 'closed-form')
    return ModelInstance(B, TaylorSeries.constant(1.0, degree), MatrixTaylorSeries.identity(n, degree),
                         phi, 'closed_form', expected={'monomial_norm_sq': '1'})


def rational_component(numerator: TaylorSeries, denominator: TaylorSeries, degree: int) -> TaylorSeries:
    """Taylor series of numerator / denominator, denominator zero-free on the closed disk"""
    denominator = denominator.trimmed()
    if denominator.degree == 0:
        if denominator.coeffs[0] == 0:
            raise HypothesisError("division by the zero polynomial")
        return (numerator * (1.0 / denominator.coeffs[0])).resized(degree)
    roots = np.roots(denominator.coeffs[::-1])
    if np.min(np.abs(roots)) <= 1.0:
        raise HypothesisError(
            f"denominator vanishes at |z| = {np.min(np.abs(roots)):.6f} inside the closed disk"
        )
    return multiply(numerator, reciprocal(denominator, degree), degree)


def rational_symbol(specs: Sequence[Tuple[TaylorSeries, TaylorSeries]], degree: int = DEFAULT_DEGREE,
                    grid_size: int = DEFAULT_GRID_SIZE,
                    settings: Optional[FactorizationSettings] = None) -> ModelInstance:
    """
    Schur row of rational components, factored numerically

    Args:
        specs: (numerator, denominator) polynomial pairs
        degree: Truncation degree N
        grid_size: Grid size M
        settings: Factorization settings

    Returns:
        ModelInstance with provenance 'factored'
    """
    settings = settings or FactorizationSettings()
    components = [rational_component(num, den, degree) for num, den in specs]
    B = SchurRow.from_components(components, grid_size, settings.degeneracy_threshold,
                                 settings.max_trim_fraction)
    if not B.szego_ok:
        raise HypothesisError(
            f"log(1 - BB*) is not integrable (vanishes on {B.trimmed_fraction:.2%} of the circle)"
        )
    result = factorize(B, degree, B.grid_size, settings)
    phi = phi_coefficients(B, result.A, degree, floor=settings.origin_floor)
    return ModelInstance(B, result.a, result.A, phi, 'factored', factorization=result)


def _split_top_level(text: str, separator: str) -> List[str]:
    parts, depth, current = [], 0, ''
    for char in text:
        if char == '(':
            depth += 1
        elif char == ')':
            depth -= 1
        if char == separator and depth == 0:
            parts.append(current)
            current = ''
        else:
            current += char
    parts.append(current)
    return parts


def _parse_number(text: str) -> complex:
    text = text.strip()
    if text.startswith('(') and text.endswith(')'):
        text = text[1:-1]
    text = text.replace(' ', '').replace('i', 'j')
    if text in ('j', '+j', '-j'):
        text = text.replace('j', '1j')
    try:
        return complex(text)
    except ValueError as e:
        raise SchemaError(f"cannot parse number {text!r}") from e


def _format_number(value: complex) -> str:
    value = complex(value)
    if value.imag == 0:
        return repr(value.real)
    return f"({value.real!r}{value.imag:+}i)"


_TERM = re.compile(r'^(?P<coef>\([^()]*\)|[0-9.]+(?:[eE][-+]?\d+)?[ij]?|[ij])?\*?(?P<z>z(?:\^(?P<power>\d+))?)?$')


def _split_terms(text: str) -> List[str]:
    terms, depth, current = [], 0, ''
    for k, char in enumerate(text):
        if char == '(':
            depth += 1
        elif char == ')':
            depth -= 1
        exponent_sign = k > 0 and text[k - 1] in 'eE' and k > 1 and text[k - 2].isdigit()
        if char in '+-' and depth == 0 and not exponent_sign and current:
            terms.append(current)
            current = ''
        current += char
    if current:
        terms.append(current)
    return terms


def parse_polynomial(text: str) -> TaylorSeries:
    """
    Parse a polynomial such as '1 + 2z^3 - (0.5+1i)z^2' into an exact series
    """
    compact = text.replace(' ', '')
    if not compact:
        raise SchemaError("empty polynomial")
    coefficients: Dict[int, complex] = {}
    for term in _split_terms(compact):
        sign = -1.0 if term.startswith('-') else 1.0
        body = term.lstrip('+-')
        match = _TERM.match(body)
        if not body or not match or (match.group('coef') is None and match.group('z') is None):
            raise SchemaError(f"cannot parse polynomial term {term!r}")
        coefficient = _parse_number(match.group('coef')) if match.group('coef') else 1.0
        power = 0
        if match.group('z'):
            power = int(match.group('power')) if match.group('power') else 1
        coefficients[power] = coefficients.get(power, 0j) + sign * coefficient
    coeffs = np.zeros(max(coefficients) + 1, dtype=complex)
    for power, value in coefficients.items():
        coeffs[power] = value
    return TaylorSeries(coeffs)


def parse_rational(text: str) -> Tuple[TaylorSeries, TaylorSeries]:
    """Parse 'p' or 'p/q' into (numerator, denominator)"""
    parts = _split_top_level(text, '/')
    if len(parts) == 1:
        return parse_polynomial(parts[0]), TaylorSeries(np.array([1.0]))
    if len(parts) == 2:
        return parse_polynomial(parts[0]), parse_polynomial(parts[1])
    raise SchemaError(f"cannot parse rational function {text!r}")


def _parse_arguments(text: str) -> Dict[str, str]:
    arguments = {}
    for item in filter(None, (s.strip() for s in text.split(','))):
        key, sep, value = item.partition('=')
        if not sep:
            raise SchemaError(f"expected key=value, got {item!r}")
        arguments[key.strip()] = value.strip()
    return arguments


def model_from_spec(spec: str, degree: int = DEFAULT_DEGREE, grid_size: int = DEFAULT_GRID_SIZE,
                    settings: Optional[FactorizationSettings] = None) -> ModelInstance:
    """
    Build a model from a spec string

    Args:
        spec: 'zero:n=2', 'example-omega:u=z', 'rational:z/2;1/2' or 'file:path.json'
        degree: Truncation degree N
        grid_size: Grid size M
        settings: Factorization settings for rational models

    Returns:
        ModelInstance
    """
    kind, _, argument = spec.partition(':')
    kind = kind.strip()
    if kind == 'zero':
        n = int(_parse_arguments(argument).get('n', 1))
        return zero_symbol(n, degree, grid_size)
    if kind == 'example-omega':
        arguments = _parse_arguments(argument)
        u = InnerFunction.parse(arguments.get('u', 'z'))
        regauge = arguments.get('regauge', 'true').lower() != 'false'
        return example_omega_family(u, degree, grid_size, regauge)
    if kind == 'rational':
        specs = [parse_rational(part) for part in argument.split(';') if part.strip()]
        if not specs:
            raise SchemaError("rational model needs at least one component")
        return rational_symbol(specs, degree, grid_size, settings)
    if kind == 'file':
        return load_model(argument)
    raise SchemaError(f"unknown model kind {kind!r}")


def model_to_dict(model: ModelInstance) -> Dict[str, Any]:
    return {
        'version': SCHEMA_VERSION,
        'n': model.B.n,
        'B': [c.to_dict() for c in model.B.components],
        'a': model.a.to_dict(),
        'A': model.A.to_dict(),
        'phi': model.phi.to_dict(),
        'provenance': model.provenance,
        'inner_u': model.inner_u.to_dict() if model.inner_u else None,
        'grid_size': model.grid_size
    }


def model_from_dict(data: Dict[str, Any]) -> ModelInstance:
    if not isinstance(data, dict):
        raise SchemaError("model descriptor must be a JSON object")
    if data.get('version') != SCHEMA_VERSION:
        raise SchemaError(f"unsupported model schema version {data.get('version')!r}")
    try:
        components = [TaylorSeries.from_dict(c) for c in data['B']]
        B = SchurRow.from_components(components, int(data.get('grid_size', DEFAULT_GRID_SIZE)))
        a = TaylorSeries.from_dict(data['a'])
        A = MatrixTaylorSeries.from_dict(data['A'])
        phi = SymbolPhi.from_dict(data['phi'])
        inner_u = InnerFunction.from_dict(data['inner_u']) if data.get('inner_u') else None
        provenance = str(data['provenance'])
    except ShapeError as e:
        raise SchemaError(f"malformed series in model descriptor: {e}") from e
    except HypothesisError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"malformed model descriptor: {e}") from e
    if A.shape != (B.n, B.n) or phi.n != B.n:
        raise SchemaError(f"inconsistent model shapes: n={B.n}, A {A.shape}, phi n={phi.n}")
    return ModelInstance(B, a, A, phi, provenance, inner_u)


def save_model(model: ModelInstance, path: str):
    """Write a model as sorted-key JSON"""
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True, indent=2))
    logger.info(f"Saved model to {path}")


def load_model(path: str) -> ModelInstance:
    """Read a model written by save_model"""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise SchemaError(f"cannot read model file {path}: {e}") from e
    return model_from_dict(data)


def refresh_factorization(model: ModelInstance) -> FactorizationResult:
    """Residuals and outerness gaps of the stored (a, A)"""
    if model.factorization is None:
        model.factorization = certify(model.B, model.a, model.A, model.grid_size)
    return model.factorization
