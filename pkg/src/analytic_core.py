"""
Truncated power-series arithmetic for scalar-, row- and matrix-valued
analytic functions on the unit disk, and their boundary traces on the circle.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import signal

from .config import is_power_of_two
from .errors import (
    DomainError,
    GridSizeError,
    HypothesisError,
    NotAnalyticError,
    NotInvertibleError,
    ShapeError,
)

logger = logging.getLogger(__name__)

DEFAULT_DEGREE = 256
DEFAULT_GRID_SIZE = 1024
ORIGIN_FLOOR = 1e-12
NOISE_FLOOR = 1e-13


def geometric_decay_ratio(magnitudes: Sequence[float], noise_floor: float = NOISE_FLOOR) -> float:
    """
    Fit |c_j| ~ C q^j over the last quarter of the coefficients above the noise floor

    Args:
        magnitudes: Coefficient magnitudes, index j = power of z
        noise_floor: Coefficients below noise_floor * max are ignored

    Returns:
        Fitted ratio q; 0.0 when fewer than four coefficients rise above the floor
    """
    mags = np.abs(np.asarray(magnitudes))
    if mags.size == 0 or not np.any(mags > 0):
        return 0.0

    floor = max(noise_floor * mags.max(), 1e-300)
    kept = np.nonzero(mags > floor)[0]
    if kept.size < 4:
        return 0.0

    last = kept[-1]
    start = last - max((last + 1) // 4, 3)
    window = kept[kept >= start]
    if window.size < 4:
        window = kept[-4:]

    slope = np.polyfit(window.astype(float), np.log(mags[window]), 1)[0]
    return float(np.exp(slope))


def _fitted_hint(coeffs: np.ndarray) -> Optional[float]:
    ratio = geometric_decay_ratio(coeffs)
    return None if ratio == 0.0 else 1.0 / ratio


def _combine_hints(*hints: Optional[float]) -> Optional[float]:
    present = [h for h in hints if h is not None]
    return min(present) if present else None


def _complex_pairs(values: np.ndarray) -> List[List[float]]:
    return [[float(v.real), float(v.imag)] for v in np.ravel(values)]


@dataclass(frozen=True, eq=False)
class TaylorSeries:
    """
    Truncated power series sum_j coeffs[j] z^j of a scalar analytic function.

    decay_hint=None marks an exact polynomial. A hint r > 1 states
    |coeffs[j]| <~ C r^-j beyond the stored degree and is only accepted when a
    geometric tail fit confirms it within a factor 2 on the exponential scale.
    Hints produced by series arithmetic (see derived) are carried without refitting.
    """
    coeffs: np.ndarray
    decay_hint: Optional[float] = None
    __array_ufunc__ = None

    def __post_init__(self):
        coeffs = np.array(np.atleast_1d(self.coeffs), dtype=complex)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ShapeError(f"scalar series needs a nonempty 1-D coefficient array, got {coeffs.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coeffs', coeffs)

        if self.decay_hint is not None:
            hint = float(self.decay_hint)
            if not hint > 0:
                raise HypothesisError(f"decay_hint must be positive, got {hint}")
            if hint > 1:
                ratio = geometric_decay_ratio(coeffs)
                if ratio > 0 and (ratio >= 1 or np.log(hint) > -2.0 * np.log(ratio)):
                    raise HypothesisError(
                        f"decay_hint {hint:.4g} not confirmed by the tail fit (fitted {1 / ratio:.4g})"
                    )
            object.__setattr__(self, 'decay_hint', hint)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def is_polynomial(self) -> bool:
        return self.decay_hint is None

    @classmethod
    def derived(cls, coeffs: np.ndarray, decay_hint: Optional[float]) -> 'TaylorSeries':
        """Wrap the result of series arithmetic; the hint of its inputs is carried unchecked"""
        series = cls(coeffs)
        if decay_hint is not None:
            object.__setattr__(series, 'decay_hint', float(decay_hint))
        return series

    @classmethod
    def constant(cls, value: complex, degree: int = 0) -> 'TaylorSeries':
        coeffs = np.zeros(degree + 1, dtype=complex)
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def monomial(cls, power: int, coefficient: complex = 1.0) -> 'TaylorSeries':
        coeffs = np.zeros(power + 1, dtype=complex)
        coeffs[power] = coefficient
        return cls(coeffs)

    def resized(self, degree: int) -> 'TaylorSeries':
        """Zero-pad or truncate to the given degree"""
        coeffs = np.zeros(degree + 1, dtype=complex)
        keep = min(degree, self.degree) + 1
        coeffs[:keep] = self.coeffs[:keep]
        return TaylorSeries.derived(coeffs, self.decay_hint)

    def trimmed(self) -> 'TaylorSeries':
        """Drop exactly-zero trailing coefficients"""
        nonzero = np.nonzero(self.coeffs)[0]
        last = int(nonzero[-1]) if nonzero.size else 0
        return TaylorSeries.derived(self.coeffs[:last + 1], self.decay_hint)

    def _binary(self, other, op) -> 'TaylorSeries':
        if isinstance(other, TaylorSeries):
            degree = max(self.degree, other.degree)
            left, right = self.resized(degree), other.resized(degree)
            return TaylorSeries.derived(op(left.coeffs, right.coeffs),
                                        _combine_hints(self.decay_hint, other.decay_hint))
        if np.isscalar(other):
            coeffs = np.array(self.coeffs)
            coeffs[0] = op(coeffs[0], other)
            return TaylorSeries.derived(coeffs, self.decay_hint)
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self) -> 'TaylorSeries':
        return TaylorSeries.derived(-self.coeffs, self.decay_hint)

    def __mul__(self, other):
        if np.isscalar(other):
            return TaylorSeries.derived(self.coeffs * other, self.decay_hint)
        return NotImplemented

    __rmul__ = __mul__

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'rows': 1,
            'cols': 1,
            'degree': self.degree,
            'coeffs': [[[float(c.real), float(c.imag)]] for c in self.coeffs]
        }
        if self.decay_hint is not None:
            data['decay_hint'] = self.decay_hint
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TaylorSeries':
        coeffs = _coeffs_from_dict(data)
        if coeffs.shape[1:] != (1, 1):
            raise ShapeError(f"scalar series expected, got {coeffs.shape[1]}x{coeffs.shape[2]}")
        return cls(coeffs[:, 0, 0], data.get('decay_hint'))


@dataclass(frozen=True, eq=False)
class MatrixTaylorSeries:
    """
    Truncated power series with matrix coefficients, shape (degree+1, rows, cols).
    rows=1 encodes row-valued functions such as B and phi.
    """
    coeffs: np.ndarray
    __array_ufunc__ = None

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[0] == 0 or 0 in coeffs.shape[1:]:
            raise ShapeError(f"matrix series needs shape (N+1, rows, cols), got {coeffs.shape}")
        coeffs.setflags(write=False)
        object.__setattr__(self, 'coeffs', coeffs)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    @classmethod
    def identity(cls, n: int, degree: int = 0) -> 'MatrixTaylorSeries':
        coeffs = np.zeros((degree + 1, n, n), dtype=complex)
        coeffs[0] = np.eye(n)
        return cls(coeffs)

    @classmethod
    def zeros(cls, rows: int, cols: int, degree: int = 0) -> 'MatrixTaylorSeries':
        return cls(np.zeros((degree + 1, rows, cols), dtype=complex))

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence[TaylorSeries]]) -> 'MatrixTaylorSeries':
        rows = len(entries)
        cols = len(entries[0])
        if any(len(row) != cols for row in entries):
            raise ShapeError("ragged entry list")
        degree = max(e.degree for row in entries for e in row)
        coeffs = np.zeros((degree + 1, rows, cols), dtype=complex)
        for i, row in enumerate(entries):
            for j, entry in enumerate(row):
                coeffs[:entry.degree + 1, i, j] = entry.coeffs
        return cls(coeffs)

    def entry(self, i: int, j: int) -> TaylorSeries:
        return TaylorSeries(self.coeffs[:, i, j])

    def at_origin(self) -> np.ndarray:
        return np.array(self.coeffs[0])

    def resized(self, degree: int) -> 'MatrixTaylorSeries':
        coeffs = np.zeros((degree + 1,) + self.coeffs.shape[1:], dtype=complex)
        keep = min(degree, self.degree) + 1
        coeffs[:keep] = self.coeffs[:keep]
        return MatrixTaylorSeries(coeffs)

    def trimmed(self) -> 'MatrixTaylorSeries':
        nonzero = np.nonzero(np.any(self.coeffs != 0, axis=(1, 2)))[0]
        last = int(nonzero[-1]) if nonzero.size else 0
        return MatrixTaylorSeries(self.coeffs[:last + 1])

    def left_multiply(self, constant: np.ndarray) -> 'MatrixTaylorSeries':
        return MatrixTaylorSeries(np.asarray(constant) @ self.coeffs)

    def right_multiply(self, constant: np.ndarray) -> 'MatrixTaylorSeries':
        return MatrixTaylorSeries(self.coeffs @ np.asarray(constant))

    def __add__(self, other):
        if not isinstance(other, MatrixTaylorSeries):
            return NotImplemented
        if other.shape != self.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape} series")
        degree = max(self.degree, other.degree)
        return MatrixTaylorSeries(self.resized(degree).coeffs + other.resized(degree).coeffs)

    def __sub__(self, other):
        if not isinstance(other, MatrixTaylorSeries):
            return NotImplemented
        return self + (-other)

    def __neg__(self) -> 'MatrixTaylorSeries':
        return MatrixTaylorSeries(-self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return MatrixTaylorSeries(self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rows': self.rows,
            'cols': self.cols,
            'degree': self.degree,
            'coeffs': [_complex_pairs(c) for c in self.coeffs]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MatrixTaylorSeries':
        return cls(_coeffs_from_dict(data))


Series = Union[TaylorSeries, MatrixTaylorSeries]


def _coeffs_from_dict(data: Dict[str, Any]) -> np.ndarray:
    try:
        rows, cols, degree = int(data['rows']), int(data['cols']), int(data['degree'])
        raw = np.asarray(data['coeffs'], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ShapeError(f"malformed series descriptor: {e}") from e
    if raw.shape != (degree + 1, rows * cols, 2):
        raise ShapeError(f"series descriptor shape {raw.shape} does not match {rows}x{cols}, degree {degree}")
    return (raw[..., 0] + 1j * raw[..., 1]).reshape(degree + 1, rows, cols)


@dataclass(frozen=True, eq=False)
class BoundaryGrid:
    """
    Samples of a function at zeta_k = radius * exp(2 pi i k / M), k = 0..M-1
    """
    samples: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex)
        if samples.ndim not in (1, 3) or not is_power_of_two(samples.shape[0]):
            raise GridSizeError(f"grid length {samples.shape[0]} is not a power of two")
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)

    @property
    def grid_size(self) -> int:
        return self.samples.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.radius * np.exp(2j * np.pi * np.arange(self.grid_size) / self.grid_size)


def _raw(s: Series) -> np.ndarray:
    return s.coeffs


def boundary_from_taylor(s: Series, M: int, radius: float = 1.0) -> BoundaryGrid:
    """
    Sample a truncated series on M equispaced points by discrete Fourier synthesis

    Args:
        s: Scalar or matrix series
        M: Grid size, a power of two with M >= 2*degree+2
        radius: Circle radius (1 for boundary values)

    Returns:
        BoundaryGrid of the samples
    """
    if not is_power_of_two(M) or M < 2 * s.degree + 2:
        raise GridSizeError(f"grid size {M} too small for degree {s.degree} (need power of two >= {2 * s.degree + 2})")

    coeffs = _raw(s)
    if radius != 1.0:
        scale = radius ** np.arange(coeffs.shape[0])
        coeffs = coeffs * scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))

    padded = np.zeros((M,) + coeffs.shape[1:], dtype=complex)
    padded[:coeffs.shape[0]] = coeffs
    return BoundaryGrid(M * np.fft.ifft(padded, axis=0), radius)


def taylor_from_boundary(g: BoundaryGrid, degree: int, tol: float = 1e-10, check: bool = True) -> Series:
    """
    Recover the first degree+1 Taylor coefficients from boundary samples

    Args:
        g: Samples of an analytic function
        degree: Truncation degree N < M/2
        tol: Allowed ratio of negative-frequency l2 mass to total l2 mass
        check: Skip the analyticity check when False

    Returns:
        TaylorSeries for scalar grids, MatrixTaylorSeries otherwise
    """
    M = g.grid_size
    if degree >= M // 2:
        raise GridSizeError(f"degree {degree} needs a grid larger than {M}")

    coeffs = np.fft.fft(g.samples, axis=0) / M
    if check:
        negative = float(np.sqrt(np.sum(np.abs(coeffs[M // 2:]) ** 2)))
        total = float(np.sqrt(np.sum(np.abs(coeffs) ** 2)))
        if total > 0 and negative > tol * total:
            raise NotAnalyticError(negative, total)

    coeffs = coeffs[:degree + 1]
    if g.radius != 1.0:
        scale = g.radius ** -np.arange(degree + 1)
        coeffs = coeffs * scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))

    if coeffs.ndim == 1:
        return TaylorSeries(coeffs)
    return MatrixTaylorSeries(coeffs)


def _as_matrix(s: Series) -> np.ndarray:
    if isinstance(s, TaylorSeries):
        return s.coeffs.reshape(-1, 1, 1)
    return s.coeffs


def multiply(a: Series, b: Series, degree: Optional[int] = None) -> Series:
    """
    Cauchy product of two series

    A scalar series times a matrix series multiplies every entry.

    Args:
        a: Left factor
        b: Right factor
        degree: Truncation degree (default: exact product degree)

    Returns:
        Product series
    """
    if degree is None:
        degree = a.degree + b.degree

    if isinstance(a, TaylorSeries) and isinstance(b, TaylorSeries):
        product = np.convolve(a.coeffs, b.coeffs)
        return TaylorSeries.derived(product, _combine_hints(a.decay_hint, b.decay_hint)).resized(degree)

    left, right = _as_matrix(a), _as_matrix(b)
    if isinstance(a, TaylorSeries):
        out = np.zeros((a.degree + b.degree + 1,) + right.shape[1:], dtype=complex)
        for p in range(right.shape[1]):
            for q in range(right.shape[2]):
                out[:, p, q] = np.convolve(a.coeffs, right[:, p, q])
    elif isinstance(b, TaylorSeries):
        out = np.zeros((a.degree + b.degree + 1,) + left.shape[1:], dtype=complex)
        for p in range(left.shape[1]):
            for q in range(left.shape[2]):
                out[:, p, q] = np.convolve(left[:, p, q], b.coeffs)
    else:
        if left.shape[2] != right.shape[1]:
            raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
        out = np.zeros((a.degree + b.degree + 1, left.shape[1], right.shape[2]), dtype=complex)
        for p in range(left.shape[1]):
            for q in range(right.shape[2]):
                for s in range(left.shape[2]):
                    out[:, p, q] += np.convolve(left[:, p, s], right[:, s, q])

    return MatrixTaylorSeries(out).resized(degree)


def _tail_estimate(s: Series, radius: float) -> float:
    if isinstance(s, TaylorSeries) and s.is_polynomial:
        return 0.0
    coeffs = _raw(s)
    mags = np.abs(coeffs).reshape(coeffs.shape[0], -1).max(axis=1)
    if isinstance(s, TaylorSeries):
        ratio = 1.0 / s.decay_hint
    else:
        ratio = geometric_decay_ratio(mags)
    if ratio == 0.0 or radius == 0.0:
        return 0.0
    q = ratio * radius
    if q >= 1:
        return float('inf')
    return float(mags[-1] * q / (1 - q))


def evaluate(s: Series, lam: complex, tol: float = 1e-10) -> Union[complex, np.ndarray]:
    """
    Horner evaluation of a truncated series at a point of the open disk

    Args:
        s: Scalar or matrix series
        lam: Point with |lam| < 1
        tol: Tail estimate above which a precision warning is logged

    Returns:
        Complex value, or an array for matrix series
    """
    lam = complex(lam)
    if abs(lam) >= 1:
        raise DomainError(f"evaluation point |lambda| = {abs(lam):.6g} is not inside the unit disk")

    tail = _tail_estimate(s, abs(lam))
    if tail > tol:
        logger.warning(f"Truncation tail estimate {tail:.3e} at |lambda|={abs(lam):.3f} exceeds {tol:.1e}")

    value = npoly.polyval(lam, _raw(s))
    if isinstance(s, TaylorSeries):
        return complex(value)
    return np.asarray(value)


def evaluate_on_circle(s: Series, theta: Union[float, np.ndarray]) -> np.ndarray:
    """Boundary values at exp(i theta) of the truncated series (no domain check)"""
    return npoly.polyval(np.exp(1j * np.asarray(theta, dtype=float)), _raw(s))


def _det_cofactor(entries: List[List[TaylorSeries]], degree: int) -> TaylorSeries:
    n = len(entries)
    if n == 1:
        return entries[0][0].resized(degree)
    if n == 2:
        return (multiply(entries[0][0], entries[1][1], degree)
                - multiply(entries[0][1], entries[1][0], degree))
    total = TaylorSeries.constant(0.0, degree)
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in entries[1:]]
        term = multiply(entries[0][j], _det_cofactor(minor, degree), degree)
        total = total + term if j % 2 == 0 else total - term
    return total


def _inverse_series(A: MatrixTaylorSeries, degree: int, floor: float) -> MatrixTaylorSeries:
    a0 = A.coeffs[0]
    if abs(np.linalg.det(a0)) <= floor:
        raise NotInvertibleError(np.linalg.det(a0), floor)
    a0_inv = np.linalg.inv(a0)
    coeffs = A.resized(degree).coeffs
    inverse = np.zeros_like(coeffs)
    inverse[0] = a0_inv
    for k in range(1, degree + 1):
        acc = np.einsum('iab,ibc->ac', coeffs[1:k + 1], inverse[k - 1::-1][:k])
        inverse[k] = -a0_inv @ acc
    return MatrixTaylorSeries(inverse)


def _det_bareiss(A: MatrixTaylorSeries, degree: int, floor: float) -> TaylorSeries:
    n = A.rows
    work = [[A.entry(i, j).resized(degree) for j in range(n)] for i in range(n)]
    previous = TaylorSeries.constant(1.0, degree)
    sign = 1.0
    for k in range(n - 1):
        pivot = max(range(k, n), key=lambda r: abs(work[r][k].coeffs[0]))
        if abs(work[pivot][k].coeffs[0]) <= floor:
            raise NotInvertibleError(work[pivot][k].coeffs[0], floor)
        if pivot != k:
            work[k], work[pivot] = work[pivot], work[k]
            sign = -sign
        inverse_previous = reciprocal(previous, degree, floor)
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                cross = (multiply(work[i][j], work[k][k], degree)
                         - multiply(work[i][k], work[k][j], degree))
                work[i][j] = multiply(cross, inverse_previous, degree)
        previous = work[k][k]
    return work[n - 1][n - 1] * sign


def adjugate_det(A: MatrixTaylorSeries, degree: Optional[int] = None,
                 floor: float = ORIGIN_FLOOR) -> Tuple[MatrixTaylorSeries, TaylorSeries]:
    """
    Adjugate and determinant of a square matrix series, so that A adj(A) = det(A) I

    Cofactor expansion for n <= 4; fraction-free elimination (and
    adj = det * A^-1) for larger n.

    Args:
        A: Square matrix series
        degree: Truncation degree (default: A.degree)
        floor: Origin invertibility floor for the elimination path

    Returns:
        (adjugate, determinant)
    """
    if A.rows != A.cols:
        raise ShapeError(f"adjugate needs a square series, got {A.shape}")
    n = A.rows
    degree = A.degree if degree is None else degree

    if n <= 4:
        entries = [[A.entry(i, j) for j in range(n)] for i in range(n)]
        det = _det_cofactor(entries, degree)
        if n == 1:
            return MatrixTaylorSeries.identity(1, degree), det
        adj = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                minor = [row[:i] + row[i + 1:] for k, row in enumerate(entries) if k != j]
                cofactor = _det_cofactor(minor, degree)
                adj[i][j] = cofactor if (i + j) % 2 == 0 else -cofactor
        return MatrixTaylorSeries.from_entries(adj).resized(degree), det

    det = _det_bareiss(A, degree, floor)
    adj = multiply(det, _inverse_series(A, degree, floor), degree)
    return adj, det


def reciprocal(d: TaylorSeries, degree: Optional[int] = None, floor: float = ORIGIN_FLOOR) -> TaylorSeries:
    """
    Power-series long division 1/d

    Args:
        d: Series with |d(0)| > floor
        degree: Truncation degree of the result (default: d.degree)
        floor: Invertibility floor at the origin

    Returns:
        Series r with d * r = 1 to the truncation degree
    """
    degree = d.degree if degree is None else degree
    if abs(d.coeffs[0]) <= floor:
        raise NotInvertibleError(d.coeffs[0], floor)

    impulse = np.zeros(degree + 1, dtype=complex)
    impulse[0] = 1.0
    coeffs = signal.lfilter(np.array([1.0 + 0j]), d.trimmed().coeffs, impulse)

    if d.trimmed().degree == 0 and d.is_polynomial:
        return TaylorSeries(coeffs)
    return TaylorSeries.derived(coeffs, _fitted_hint(coeffs))


def backward_shift(f: TaylorSeries) -> TaylorSeries:
    """(Lf)(z) = (f(z) - f(0)) / z"""
    if f.degree == 0:
        return TaylorSeries.derived(np.zeros(1), f.decay_hint)
    return TaylorSeries.derived(f.coeffs[1:], f.decay_hint)
