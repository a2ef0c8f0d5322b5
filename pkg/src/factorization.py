"""
Outer spectral factorization of the defects 1 - B B* and I - B* B.

The scalar factor comes from the cepstral (Hilbert transform) construction,
the matrix factor from the Wilson-type Newton iteration A <- [A^-* W A^-1 + I]_+ A.

Zeros of the weight on the circle are divided out of its Laurent coefficients
first: a boundary zero zeta contributes the factor 1 - conj(zeta) z to a and
I - conj(zeta) z v v* to A, with v spanning the kernel of the weight at zeta.
Both methods then run on a weight bounded away from zero.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import linalg, optimize, signal

from .analytic_core import (
    DEFAULT_DEGREE,
    ORIGIN_FLOOR,
    BoundaryGrid,
    MatrixTaylorSeries,
    TaylorSeries,
    adjugate_det,
    boundary_from_taylor,
    multiply,
    taylor_from_boundary,
)
from .errors import ConvergenceError, HypothesisError

if TYPE_CHECKING:
    from .hb_space import SchurRow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactorizationSettings:
    """Tunables of the factorization pipeline"""
    tolerance: float = 1e-8
    stop_tolerance: float = 1e-10
    max_iterations: int = 200
    stall_window: int = 10
    degeneracy_threshold: float = 1e-9
    max_trim_fraction: float = 0.01
    origin_floor: float = ORIGIN_FLOOR

    @classmethod
    def from_config(cls, config, tolerance: Optional[float] = None) -> 'FactorizationSettings':
        return cls(
            tolerance=float(tolerance if tolerance is not None else config.get('factorization.tolerance', 1e-8)),
            stop_tolerance=float(config.get('factorization.stop_tolerance', 1e-10)),
            max_iterations=int(config.get('factorization.max_iterations', 200)),
            stall_window=int(config.get('factorization.stall_window', 10)),
            degeneracy_threshold=float(config.get('factorization.degeneracy_threshold', 1e-9)),
            max_trim_fraction=float(config.get('factorization.max_trim_fraction', 0.01)),
            origin_floor=float(config.get('series.origin_floor', ORIGIN_FLOOR))
        )


class FactorizationResiduals(NamedTuple):
    scalar: float
    matrix: float
    relation: float
    trimmed_fraction: float


@dataclass
class FactorizationResult:
    """
    Outer factors of a Schur row together with their certificates
    """
    a: TaylorSeries
    A: MatrixTaylorSeries
    residual_scalar: float
    residual_matrix: float
    relation_residual: float
    iterations: int
    outer_gap_a: float
    outer_gap_A: float
    grid_size: int
    residual_history: List[float] = field(default_factory=list)
    trimmed_fraction: float = 0.0

    @property
    def degree(self) -> int:
        return self.A.degree

    def to_dict(self) -> Dict[str, Any]:
        return {
            'a': self.a.to_dict(),
            'A': self.A.to_dict(),
            'residual_scalar': self.residual_scalar,
            'residual_matrix': self.residual_matrix,
            'relation_residual': self.relation_residual,
            'iterations': self.iterations,
            'outer_gap_a': _finite_or_string(self.outer_gap_a),
            'outer_gap_A': _finite_or_string(self.outer_gap_A),
            'grid_size': self.grid_size,
            'degree': self.degree,
            'residual_history': list(self.residual_history),
            'trimmed_fraction': self.trimmed_fraction
        }


def _finite_or_string(value: float) -> Union[float, str]:
    return value if np.isfinite(value) else 'inf'


def scalar_defect_grid(B: 'SchurRow', M: int) -> BoundaryGrid:
    """Samples of 1 - B B* on the M-point boundary grid"""
    samples = boundary_from_taylor(B.row, M).samples[:, 0, :]
    return BoundaryGrid(1.0 - np.sum(np.abs(samples) ** 2, axis=1))


def matrix_defect_grid(B: 'SchurRow', M: int) -> BoundaryGrid:
    """Samples of I - B* B on the M-point boundary grid"""
    samples = boundary_from_taylor(B.row, M).samples
    gram = np.conj(np.transpose(samples, (0, 2, 1))) @ samples
    return BoundaryGrid(np.eye(B.n)[None, :, :] - gram)


def _trim_mask(values: np.ndarray, threshold: float, max_trim_fraction: float, what: str) -> Tuple[np.ndarray, float]:
    trimmed = values < threshold
    fraction = float(np.mean(trimmed))
    if fraction > max_trim_fraction:
        raise HypothesisError(
            f"{what} vanishes (numerically) on {fraction:.2%} of the circle; "
            f"log-integrability fails"
        )
    if fraction > 0:
        logger.info(f"Trimmed {fraction:.4%} of grid points where {what} < {threshold:.1e}")
    return trimmed, fraction


def _laurent_coefficients(samples: np.ndarray) -> np.ndarray:
    """Modes z^-L..z^L (L = M/2 - 1) of grid samples, lowest power first"""
    M = samples.shape[0]
    L = M // 2 - 1
    modes = np.fft.fft(samples, axis=0) / M
    return np.concatenate([modes[M - L:], modes[:L + 1]], axis=0)


def _laurent_samples(coeffs: np.ndarray, M: int) -> np.ndarray:
    L = (coeffs.shape[0] - 1) // 2
    padded = np.zeros((M,) + coeffs.shape[1:], dtype=complex)
    padded[:L + 1] = coeffs[L:]
    if L:
        padded[M - L:] = coeffs[:L]
    return M * np.fft.ifft(padded, axis=0)


def _laurent_value(coeffs: np.ndarray, zeta: complex) -> np.ndarray:
    L = (coeffs.shape[0] - 1) // 2
    return npoly.polyval(zeta, coeffs) * zeta ** -L


def _divide_root(coeffs: np.ndarray, zeta: complex, order: int) -> Tuple[np.ndarray, float]:
    """
    Divide z^L p(z) by (z - zeta)^order, coefficientwise along the trailing axes

    Returns:
        (quotient coefficients lowest power first, largest remainder modulus)
    """
    flat = coeffs.reshape(coeffs.shape[0], -1)
    divisor = np.array([1.0, -zeta])
    columns, remainder = [], 0.0
    for column in flat.T:
        quotient = column[::-1]
        for _ in range(order):
            quotient, rest = signal.deconvolve(quotient, divisor)
            remainder = max(remainder, float(np.max(np.abs(rest))))
        columns.append(quotient[::-1])
    return np.stack(columns, axis=1).reshape((-1,) + coeffs.shape[1:]), remainder


def boundary_zeros(w: BoundaryGrid, threshold: float = 1e-9) -> List[complex]:
    """
    Points of the circle where a nonnegative weight touches zero

    Discrete local minima of the samples are refined by root-finding on the
    derivative of the trigonometric polynomial the samples determine, and kept
    when the weight there is below threshold.

    Args:
        w: Samples of a nonnegative weight
        threshold: Largest weight value that counts as a zero

    Returns:
        Distinct boundary zeros, in order of angle
    """
    values = np.real(w.samples)
    M = values.size
    coeffs = _laurent_coefficients(values.astype(complex))
    powers = np.arange(coeffs.size) - (coeffs.size - 1) // 2

    def value(theta: float) -> float:
        return float(np.real(np.sum(coeffs * np.exp(1j * powers * theta))))

    def slope(theta: float) -> float:
        return float(np.real(np.sum(1j * powers * coeffs * np.exp(1j * powers * theta))))

    step = 2 * np.pi / M
    scale = max(float(np.max(values)), threshold)
    minima = (values <= np.roll(values, 1)) & (values <= np.roll(values, -1)) & (values < 1e-2 * scale)
    zeros: List[complex] = []
    for m in np.nonzero(minima)[0]:
        left, right = (m - 1) * step, (m + 1) * step
        theta = m * step
        if slope(left) < 0 < slope(right):
            theta = optimize.brentq(slope, left, right, xtol=1e-15)
        if value(theta) > threshold:
            continue
        zeta = complex(np.exp(1j * theta))
        if all(abs(zeta - z) > step for z in zeros):
            zeros.append(zeta)
    if zeros:
        logger.info(f"Weight vanishes on the circle at angles {[round(float(np.angle(z)), 12) for z in zeros]}")
    return zeros


def _deflate_scalar(coeffs: np.ndarray, zeros: Sequence[complex]) -> np.ndarray:
    # w = |1 - conj(zeta) z|^2 w~ and |1 - conj(zeta) z|^2 = -conj(zeta) (z - zeta)^2 / z
    for zeta in zeros:
        coeffs, remainder = _divide_root(coeffs, zeta, 2)
        coeffs = coeffs / -np.conj(zeta)
        logger.debug(f"Deflated scalar weight at {zeta:.6f}, remainder {remainder:.3e}")
    return coeffs


def _deflate_matrix(coeffs: np.ndarray, zeros: Sequence[complex]) -> Tuple[np.ndarray, MatrixTaylorSeries]:
    """
    Remove boundary zeros from a Hermitian Laurent weight S.

    With F(z) = I - conj(zeta) z v v*, S(zeta) v = 0, the deflated weight is
    F^-* S F^-1 and the outer factor of S is (outer factor of F^-* S F^-1) F.

    Returns:
        (deflated Laurent coefficients, product H of the factors F)
    """
    n = coeffs.shape[1]
    H = MatrixTaylorSeries.identity(n)
    for zeta in zeros:
        value = _laurent_value(coeffs, zeta)
        eigenvalues, vectors = np.linalg.eigh(0.5 * (value + value.conj().T))
        v = vectors[:, 0]
        projector = np.eye(n) - np.outer(v, v.conj())

        # S v / (1 - conj(zeta) z), powers -L..L-1, padded to -L..L
        Sv = coeffs @ v
        x, remainder = _divide_root(Sv, zeta, 1)
        x = np.concatenate([x, np.zeros((1, n))], axis=0) / -np.conj(zeta)

        # v* S v / |1 - conj(zeta) z|^2, powers -(L-1)..L-1, padded to -L..L
        s, remainder_v = _divide_root(Sv @ v.conj(), zeta, 2)
        s = np.concatenate([[0], s / -np.conj(zeta), [0]])

        cross = np.einsum('ij,kj,l->kil', projector, x, v.conj())
        coeffs = (projector @ coeffs @ projector
                  + cross
                  + np.conj(np.transpose(cross[::-1], (0, 2, 1)))
                  + s[:, None, None] * np.outer(v, v.conj())[None])

        factor = np.stack([np.eye(n), -np.conj(zeta) * np.outer(v, v.conj())])
        H = multiply(MatrixTaylorSeries(factor), H)
        logger.debug(f"Deflated matrix weight at {zeta:.6f}: kernel eigenvalue {eigenvalues[0]:.3e}, "
                     f"remainders {remainder:.3e}, {remainder_v:.3e}")
    return coeffs, H


def normalize_gauge(A: Union[TaylorSeries, MatrixTaylorSeries]) -> Union[TaylorSeries, MatrixTaylorSeries]:
    """
    Fix the unitary freedom so that the value at the origin is positive (definite)

    Args:
        A: Scalar or square matrix series

    Returns:
        Series with a(0) > 0, or A(0) Hermitian positive definite
    """
    if isinstance(A, TaylorSeries):
        a0 = A.coeffs[0]
        if a0 == 0:
            return A
        return A * (np.conj(a0) / abs(a0))
    unitary, _ = linalg.polar(A.at_origin())
    return A.left_multiply(unitary.conj().T)


def scalar_outer_factor(w: BoundaryGrid, degree: Optional[int] = None,
                        settings: Optional[FactorizationSettings] = None,
                        zeros: Optional[Sequence[complex]] = None) -> TaylorSeries:
    """
    Outer function a with |a|^2 = w on the circle and a(0) > 0

    Args:
        w: Nonnegative samples of the weight
        degree: Truncation degree (default M/4)
        settings: Trimming and tolerance settings
        zeros: Boundary zeros of w (located with boundary_zeros when None)

    Returns:
        Truncated outer factor
    """
    settings = settings or FactorizationSettings()
    M = w.grid_size
    degree = M // 4 if degree is None else degree

    values = np.real(w.samples)
    if np.max(np.abs(np.imag(w.samples))) > 1e-10 * max(1.0, np.max(np.abs(values))):
        raise HypothesisError("weight is not real on the circle")

    trimmed, _ = _trim_mask(values, settings.degeneracy_threshold, settings.max_trim_fraction, '1 - BB*')
    if zeros is None:
        zeros = boundary_zeros(w, settings.degeneracy_threshold)
    deflated = values
    if zeros:
        deflated = np.real(_laurent_samples(_deflate_scalar(_laurent_coefficients(values.astype(complex)), zeros), M))
    log_modulus = 0.5 * np.log(np.maximum(deflated, settings.degeneracy_threshold))

    cepstrum = np.fft.fft(log_modulus) / M
    analytic = np.zeros(M, dtype=complex)
    analytic[0] = cepstrum[0]
    analytic[1:M // 2] = 2.0 * cepstrum[1:M // 2]
    boundary = np.exp(M * np.fft.ifft(analytic))

    a = taylor_from_boundary(BoundaryGrid(boundary), degree, check=False)
    for zeta in zeros:
        a = multiply(a, TaylorSeries(np.array([1.0, -np.conj(zeta)])), degree)
    a = normalize_gauge(a)

    if zeros:
        trimmed = np.zeros(M, dtype=bool)
    fitted = np.abs(boundary_from_taylor(a, M).samples) ** 2
    residual = float(np.max(np.abs(fitted - values)[~trimmed])) if np.any(~trimmed) else 0.0
    logger.debug(f"Scalar outer factor: degree {degree}, grid {M}, residual {residual:.3e}")
    if residual > settings.tolerance:
        raise ConvergenceError(
            f"scalar outer factor residual {residual:.3e} exceeds {settings.tolerance:.1e}",
            [residual]
        )
    return a


def _spectral_norms(values: np.ndarray) -> np.ndarray:
    return np.linalg.norm(values, ord=2, axis=(1, 2))


def wilson_factor(W: BoundaryGrid, degree: Optional[int] = None,
                  settings: Optional[FactorizationSettings] = None,
                  zeros: Sequence[complex] = ()) -> Tuple[MatrixTaylorSeries, int, List[float]]:
    """
    Newton iteration for the outer factor of a matrix weight

    Args:
        W: Hermitian positive semidefinite samples, shape (M, n, n)
        degree: Truncation degree (default M/4)
        settings: Stopping and trimming settings
        zeros: Boundary zeros of det W, divided out before iterating

    Returns:
        (A, iterations, residual history of the deflated weight) for the best iterate
    """
    settings = settings or FactorizationSettings()
    weights = W.samples
    M, n, _ = weights.shape
    degree = M // 4 if degree is None else degree
    identity = np.eye(n)

    if np.max(np.abs(weights - np.conj(np.transpose(weights, (0, 2, 1))))) > 1e-10:
        raise HypothesisError("matrix weight is not Hermitian on the circle")
    eigenvalues = np.linalg.eigvalsh(weights)
    if eigenvalues.min() < -1e-10:
        raise HypothesisError(f"matrix weight is not positive semidefinite (min eigenvalue {eigenvalues.min():.3e})")
    _trim_mask(np.prod(np.clip(eigenvalues, 0, None), axis=1), settings.degeneracy_threshold,
               settings.max_trim_fraction, 'det(I - B*B)')

    H = MatrixTaylorSeries.identity(n)
    if zeros:
        coeffs, H = _deflate_matrix(_laurent_coefficients(weights), zeros)
        weights = _laurent_samples(coeffs, M)
        weights = 0.5 * (weights + np.conj(np.transpose(weights, (0, 2, 1))))

    mean_weight = np.mean(weights, axis=0)
    seed = linalg.cholesky(0.5 * (mean_weight + mean_weight.conj().T), lower=True).conj().T
    A = MatrixTaylorSeries(seed[None, :, :]).resized(degree)

    def residual_of(series: MatrixTaylorSeries) -> Tuple[float, np.ndarray]:
        samples = boundary_from_taylor(series, M).samples
        gram = np.conj(np.transpose(samples, (0, 2, 1))) @ samples
        return float(np.max(_spectral_norms(gram - weights))), samples

    residual, samples = residual_of(A)
    history = [residual]
    best, best_A, best_iteration = residual, A, 0
    since_best = 0

    for iteration in range(1, settings.max_iterations + 1):
        if residual < settings.stop_tolerance:
            break
        inverse = np.linalg.inv(samples)
        inner = np.conj(np.transpose(inverse, (0, 2, 1))) @ weights @ inverse + identity
        modes = np.fft.fft(inner, axis=0) / M
        plus = np.zeros((degree + 1, n, n), dtype=complex)
        plus[0] = 0.5 * modes[0]
        plus[1:] = modes[1:degree + 1]

        A = normalize_gauge(multiply(MatrixTaylorSeries(plus), A, degree))
        residual, samples = residual_of(A)
        history.append(residual)
        logger.debug(f"Wilson iteration {iteration}: residual {residual:.3e}")

        if residual < best:
            best, best_A, best_iteration = residual, A, iteration
            since_best = 0
        else:
            since_best += 1
            if since_best >= settings.stall_window:
                logger.info(f"Wilson iteration stalled after {iteration} steps at residual {best:.3e}")
                break

    if best > settings.tolerance:
        raise ConvergenceError(
            f"matrix outer factor did not reach {settings.tolerance:.1e} (best residual {best:.3e})",
            history
        )
    logger.info(f"Matrix outer factor converged: {best_iteration} iterations, residual {best:.3e}")
    if zeros:
        best_A = normalize_gauge(multiply(best_A, H, degree))
    return best_A, best_iteration, history


def matrix_outer_factor(W: BoundaryGrid, degree: Optional[int] = None,
                        settings: Optional[FactorizationSettings] = None,
                        zeros: Sequence[complex] = ()) -> MatrixTaylorSeries:
    """Outer A with A*A = W on the circle and A(0) positive definite"""
    A, _, _ = wilson_factor(W, degree, settings, zeros)
    return A


def outerness_certificate(A: Union[TaylorSeries, MatrixTaylorSeries], M: int,
                          radius: Optional[float] = None, floor: float = ORIGIN_FLOOR) -> float:
    """
    Gap |log|det A(0)| - mean log|det A|| on a circle inside the disk.

    A true outer determinant has zero gap. The mean is taken on radius
    1 - 32/M because a boundary zero spoils the discrete mean on |z| = 1.

    Args:
        A: Scalar or square matrix series
        M: Grid size
        radius: Circle radius override
        floor: |det A(0)| at or below this certifies non-outerness

    Returns:
        Nonnegative gap; inf when det A(0) vanishes
    """
    if isinstance(A, TaylorSeries):
        det = A
    else:
        _, det = adjugate_det(A)
    value_at_origin = abs(det.coeffs[0])
    if value_at_origin <= floor:
        return float('inf')

    radius = max(0.5, 1.0 - 32.0 / M) if radius is None else radius
    moduli = np.abs(boundary_from_taylor(det, M, radius=radius).samples)
    alive = moduli > floor
    if not np.all(alive):
        logger.warning(f"det vanishes at {np.sum(~alive)} of {M} points on |z| = {radius:.4f}")
    return float(abs(np.log(value_at_origin) - np.mean(np.log(moduli[alive]))))


def factorization_residuals(B: 'SchurRow', a: TaylorSeries, A: MatrixTaylorSeries, M: int,
                            floor: float = 1e-12) -> FactorizationResiduals:
    """
    Sup-norm residuals of |a|^2 = 1 - BB*, A*A + B*B = I and of the
    relation B (A*A)^-1 B* = BB*/|a|^2, the last one relative and taken where |a|^2 > floor.
    """
    B_samples = boundary_from_taylor(B.row, M).samples
    a_samples = boundary_from_taylor(a, M).samples
    A_samples = boundary_from_taylor(A, M).samples

    row = B_samples[:, 0, :]
    bb = np.sum(np.abs(row) ** 2, axis=1)
    a_sq = np.abs(a_samples) ** 2
    residual_scalar = float(np.max(np.abs(a_sq - (1.0 - bb))))

    AhA = np.conj(np.transpose(A_samples, (0, 2, 1))) @ A_samples
    BhB = np.conj(np.transpose(B_samples, (0, 2, 1))) @ B_samples
    residual_matrix = float(np.max(_spectral_norms(AhA + BhB - np.eye(B.n)[None, :, :])))

    alive = a_sq > floor
    trimmed_fraction = float(np.mean(~alive))
    relation = 0.0
    if np.any(alive):
        solved = np.linalg.solve(AhA[alive], np.conj(row[alive])[:, :, None])[:, :, 0]
        lhs = np.real(np.sum(row[alive] * solved, axis=1))
        rhs = bb[alive] / a_sq[alive]
        relation = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))))

    return FactorizationResiduals(residual_scalar, residual_matrix, relation, trimmed_fraction)


def certify(B: 'SchurRow', a: TaylorSeries, A: MatrixTaylorSeries, M: int,
            iterations: int = 0, history: Optional[List[float]] = None,
            floor: float = ORIGIN_FLOOR) -> FactorizationResult:
    """Residuals and outerness gaps for a given (a, A)"""
    residuals = factorization_residuals(B, a, A, M)
    return FactorizationResult(
        a=a,
        A=A,
        residual_scalar=residuals.scalar,
        residual_matrix=residuals.matrix,
        relation_residual=residuals.relation,
        iterations=iterations,
        outer_gap_a=outerness_certificate(a, M, floor=floor),
        outer_gap_A=outerness_certificate(A, M, floor=floor),
        grid_size=M,
        residual_history=list(history or []),
        trimmed_fraction=residuals.trimmed_fraction
    )


def factorize(B: 'SchurRow', degree: int = DEFAULT_DEGREE, grid_size: Optional[int] = None,
              settings: Optional[FactorizationSettings] = None) -> FactorizationResult:
    """
    Numerically factor 1 - BB* = |a|^2 and I - B*B = A*A

    Args:
        B: Schur row
        degree: Truncation degree N of a and A
        grid_size: Grid size M (default: B.grid_size)
        settings: Factorization settings

    Returns:
        FactorizationResult with residuals and outerness gaps
    """
    settings = settings or FactorizationSettings()
    M = grid_size or B.grid_size
    if M < 2 * max(degree, B.degree) + 2:
        raise HypothesisError(f"grid size {M} too small for degree {max(degree, B.degree)}")

    logger.info(f"Factorizing Schur row with n={B.n}, degree {degree}, grid {M}")
    w = scalar_defect_grid(B, M)
    _trim_mask(np.real(w.samples), settings.degeneracy_threshold, settings.max_trim_fraction, '1 - BB*')
    # det(I - B*B) = 1 - BB*, so both factors share the boundary zeros
    zeros = boundary_zeros(w, settings.degeneracy_threshold)
    a = scalar_outer_factor(w, degree, settings, zeros)
    A, iterations, history = wilson_factor(matrix_defect_grid(B, M), degree, settings, zeros)
    return certify(B, a, A, M, iterations, history, settings.origin_floor)
