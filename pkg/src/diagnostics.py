"""
Numerical diagnostics: the four criteria for the bounded analytic functions
to lie in H(B), the H(B) = H^2 test, and two independent norm oracles
(Gram projection onto kernels and inverse of the Toeplitz defect operator).
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from .analytic_core import (
    MatrixTaylorSeries,
    TaylorSeries,
    boundary_from_taylor,
    evaluate,
    evaluate_on_circle,
    geometric_decay_ratio,
    multiply,
    reciprocal,
)
from .errors import HypothesisError, OracleError
from .hb_space import SchurRow, SymbolPhi, phi_coefficients

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticSettings:
    exponent_margin: float = 0.1
    decay_margin: float = 0.02
    hardy_margin: float = 1e-6
    zero_level: float = 1e-10
    grid_size: int = 4096

    @classmethod
    def from_config(cls, config) -> 'DiagnosticSettings':
        return cls(
            exponent_margin=float(config.get('diagnostics.exponent_margin', 0.1)),
            decay_margin=float(config.get('diagnostics.decay_margin', 0.02)),
            hardy_margin=float(config.get('diagnostics.hardy_margin', 1e-6))
        )


@dataclass(frozen=True)
class OracleSettings:
    """Tunables of the Gram and Toeplitz defect oracles"""
    tolerance: float = 0.01
    pinv_cutoff: float = 1e-10
    gram_condition_cap: float = 1e12
    doubling_cap: int = 2048
    relative_change: float = 0.005

    @classmethod
    def from_config(cls, config, tolerance: Optional[float] = None) -> 'OracleSettings':
        return cls(
            tolerance=float(tolerance if tolerance is not None else config.get('oracle.tolerance', 0.01)),
            pinv_cutoff=float(config.get('oracle.pinv_cutoff', 1e-10)),
            gram_condition_cap=float(config.get('oracle.gram_condition_cap', 1e12)),
            doubling_cap=int(config.get('oracle.doubling_cap', 2048)),
            relative_change=float(config.get('oracle.relative_change', 0.005))
        )


@dataclass
class Criterion:
    """Outcome of one numerical test; holds=None means inconclusive"""
    holds: Optional[bool]
    value: float
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass
class InclusionReport:
    crit_supnorm: Criterion
    crit_phi_h2: Criterion
    crit_b_over_a_h2: Criterion
    crit_inv_l1: Criterion
    verdict: str
    inconclusive: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class HardyReport:
    sup_B: Criterion
    phi_bounded: Criterion
    b_over_a_bounded: Criterion
    verdict: str
    inconclusive: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _power_law_exponent(magnitudes: np.ndarray) -> float:
    """p in |c_j| ~ j^-p, fitted over the last half of the nonzero coefficients"""
    j = np.arange(magnitudes.size)
    half = (j >= max(1, magnitudes.size // 2)) & (magnitudes > 0)
    if np.sum(half) < 4:
        return float('inf')
    slope = np.polyfit(np.log(j[half]), np.log(magnitudes[half]), 1)[0]
    return float(-slope)


def classify_square_summable(magnitudes: Sequence[float], settings: DiagnosticSettings) -> Criterion:
    """Decide sum |c_j|^2 < inf from a geometric fit, falling back to a power-law fit"""
    mags = np.abs(np.asarray(magnitudes, dtype=float))
    ratio = geometric_decay_ratio(mags)
    partial_sum = float(np.sum(mags ** 2))
    tail_energy = float(np.sum(mags[mags.size // 2 + 1:] ** 2))
    # coefficients already at round-off level beyond N/2
    if tail_energy <= 1e-12 * max(partial_sum, 1.0):
        return Criterion(True, partial_sum, {'decay_ratio': ratio, 'tail_energy': tail_energy})
    if ratio < 1.0 - settings.decay_margin:
        return Criterion(True, partial_sum, {'decay_ratio': ratio})

    p = _power_law_exponent(mags)
    detail = {'decay_ratio': ratio, 'power_exponent': p}
    if 2 * p > 1 + settings.exponent_margin:
        return Criterion(True, partial_sum, detail)
    if 2 * p < 1 - settings.exponent_margin:
        return Criterion(False, partial_sum, detail)
    return Criterion(None, partial_sum, detail)


def _supnorm_criterion(phi: SymbolPhi) -> Criterion:
    norms = 1.0 + np.cumsum(phi.row_norms_sq())
    N = phi.degree
    window = np.arange(N + 1) >= N - max(N // 4, 3)
    slope = float(np.polyfit(np.arange(N + 1)[window], norms[window], 1)[0]) if N >= 4 else 0.0
    growth = slope * N
    top = float(norms[-1])
    detail = {'growth': growth, 'last_norm_sq': top}
    if growth <= 1e-6 * top:
        return Criterion(True, top, detail)
    if growth >= 1e-2 * top:
        return Criterion(False, top, detail)
    return Criterion(None, top, detail)


def _boundary_defect(B: SchurRow, theta) -> np.ndarray:
    values = np.stack([evaluate_on_circle(c, theta) for c in B.components])
    return 1.0 - np.sum(np.abs(values) ** 2, axis=0)


def _inverse_defect_criterion(B: SchurRow, settings: DiagnosticSettings) -> Criterion:
    M = max(settings.grid_size, B.grid_size)
    theta = 2 * np.pi * np.arange(M) / M
    defect = _boundary_defect(B, theta)

    alive = defect > settings.zero_level
    mean_inverse = float(np.mean(1.0 / defect[alive])) if np.any(alive) else float('inf')

    step = 2 * np.pi / M
    left, right = np.roll(defect, 1), np.roll(defect, -1)
    candidates = np.nonzero((defect <= left) & (defect <= right) & (defect < 1e-2))[0]

    exponents: List[float] = []
    zeros: List[float] = []
    for k in candidates:
        result = optimize.minimize_scalar(
            lambda t: float(_boundary_defect(B, t)),
            bounds=(theta[k] - step, theta[k] + step),
            method='bounded',
            options={'xatol': 1e-12}
        )
        if result.fun > settings.zero_level:
            continue
        offsets = np.logspace(-4, -1.5, 12)
        samples = 0.5 * (_boundary_defect(B, result.x + offsets) + _boundary_defect(B, result.x - offsets))
        slope = np.polyfit(np.log(offsets), np.log(np.maximum(samples, 1e-300)), 1)[0]
        exponents.append(float(slope))
        zeros.append(float(result.x % (2 * np.pi)))

    detail = {'zero_angles': zeros, 'zero_exponents': exponents}
    if not exponents:
        return Criterion(True, mean_inverse, detail)
    worst = max(exponents)
    if worst >= 1 + settings.exponent_margin:
        return Criterion(False, mean_inverse, detail)
    if worst <= 1 - settings.exponent_margin:
        return Criterion(True, mean_inverse, detail)
    return Criterion(None, mean_inverse, detail)


def _b_over_a_magnitudes(B: SchurRow, a: TaylorSeries, degree: int) -> np.ndarray:
    inverse_a = reciprocal(a, degree)
    quotient = multiply(inverse_a, B.row.resized(degree), degree)
    return np.linalg.norm(quotient.coeffs[:, 0, :], axis=1)


def _verdict(criteria: Sequence[Criterion]) -> Tuple[str, bool]:
    decided = [c.holds for c in criteria if c.holds is not None]
    inconclusive = len(decided) < len(criteria)
    if not decided:
        return 'inconclusive', True
    if all(decided):
        return 'contains_Hinf', inconclusive
    if not any(decided):
        return 'not_contains', inconclusive
    return 'inconsistent', inconclusive


def inclusion_report(B: SchurRow, a: TaylorSeries, A: MatrixTaylorSeries,
                     phi: Optional[SymbolPhi] = None,
                     settings: Optional[DiagnosticSettings] = None) -> InclusionReport:
    """
    Test the four equivalent criteria for the bounded analytic functions to lie in H(B):
    bounded monomial norms, phi in H^2, B/a in H^2, 1/(1 - BB*) integrable.

    Args:
        B: Schur row
        a: Outer factor of 1 - BB*
        A: Outer factor of I - B*B
        phi: Coefficients of B A^-1 (computed from A when omitted)
        settings: Decision thresholds

    Returns:
        InclusionReport; verdict 'inconsistent' when the criteria disagree,
        'inconclusive' when none of them decides
    """
    settings = settings or DiagnosticSettings()
    phi = phi if phi is not None else phi_coefficients(B, A)

    report_criteria = (
        _supnorm_criterion(phi),
        classify_square_summable(np.linalg.norm(phi.c, axis=1), settings),
        classify_square_summable(_b_over_a_magnitudes(B, a, phi.degree), settings),
        _inverse_defect_criterion(B, settings),
    )
    verdict, inconclusive = _verdict(report_criteria)
    if verdict == 'inconsistent':
        logger.error(f"Inclusion criteria disagree: {[c.holds for c in report_criteria]}")
    elif inconclusive:
        logger.warning("Some inclusion criteria were inconclusive")
    return InclusionReport(*report_criteria, verdict=verdict, inconclusive=inconclusive)


def _sup_norm_refined(B: SchurRow, M: int) -> float:
    theta = 2 * np.pi * np.arange(M) / M
    defect = _boundary_defect(B, theta)
    k = int(np.argmin(defect))
    step = 2 * np.pi / M
    result = optimize.minimize_scalar(
        lambda t: float(_boundary_defect(B, t)),
        bounds=(theta[k] - step, theta[k] + step),
        method='bounded',
        options={'xatol': 1e-12}
    )
    return float(np.sqrt(max(0.0, 1.0 - min(result.fun, defect[k]))))


def _boundedness(magnitudes: np.ndarray, samples_sup: float, settings: DiagnosticSettings) -> Criterion:
    ratio = geometric_decay_ratio(magnitudes)
    tail = float(np.sum(magnitudes[magnitudes.size // 2 + 1:]))
    detail = {'decay_ratio': ratio, 'tail': tail}
    if tail <= settings.hardy_margin * (1 + samples_sup):
        return Criterion(True, samples_sup, detail)
    if ratio >= 1 - settings.decay_margin:
        return Criterion(False, samples_sup, detail)
    return Criterion(None, samples_sup, detail)


def equals_hardy_report(B: SchurRow, a: TaylorSeries, A: MatrixTaylorSeries,
                        phi: Optional[SymbolPhi] = None,
                        settings: Optional[DiagnosticSettings] = None) -> HardyReport:
    """Decide H(B) = H^2 from sup |B| < 1, cross-checked by boundedness of phi and B/a"""
    settings = settings or DiagnosticSettings()
    phi = phi if phi is not None else phi_coefficients(B, A)
    M = max(settings.grid_size, B.grid_size, 2 * phi.degree + 2)

    sup_B = _sup_norm_refined(B, M)
    margin = 1.0 - sup_B
    strict = Criterion(margin > settings.hardy_margin, sup_B, {'margin': margin})

    phi_sup = float(np.max(np.linalg.norm(boundary_from_taylor(phi.row, M).samples[:, 0, :], axis=1)))
    phi_bounded = _boundedness(np.linalg.norm(phi.c, axis=1), phi_sup, settings)

    quotient_mags = _b_over_a_magnitudes(B, a, phi.degree)
    quotient_sup = float(sup_B / max(np.min(np.abs(boundary_from_taylor(a, M).samples)), 1e-300))
    quotient_bounded = _boundedness(quotient_mags, quotient_sup, settings)

    cross = [c.holds for c in (phi_bounded, quotient_bounded)]
    inconclusive = any(h is None for h in cross) or any(h is not None and h != strict.holds for h in cross)
    verdict = 'equal' if strict.holds else 'not_equal'
    if inconclusive:
        logger.warning(f"H(B) = H^2 cross-checks disagree or are inconclusive: {cross}")
    return HardyReport(strict, phi_bounded, quotient_bounded, verdict, inconclusive)


@dataclass
class GramOracleResult:
    value: float
    min_eigenvalue: float
    condition: float
    n_points: int


def default_lattice(level: int) -> np.ndarray:
    """
    Nested point sets: the origin plus rings at radii 0.9 (1 - 2^-k), k = 1..level,
    with 2^(level+1) equispaced angles per ring
    """
    points = [0j]
    count = 2 ** (level + 1)
    angles = np.exp(2j * np.pi * np.arange(count) / count)
    for k in range(1, level + 1):
        points.extend(0.9 * (1 - 2.0 ** -k) * angles)
    return np.array(points)


def gram_oracle_norm(f: TaylorSeries, B: SchurRow, points: Optional[Sequence[complex]] = None,
                     level: int = 2, settings: Optional[OracleSettings] = None) -> GramOracleResult:
    """
    Squared norm of the projection of f onto span{K_lam : lam in points},
    a lower bound for ||f||^2 in H(B) that increases as the point set grows

    Args:
        f: Function in H(B)
        B: Schur row
        points: Distinct points of the open disk (default: lattice of the given level)
        level: Lattice level when points is omitted
        settings: Oracle settings; gram_condition_cap bounds the accepted condition number

    Returns:
        GramOracleResult
    """
    settings = settings or OracleSettings()
    points = default_lattice(level) if points is None else np.asarray(points, dtype=complex)
    if np.any(np.abs(points) >= 1):
        raise HypothesisError("Gram points must lie in the open unit disk")
    if np.unique(np.round(points, 14)).size != points.size:
        raise HypothesisError("Gram points must be distinct")

    B_values = np.stack([B.at(p) for p in points])
    gram = (1.0 - B_values @ B_values.conj().T) / (1.0 - np.outer(points, np.conj(points)))
    gram = 0.5 * (gram + gram.conj().T)
    eigenvalues, vectors = linalg.eigh(gram)

    smallest = float(eigenvalues.min())
    condition = float(eigenvalues.max() / smallest) if smallest > 0 else float('inf')
    if smallest <= 0 or condition > settings.gram_condition_cap:
        raise OracleError(f"Gram matrix ill-conditioned (condition {condition:.3e}); point set refused")

    values = np.array([evaluate(f, p) for p in points])
    projected = vectors.conj().T @ values
    norm_sq = float(np.sum(np.abs(projected) ** 2 / eigenvalues))
    logger.debug(f"Gram oracle on {points.size} points: {norm_sq:.10g} (condition {condition:.2e})")
    return GramOracleResult(norm_sq, smallest, condition, int(points.size))


@dataclass
class DefectOracleResult:
    value: float
    truncation: int
    history: List[Tuple[int, float, int]]


def _defect_value(f: TaylorSeries, B: SchurRow, N: int, cutoff: float) -> Tuple[float, int]:
    blocks = []
    for component in B.components:
        column = np.zeros(N, dtype=complex)
        keep = min(N, component.degree + 1)
        column[:keep] = component.coeffs[:keep]
        blocks.append(linalg.toeplitz(column, np.r_[column[0], np.zeros(N - 1)]))
    T = np.hstack(blocks)
    defect = np.eye(N) - T @ T.conj().T
    eigenvalues, vectors = linalg.eigh(defect)

    kept = eigenvalues > cutoff * eigenvalues.max()
    f_vec = np.zeros(N, dtype=complex)
    f_vec[:f.degree + 1] = f.coeffs
    projected = vectors.conj().T @ f_vec
    value = float(np.sum(np.abs(projected[kept]) ** 2 / eigenvalues[kept]))
    return value, int(np.sum(~kept))


def toeplitz_defect_oracle(f: TaylorSeries, B: SchurRow, N: Optional[int] = None,
                           settings: Optional[OracleSettings] = None) -> DefectOracleResult:
    """
    ||f||^2 in H(B) as <D^+ f, f> with D the N x N compression of I - T_B T_B*,
    doubling N until successive values agree to settings.relative_change

    Args:
        f: Polynomial
        B: Schur row
        N: Starting truncation (default 2 (deg f + 1), at least 16)
        settings: Oracle settings (doubling cap, convergence threshold, pseudo-inverse cutoff)

    Returns:
        DefectOracleResult
    """
    settings = settings or OracleSettings()
    if not f.is_polynomial:
        raise HypothesisError("the Toeplitz defect oracle needs a polynomial f")
    N = max(16, 2 * (f.degree + 1)) if N is None else max(N, f.degree + 1)

    history: List[Tuple[int, float, int]] = []
    previous = None
    while N <= settings.doubling_cap:
        value, dropped = _defect_value(f, B, N, settings.pinv_cutoff)
        history.append((N, value, dropped))
        logger.info(f"Defect oracle N={N}: {value:.10g} ({dropped} modes dropped)")
        if previous is not None and abs(value - previous) <= settings.relative_change * abs(value):
            return DefectOracleResult(value, N, history)
        previous = value
        N *= 2
    raise OracleError(f"defect oracle did not settle below N={settings.doubling_cap}", history)


@dataclass
class OracleCheck:
    """hb_norm against both oracles: Gram below it, the defect oracle within tolerance"""
    norm_sq: float
    gram: float
    defect: float
    defect_truncation: int
    relative_gap: float
    gram_below: bool
    agrees: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def oracle_cross_check(f: TaylorSeries, B: SchurRow, norm_sq: float, level: int = 2,
                       settings: Optional[OracleSettings] = None) -> OracleCheck:
    """
    Compare a series-formula norm with the Gram lower bound and the Toeplitz defect oracle

    Args:
        f: Polynomial
        B: Schur row
        norm_sq: ||f||^2 from hb_norm
        level: Lattice level of the Gram oracle
        settings: Oracle settings; tolerance is the accepted relative gap to the defect oracle

    Returns:
        OracleCheck
    """
    settings = settings or OracleSettings()
    gram = gram_oracle_norm(f, B, level=level, settings=settings)
    defect = toeplitz_defect_oracle(f, B, settings=settings)
    gap = abs(defect.value - norm_sq) / max(abs(norm_sq), 1e-300)
    check = OracleCheck(
        norm_sq=norm_sq,
        gram=gram.value,
        defect=defect.value,
        defect_truncation=defect.truncation,
        relative_gap=float(gap),
        gram_below=gram.value <= norm_sq * (1 + 1e-6),
        agrees=gap <= settings.tolerance
    )
    if not (check.gram_below and check.agrees):
        logger.warning(f"Oracles disagree with the series norm {norm_sq:.10g}: Gram {gram.value:.10g}, "
                       f"defect {defect.value:.10g} (relative gap {gap:.3e})")
    return check
