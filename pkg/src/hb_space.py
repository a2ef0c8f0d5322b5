"""
Norms in the de Branges-Rovnyak space H(B) of a finite Schur row.

For a polynomial (or geometrically decaying) f the H(B) norm is

    ||f||^2 = sum_k |f_k|^2 + sum_k || sum_j conj(c_j) f_{j+k} ||^2,

where c_j are the Taylor coefficients of phi = B A^-1. The second sum is the
H^2 norm of the mate f+ = -(sum_j conj(c_j) f_{j+k})_k.
"""
import logging
import multiprocessing
from dataclasses import dataclass
from functools import partial
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .analytic_core import (
    DEFAULT_DEGREE,
    DEFAULT_GRID_SIZE,
    ORIGIN_FLOOR,
    MatrixTaylorSeries,
    TaylorSeries,
    adjugate_det,
    boundary_from_taylor,
    evaluate,
    geometric_decay_ratio,
    multiply,
    reciprocal,
)
from .config import admissible_grid
from .errors import DomainError, HypothesisError, NotInvertibleError, PrecisionError, ShapeError

logger = logging.getLogger(__name__)


class ExtensionError(HypothesisError):
    """phi is not stored to the degree a request needs"""


@dataclass(frozen=True, eq=False)
class SchurRow:
    """
    Row B = (b_1, ..., b_n) of analytic functions with sup |B| <= 1 on the circle
    """
    components: Tuple[TaylorSeries, ...]
    boundary_sup: float
    independence_ok: bool
    szego_ok: bool
    trimmed_fraction: float
    grid_size: int

    @classmethod
    def from_components(cls, components: Sequence[TaylorSeries], grid_size: int = DEFAULT_GRID_SIZE,
                        degeneracy_threshold: float = 1e-9, max_trim_fraction: float = 0.01,
                        schur_tolerance: float = 1e-10) -> 'SchurRow':
        """
        Build a Schur row and measure its boundary behaviour

        Args:
            components: b_1..b_n
            grid_size: Grid size M (grown if too small for the degree)
            degeneracy_threshold: Points with 1 - BB* below this count as zeros
            max_trim_fraction: Largest zero fraction compatible with the Szego condition
            schur_tolerance: Slack allowed above sup |B| = 1

        Returns:
            SchurRow
        """
        if not components:
            raise ShapeError("a Schur row needs at least one component")
        degree = max(c.degree for c in components)
        padded = tuple(c.resized(degree) for c in components)
        M = max(grid_size, admissible_grid(degree))

        row = MatrixTaylorSeries.from_entries([list(padded)])
        samples = boundary_from_taylor(row, M).samples[:, 0, :]
        bb = np.sum(np.abs(samples) ** 2, axis=1)
        boundary_sup = float(np.sqrt(bb.max()))
        if boundary_sup > 1.0 + schur_tolerance:
            raise HypothesisError(f"not a Schur function: sup |B| on the circle is {boundary_sup:.6f}")

        coefficient_matrix = np.stack([c.coeffs for c in padded])
        scale = np.abs(coefficient_matrix).max()
        all_zero = scale == 0
        rank = 0 if all_zero else np.linalg.matrix_rank(coefficient_matrix, tol=1e-10 * scale)
        independence_ok = rank == len(padded)
        if not independence_ok and not all_zero:
            logger.warning(f"Schur row components are linearly dependent (rank {rank} of {len(padded)})")

        defect = 1.0 - bb
        trimmed = defect < degeneracy_threshold
        trimmed_fraction = float(np.mean(trimmed))
        szego_ok = bool(trimmed_fraction <= max_trim_fraction
                        and np.isfinite(np.mean(np.log(defect[~trimmed]))))

        return cls(padded, boundary_sup, bool(independence_ok), szego_ok, trimmed_fraction, M)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return self.components[0].degree

    @property
    def row(self) -> MatrixTaylorSeries:
        return MatrixTaylorSeries.from_entries([list(self.components)])

    def at(self, lam: complex) -> np.ndarray:
        """Value B(lam) as a length-n vector"""
        return np.array([evaluate(c, lam) for c in self.components])

    def value_at_origin(self) -> np.ndarray:
        return np.array([c.coeffs[0] for c in self.components])


@dataclass(frozen=True, eq=False)
class SymbolPhi:
    """
    Taylor coefficients c_j (rows of c, shape (N+1, n)) of phi = B A^-1
    """
    c: np.ndarray
    tail_ratio: float
    source: str
    verification_residual: float = 0.0
    warning: Optional[str] = None

    @classmethod
    def from_series(cls, phi_row: MatrixTaylorSeries, source: str,
                    verification_residual: float = 0.0, warning: Optional[str] = None) -> 'SymbolPhi':
        c = np.array(phi_row.coeffs[:, 0, :])
        ratio = geometric_decay_ratio(np.linalg.norm(c, axis=1))
        return cls(c, ratio, source, verification_residual, warning)

    @property
    def degree(self) -> int:
        return self.c.shape[0] - 1

    @property
    def n(self) -> int:
        return self.c.shape[1]

    @property
    def row(self) -> MatrixTaylorSeries:
        return MatrixTaylorSeries(self.c[:, None, :])

    def row_norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.c) ** 2, axis=1)

    def require_degree(self, degree: int):
        if degree > self.degree:
            raise ExtensionError(f"phi stored to degree {self.degree}; degree {degree} requested")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'c': [[[float(v.real), float(v.imag)] for v in row] for row in self.c],
            'tail_ratio': self.tail_ratio,
            'source': self.source,
            'verification_residual': self.verification_residual,
            'warning': self.warning
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SymbolPhi':
        raw = np.asarray(data['c'], dtype=float)
        return cls(raw[..., 0] + 1j * raw[..., 1], float(data['tail_ratio']), str(data['source']),
                   float(data.get('verification_residual', 0.0)), data.get('warning'))


@dataclass
class HBReport:
    """Result of an H(B) norm evaluation"""
    norm_sq: float
    hardy_norm_sq: float
    mate: MatrixTaylorSeries
    tail_budget: float
    truncation: Tuple[int, int]
    mate_residual: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'norm_sq': self.norm_sq,
            'hardy_norm_sq': self.hardy_norm_sq,
            'mate': self.mate.to_dict(),
            'mate_residual': self.mate_residual,
            'tail_budget': self.tail_budget,
            'truncation': list(self.truncation)
        }


def phi_coefficients(B: SchurRow, A: MatrixTaylorSeries, degree: Optional[int] = None,
                     tolerance: float = 1e-9, floor: float = ORIGIN_FLOOR) -> SymbolPhi:
    """
    Coefficients of phi = B adj(A) / det(A)

    Args:
        B: Schur row
        A: Outer factor of I - B*B
        degree: Truncation degree (default: max of the input degrees)
        tolerance: Residual ||phi A - B|| above which a warning is attached
        floor: Invertibility floor for det A(0)

    Returns:
        SymbolPhi with source 'computed-A'
    """
    N = max(B.degree, A.degree) if degree is None else degree
    A_N = A.resized(N)
    adj, det = adjugate_det(A_N, N)
    if abs(det.coeffs[0]) <= floor:
        raise NotInvertibleError(det.coeffs[0], floor)

    phi_row = multiply(reciprocal(det, N, floor), multiply(B.row.resized(N), adj, N), N)
    check = multiply(phi_row, A_N, N).coeffs - B.row.resized(N).coeffs
    residual = float(np.max(np.abs(check)))

    warning = None
    if residual > tolerance:
        warning = f"phi A - B residual {residual:.3e} exceeds {tolerance:.1e}"
        logger.warning(warning)
    return SymbolPhi.from_series(phi_row, 'computed-A', residual, warning)


def _mate_coefficients(f: TaylorSeries, phi: SymbolPhi) -> np.ndarray:
    """w_k = sum_j conj(c_j) f_{j+k}, k = 0..deg f, shape (deg f + 1, n)"""
    d = f.degree
    phi.require_degree(d)
    hankel = linalg.hankel(f.coeffs)
    return hankel @ np.conj(phi.c[:d + 1])


def _tail_budget(f: TaylorSeries, phi: SymbolPhi, w: np.ndarray) -> float:
    if f.is_polynomial:
        return 0.0
    d = f.degree
    r = f.decay_hint
    if r <= 1:
        raise HypothesisError(f"decay_hint {r} does not give geometric decay on the circle")

    j = np.arange(d + 1)
    quarter = j >= d - d // 4
    C = float(np.max(np.abs(f.coeffs[quarter]) * r ** j[quarter]))
    rho = max(phi.tail_ratio, 1.0)
    norms = np.linalg.norm(phi.c, axis=1)
    D = float(np.max(norms * rho ** -np.arange(phi.degree + 1)))
    q = rho / r
    if q >= 1:
        raise PrecisionError(f"tail of f (ratio 1/{r:.4g}) does not dominate growth of phi (ratio {rho:.4g})")

    f_tail = C ** 2 * r ** (-2 * (d + 1)) / (1 - r ** -2)
    T = C * D * q ** (d + 1) / (1 - q)
    inner = float(np.sum(2 * np.linalg.norm(w, axis=1) * T + T ** 2))
    outer = (C * D) ** 2 / (1 - q) ** 2 * r ** (-2 * (d + 1)) / (1 - r ** -2)
    return float(f_tail + inner + outer)


def _require_decay(f: TaylorSeries):
    if not f.is_polynomial and f.decay_hint <= 1:
        raise HypothesisError(f"f has decay_hint {f.decay_hint}; geometric decay beyond the circle is required")


def hb_norm(f: TaylorSeries, phi: SymbolPhi, B: Optional[SchurRow] = None,
            A: Optional[MatrixTaylorSeries] = None, K: Optional[int] = None,
            tolerance: Optional[float] = None) -> HBReport:
    """
    Squared H(B) norm of f from the Taylor coefficients of phi

    Args:
        f: Polynomial, or truncated series with decay_hint > 1
        phi: Coefficients of B A^-1 stored at least to deg f
        B: Schur row (with A: enables the mate residual)
        A: Outer factor of I - B*B
        K: Truncation order of the mate residual Toeplitz operators
        tolerance: Tail budget above which a precision warning is logged

    Returns:
        HBReport with the norm, mate and tail budget
    """
    _require_decay(f)
    w = _mate_coefficients(f, phi)
    hardy = float(np.sum(np.abs(f.coeffs) ** 2))
    mate_energy = float(np.sum(np.abs(w) ** 2))
    mate = MatrixTaylorSeries(-w[:, :, None]).trimmed()
    budget = _tail_budget(f, phi, w)

    report = HBReport(
        norm_sq=hardy + mate_energy,
        hardy_norm_sq=hardy,
        mate=mate,
        tail_budget=budget,
        truncation=(phi.degree, f.degree)
    )
    if B is not None and A is not None:
        K = max(2 * (f.degree + 1), 16) if K is None else K
        report.mate_residual = mate_residual(f, mate, B, A, K)
        report.truncation = (phi.degree, K)
    if tolerance is not None and budget > tolerance:
        logger.warning(f"H(B) norm tail budget {budget:.3e} exceeds {tolerance:.1e} (deg f {f.degree})")
    logger.debug(f"H(B) norm: deg f {f.degree}, norm^2 {report.norm_sq:.12g}, tail budget {budget:.3e}")
    return report


def _upper_toeplitz(coeffs: np.ndarray, K: int) -> np.ndarray:
    row = np.zeros(K, dtype=complex)
    keep = min(K, coeffs.size)
    row[:keep] = coeffs[:keep]
    column = np.zeros(K, dtype=complex)
    column[0] = row[0]
    return linalg.toeplitz(column, row)


def mate_residual(f: TaylorSeries, mate: MatrixTaylorSeries, B: SchurRow,
                  A: MatrixTaylorSeries, K: int) -> float:
    """
    ||T_B* f + T_A* f+|| with K x K truncations of the co-analytic Toeplitz operators

    Vanishes exactly when f+ is the mate of f and f has degree < K.
    """
    n = B.n
    f_vec = np.zeros(K, dtype=complex)
    f_vec[:min(K, f.degree + 1)] = f.coeffs[:K]
    mate_vec = np.zeros((n, K), dtype=complex)
    keep = min(K, mate.degree + 1)
    mate_vec[:, :keep] = mate.coeffs[:keep, :, 0].T

    total = np.zeros((n, K), dtype=complex)
    for i in range(n):
        total[i] += _upper_toeplitz(np.conj(B.components[i].coeffs), K) @ f_vec
        for q in range(n):
            total[i] += _upper_toeplitz(np.conj(A.coeffs[:, q, i]), K) @ mate_vec[q]
    return float(np.linalg.norm(total))


def hb_inner_product(f: TaylorSeries, g: TaylorSeries, phi: SymbolPhi,
                     with_budget: bool = False) -> Union[complex, Tuple[complex, float]]:
    """
    <f, g> in H(B) as <f, g>_H2 + <f+, g+>_H2

    Args:
        f: Polynomial, or truncated series with decay_hint > 1
        g: Same hypothesis as f
        phi: Coefficients of B A^-1 stored at least to max(deg f, deg g)
        with_budget: Also return a bound on the truncation error

    Returns:
        The inner product, or (inner product, budget) when with_budget is set
    """
    _require_decay(f)
    _require_decay(g)
    w_f = _mate_coefficients(f, phi)
    w_g = _mate_coefficients(g, phi)
    k = min(f.degree, g.degree) + 1
    hardy = np.sum(f.coeffs[:k] * np.conj(g.coeffs[:k]))
    mates = np.sum(w_f[:k] * np.conj(w_g[:k]))
    value = complex(hardy + mates)

    budget_f = _tail_budget(f, phi, w_f)
    budget_g = _tail_budget(g, phi, w_g)
    norm_f = np.sqrt(np.sum(np.abs(f.coeffs) ** 2) + np.sum(np.abs(w_f) ** 2))
    norm_g = np.sqrt(np.sum(np.abs(g.coeffs) ** 2) + np.sum(np.abs(w_g) ** 2))
    # Cauchy-Schwarz on the truncated parts
    budget = float(np.sqrt(budget_f) * norm_g + np.sqrt(budget_g) * norm_f + np.sqrt(budget_f * budget_g))
    logger.debug(f"H(B) inner product: deg f {f.degree}, deg g {g.degree}, tail budget {budget:.3e}")
    return (value, budget) if with_budget else value


def monomial_norm(m: int, phi: SymbolPhi) -> float:
    """||z^m||^2 = 1 + sum_{j<=m} ||c_j||^2"""
    if m < 0:
        raise HypothesisError(f"monomial power must be nonnegative, got {m}")
    phi.require_degree(m)
    return float(1.0 + np.sum(phi.row_norms_sq()[:m + 1]))


def _check_disk(lam: complex) -> complex:
    lam = complex(lam)
    if abs(lam) >= 1:
        raise DomainError(f"|lambda| = {abs(lam):.6g} is not inside the unit disk")
    return lam


def szego_kernel_series(lam: complex, degree: int = DEFAULT_DEGREE) -> TaylorSeries:
    """kappa_lam(z) = 1 / (1 - conj(lam) z), truncated"""
    lam = _check_disk(lam)
    coeffs = np.conj(lam) ** np.arange(degree + 1)
    hint = None if lam == 0 else 1.0 / abs(lam)
    return TaylorSeries(coeffs, hint)


def szego_kernel_norm(lam: complex, B: SchurRow, A: MatrixTaylorSeries) -> float:
    """||kappa_lam||^2 = (1 + B(lam) (A(lam)* A(lam))^-1 B(lam)*) / (1 - |lam|^2)"""
    lam = _check_disk(lam)
    B_lam = B.at(lam)
    A_lam = evaluate(A, lam)
    condition = np.linalg.cond(A_lam)
    if condition > 1e8:
        logger.warning(f"A(lambda) is ill-conditioned at lambda={lam}: cond {condition:.2e}")
    solved = linalg.solve(A_lam.conj().T @ A_lam, np.conj(B_lam), assume_a='her')
    return float((1.0 + np.real(B_lam @ solved)) / (1.0 - abs(lam) ** 2))


def shifted_szego_norm(m: int, lam: complex, phi: SymbolPhi, B: SchurRow, A: MatrixTaylorSeries,
                       with_budget: bool = False, tol: float = 1e-10) -> Union[float, Tuple[float, float]]:
    """
    ||z^m kappa_lam||^2 = ||kappa_lam||^2 + sum_{s=1..m} || sum_j c_{j+s} lam^j ||^2

    The inner geometric sums are truncated at the stored degree of phi. Beyond
    it ||c_k|| is bounded by D rho^k, with rho = max(tail ratio, 1).

    Args:
        m: Shift power
        lam: Point of the open disk
        phi: Coefficients of B A^-1 stored at least to degree m
        B: Schur row
        A: Outer factor of I - B*B
        with_budget: Also return the truncation budget
        tol: Budget above which a precision warning is logged

    Returns:
        The squared norm, or (squared norm, budget) when with_budget is set
    """
    if m < 0:
        raise HypothesisError(f"shift power must be nonnegative, got {m}")
    lam = _check_disk(lam)
    phi.require_degree(m)
    base = szego_kernel_norm(lam, B, A)

    N = phi.degree
    rho = max(phi.tail_ratio, 1.0)
    q = rho * abs(lam)
    if m > 0 and lam != 0 and q >= 1:
        raise PrecisionError(f"phi grows too fast (ratio {phi.tail_ratio:.4g}) for |lambda| = {abs(lam):.4g}")

    powers = lam ** np.arange(N + 1)
    norms = np.linalg.norm(phi.c, axis=1)
    D = float(np.max(norms * rho ** -np.arange(N + 1)))
    extra = 0.0
    budget = 0.0
    for s in range(1, m + 1):
        v = powers[:N + 1 - s] @ phi.c[s:]
        v_sq = float(np.sum(np.abs(v) ** 2))
        extra += v_sq
        if lam != 0:
            T = D * rho ** s * q ** (N + 1 - s) / (1 - q)
            budget += 2 * np.sqrt(v_sq) * T + T ** 2

    if budget > tol:
        logger.warning(f"Shifted kernel tail budget {budget:.3e} exceeds {tol:.1e} (m={m}, |lambda|={abs(lam):.3f})")
    value = base + extra
    return (value, float(budget)) if with_budget else value


def _basis_column(n: int, i: int) -> np.ndarray:
    if not 1 <= i <= n:
        raise HypothesisError(f"component index {i} outside 1..{n}")
    e = np.zeros(n, dtype=complex)
    e[i - 1] = 1.0
    return e


def symbol_kernel_norm(i: int, lam: complex, A: MatrixTaylorSeries) -> float:
    """||b_i kappa_lam||^2 = (||(A(lam)^-1)* e_i||^2 - 1) / (1 - |lam|^2)"""
    lam = _check_disk(lam)
    e = _basis_column(A.rows, i)
    A_lam = evaluate(A, lam)
    x = linalg.solve(A_lam.conj().T, e)
    return float((np.sum(np.abs(x) ** 2) - 1.0) / (1.0 - abs(lam) ** 2))


def symbol_norm(i: int, A: MatrixTaylorSeries) -> float:
    """||b_i||^2 = ||(A(0)^-1)* e_i||^2 - 1"""
    return symbol_kernel_norm(i, 0.0, A)


def shifted_symbol_kernel_norm(i: int, lam: complex, A: MatrixTaylorSeries, B: SchurRow) -> float:
    """||L(b_i kappa_lam)||^2 for the backward shift L"""
    lam = _check_disk(lam)
    e = _basis_column(A.rows, i)
    A_lam = evaluate(A, lam)
    A_0 = A.at_origin()

    x = linalg.solve(A_lam.conj().T, e)
    x_sq = float(np.sum(np.abs(x) ** 2))
    cross = linalg.solve(A_lam, A_0 @ e)[i - 1]
    b_0 = B.components[i - 1].coeffs[0]
    column_sq = float(np.sum(np.abs(A_0 @ e) ** 2))

    kernel = (x_sq - 1.0) / (1.0 - abs(lam) ** 2)
    return float(kernel + 2.0 * np.real(cross) - abs(b_0) ** 2 - column_sq - x_sq)


def shifted_symbol_norm(i: int, B: SchurRow, A: MatrixTaylorSeries) -> float:
    """||L b_i||^2 = 1 - |B(0) e_i|^2 - ||A(0) e_i||^2"""
    e = _basis_column(A.rows, i)
    b_0 = B.components[i - 1].coeffs[0]
    return float(1.0 - abs(b_0) ** 2 - np.sum(np.abs(A.at_origin() @ e) ** 2))


def kernel_KB(z: complex, lam: complex, B: SchurRow) -> complex:
    """Reproducing kernel (1 - B(z) B(lam)*) / (1 - z conj(lam))"""
    z, lam = _check_disk(z), _check_disk(lam)
    return complex((1.0 - B.at(z) @ np.conj(B.at(lam))) / (1.0 - z * np.conj(lam)))


def kernel_KB_series(lam: complex, B: SchurRow, degree: int = DEFAULT_DEGREE) -> TaylorSeries:
    """Truncated Taylor series of K_lam(z) = (1 - B(z) B(lam)*) kappa_lam(z)"""
    lam = _check_disk(lam)
    B_lam = B.at(lam)
    numerator = TaylorSeries.constant(1.0, degree)
    for component, value in zip(B.components, B_lam):
        numerator = numerator - component.resized(degree) * np.conj(value)
    # hint is the smaller of the component and kernel hints
    return multiply(numerator, szego_kernel_series(lam, degree), degree)


class ScanRow(NamedTuple):
    index: str
    closed_form: float
    series_value: float
    difference: float
    tail_budget: float


def _monomial_row(m: int, phi: SymbolPhi) -> ScanRow:
    closed = monomial_norm(m, phi)
    report = hb_norm(TaylorSeries.monomial(m), phi)
    return ScanRow(str(m), closed, report.norm_sq, abs(closed - report.norm_sq), report.tail_budget)


def _kernel_row(lam: complex, phi: SymbolPhi, B: SchurRow, A: MatrixTaylorSeries, degree: int) -> ScanRow:
    closed = szego_kernel_norm(lam, B, A)
    report = hb_norm(szego_kernel_series(lam, degree), phi)
    return ScanRow(str(complex(lam)), closed, report.norm_sq, abs(closed - report.norm_sq), report.tail_budget)


def norm_scan(kind: str, values: Sequence, phi: SymbolPhi, B: Optional[SchurRow] = None,
              A: Optional[MatrixTaylorSeries] = None, workers: int = 1,
              tolerance: Optional[float] = None) -> List[ScanRow]:
    """
    Compare closed-form norms against the series formula over a batch of inputs

    Args:
        kind: 'monomial' (values are powers m) or 'kernel' (values are points lambda)
        values: Batch of inputs
        phi: Coefficients of B A^-1
        B: Schur row (kernel scans)
        A: Outer factor (kernel scans)
        workers: Worker processes; 1 runs in-process
        tolerance: Difference between the two paths above which a row is flagged in the log

    Returns:
        One ScanRow per input, in input order
    """
    if kind == 'monomial':
        task = partial(_monomial_row, phi=phi)
    elif kind == 'kernel':
        if B is None or A is None:
            raise HypothesisError("kernel scans need B and A")
        task = partial(_kernel_row, phi=phi, B=B, A=A, degree=phi.degree)
    else:
        raise HypothesisError(f"unknown scan kind {kind!r}")

    values = list(values)
    if workers > 1 and len(values) > 1:
        with multiprocessing.Pool(processes=min(workers, len(values))) as pool:
            rows = pool.map(task, values)
    else:
        rows = [task(v) for v in values]
    if tolerance is not None:
        for row in rows:
            if row.difference > tolerance:
                logger.warning(f"Scan row {row.index}: paths differ by {row.difference:.3e} > {tolerance:.1e}")
    logger.info(f"Scanned {len(rows)} {kind} norms with {workers} worker(s)")
    return rows
