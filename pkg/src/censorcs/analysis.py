"""Reconstruction quality metrics and recovery-guarantee diagnostics.

Metrics: normalized mean squared error over trials (dB taken of the mean,
not the mean of dBs), the fraction of nodes that transmitted anything, and
the l1 tail beyond the largest-k entries (zero exactly when a vector is
k-sparse).

Guarantee diagnostics quantify when the censoring-aware program provably
recovers well.  ``rip_constant`` computes the exact order-k restricted
isometry constant of a matrix by enumerating supports, ``restricted_extremes``
the extreme singular values over k-column submatrices, and the two
evaluators turn those spectral facts into the error-bound value and the
sample-count multiplier of the recovery guarantee.  Unknown absolute
constants of the underlying concentration arguments are deliberately left
as caller inputs or symbolic strings, never defaulted.

The guarantee applies to the sent rows conjugated by the pseudo-inverse of
the stacked operator.  The literature normalizes that matrix ambiguously;
``rip_input_matrix`` exposes both readings:

* ``"mean"``: rows scaled by 1 / num_send (the form the error bound is
  stated in, whose noise term divides by num_send),
* ``"isotropic"``: rows scaled by 1 / sqrt(rho * num_send) with
  rho = k_c / n, which makes the matrix's expected Gram the identity and
  is the form concentration actually holds in at finite sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .fusion import StackedOperator

__all__ = [
    "RipReport",
    "ErrorBoundInputs",
    "ErrorBound",
    "SampleBoundInputs",
    "SampleBound",
    "nmse",
    "fan",
    "best_k_l1_tail",
    "rip_constant",
    "restricted_extremes",
    "pseudo_inverse",
    "rip_input_matrix",
    "recovery_error_bound",
    "sample_count_bound",
]

_MAX_SUPPORTS = 1_000_000
_SQRT2 = math.sqrt(2.0)


def nmse(errors: np.ndarray) -> tuple[float, float]:
    """(mean, dB of mean) of per-trial squared relative errors."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("no trials")
    if np.any(errors < 0.0):
        raise ValueError("squared errors cannot be negative")
    mean = float(errors.mean())
    return mean, 10.0 * math.log10(mean) if mean > 0.0 else -math.inf


def squared_relative_error(truth: np.ndarray, estimate: np.ndarray) -> float:
    """||truth - estimate||^2 / ||truth||^2 for one trial."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    denom = float(truth @ truth)
    if denom == 0.0:
        raise ValueError("ground truth is identically zero")
    diff = truth - estimate
    return float(diff @ diff) / denom


def fan(num_active: int, num_nodes: int) -> float:
    """Fraction of nodes that transmitted (value or hard decision)."""
    if num_nodes < 1 or not 0 <= num_active <= num_nodes:
        raise ValueError("need 0 <= num_active <= num_nodes, num_nodes >= 1")
    return num_active / num_nodes


def best_k_l1_tail(x: np.ndarray, k: int) -> float:
    """l1 mass outside the k largest-magnitude entries."""
    x = np.abs(np.asarray(x, dtype=np.float64)).ravel()
    if not 0 <= k <= x.size:
        raise ValueError("need 0 <= k <= len(x)")
    if k == x.size:
        return 0.0
    return float(np.sort(x)[: x.size - k].sum())


@dataclass(frozen=True)
class RipReport:
    """Exact order-k restricted isometry constant and where it is attained."""

    order: int
    delta: float
    worst_support: tuple[int, ...]  # 0-based column indices


def _support_blocks(num_cols: int, k: int, block: int = 50_000):
    """Yield (block_size, k) arrays covering all k-supports in lex order."""
    buf = []
    for support in combinations(range(num_cols), k):
        buf.append(support)
        if len(buf) == block:
            yield np.array(buf, dtype=np.int64)
            buf = []
    if buf:
        yield np.array(buf, dtype=np.int64)


def _support_spectra(matrix: np.ndarray, k: int):
    """Yield (supports, eigenvalues of each support's Gram block)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    num_cols = matrix.shape[1]
    if not 1 <= k <= num_cols:
        raise ValueError("need 1 <= k <= number of columns")
    if math.comb(num_cols, k) > _MAX_SUPPORTS:
        raise ValueError(
            f"support enumeration too large: C({num_cols}, {k}) exceeds {_MAX_SUPPORTS}"
        )
    gram = matrix.T @ matrix
    for supports in _support_blocks(num_cols, k):
        blocks = gram[supports[:, :, None], supports[:, None, :]]
        yield supports, np.linalg.eigvalsh(blocks)


def rip_constant(matrix: np.ndarray, k: int) -> RipReport:
    """Exact restricted isometry constant of order k, by enumeration.

    delta is the largest deviation of a k-column Gram block's spectrum from
    1; the support attaining it is reported.  Guarded against enumerations
    beyond a million supports.
    """
    best_delta, best_support = -1.0, None
    for supports, eigs in _support_spectra(matrix, k):
        dev = np.maximum(eigs[:, -1] - 1.0, 1.0 - eigs[:, 0])
        i = int(np.argmax(dev))
        if dev[i] > best_delta:
            best_delta = float(dev[i])
            best_support = tuple(int(c) for c in supports[i])
    return RipReport(order=k, delta=best_delta, worst_support=best_support)


def restricted_extremes(matrix: np.ndarray, k: int) -> tuple[float, float]:
    """Smallest and largest singular value over all k-column submatrices.

    Equals the extremes of ||M v|| over unit vectors with at most k nonzero
    entries (supports of size below k are dominated by some size-k support
    for the minimum and cannot exceed it for the maximum).
    """
    lo, hi = math.inf, -math.inf
    for _, eigs in _support_spectra(matrix, k):
        lo = min(lo, float(eigs[:, 0].min()))
        hi = max(hi, float(eigs[:, -1].max()))
    return math.sqrt(max(lo, 0.0)), math.sqrt(hi)


def pseudo_inverse(operator: StackedOperator) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of the stacked operator.

    The operator has full column rank (its Gram is the identity plus a
    positive semidefinite term), so this is an exact left inverse.
    """
    return np.linalg.pinv(operator.matrix)


def rip_input_matrix(
    sent_rows: np.ndarray,
    operator_pinv: np.ndarray,
    k_c: int,
    normalization: str = "mean",
) -> np.ndarray:
    """Sent rows composed with the stacked operator's pseudo-inverse,
    under either normalization (see module docstring).

    This is the effective sensing matrix after the change of variables
    that absorbs the stacked operator into the unknown, so its columns
    range over the operator's row space (n plus one per hard zero).
    """
    sent_rows = np.asarray(sent_rows, dtype=np.float64)
    num_send, n = sent_rows.shape
    if num_send == 0:
        raise ValueError("no sent rows")
    if operator_pinv.shape[0] != n:
        raise ValueError("pseudo-inverse row count must match scene dimension")
    product = sent_rows @ operator_pinv
    if normalization == "mean":
        return product / num_send
    if normalization == "isotropic":
        rho = k_c / n
        return product / math.sqrt(rho * num_send)
    raise ValueError("normalization must be 'mean' or 'isotropic'")


@dataclass(frozen=True)
class ErrorBoundInputs:
    """Everything the reconstruction error bound consumes.

    ``delta_2k`` must come from the rip_input_matrix normalization named in
    ``normalization`` so the noise term is scaled consistently; ``rho`` is
    required for the isotropic form.  ``k_c`` and ``sigma_v`` are optional
    and only sharpen the reported probability floor from symbolic to
    numeric.
    """

    delta_2k: float        # restricted isometry constant at order 2k
    sigma_min: float       # smallest singular value of the stacked operator
    tail_l1: float         # l1 tail of the operator image of the truth, order k
    epsilon: float         # data-fit radius used by the solver
    num_send: int
    k: int
    normalization: str = "mean"
    rho: float | None = None
    k_c: int | None = None
    sigma_v: float | None = None


@dataclass(frozen=True)
class ErrorBound:
    value: float             # bound on ||reconstruction - truth||_2
    tail_term: float
    noise_term: float
    probability_floor: str   # symbolic in the unstated constant c3


def recovery_error_bound(inputs: ErrorBoundInputs) -> ErrorBound:
    """Evaluate the deterministic error bound of the recovery guarantee.

    Valid when delta_2k < sqrt(2) - 1; outside that region the bound's
    denominators lose meaning and a ValueError is raised.  The guarantee
    holds with probability at least 1 - exp(-c3 * num_send * eps_excess)
    where eps_excess measures how far the radius sits above the r.m.s.
    noise level; c3 is an unstated absolute constant, so the floor is
    reported as a string, numeric in everything but c3.
    """
    d = inputs.delta_2k
    if not 0.0 <= d < _SQRT2 - 1.0:
        raise ValueError("error bound requires 0 <= delta_2k < sqrt(2) - 1")
    if inputs.sigma_min < 1.0 - 1e-9:
        raise ValueError("stacked operators have sigma_min >= 1")
    if inputs.num_send < 1:
        raise ValueError("bound needs at least one sent value")
    denom = (1.0 - (1.0 + _SQRT2) * d) * inputs.sigma_min
    tail_term = 2.0 * (1.0 - (1.0 - _SQRT2) * d) / denom * (
        inputs.tail_l1 / math.sqrt(inputs.k)
    )
    if inputs.normalization == "mean":
        noise_scale = float(inputs.num_send)
    elif inputs.normalization == "isotropic":
        if inputs.rho is None:
            raise ValueError("isotropic normalization needs rho")
        noise_scale = math.sqrt(inputs.rho * inputs.num_send)
    else:
        raise ValueError("normalization must be 'mean' or 'isotropic'")
    noise_term = 4.0 * math.sqrt(1.0 + d) / denom * (inputs.epsilon / noise_scale)
    if inputs.k_c is not None and inputs.sigma_v is not None and inputs.sigma_v > 0.0:
        rms = math.sqrt(inputs.k_c * inputs.num_send) * inputs.sigma_v
        excess = (inputs.epsilon / rms - 1.0) ** 2
        floor = f"1 - exp(-c3 * {inputs.num_send} * {excess!r})"
    else:
        floor = f"1 - exp(-c3 * {inputs.num_send} * eps_excess)"
    return ErrorBound(
        value=tail_term + noise_term,
        tail_term=tail_term,
        noise_term=noise_term,
        probability_floor=floor,
    )


@dataclass(frozen=True)
class SampleBoundInputs:
    """Spectral facts feeding the sample-count side of the guarantee.

    ``s_min``/``s_max`` are the restricted extremes of the stacked
    operator's pseudo-inverse at order k, ``rho = k_c / n`` the sensing
    density, ``num_hard`` the count of hard-decision rows in the operator.
    """

    delta_k: float
    s_min: float
    s_max: float
    rho: float
    k: int
    num_hard: int
    n: int


@dataclass(frozen=True)
class SampleBound:
    multiplier: float  # required num_send exceeds c1 times this
    theta: float       # shrinkage of the restricted spectrum the proof needs
    log_term: float


def sample_count_bound(inputs: SampleBoundInputs) -> SampleBound:
    """Evaluate the sample-count multiplier of the recovery guarantee.

    The target isometry level theta = 1 - (1 - delta_k) / (rho * s_min^2)
    must land in (0, 1), which confines delta_k to the interval
    (1 - rho * s_min^2, 1); outside it the requested constant is not
    achievable by subsampling and a ValueError is raised.  The returned
    multiplier omits the unstated absolute constant c1: the guarantee needs
    num_send > c1 * multiplier.
    """
    if not 0.0 < inputs.rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    if inputs.k < 1 or inputs.n < 1 or inputs.num_hard < 0:
        raise ValueError("invalid dimensions")
    floor = 1.0 - inputs.rho * inputs.s_min**2
    if not floor < inputs.delta_k < 1.0:
        raise ValueError(
            f"delta_k must lie in ({floor!r}, 1) for these restricted extremes"
        )
    theta = 1.0 - (1.0 - inputs.delta_k) / (inputs.rho * inputs.s_min**2)
    log_term = math.log(5.0 * math.e * (inputs.num_hard + inputs.n) / inputs.k)
    multiplier = (
        inputs.k
        * inputs.s_max**2
        / (inputs.rho**2 * theta**2 * inputs.s_min**2)
        * log_term
    )
    return SampleBound(multiplier=multiplier, theta=theta, log_term=log_term)
