"""Signal, sensing, and noise model for a sparse-source sensor network.

The monitored scene is a length ``n`` vector with exactly ``k`` nonzero
entries at unknown positions, each an independent zero-mean Gaussian with
standard deviation ``sigma_s``.  Every node observes the scene through a
sparse ternary weight vector: ``k_c`` entries of value +1 or -1 at known
positions, zero elsewhere.  A node's scalar measurement is the weighted sum
of the scene plus i.i.d. Gaussian observation noise with standard deviation
``sigma_v`` on each observed coordinate.

Randomness is organized as counter-based Philox substreams keyed by a
64-bit master seed and an integer path, so per-trial and per-node draws are
reproducible and order independent (see :func:`substream`).

Indices are 0-based throughout the in-memory API; serialized artifacts and
reports use 1-based positions (see :mod:`censorcs.fusion`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "SparseSignal",
    "SensingVector",
    "substream",
    "draw_support",
    "draw_signal",
    "draw_sensing_vector",
    "measure",
    "sigma_v_from_snr",
]


@dataclass(frozen=True)
class ModelParams:
    """Static description of the scene, the sensing pattern, and the network.

    ``sigma_s == 0`` is accepted so that degenerate scenes (no source power,
    indistinguishable hypotheses) remain expressible; drawing an actual
    signal requires ``sigma_s > 0``.
    """

    n: int          # scene dimension
    k: int          # number of active sources
    k_c: int        # nonzero weights per sensing vector
    sigma_s: float  # std dev of an active source amplitude
    sigma_v: float  # std dev of per-coordinate observation noise
    m: int          # number of sensor nodes

    def __post_init__(self) -> None:
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError("n must be a positive integer")
        if not (isinstance(self.k, int) and 1 <= self.k <= self.n):
            raise ValueError("k must satisfy 1 <= k <= n")
        if not (isinstance(self.k_c, int) and 1 <= self.k_c <= self.n):
            raise ValueError("k_c must satisfy 1 <= k_c <= n")
        if not (np.isfinite(self.sigma_s) and self.sigma_s >= 0.0):
            raise ValueError("sigma_s must be finite and nonnegative")
        if not (np.isfinite(self.sigma_v) and self.sigma_v >= 0.0):
            raise ValueError("sigma_v must be finite and nonnegative")
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ValueError("m must be a positive integer")


def _check_support(support: np.ndarray, n: int, size: int) -> np.ndarray:
    support = np.asarray(support, dtype=np.int64)
    if support.ndim != 1 or support.size != size:
        raise ValueError("support has wrong shape")
    if support.size and (support[0] < 0 or support[-1] >= n):
        raise ValueError("support indices out of range")
    if np.any(np.diff(support) <= 0):
        raise ValueError("support must be strictly increasing")
    return support


@dataclass(frozen=True)
class SparseSignal:
    """A realized scene: ascending support positions and their amplitudes."""

    n: int
    support: np.ndarray  # strictly increasing positions, 0-based
    values: np.ndarray   # amplitudes aligned with support

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        support = _check_support(self.support, self.n, values.size)
        if not np.all(np.isfinite(values)):
            raise ValueError("signal values must be finite")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.n)
        dense[self.support] = self.values
        return dense


@dataclass(frozen=True)
class SensingVector:
    """A node's ternary weight pattern: ascending positions and +/-1 signs."""

    n: int
    support: np.ndarray  # strictly increasing positions, 0-based
    signs: np.ndarray    # entries exactly +1.0 or -1.0, aligned with support

    def __post_init__(self) -> None:
        signs = np.asarray(self.signs, dtype=np.float64)
        support = _check_support(self.support, self.n, signs.size)
        if not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be exactly +1 or -1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "signs", signs)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.n)
        dense[self.support] = self.signs
        return dense


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent Philox generator keyed by (master_seed, *path).

    Streams for distinct paths are statistically independent and do not
    depend on the order in which they are created, so per-trial and
    per-node randomness can be generated in any schedule (or in parallel)
    without changing the drawn values.
    """
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    key = [int(master_seed)] + [int(p) for p in path]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def draw_support(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random k-subset of {0, ..., n-1}, returned ascending."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    support = rng.choice(n, size=k, replace=False)
    support.sort()
    return support.astype(np.int64)


def draw_signal(params: ModelParams, rng: np.random.Generator) -> SparseSignal:
    """Draw a scene: uniform support, i.i.d. Gaussian amplitudes."""
    if params.sigma_s <= 0.0:
        raise ValueError("drawing a signal requires sigma_s > 0")
    support = draw_support(params.n, params.k, rng)
    values = rng.normal(0.0, params.sigma_s, size=params.k)
    return SparseSignal(n=params.n, support=support, values=values)


def draw_sensing_vector(params: ModelParams, rng: np.random.Generator) -> SensingVector:
    """Draw a node's weight pattern: uniform support, i.i.d. random signs."""
    support = draw_support(params.n, params.k_c, rng)
    signs = rng.integers(0, 2, size=params.k_c) * 2.0 - 1.0
    return SensingVector(n=params.n, support=support, signs=signs)


def measure(
    signal: SparseSignal,
    vector: SensingVector,
    sigma_v: float,
    rng: np.random.Generator,
) -> float:
    """One noisy scalar measurement: weights applied to scene plus noise.

    Noise is drawn only on the vector's support; coordinates with zero
    weight cannot influence the measurement.  The same number of draws is
    consumed regardless of ``sigma_v`` so that streams stay aligned across
    noise levels.
    """
    if signal.n != vector.n:
        raise ValueError("signal and sensing vector dimensions differ")
    if sigma_v < 0.0:
        raise ValueError("sigma_v must be nonnegative")
    _, sig_idx, vec_idx = np.intersect1d(
        signal.support, vector.support, assume_unique=True, return_indices=True
    )
    noise = rng.normal(0.0, 1.0, size=vector.support.size) * sigma_v
    return float(signal.values[sig_idx] @ vector.signs[vec_idx] + vector.signs @ noise)


def sigma_v_from_snr(snr_db: float, n: int, k: int, sigma_s: float) -> float:
    """Noise level realizing a target ratio of scene energy to noise energy.

    The ratio is E{||scene||^2} / E{||node noise||^2} = k sigma_s^2 / (n sigma_v^2),
    so sigma_v = sigma_s * sqrt(k / (n * 10^(snr_db/10))).
    """
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    if sigma_s <= 0.0:
        raise ValueError("sigma_s must be positive")
    return float(sigma_s * np.sqrt(k / (n * 10.0 ** (snr_db / 10.0))))
