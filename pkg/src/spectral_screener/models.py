"""Ground-truth covariance models with known spectra, plus seeded sub-Gaussian samplers.

All randomness goes through the counter-based Philox generator so that every
draw is reproducible from an explicit integer seed, and per-trial seeds can be
derived as ``base_seed + trial_index`` by independent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import SymmetricMatrix, eigh

EXPLICIT = "explicit"
FACTOR = "factor"
POLY_DECAY = "poly_decay"

RADEMACHER = "rademacher"
UNIFORM = "uniform"


class AssumptionViolationError(ValueError):
    """A requested polynomial-decay spectrum violates its stated envelopes."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


def generator(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator (Philox) for a given integer seed."""
    return np.random.Generator(np.random.Philox(seed))


def trial_seed(base_seed: int, trial_index: int) -> int:
    return base_seed + trial_index


def random_orthonormal(p: int, r: int, seed: int) -> np.ndarray:
    """Seeded Haar-distributed p x r orthonormal columns.

    QR of a standard normal matrix, with column signs fixed so the R factor
    has a positive diagonal (makes the draw unique and seed-deterministic).
    """
    rng = generator(seed)
    q, rmat = np.linalg.qr(rng.standard_normal((p, r)))
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    return q * signs


@dataclass(frozen=True)
class FactorParams:
    """Low-rank-plus-noise model, stored pre-scaled by 1/p (see build_factor)."""

    p: int
    r: int
    factor_strengths: tuple[float, ...]
    noise_var: float = 0.0
    loading_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "factor_strengths", tuple(float(s) for s in self.factor_strengths))
        if self.r >= self.p:
            raise ValueError(f"need r < p, got r={self.r}, p={self.p}")
        if len(self.factor_strengths) != self.r:
            raise ValueError("factor_strengths length must equal r")
        s = self.factor_strengths
        if any(a <= b for a, b in zip(s, s[1:])) or s[-1] <= 0:
            raise ValueError("factor strengths must be strictly decreasing and positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")


@dataclass(frozen=True)
class PolyDecayParams:
    """Polynomially decaying spectrum with envelope and minimum-gap constants.

    The spectrum must satisfy ``c2l * k**-beta2 <= lam_k <= c1l * k**-beta1``
    and every pairwise gap at index k must be at least ``c3l * k**-beta3``.
    """

    p: int
    beta1: float
    beta2: float
    beta3: float
    c1l: float = 1.0
    c2l: float = 1.0
    c3l: float = 1.0
    eigenvalue_rule: Callable[[np.ndarray], np.ndarray] | None = None
    rotation_seed: int | None = None

    def __post_init__(self):
        if not (self.beta3 > self.beta2 >= self.beta1 > 1):
            raise ValueError("need beta3 > beta2 >= beta1 > 1")
        if min(self.c1l, self.c2l, self.c3l) <= 0:
            raise ValueError("decay constants must be positive")
        if self.p < 1:
            raise ValueError("p must be at least 1")
        if self.eigenvalue_rule is None and self.beta1 != self.beta2:
            raise ValueError("the default spectrum c1l * k**-beta needs beta1 == beta2")


@dataclass(frozen=True)
class PopulationModel:
    """A ground-truth covariance with its known spectrum and eigenbasis."""

    kind: str
    sigma: SymmetricMatrix
    true_spectrum: np.ndarray = field(repr=False)
    true_eigenvectors: np.ndarray = field(repr=False)
    params: object | None = None

    def __post_init__(self):
        spectrum = np.array(self.true_spectrum, dtype=float)
        vectors = np.array(self.true_eigenvectors, dtype=float)
        spectrum.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "true_spectrum", spectrum)
        object.__setattr__(self, "true_eigenvectors", vectors)

    @property
    def p(self) -> int:
        return self.sigma.dim

    def spectral_gap(self, k: int) -> float:
        """min_{j != k} |lam_j - lam_k| over the true spectrum, 1-indexed k."""
        lam = self.true_spectrum
        if lam.size == 1:
            return float("inf")
        others = np.delete(lam, k - 1)
        return float(np.min(np.abs(others - lam[k - 1])))


@dataclass(frozen=True)
class SampleMatrix:
    """n observation rows in R^p."""

    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.rows, dtype=float)
        if a.ndim != 2:
            raise ValueError("rows must be a 2-d array")
        if not np.all(np.isfinite(a)):
            raise ValueError("sample entries must be finite")
        object.__setattr__(self, "rows", a)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


def build_explicit(eigenvalues: Sequence[float], rotation_seed: int | None = None) -> PopulationModel:
    """Model with a fully specified spectrum and a seeded (or identity) eigenbasis."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    p = lam.size
    if p < 1:
        raise ValueError("need at least one eigenvalue")
    if lam[-1] < 0:
        raise ValueError("explicit spectra must be nonnegative")
    v = np.eye(p) if rotation_seed is None else random_orthonormal(p, p, rotation_seed)
    sigma = SymmetricMatrix((v * lam) @ v.T)
    return PopulationModel(EXPLICIT, sigma, lam, v)


def identity_model(p: int) -> PopulationModel:
    return build_explicit(np.ones(p))


def build_factor(params: FactorParams) -> PopulationModel:
    """Low-rank model sigma = sum_r lam_r xi_r xi_r' + (noise_var / p) I.

    The stored matrix is the 1/p-scaled covariance, which is the scale the
    screening thresholds are applied on.
    """
    p, r = params.p, params.r
    xi = random_orthonormal(p, r, params.loading_seed)
    bulk = params.noise_var / p
    sigma = SymmetricMatrix((xi * np.asarray(params.factor_strengths)) @ xi.T + bulk * np.eye(p))
    spectrum = np.concatenate([np.asarray(params.factor_strengths) + bulk, np.full(p - r, bulk)])
    # Deterministic orthonormal completion of the loading columns.
    q, rmat = np.linalg.qr(np.hstack([xi, np.eye(p)]))
    signs = np.sign(np.diag(rmat[:p, :p]))
    signs[signs == 0] = 1.0
    vectors = q[:, :p] * signs
    return PopulationModel(FACTOR, sigma, spectrum, vectors, params)


def poly_spectrum(params: PolyDecayParams) -> np.ndarray:
    k = np.arange(1, params.p + 1, dtype=float)
    if params.eigenvalue_rule is not None:
        lam = np.asarray(params.eigenvalue_rule(k), dtype=float)
        if lam.shape != (params.p,):
            raise ValueError("eigenvalue_rule must return one value per index")
        return lam
    return params.c1l * k ** (-params.beta1)


def check_poly_assumptions(lam: np.ndarray, params: PolyDecayParams) -> None:
    """Scan the envelope and minimum-gap conditions; raise on the first violation.

    Comparisons carry a 1e-12 relative slack so spectra lying exactly on an
    envelope are accepted regardless of rounding.
    """
    p = lam.size
    k = np.arange(1, p + 1, dtype=float)
    slack = 1.0 + 1e-12
    upper = params.c1l * k ** (-params.beta1)
    lower = params.c2l * k ** (-params.beta2)
    bad = np.nonzero(lam > upper * slack)[0]
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolationError(
            f"eigenvalue {lam[i]:.6g} at k={i + 1} exceeds the upper envelope "
            f"{upper[i]:.6g} = c1l * k**-beta1",
            index=i + 1,
        )
    bad = np.nonzero(lam * slack < lower)[0]
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolationError(
            f"eigenvalue {lam[i]:.6g} at k={i + 1} falls below the lower envelope "
            f"{lower[i]:.6g} = c2l * k**-beta2",
            index=i + 1,
        )
    if p == 1:
        return
    # For a descending spectrum the nearest other eigenvalue is an adjacent one.
    adj = lam[:-1] - lam[1:]
    gaps = np.minimum(
        np.concatenate([[np.inf], adj]),
        np.concatenate([adj, [np.inf]]),
    )
    need = params.c3l * k ** (-params.beta3)
    bad = np.nonzero(gaps * slack < need)[0]
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolationError(
            f"minimum spectral gap {gaps[i]:.6g} at k={i + 1} is below the required "
            f"{need[i]:.6g} = c3l * k**-beta3",
            index=i + 1,
        )


def build_poly_decay(params: PolyDecayParams) -> PopulationModel:
    """Model with polynomially decaying spectrum, verified against its envelopes."""
    lam = poly_spectrum(params)
    if np.any(np.diff(lam) > 0):
        raise AssumptionViolationError(
            "spectrum must be non-increasing", index=int(np.nonzero(np.diff(lam) > 0)[0][0]) + 1
        )
    check_poly_assumptions(lam, params)
    if params.rotation_seed is None:
        v = np.eye(params.p)
    else:
        v = random_orthonormal(params.p, params.p, params.rotation_seed)
    sigma = SymmetricMatrix((v * lam) @ v.T)
    return PopulationModel(POLY_DECAY, sigma, lam, v, params)


def model_spectrum_matches(model: PopulationModel, tol: float = 1e-8) -> bool:
    """True when eigh(sigma) reproduces the stored spectrum within ``tol``."""
    return bool(np.max(np.abs(eigh(model.sigma).eigenvalues - model.true_spectrum)) <= tol)


def _finish_sample(model: PopulationModel, z: np.ndarray) -> SampleMatrix:
    lam = np.clip(model.true_spectrum, 0.0, None)
    rows = (z * np.sqrt(lam)) @ model.true_eigenvectors.T
    return SampleMatrix(rows)


def sample_gaussian(model: PopulationModel, n: int, seed: int) -> SampleMatrix:
    """n i.i.d. rows from N(0, sigma), as V diag(sqrt(lam)) z with z standard normal."""
    if n < 2:
        raise ValueError("need n >= 2 (the sample covariance centers the data)")
    rng = generator(seed)
    return _finish_sample(model, rng.standard_normal((n, model.p)))


def sample_subgaussian_rotated(
    model: PopulationModel, n: int, seed: int, component_law: str = RADEMACHER
) -> SampleMatrix:
    """Independent unit-variance sub-Gaussian components, scaled and rotated to sigma."""
    if n < 2:
        raise ValueError("need n >= 2 (the sample covariance centers the data)")
    rng = generator(seed)
    shape = (n, model.p)
    if component_law == RADEMACHER:
        z = 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
    elif component_law == UNIFORM:
        half = np.sqrt(3.0)
        z = rng.uniform(-half, half, size=shape)
    else:
        raise ValueError(f"unknown component law: {component_law!r}")
    return _finish_sample(model, z)
