"""Sample covariance, noise levels, and the calibratable bound constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .linalg import DegenerateMatrixError, SymmetricMatrix, effective_rank, operator_norm, trace
from .models import PopulationModel, SampleMatrix

DEFAULT_C0 = math.pi / 2.0  # Gaussian value of the sub-Gaussian moment constant


class SampleTooSmallError(ValueError):
    """The sample is too small for the calibrated constants to be usable."""


@dataclass(frozen=True)
class Regime:
    """Which (p, n) regime a threshold targets: 1 (p polynomial in n) or 2 (p free)."""

    j: int

    def __post_init__(self):
        if self.j not in (1, 2):
            raise ValueError("regime must be 1 or 2")


REGIME_1 = Regime(1)
REGIME_2 = Regime(2)


@dataclass(frozen=True)
class ConstantsConfig:
    """All absolute constants the bounds leave implicit.

    ``C`` scales the noise levels, ``c1`` the trace deviation bound; both are
    placeholders until fitted by the calibration harness.  ``c3`` (the
    operator-norm tail constant) has no fit route and stays optional; when set
    it is only used to report the regime-1 side condition.  ``extras`` carries
    auxiliary per-bound fits produced by calibration.
    """

    C: float = 1.0
    c0: float = DEFAULT_C0
    c1: float = 0.5
    c1_regime: float = 0.9
    c2_regime: float = 1.0
    c3: float | None = None
    c4l: float | None = None
    source: str = "default"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        # zero C/c1 are degenerate but legal: the calibration oracle (an
        # estimator that is exactly right every trial) fits both to zero
        if self.c0 <= 0 or self.C < 0 or self.c1 < 0:
            raise ValueError("c0 must be positive; C and c1 nonnegative")
        if not (0 < self.c1_regime <= 1 and 0 < self.c2_regime <= 1):
            raise ValueError("regime constants must lie in (0, 1]")

    def regime_constant(self, regime: Regime) -> float:
        return self.c1_regime if regime.j == 1 else self.c2_regime

    def with_source(self, source: str) -> "ConstantsConfig":
        return replace(self, source=source)

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "c0": self.c0,
            "c1": self.c1,
            "c1_regime": self.c1_regime,
            "c2_regime": self.c2_regime,
            "c3": self.c3,
            "c4l": self.c4l,
            "source": self.source,
            "extras": dict(self.extras),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantsConfig":
        return cls(
            C=float(d.get("C", 1.0)),
            c0=float(d.get("c0", DEFAULT_C0)),
            c1=float(d.get("c1", 0.5)),
            c1_regime=float(d.get("c1_regime", 0.9)),
            c2_regime=float(d.get("c2_regime", 1.0)),
            c3=None if d.get("c3") is None else float(d["c3"]),
            c4l=None if d.get("c4l") is None else float(d["c4l"]),
            source=str(d.get("source", "default")),
            extras=dict(d.get("extras", {})),
        )


def sample_covariance(data: SampleMatrix) -> SymmetricMatrix:
    """Centered second-moment matrix with divisor n (not n - 1)."""
    if data.n < 2:
        raise ValueError("sample covariance needs n >= 2")
    centered = data.rows - data.rows.mean(axis=0)
    return SymmetricMatrix(centered.T @ centered / data.n)


def _noise_level(op_norm: float, eff_rank: float, n: int, p: int, regime: Regime, c: float) -> float:
    if n < 2:
        raise ValueError("need n >= 2")
    if regime.j == 1:
        return c * op_norm * math.sqrt(eff_rank * math.log(p * n) / n)
    return c * op_norm * eff_rank * math.sqrt(math.log(n) / n)


def eta_theoretical(
    model: PopulationModel, n: int, p: int, regime: Regime, consts: ConstantsConfig
) -> float:
    """Noise level from the true covariance: the regime-dependent envelope for
    the operator-norm estimation error."""
    return _noise_level(
        operator_norm(model.sigma), effective_rank(model.sigma), n, p, regime, consts.C
    )


def eta_empirical(
    sigma_n: SymmetricMatrix, n: int, p: int, regime: Regime, consts: ConstantsConfig
) -> float:
    """Plug-in noise level with the sample covariance in place of the truth."""
    op = operator_norm(sigma_n)
    if op == 0:
        raise DegenerateMatrixError("plug-in noise level undefined for a zero sample covariance")
    return _noise_level(op, effective_rank(sigma_n), n, p, regime, consts.C)


def epsilon1(n: int, consts: ConstantsConfig) -> float:
    """Trace-deviation margin 4 c1 sqrt(ln n / n); every downstream threshold
    divides by (1 - epsilon1), so a value >= 1 is rejected."""
    if n < 2:
        raise ValueError("need n >= 2")
    eps = 4.0 * consts.c1 * math.sqrt(math.log(n) / n)
    if eps >= 1.0:
        raise SampleTooSmallError(
            f"epsilon1 = {eps:.5f} >= 1 at n={n}: sample too small for calibrated c1"
        )
    return eps


def class_membership(
    model: PopulationModel,
    n: int,
    p: int,
    epsilon: float,
    regime: Regime,
    gamma: float = 2.0,
) -> bool:
    """Whether the model lies in the complexity class the regime's bound covers.

    Regime 1 additionally requires the dimension to grow at most polynomially,
    checked as p <= n**gamma.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    r = effective_rank(model.sigma)
    if regime.j == 1:
        return r <= epsilon * n / math.log(p * n) and p <= n**gamma
    return r <= epsilon * math.sqrt(n / math.log(n))


def trace_relative_error(sigma_n: SymmetricMatrix, model: PopulationModel) -> float:
    t = trace(model.sigma)
    if t <= 0:
        raise DegenerateMatrixError("model trace must be positive")
    return abs(trace(sigma_n) - t) / t


def effrank_relative_error(sigma_n: SymmetricMatrix, model: PopulationModel) -> float:
    return abs(effective_rank(sigma_n) / effective_rank(model.sigma) - 1.0)


def trace_error_bound(model: PopulationModel, n: int, consts: ConstantsConfig) -> float:
    """High-probability envelope for |tr(sigma_n) - tr(sigma)|."""
    return 4.0 * consts.c1 * math.sqrt(math.log(n) / n) * trace(model.sigma)


def frobenius_error_bound(model: PopulationModel, n: int, c1: float) -> float:
    """High-probability envelope for ||sigma_n - sigma||_F; equals
    2 c1 tr(sigma) sqrt(ln n / n) since ||sigma||_2 * r_e = tr."""
    return 2.0 * c1 * trace(model.sigma) * math.sqrt(math.log(n) / n)


def operator_error_bound(model: PopulationModel, n: int, p: int, constant: float) -> float:
    """High-probability envelope for ||sigma_n - sigma||_2 in its sharp
    max(sqrt(x), x) form with x = r_e ln(pn) / n."""
    x = effective_rank(model.sigma) * math.log(p * n) / n
    return constant * operator_norm(model.sigma) * max(math.sqrt(x), x)
