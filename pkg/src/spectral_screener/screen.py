"""Scree-plot decision rules: jump detection, eigenvalue selection, eigenvector
certification, and the combined selector for polynomially decaying spectra.

Every rule thresholds the descending sample spectrum at a data-driven level;
the sigma_n-level entry points compute that level internally, while the
spectrum-level kernels let callers reuse an already-computed decomposition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .estimate import ConstantsConfig, Regime, epsilon1, eta_empirical, eta_theoretical
from .linalg import SpectralDecomposition, SymmetricMatrix
from .models import PolyDecayParams, PopulationModel

MINIMAL_JUMP = "minimal_jump"
POLY_JUMP = "poly_jump"
EIGENVALUE_K = "eigenvalue_k"
GAP_CERTIFIED = "gap_certified"
COMBINED_KEV = "combined_kev"

JUMP_FORMULA = "jump_detection"  # 3 / c2l
OPERATOR_FORMULA = "operator"  # 3 / c3l


@dataclass(frozen=True)
class JumpDecision:
    s_hat: int
    threshold: float
    regime: Regime
    rule: str


@dataclass(frozen=True)
class SelectionResult:
    count: int
    alpha: float
    rule: str
    certified: tuple[int, ...] = ()


def _require_descending(eigenvalues: np.ndarray) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("expected a nonempty 1-d spectrum")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    return lam


def scree_count(eigenvalues, tau: float) -> int:
    """Largest k with eigenvalue_k >= tau (0 when none qualifies)."""
    lam = _require_descending(eigenvalues)
    return int(np.count_nonzero(lam >= tau))


def descending_spectrum(sigma_n: SymmetricMatrix) -> np.ndarray:
    return np.linalg.eigvalsh(sigma_n.entries)[::-1]


def c4_lambda(poly: PolyDecayParams, formula: str = JUMP_FORMULA) -> float:
    """Threshold constant for poly-decay jump detection.

    Two variants are in circulation; ``jump_detection`` divides by the lower
    envelope constant c2l, ``operator`` by the gap constant c3l.
    """
    if formula == JUMP_FORMULA:
        denom = poly.c2l
    elif formula == OPERATOR_FORMULA:
        denom = poly.c3l
    else:
        raise ValueError(f"unknown c4 formula: {formula!r}")
    return 3.0 / denom * poly.c1l ** (poly.beta3 / poly.beta1)


def poly_jump_threshold(eta2: float, c4l: float, beta1: float, beta3: float) -> float:
    x = c4l * eta2
    if x <= 0:
        raise ValueError(f"poly jump threshold needs c4l * eta2 > 0, got {x}")
    return x ** (beta1 / beta3)


def selection_threshold(eta: float, eps1: float, cj: float, alpha: float) -> float:
    return eta / (cj * (1.0 - eps1)) * (1.0 + 1.0 / alpha)


def gap_rule_threshold(eta: float, eps1: float, cj: float, alpha: float) -> float:
    return eta / (cj * (1.0 - eps1)) * (2.0 + 3.0 / alpha)


def combined_poly_threshold(
    eta2: float, eps1: float, alpha: float, c1l: float, c3l: float, beta1: float, beta3: float
) -> float:
    inner = 3.0 * eta2 / ((1.0 - eps1) * c3l * alpha)
    return c1l * inner ** (beta1 / beta3) + eta2 / (1.0 - eps1)


def certified_by_gap(eigenvalues, rule_threshold: float) -> tuple[int, ...]:
    """1-indexed k whose sample spectrum gaps clear the rule threshold.

    Boundary conventions: a formal +infinity above the top eigenvalue and a 0
    below the bottom one.
    """
    lam = _require_descending(eigenvalues)
    padded = np.concatenate([[np.inf], lam, [0.0]])
    up = padded[:-2] - padded[1:-1]
    down = padded[1:-1] - padded[2:]
    ok = np.minimum(up, down) >= rule_threshold
    return tuple(int(k) for k in np.nonzero(ok)[0] + 1)


def detect_minimal_jump(
    sigma_n: SymmetricMatrix,
    n: int,
    p: int,
    regime: Regime,
    consts: ConstantsConfig,
    epsilon: float | None = None,
) -> JumpDecision:
    """Jump estimate at twice the plug-in noise level.

    The regime-1 guarantee carries a side condition involving the
    (uncalibratable) operator tail constant; when that constant is configured
    and the complexity index is supplied, a violation is only warned about.
    """
    if regime.j == 1 and consts.c3 is not None and epsilon is not None:
        if (1.0 + consts.c1 + consts.c3) * math.sqrt(epsilon) >= 0.19:
            warnings.warn(
                "regime-1 side condition (1 + c1 + c3) * sqrt(epsilon) < 0.19 fails; "
                "the detection guarantee may not apply",
                RuntimeWarning,
                stacklevel=2,
            )
    threshold = 2.0 * eta_empirical(sigma_n, n, p, regime, consts)
    return JumpDecision(scree_count(descending_spectrum(sigma_n), threshold), threshold, regime, MINIMAL_JUMP)


def detect_poly_jump(
    sigma_n: SymmetricMatrix,
    n: int,
    p: int,
    poly: PolyDecayParams,
    consts: ConstantsConfig,
) -> JumpDecision:
    """Jump estimate for polynomially decaying spectra; threshold (c4l * eta2)^(beta1/beta3)."""
    regime = Regime(2)
    eta2 = eta_empirical(sigma_n, n, p, regime, consts)
    c4l = consts.c4l if consts.c4l is not None else c4_lambda(poly)
    threshold = poly_jump_threshold(eta2, c4l, poly.beta1, poly.beta3)
    return JumpDecision(scree_count(descending_spectrum(sigma_n), threshold), threshold, regime, POLY_JUMP)


def select_eigenvalues(
    sigma_n: SymmetricMatrix,
    n: int,
    p: int,
    regime: Regime,
    alpha: float,
    consts: ConstantsConfig,
) -> SelectionResult:
    """Count of sample eigenvalues whose relative error is at most alpha (w.h.p.)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    eta = eta_empirical(sigma_n, n, p, regime, consts)
    threshold = selection_threshold(eta, epsilon1(n, consts), consts.regime_constant(regime), alpha)
    return SelectionResult(scree_count(descending_spectrum(sigma_n), threshold), alpha, EIGENVALUE_K)


def certify_eigenvectors(
    decomp: SpectralDecomposition,
    n: int,
    p: int,
    regime: Regime,
    alpha: float,
    consts: ConstantsConfig,
) -> SelectionResult:
    """Indices whose sample eigenvectors are certified accurate by the gap rule.

    The plug-in noise level is evaluated directly on the decomposition's
    spectrum (trace = eigenvalue sum, operator norm = largest magnitude).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    lam = _require_descending(decomp.eigenvalues)
    op = max(abs(float(lam[0])), abs(float(lam[-1])))
    if op == 0:
        raise ValueError("cannot certify from an all-zero spectrum")
    re = float(lam.sum()) / op
    if regime.j == 1:
        eta = consts.C * op * math.sqrt(re * math.log(p * n) / n)
    else:
        eta = consts.C * op * re * math.sqrt(math.log(n) / n)
    rule = gap_rule_threshold(eta, epsilon1(n, consts), consts.regime_constant(regime), alpha)
    certified = certified_by_gap(lam, rule)
    return SelectionResult(len(certified), alpha, GAP_CERTIFIED, certified)


def select_combined_poly(
    sigma_n: SymmetricMatrix,
    n: int,
    p: int,
    poly: PolyDecayParams,
    alpha: float,
    consts: ConstantsConfig,
) -> SelectionResult:
    """Joint eigenvalue/eigenvector selector under polynomial decay: every index
    up to the count is certified for both."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    eta2 = eta_empirical(sigma_n, n, p, Regime(2), consts)
    threshold = combined_poly_threshold(
        eta2, epsilon1(n, consts), alpha, poly.c1l, poly.c3l, poly.beta1, poly.beta3
    )
    k = scree_count(descending_spectrum(sigma_n), threshold)
    return SelectionResult(k, alpha, COMBINED_KEV, tuple(range(1, k + 1)))


def eigenvector_error_bound(model: PopulationModel, k: int, eta_min: float) -> float:
    """Perturbation envelope eta/gap + 6 eta^2/gap^2 from the true spectrum.

    A zero gap returns +inf.
    """
    gap = model.spectral_gap(k)
    if gap == 0:
        return float("inf")
    r = eta_min / gap
    return r + 6.0 * r * r


def minimal_jump_indices(
    model: PopulationModel, n: int, p: int, regime: Regime, consts: ConstantsConfig
) -> tuple[int, ...]:
    """Indices s of the true spectrum that form a detectable minimal jump.

    Only evaluable on synthetic models where the spectrum is known.
    """
    eta = eta_theoretical(model, n, p, regime, consts)
    eps = epsilon1(n, consts)
    cj = consts.regime_constant(regime)
    lam = np.concatenate([model.true_spectrum, [0.0]])
    lo = 2.0 * (1.0 + eps) / cj * eta + eta
    hi = 2.0 * cj * (1.0 - eps) * eta - eta
    out = [s for s in range(1, model.p + 1) if lam[s - 1] >= lo and lam[s] < hi]
    return tuple(out)


def poly_jump_indices(
    model: PopulationModel,
    n: int,
    p: int,
    poly: PolyDecayParams,
    consts: ConstantsConfig,
    extra_margin: float = 0.0,
) -> tuple[int, ...]:
    """Detectable jump indices under the polynomial-decay rule.

    ``extra_margin`` widens both sides of the condition; the operator-level
    analysis passes the discretization and noise-floor terms through it.
    """
    eta2 = eta_theoretical(model, n, p, Regime(2), consts)
    eps = epsilon1(n, consts)
    c4l = consts.c4l if consts.c4l is not None else c4_lambda(poly)
    lam = np.concatenate([model.true_spectrum, [0.0]])
    lo = (c4l * (1.0 + eps) * eta2) ** (poly.beta1 / poly.beta3) + eta2 + extra_margin
    hi = (c4l * (1.0 - eps) * eta2) ** (poly.beta1 / poly.beta3) - eta2 - extra_margin
    out = [s for s in range(1, model.p + 1) if lam[s - 1] >= lo and lam[s] < hi]
    return tuple(out)


def poly_detection_condition_ok(
    poly: PolyDecayParams, eta2: float, consts: ConstantsConfig, n: int
) -> bool:
    """Large-n technical condition under which the poly-decay detection rule is valid."""
    eps = epsilon1(n, consts)
    ratio = poly.beta1 / poly.beta3
    lhs = (1.0 + eps) ** ratio - (1.0 - eps) ** ratio
    rhs = (1.0 / poly.c1l) * (3.0 / poly.c3l) ** (-ratio) * eta2 ** (1.0 - ratio)
    return lhs < rhs
