"""Functional-data layer: covariance operators with known eigenstructure,
discretization, trajectory simulation, approximation diagnostics, and the
operator-level jump/selection rules.

An operator is carried by its closed-form kernel together with its eigenvalue
and eigenfunction rules, so every discretized quantity can be checked against
the exact spectrum.  Trajectories follow the observation model

    Y_i(t_j) = mu(t_j) + X_i(t_j) + E_ij,      var(E_ij) = sigma^2,

on a fixed design grid in (0, 1], and the scaled sample covariance targets
Sigma = K + sigma^2/m I with K the 1/m-scaled kernel matrix.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .estimate import ConstantsConfig, Regime, epsilon1, eta_empirical, sample_covariance
from .linalg import SymmetricMatrix, align_sign, eigh
from .models import SampleMatrix, generator
from .screen import (
    COMBINED_KEV,
    JUMP_FORMULA,
    OPERATOR_FORMULA,
    POLY_JUMP,
    JumpDecision,
    SelectionResult,
    descending_spectrum,
    poly_jump_threshold,
    scree_count,
)

MIDPOINT = "midpoint"
RIGHT = "right"
INTERIOR = "interior"


class TruncationError(RuntimeError):
    """Karhunen-Loeve truncation could not reach the requested tail mass."""

    def __init__(self, message: str, achieved_tail: float):
        super().__init__(message)
        self.achieved_tail = achieved_tail


@dataclass(frozen=True)
class OperatorDecay:
    """Polynomial-decay exponents and constants for an operator's spectrum."""

    beta1: float
    beta2: float
    beta3: float
    gamma1: float
    c1l: float
    c2l: float
    c3l: float
    c5l: float
    c6l: float

    @property
    def approx_rate(self) -> float:
        """Exponent of m in the discretization error, (1 - beta1)/(beta1 + gamma1)."""
        return (1.0 - self.beta1) / (self.beta1 + self.gamma1)


@dataclass(frozen=True)
class CovarianceOperator:
    """A covariance kernel on [0,1]^2 with known eigenvalues and eigenfunctions."""

    name: str
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eigenvalue: Callable[[np.ndarray], np.ndarray]
    eigenfunction: Callable[[int, np.ndarray], np.ndarray]
    rho0: float
    decay: OperatorDecay
    exact_sampler: Callable[[np.random.Generator, int, np.ndarray], np.ndarray] | None = None

    def eigenvalues(self, kmax: int) -> np.ndarray:
        return np.asarray(self.eigenvalue(np.arange(1, kmax + 1, dtype=float)), dtype=float)


@dataclass(frozen=True)
class OperatorConstants:
    """Discretization constants; placeholders until fitted by the harness.

    ``c8l`` is None to request the closed-form value, which reads the total
    trace for the ambiguous lambda0 factor unless ``lambda0`` overrides it.
    """

    c7l: float = 2.0
    c8l: float | None = None
    c9l: float = 0.5
    c10l: float = 0.25
    lambda0: float | None = None

    def to_dict(self) -> dict:
        return {
            "c7l": self.c7l,
            "c8l": self.c8l,
            "c9l": self.c9l,
            "c10l": self.c10l,
            "lambda0": self.lambda0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorConstants":
        out = cls()
        known = {k: d[k] for k in ("c7l", "c8l", "c9l", "c10l", "lambda0") if k in d}
        return replace(out, **{k: (None if v is None else float(v)) for k, v in known.items()})


DEFAULT_OPERATOR_CONSTANTS = OperatorConstants()


def c8_lambda(op: CovarianceOperator, c7l: float, lambda0: float | None = None) -> float:
    """Closed-form eigenvalue-deviation constant; lambda0 defaults to the trace."""
    d = op.decay
    lam0 = op.rho0 if lambda0 is None else lambda0
    return d.c5l**2 * d.c1l / (d.beta1 - 1.0) + d.c1l + 13.0 * c7l * lam0


def resolve_c8(op: CovarianceOperator, op_consts: OperatorConstants) -> float:
    if op_consts.c8l is not None:
        return op_consts.c8l
    return c8_lambda(op, op_consts.c7l, op_consts.lambda0)


def brownian_motion() -> CovarianceOperator:
    """Kernel min(s,t); eigenvalues ((k - 1/2) pi)^-2; eigenfunctions sqrt(2) sin((k - 1/2) pi t)."""
    pi = math.pi
    decay = OperatorDecay(
        beta1=2.0,
        beta2=2.0,
        beta3=3.0,
        gamma1=1.0,
        c1l=4.0 / pi**2,
        c2l=1.0 / pi**2,
        c3l=2.0 / pi**2,
        c5l=math.sqrt(2.0),
        c6l=math.sqrt(2.0) * pi,
    )

    def sampler(rng: np.random.Generator, n: int, points: np.ndarray) -> np.ndarray:
        deltas = np.diff(np.concatenate([[0.0], points]))
        steps = rng.standard_normal((n, points.size)) * np.sqrt(deltas)
        return np.cumsum(steps, axis=1)

    return CovarianceOperator(
        name="brownian_motion",
        kernel=lambda s, t: np.minimum(s, t),
        eigenvalue=lambda k: ((k - 0.5) * pi) ** (-2.0),
        eigenfunction=lambda k, t: math.sqrt(2.0) * np.sin((k - 0.5) * pi * np.asarray(t)),
        rho0=0.5,
        decay=decay,
        exact_sampler=sampler,
    )


def brownian_bridge() -> CovarianceOperator:
    """Kernel min(s,t) - st; eigenvalues (k pi)^-2; eigenfunctions sqrt(2) sin(k pi t)."""
    pi = math.pi
    decay = OperatorDecay(
        beta1=2.0,
        beta2=2.0,
        beta3=3.0,
        gamma1=1.0,
        c1l=1.0 / pi**2,
        c2l=1.0 / pi**2,
        c3l=0.75 / pi**2,
        c5l=math.sqrt(2.0),
        c6l=math.sqrt(2.0) * pi,
    )

    def sampler(rng: np.random.Generator, n: int, points: np.ndarray) -> np.ndarray:
        # Brownian path on the grid extended to t=1, then pinned at the endpoint.
        extended = points if points[-1] == 1.0 else np.concatenate([points, [1.0]])
        deltas = np.diff(np.concatenate([[0.0], extended]))
        steps = rng.standard_normal((n, extended.size)) * np.sqrt(deltas)
        path = np.cumsum(steps, axis=1)
        return path[:, : points.size] - np.outer(path[:, -1], points)

    return CovarianceOperator(
        name="brownian_bridge",
        kernel=lambda s, t: np.minimum(s, t) - np.asarray(s) * np.asarray(t),
        eigenvalue=lambda k: (k * pi) ** (-2.0),
        eigenfunction=lambda k, t: math.sqrt(2.0) * np.sin(k * pi * np.asarray(t)),
        rho0=1.0 / 6.0,
        decay=decay,
        exact_sampler=sampler,
    )


def planted_jump_operator(head_count: int = 4, drop: float = 1e-4) -> CovarianceOperator:
    """Spectrum k^-2 up to ``head_count``, then scaled down by ``drop``.

    Built on the sine basis, so the full series has the closed form
    drop * pi^2 * (min(s,t) - st) plus a finite head correction.  The decay
    constants describe the pre-jump head; the tail intentionally breaks the
    lower envelope and the gap condition at the jump.
    """
    if head_count < 1 or not 0 < drop < 1:
        raise ValueError("need head_count >= 1 and drop in (0, 1)")
    pi = math.pi
    heads = np.arange(1, head_count + 1, dtype=float)
    head_vals = heads ** (-2.0)

    def eigenvalue(k):
        k = np.asarray(k, dtype=float)
        return np.where(k <= head_count, 1.0, drop) * k ** (-2.0)

    def eigenfunction(k, t):
        return math.sqrt(2.0) * np.sin(k * pi * np.asarray(t))

    def kernel(s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        out = drop * pi**2 * (np.minimum(s, t) - s * t)
        for k, val in zip(heads, head_vals):
            out = out + (1.0 - drop) * val * 2.0 * np.sin(k * pi * s) * np.sin(k * pi * t)
        return out

    rho0 = float((1.0 - drop) * head_vals.sum() + drop * pi**2 / 6.0)
    decay = OperatorDecay(
        beta1=2.0,
        beta2=2.0,
        beta3=3.0,
        gamma1=1.0,
        c1l=1.0,
        c2l=1.0,
        c3l=0.75,
        c5l=math.sqrt(2.0),
        c6l=math.sqrt(2.0) * pi,
    )
    return CovarianceOperator(
        name=f"planted_jump_{head_count}",
        kernel=kernel,
        eigenvalue=eigenvalue,
        eigenfunction=eigenfunction,
        rho0=rho0,
        decay=decay,
    )


OPERATOR_FACTORIES = {
    "brownian_motion": brownian_motion,
    "brownian_bridge": brownian_bridge,
    "planted_jump": planted_jump_operator,
}


@dataclass(frozen=True)
class DesignGrid:
    """Fixed design points 0 < t_1 < ... < t_m <= 1."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("grid needs at least one point")
        if pts[0] <= 0 or pts[-1] > 1 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing within (0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size

    def mesh_constant(self) -> float:
        """Smallest M with M^-1/m <= every gap <= M/m, boundary gaps included.

        Infinite when a boundary gap collapses (e.g. a grid ending exactly at 1).
        """
        gaps = np.diff(np.concatenate([[0.0], self.points, [1.0]]))
        lo, hi = float(gaps.min()), float(gaps.max())
        if lo <= 0:
            return float("inf")
        return max(hi * self.m, 1.0 / (lo * self.m))


def uniform_grid(m: int, kind: str = MIDPOINT) -> DesignGrid:
    """Uniform designs: midpoint (j - 1/2)/m, right j/m, or interior j/(m + 1)."""
    j = np.arange(1, m + 1, dtype=float)
    if kind == MIDPOINT:
        return DesignGrid((j - 0.5) / m)
    if kind == RIGHT:
        return DesignGrid(j / m)
    if kind == INTERIOR:
        return DesignGrid(j / (m + 1))
    raise ValueError(f"unknown uniform grid kind: {kind!r}")


def discretize(op: CovarianceOperator, grid: DesignGrid) -> SymmetricMatrix:
    """The 1/m-scaled kernel matrix on the grid."""
    t = grid.points
    return SymmetricMatrix(op.kernel(t[:, None], t[None, :]) / grid.m)


def sigma_matrix(op: CovarianceOperator, grid: DesignGrid, noise_var: float) -> SymmetricMatrix:
    """Estimation target K + sigma^2/m I for noisy discretized trajectories."""
    return discretize(op, grid).add_scaled_identity(noise_var / grid.m)


def phi_vector(op: CovarianceOperator, k: int, grid: DesignGrid) -> np.ndarray:
    """m^-1/2-scaled eigenfunction evaluations; approximately unit norm."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return op.eigenfunction(k, grid.points) / math.sqrt(grid.m)


def gram_deviation(op: CovarianceOperator, grid: DesignGrid, kmax: int) -> float:
    """max over k1, k2 <= kmax of |phi_k1' phi_k2 - delta|, the discrete
    orthonormality defect of the scaled eigenfunction vectors."""
    phis = np.stack([phi_vector(op, k, grid) for k in range(1, kmax + 1)])
    return float(np.abs(phis @ phis.T - np.eye(kmax)).max())


def fit_c7(op: CovarianceOperator, grids: list[DesignGrid], kmax: int) -> float:
    """Smallest constant making the orthonormality defect envelope
    c7 * max(k1,k2)^gamma1 / m hold on the given grids."""
    g1 = op.decay.gamma1
    best = 0.0
    for grid in grids:
        phis = np.stack([phi_vector(op, k, grid) for k in range(1, kmax + 1)])
        dev = np.abs(phis @ phis.T - np.eye(kmax))
        ks = np.arange(1, kmax + 1, dtype=float)
        scale = np.maximum(ks[:, None], ks[None, :]) ** g1 / grid.m
        best = max(best, float((dev / scale).max()))
    return best


@dataclass(frozen=True)
class FunctionalSample:
    """n noisy trajectories observed on a common grid."""

    grid: DesignGrid
    observations: np.ndarray = field(repr=False)
    noise_var: float = 0.0
    mean: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != self.grid.m:
            raise ValueError("observations must be n x m for the given grid")
        if not np.all(np.isfinite(obs)):
            raise ValueError("observations must be finite")
        object.__setattr__(self, "observations", obs)
        if self.mean is not None:
            object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def m(self) -> int:
        return self.grid.m


def kl_truncation_depth(
    op: CovarianceOperator, tail_fraction: float, cap: int
) -> tuple[int, np.ndarray]:
    """Smallest expansion depth whose tail trace is below tail_fraction * rho0."""
    rho = op.eigenvalues(cap)
    tails = op.rho0 - np.cumsum(rho)
    target = tail_fraction * op.rho0
    hit = np.nonzero(tails < target)[0]
    if hit.size == 0:
        raise TruncationError(
            f"truncation at cap {cap} leaves tail mass {tails[-1]:.3e} "
            f"(target {target:.3e})",
            achieved_tail=float(tails[-1]),
        )
    depth = int(hit[0]) + 1
    return depth, rho[:depth]


def simulate_trajectories(
    op: CovarianceOperator,
    mu: Callable[[np.ndarray], np.ndarray] | None,
    sigma2: float,
    n: int,
    grid: DesignGrid,
    seed: int,
    method: str = "auto",
    tail_fraction: float = 1e-6,
    cap_factor: int = 10,
) -> FunctionalSample:
    """Draw n trajectories plus i.i.d. N(0, sigma2) measurement noise.

    ``method='auto'`` prefers the operator's exact sampler when it has one and
    otherwise uses a truncated expansion over the eigenbasis, deep enough that
    the tail trace is below ``tail_fraction * rho0`` (capped at
    ``cap_factor * m`` terms).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    if method not in ("auto", "exact", "kl"):
        raise ValueError(f"unknown simulation method: {method!r}")
    if method == "exact" and op.exact_sampler is None:
        raise ValueError(f"operator {op.name} has no exact sampler")
    rng = generator(seed)
    use_exact = op.exact_sampler is not None if method == "auto" else method == "exact"
    if use_exact:
        paths = op.exact_sampler(rng, n, grid.points)
    else:
        depth, rho = kl_truncation_depth(op, tail_fraction, cap_factor * grid.m)
        basis = np.stack(
            [op.eigenfunction(k, grid.points) for k in range(1, depth + 1)], axis=1
        )
        scores = rng.standard_normal((n, depth)) * np.sqrt(rho)
        paths = scores @ basis.T
    noise = rng.standard_normal((n, grid.m)) * math.sqrt(sigma2) if sigma2 > 0 else 0.0
    mean = np.zeros(grid.m) if mu is None else np.asarray(mu(grid.points), dtype=float)
    return FunctionalSample(grid, mean + paths + noise, noise_var=sigma2, mean=mean)


def scaled_sample_covariance(sample: FunctionalSample) -> SymmetricMatrix:
    """1/m times the sample covariance of the observation rows."""
    cov = sample_covariance(SampleMatrix(sample.observations))
    return SymmetricMatrix(cov.entries / sample.m)


def integer_root(m: int, exponent: float) -> int:
    """Largest integer c with c**exponent <= m, robust to float rounding."""
    c = max(int(m ** (1.0 / exponent)), 1)
    while (c + 1) ** exponent <= m * (1.0 + 1e-9):
        c += 1
    while c > 1 and c**exponent > m * (1.0 + 1e-9):
        c -= 1
    return c


@dataclass(frozen=True)
class ApproximationReport:
    """Deviations of the discretized operator from its exact eigenstructure."""

    m: int
    depth: int
    eigenvalue_deviation: float
    trace_deviation: float
    eigenvector_deviation: float
    eigenvector_cap: int
    rate_exponent: float
    validity_ok: bool
    eigenvalue_envelope: float
    trace_envelope: float
    eigenvector_extra_rate_form: float
    eigenvector_extra_count_form: float


def approximation_report(
    op: CovarianceOperator,
    grid: DesignGrid,
    depth: int,
    op_consts: OperatorConstants = DEFAULT_OPERATOR_CONSTANTS,
) -> ApproximationReport:
    """Compare the discretized matrix's spectrum to the operator's exact one.

    Eigenvector deviations are measured sign-aligned, only up to the index cap
    m^(1/(beta1+gamma1)) inside which the approximation theory applies.  When
    the small-mesh validity condition fails the report flags it and the
    deviations are still computed.
    """
    if depth > grid.m:
        raise ValueError("depth cannot exceed the number of grid points")
    m = grid.m
    d = op.decay
    rate = d.approx_rate
    kmat = discretize(op, grid)
    dec = eigh(kmat)
    rho = op.eigenvalues(depth)
    eig_dev = float(np.abs(dec.eigenvalues[:depth] - rho).max())
    trace_dev = abs(float(dec.eigenvalues.sum()) - op.rho0)
    cap = integer_root(m, d.beta1 + d.gamma1)
    kv = min(depth, cap)
    vec_dev = 0.0
    for k in range(1, kv + 1):
        phi = phi_vector(op, k, grid)
        psi = align_sign(dec.vector(k), phi)
        vec_dev = max(vec_dev, float(np.linalg.norm(psi - phi)))
    c8 = resolve_c8(op, op_consts)
    n_big = math.ceil(m ** (1.0 / (d.beta1 + d.gamma1)))
    return ApproximationReport(
        m=m,
        depth=depth,
        eigenvalue_deviation=eig_dev,
        trace_deviation=trace_dev,
        eigenvector_deviation=vec_dev,
        eigenvector_cap=cap,
        rate_exponent=rate,
        validity_ok=m**rate <= 1.0 / (12.0 * op_consts.c7l),
        eigenvalue_envelope=c8 * m**rate,
        trace_envelope=op_consts.c9l / m,
        eigenvector_extra_rate_form=7.0 * op_consts.c7l * m**rate,
        eigenvector_extra_count_form=7.0 * op_consts.c7l * n_big ** (1.0 + d.gamma1) / m,
    )


def operator_c4(op: CovarianceOperator, formula: str = JUMP_FORMULA) -> float:
    d = op.decay
    denom = d.c2l if formula == JUMP_FORMULA else d.c3l
    if formula not in (JUMP_FORMULA, OPERATOR_FORMULA):
        raise ValueError(f"unknown c4 formula: {formula!r}")
    return 3.0 / denom * d.c1l ** (d.beta3 / d.beta1)


def detect_operator_jump(
    sigma_n: SymmetricMatrix,
    n: int,
    op: CovarianceOperator,
    grid: DesignGrid,
    consts: ConstantsConfig,
) -> JumpDecision:
    """Operator-spectrum jump estimate: the poly-decay rule applied to the
    scaled sample covariance of discretized trajectories."""
    regime = Regime(2)
    eta2 = eta_empirical(sigma_n, n, grid.m, regime, consts)
    c4l = consts.c4l if consts.c4l is not None else operator_c4(op)
    threshold = poly_jump_threshold(eta2, c4l, op.decay.beta1, op.decay.beta3)
    return JumpDecision(scree_count(descending_spectrum(sigma_n), threshold), threshold, regime, POLY_JUMP)


def eta_functional(eta2: float, m: int, op: CovarianceOperator, op_consts: OperatorConstants) -> float:
    """Envelope for |sample eigenvalue - operator eigenvalue|: the sampling
    noise level plus the discretization rate, jointly scaled by c10l."""
    return op_consts.c10l * (eta2 + m**op.decay.approx_rate)


def operator_selection_threshold(
    eta_f: float, alpha: float, op: CovarianceOperator
) -> float:
    d = op.decay
    return d.c1l * (3.0 * eta_f / (d.c3l * alpha)) ** (d.beta1 / d.beta3) + eta_f


def select_operator_eigen(
    sigma_n: SymmetricMatrix,
    n: int,
    op: CovarianceOperator,
    grid: DesignGrid,
    alpha: float,
    consts: ConstantsConfig,
    op_consts: OperatorConstants = DEFAULT_OPERATOR_CONSTANTS,
) -> SelectionResult:
    """Count of sample eigenpairs certified against the operator's spectrum.

    The eigenvector guarantee only reaches the index cap m^(1/(beta1+gamma1)),
    so the certified set stops there even when the count is larger.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    eta2 = eta_empirical(sigma_n, n, grid.m, Regime(2), consts)
    eta_f = eta_functional(eta2, grid.m, op, op_consts)
    threshold = operator_selection_threshold(eta_f, alpha, op)
    k = scree_count(descending_spectrum(sigma_n), threshold)
    cap = integer_root(grid.m, op.decay.beta1 + op.decay.gamma1)
    certified = tuple(range(1, min(k, cap) + 1))
    return SelectionResult(k, alpha, COMBINED_KEV, certified)


def operator_jump_indices(
    op: CovarianceOperator,
    grid: DesignGrid,
    n: int,
    sigma2: float,
    eta2: float,
    consts: ConstantsConfig,
    op_consts: OperatorConstants = DEFAULT_OPERATOR_CONSTANTS,
    kmax: int = 50,
) -> tuple[int, ...]:
    """Operator-spectrum indices forming a detectable jump: the matrix-level
    condition widened by the discretization envelope and the noise floor."""
    eps = epsilon1(n, consts)
    d = op.decay
    c4l = consts.c4l if consts.c4l is not None else operator_c4(op)
    margin = resolve_c8(op, op_consts) * grid.m**d.approx_rate + sigma2 / grid.m
    ratio = d.beta1 / d.beta3
    lo = (c4l * (1.0 + eps) * eta2) ** ratio + margin + eta2
    hi = (c4l * (1.0 - eps) * eta2) ** ratio - margin - eta2
    rho = np.concatenate([op.eigenvalues(kmax + 1), [0.0]])
    return tuple(s for s in range(1, kmax + 1) if rho[s - 1] >= lo and rho[s] < hi)


def save_functional_sample(sample: FunctionalSample, csv_path: str | Path) -> Path:
    """Write observations as CSV (header = grid points) plus a JSON sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(t)) for t in sample.grid.points])
        for row in sample.observations:
            writer.writerow([repr(float(v)) for v in row])
    sidecar = csv_path.with_suffix(".json")
    meta = {
        "n": sample.n,
        "m": sample.m,
        "noise_var": sample.noise_var,
        "grid": [float(t) for t in sample.grid.points],
        "mean": None if sample.mean is None else [float(v) for v in sample.mean],
    }
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return sidecar


def load_functional_sample(csv_path: str | Path) -> FunctionalSample:
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    points = np.array([float(v) for v in rows[0]])
    obs = np.array([[float(v) for v in row] for row in rows[1:]])
    sidecar = csv_path.with_suffix(".json")
    noise_var, mean = 0.0, None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        noise_var = float(meta.get("noise_var", 0.0))
        mean = None if meta.get("mean") is None else np.asarray(meta["mean"], dtype=float)
    return FunctionalSample(DesignGrid(points), obs, noise_var=noise_var, mean=mean)
