"""Experiment configuration: a single JSON document, with CLI flags overriding keys."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..estimate import ConstantsConfig
from ..fpca import (
    CovarianceOperator,
    DesignGrid,
    OperatorConstants,
    brownian_bridge,
    brownian_motion,
    planted_jump_operator,
    uniform_grid,
)
from ..models import (
    FactorParams,
    PolyDecayParams,
    PopulationModel,
    build_explicit,
    build_factor,
    build_poly_decay,
    identity_model,
)

OUTPUT_ENV_VAR = "SPECTRAL_SCREENER_OUT"

EXPERIMENTS = (
    "NormBounds",
    "TraceBound",
    "EffRankBound",
    "JumpMinimal",
    "JumpPoly",
    "EigenvalueSelect",
    "EigenvectorCertify",
    "CombinedPoly",
    "FpcaApprox",
    "FpcaJump",
    "FpcaSelect",
    "Calibrate",
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    n_list: tuple[int, ...] = ()
    m_list: tuple[int, ...] = ()
    reps: int = 1
    base_seed: int = 0
    alpha: float = 0.3
    regime: int = 2
    gamma: float = 2.0
    constants: dict | str | None = None
    operator_constants: dict | None = None
    output_dir: str = "out"
    workers: int | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not self.n_list and self.experiment not in ("FpcaApprox",):
            raise ConfigError("n_list must be nonempty")
        if self.regime not in (1, 2):
            raise ConfigError("regime must be 1 or 2")
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV_VAR, self.output_dir))

    def run_id(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model,
            "n_list": list(self.n_list),
            "m_list": list(self.m_list),
            "reps": self.reps,
            "base_seed": self.base_seed,
            "alpha": self.alpha,
            "regime": self.regime,
            "gamma": self.gamma,
            "constants": self.constants,
            "operator_constants": self.operator_constants,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "options": self.options,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("n_list", "m_list"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def resolve_constants(config: ExperimentConfig) -> ConstantsConfig:
    """Constants from the config: inline values, a calibration sidecar
    reference 'calibrated:<run-id>', or defaults."""
    spec = config.constants
    if spec is None:
        return ConstantsConfig()
    if isinstance(spec, dict):
        return ConstantsConfig.from_dict(spec)
    if isinstance(spec, str) and spec.startswith("calibrated:"):
        run_id = spec.split(":", 1)[1]
        from .calibrate import load_constants

        consts = load_constants(config.resolved_output_dir(), run_id)
        if consts is None:
            raise ConfigError(f"no calibration sidecar for run id {run_id!r}")
        return consts
    raise ConfigError(f"cannot interpret constants spec {spec!r}")


def resolve_operator_constants(config: ExperimentConfig) -> OperatorConstants:
    if config.operator_constants is None:
        return OperatorConstants()
    return OperatorConstants.from_dict(config.operator_constants)


def planted_poly_spectrum(p: int, head: int, floor: float) -> np.ndarray:
    k = np.arange(1, p + 1, dtype=float)
    lam = k ** (-2.0)
    lam[head:] = floor
    return lam


def build_model(spec: dict) -> PopulationModel:
    """Construct the ground-truth model a config's ``model`` block describes."""
    if not spec or "kind" not in spec:
        raise ConfigError("model spec needs a 'kind'")
    kind = spec["kind"]
    try:
        if kind == "identity":
            return identity_model(int(spec["p"]))
        if kind == "explicit":
            if "eigenvalues" in spec:
                lam = np.asarray(spec["eigenvalues"], dtype=float)
            elif spec.get("spectrum_rule") == "poly":
                k = np.arange(1, int(spec["p"]) + 1, dtype=float)
                lam = float(spec.get("c", 1.0)) * k ** (-float(spec.get("beta", 2.0)))
            else:
                raise ConfigError("explicit model needs 'eigenvalues' or spectrum_rule='poly'")
            return build_explicit(lam, rotation_seed=spec.get("rotation_seed"))
        if kind == "planted_poly":
            lam = planted_poly_spectrum(
                int(spec["p"]), int(spec.get("head", 5)), float(spec.get("floor", 1e-6))
            )
            return build_explicit(lam, rotation_seed=spec.get("rotation_seed"))
        if kind == "factor":
            params = FactorParams(
                p=int(spec["p"]),
                r=int(spec["r"]),
                factor_strengths=tuple(spec["strengths"]),
                noise_var=float(spec.get("noise_var", 0.0)),
                loading_seed=int(spec.get("loading_seed", 0)),
            )
            return build_factor(params)
        if kind == "poly_decay":
            params = poly_params_from_spec(spec)
            return build_poly_decay(params)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad model spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def poly_params_from_spec(spec: dict) -> PolyDecayParams:
    return PolyDecayParams(
        p=int(spec["p"]),
        beta1=float(spec.get("beta1", 2.0)),
        beta2=float(spec.get("beta2", spec.get("beta1", 2.0))),
        beta3=float(spec.get("beta3", 3.0)),
        c1l=float(spec.get("c1l", 1.0)),
        c2l=float(spec.get("c2l", 1.0)),
        c3l=float(spec.get("c3l", 0.75)),
        rotation_seed=spec.get("rotation_seed"),
    )


def build_operator(spec: dict) -> CovarianceOperator:
    name = spec.get("name")
    if name == "brownian_motion":
        return brownian_motion()
    if name == "brownian_bridge":
        return brownian_bridge()
    if name == "planted_jump":
        return planted_jump_operator(
            head_count=int(spec.get("head_count", 4)), drop=float(spec.get("drop", 1e-4))
        )
    raise ConfigError(f"unknown operator {name!r}")


def build_grid(spec: dict, m: int) -> DesignGrid:
    kind = (spec or {}).get("grid_kind", "midpoint")
    try:
        return uniform_grid(m, kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
