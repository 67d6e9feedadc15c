"""Shared fixtures: calibrated constants and the heavyweight Monte Carlo runs.

Calibration and each reference experiment run once per session; module tests
and the acceptance suite read the same results.  Calibration output is cached
on disk (keyed by the recipe) so repeated local test runs skip the ~2 minute
fit; delete .calibration-cache.json to force a refit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from spectral_screener.estimate import ConstantsConfig
from spectral_screener.fpca import OperatorConstants
from spectral_screener.harness.calibrate import default_calibration
from spectral_screener.harness.config import ExperimentConfig
from spectral_screener.harness.runner import RunResult, run

CACHE_PATH = Path(__file__).resolve().parent.parent / ".calibration-cache.json"
ACCEPTANCE_LOG: list[str] = []


@dataclass(frozen=True)
class Calibration:
    constants: ConstantsConfig
    operator_constants: OperatorConstants
    run_id: str


@pytest.fixture(scope="session")
def calibration(tmp_path_factory) -> Calibration:
    if CACHE_PATH.exists():
        payload = json.loads(CACHE_PATH.read_text())
        return Calibration(
            ConstantsConfig.from_dict(payload["constants"]),
            OperatorConstants.from_dict(payload["operator_constants"]),
            payload["run_id"],
        )
    outdir = tmp_path_factory.mktemp("calibration")
    consts, op_consts, run_id = default_calibration(output_dir=outdir)
    CACHE_PATH.write_text(
        json.dumps(
            {
                "constants": consts.to_dict(),
                "operator_constants": op_consts.to_dict(),
                "run_id": run_id,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return Calibration(consts, op_consts, run_id)


@dataclass(frozen=True)
class TimedRun:
    result: RunResult
    elapsed: float


def _timed_run(config: ExperimentConfig) -> TimedRun:
    start = time.time()
    result = run(config)
    return TimedRun(result, time.time() - start)


@pytest.fixture(scope="session")
def results_dir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("results")


@pytest.fixture(scope="session")
def poly_model_spec() -> dict:
    return {
        "kind": "poly_decay",
        "p": 100,
        "beta1": 2.0,
        "beta2": 2.0,
        "beta3": 3.0,
        "c1l": 1.0,
        "c2l": 1.0,
        "c3l": 0.75,
    }


@pytest.fixture(scope="session")
def trace_bound_run(calibration, results_dir) -> TimedRun:
    """500 trials of the trace deviation bound at n=4000 on the k^-2 spectrum."""
    return _timed_run(
        ExperimentConfig(
            experiment="TraceBound",
            model={"kind": "explicit", "spectrum_rule": "poly", "beta": 2.0, "p": 100},
            n_list=(4000,),
            reps=500,
            base_seed=1_000,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
            options={"figures": False},
        )
    )


@pytest.fixture(scope="session")
def norm_rates_run(calibration, results_dir) -> TimedRun:
    """Norm bounds and the operator-error decay over n in {400, 1600, 6400}."""
    return _timed_run(
        ExperimentConfig(
            experiment="NormBounds",
            model={"kind": "explicit", "spectrum_rule": "poly", "beta": 2.0, "p": 100},
            n_list=(400, 1600, 6400),
            reps=200,
            base_seed=2_000,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
        )
    )


@pytest.fixture(scope="session")
def factor_jump_run(calibration, results_dir) -> TimedRun:
    """Factor-model jump detection: p=500, n=200, three factors."""
    return _timed_run(
        ExperimentConfig(
            experiment="JumpMinimal",
            model={
                "kind": "factor",
                "p": 500,
                "r": 3,
                "strengths": [3.0, 2.0, 1.0],
                "noise_var": 1.0,
                "loading_seed": 11,
            },
            n_list=(200,),
            reps=200,
            base_seed=3_000,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
        )
    )


@pytest.fixture(scope="session")
def planted_matrix_jump_run(calibration, results_dir, poly_model_spec) -> TimedRun:
    """Poly-decay jump rule on the planted spectrum k^-2 (k <= 5) then 1e-6."""
    consts = dict(calibration.constants.to_dict())
    consts["c4l"] = 3.0
    return _timed_run(
        ExperimentConfig(
            experiment="JumpPoly",
            model={"kind": "planted_poly", "p": 100, "head": 5, "floor": 1e-6},
            n_list=(10_000,),
            reps=200,
            base_seed=4_000,
            constants=consts,
            output_dir=str(results_dir),
            options={"target_s": 5, "poly": dict(poly_model_spec), "figures": False},
        )
    )


@pytest.fixture(scope="session")
def eigen_select_run(calibration, results_dir, poly_model_spec) -> TimedRun:
    return _timed_run(
        ExperimentConfig(
            experiment="EigenvalueSelect",
            model=dict(poly_model_spec),
            n_list=(10_000,),
            reps=200,
            base_seed=5_000,
            alpha=0.3,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
            options={"figures": False},
        )
    )


@pytest.fixture(scope="session")
def certify_run(calibration, results_dir, poly_model_spec) -> TimedRun:
    return _timed_run(
        ExperimentConfig(
            experiment="EigenvectorCertify",
            model=dict(poly_model_spec),
            n_list=(10_000,),
            reps=200,
            base_seed=6_000,
            alpha=0.3,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
            options={"figures": False},
        )
    )


@pytest.fixture(scope="session")
def combined_poly_run(calibration, results_dir, poly_model_spec) -> TimedRun:
    return _timed_run(
        ExperimentConfig(
            experiment="CombinedPoly",
            model=dict(poly_model_spec),
            n_list=(10_000,),
            reps=200,
            base_seed=7_000,
            alpha=0.5,
            constants=calibration.constants.to_dict(),
            output_dir=str(results_dir),
            options={"figures": False},
        )
    )


@pytest.fixture(scope="session")
def fpca_approx_run(calibration, results_dir) -> TimedRun:
    """Deterministic discretization rates on the endpoint grid t_j = j/m."""
    return _timed_run(
        ExperimentConfig(
            experiment="FpcaApprox",
            model={"kind": "operator", "name": "brownian_motion"},
            n_list=(2,),
            m_list=(64, 256, 1024),
            reps=1,
            base_seed=0,
            constants=calibration.constants.to_dict(),
            operator_constants=calibration.operator_constants.to_dict(),
            output_dir=str(results_dir),
            options={"grid_kind": "right", "depth": 10},
        )
    )


@pytest.fixture(scope="session")
def fpca_jump_run(calibration, results_dir) -> TimedRun:
    consts = dict(calibration.constants.to_dict())
    consts["c4l"] = 3.0
    return _timed_run(
        ExperimentConfig(
            experiment="FpcaJump",
            model={"kind": "operator", "name": "planted_jump", "head_count": 4, "noise_var": 0.01},
            n_list=(10_000,),
            m_list=(500,),
            reps=100,
            base_seed=8_000,
            constants=consts,
            operator_constants=calibration.operator_constants.to_dict(),
            output_dir=str(results_dir),
            options={"target_s": 4},
        )
    )


@pytest.fixture(scope="session")
def fpca_select_run(calibration, results_dir) -> TimedRun:
    return _timed_run(
        ExperimentConfig(
            experiment="FpcaSelect",
            model={"kind": "operator", "name": "brownian_motion", "noise_var": 0.01},
            n_list=(10_000,),
            m_list=(1000,),
            reps=100,
            base_seed=9_000,
            alpha=0.5,
            constants=calibration.constants.to_dict(),
            operator_constants=calibration.operator_constants.to_dict(),
            output_dir=str(results_dir),
            options={"figures": False},
        )
    )


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LOG


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
