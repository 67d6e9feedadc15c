import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from spectral_screener.estimate import ConstantsConfig
from spectral_screener.harness.calibrate import (
    CalibrationError,
    TrialStats,
    calibrate,
    fit_constants,
    load_constants,
    save_constants,
)
from spectral_screener.harness.cli import main
from spectral_screener.harness.config import (
    ConfigError,
    ExperimentConfig,
    build_model,
    load_config,
)
from spectral_screener.harness.experiments import slope_fit
from spectral_screener.harness.plots import scree_svg
from spectral_screener.harness.report import audit, read_csv, render_csv
from spectral_screener.harness.runner import run
from spectral_screener.models import build_explicit


def small_config(tmp_path, **overrides):
    base = dict(
        experiment="TraceBound",
        model={"kind": "explicit", "spectrum_rule": "poly", "beta": 2.0, "p": 20},
        n_list=(200,),
        reps=25,
        base_seed=17,
        output_dir=str(tmp_path),
        options={"figures": False},
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSlopeFit:
    def test_exact_inverse_law(self):
        xs = np.array([10.0, 100.0, 1000.0])
        slope, intercept, r2 = slope_fit(xs, 1.0 / xs)
        assert slope == pytest.approx(-1.0)
        assert r2 == pytest.approx(1.0)

    def test_constant_series(self):
        slope, _, _ = slope_fit([10.0, 100.0, 1000.0], [2.0, 2.0, 2.0])
        assert slope == pytest.approx(0.0, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            slope_fit([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            slope_fit([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])


class TestCalibration:
    def test_zero_stats_give_zero_constants(self):
        # oracle scenario: the estimate equals the truth in every trial
        model = build_explicit([2.0, 1.0])
        zeros = TrialStats(np.zeros(100), np.zeros(100), np.zeros(100))
        consts = fit_constants(zeros, model, n=400, quantile=0.99)
        assert consts.c1 == 0.0
        assert consts.C == 0.0
        assert consts.extras["c1_frobenius"] == 0.0

    def test_quantile_monotonicity(self):
        model = build_explicit([1.0, 0.5])
        rng = np.random.default_rng(0)
        stats = TrialStats(rng.uniform(0, 1, 500), rng.uniform(0, 1, 500), rng.uniform(0, 1, 500))
        c1s = [fit_constants(stats, model, 400, q).c1 for q in (0.5, 0.9, 0.99, 0.999)]
        assert all(a <= b for a, b in zip(c1s, c1s[1:]))

    def test_sanity_envelope_on_decaying_spectrum(self):
        # 1000 reps support the 1 - 5/250 = 0.98 quantile with 20 exceedances
        model = build_explicit((np.arange(1, 101.0)) ** -2.0)
        consts = calibrate(model, n=250, reps=1000, base_seed=5)
        assert 0.1 <= consts.c1 <= 3.0
        assert consts.C > 0

    def test_guard_rejects_thin_tails(self):
        model = build_explicit([1.0, 0.5])
        with pytest.raises(CalibrationError):
            calibrate(model, n=4000, reps=1000, base_seed=0)

    def test_explicit_quantile_bypasses_guard(self):
        model = build_explicit([1.0, 0.5])
        consts = calibrate(model, n=500, reps=60, base_seed=1, quantile=0.9)
        assert consts.c1 > 0

    def test_sidecar_roundtrip(self, tmp_path):
        consts = ConstantsConfig(C=0.1, c1=0.3, source="calibrated:abc123")
        save_constants(consts, tmp_path, "explicit", 100, 20, "abc123")
        loaded = load_constants(tmp_path, "abc123")
        assert loaded == consts
        assert load_constants(tmp_path, "missing") is None


class TestReports:
    def test_schema_line_and_roundtrip(self, tmp_path):
        result = run(small_config(tmp_path))
        text = result.csv_path.read_text()
        assert text.splitlines()[0] == "# schema=1"
        rows = read_csv(result.csv_path)
        assert len(rows) == 25
        assert {"stat_trace", "bound_trace", "ok_trace"} <= set(rows[0])

    def test_rerun_is_byte_identical(self, tmp_path):
        config = small_config(tmp_path)
        a = run(config)
        first_csv, first_summary = a.csv_path.read_bytes(), a.summary_path.read_bytes()
        b = run(config)
        assert b.csv_path == a.csv_path
        assert b.csv_path.read_bytes() == first_csv
        assert b.summary_path.read_bytes() == first_summary

    def test_different_seed_changes_output(self, tmp_path):
        a = run(small_config(tmp_path / "a"))
        b = run(small_config(tmp_path / "b", base_seed=18))
        assert a.csv_path.read_bytes() != b.csv_path.read_bytes()

    def test_audit_clean_run(self, tmp_path):
        result = run(small_config(tmp_path))
        assert audit(result.csv_path, result.summary_path) == []

    def test_audit_detects_flipped_flag(self, tmp_path):
        result = run(small_config(tmp_path))
        lines = result.csv_path.read_text().splitlines()
        cols = lines[1].split(",")
        idx = cols.index("ok_trace")
        parts = lines[2].split(",")
        parts[idx] = "0" if parts[idx] == "1" else "1"
        lines[2] = ",".join(parts)
        result.csv_path.write_text("\n".join(lines) + "\n")
        findings = audit(result.csv_path, result.summary_path)
        kinds = {f.kind for f in findings}
        assert "flag-mismatch" in kinds
        assert "frequency-mismatch" in kinds

    def test_summary_frequencies_match_flag_means(self, tmp_path):
        result = run(small_config(tmp_path))
        rows = read_csv(result.csv_path)
        mean = sum(r["ok_trace"] for r in rows) / len(rows)
        assert result.summary["frequencies"]["trace"] == mean

    def test_render_csv_requires_consistent_columns(self):
        with pytest.raises(ValueError):
            render_csv([{"a": 1}, {"b": 2}])


class TestScreeSvg:
    def test_structure_four_points_one_line(self):
        doc = scree_svg([4.0, 3.0, 2.0, 1.0], [("tau", 2.5)])
        root = ET.fromstring(doc)  # well-formed XML
        ns = "{http://www.w3.org/2000/svg}"
        assert root.tag == f"{ns}svg"
        assert len(root.findall(f"{ns}circle")) == 4
        assert len(root.findall(f"{ns}line")) == 1

    def test_threshold_count_matches(self):
        doc = scree_svg([4.0, 1.0], [("a", 2.0), ("b", 0.5), ("c", 3.0)])
        root = ET.fromstring(doc)
        assert len(root.findall("{http://www.w3.org/2000/svg}line")) == 3

    def test_empty_and_zero_spectra_rejected(self):
        with pytest.raises(ValueError):
            scree_svg([])
        with pytest.raises(ValueError):
            scree_svg([0.0, 0.0])

    def test_negative_values_clamped_not_crashing(self):
        doc = scree_svg([1.0, 0.0, -0.1])
        assert ET.fromstring(doc) is not None


class TestConfig:
    def test_unknown_experiment_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="Nope", n_list=(10,))

    def test_zero_reps_rejected(self):
        with pytest.raises(ConfigError):
            small_config(Path("."), reps=0)

    def test_empty_n_list_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="TraceBound", model={"kind": "identity", "p": 4}, n_list=())

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"experiment": "TraceBound", "n_list": [10], "bogus": 1}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_model_kind(self):
        with pytest.raises(ConfigError):
            build_model({"kind": "wat"})

    def test_run_id_stable(self, tmp_path):
        a = small_config(tmp_path)
        b = small_config(tmp_path)
        assert a.run_id() == b.run_id()
        assert a.run_id() != small_config(tmp_path, base_seed=99).run_id()


class TestCli:
    def _write_config(self, tmp_path, **overrides):
        cfg = small_config(tmp_path, **overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_dict()))
        return path, cfg

    def test_run_subcommand(self, tmp_path, capsys):
        path, cfg = self._write_config(tmp_path)
        assert main(["run", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out or "FAIL" in out

    def test_run_flag_overrides(self, tmp_path):
        path, _ = self._write_config(tmp_path)
        outdir = tmp_path / "override"
        assert main(["run", "--config", str(path), "--reps", "5", "--out", str(outdir)]) == 0
        csvs = list(outdir.glob("tracebound-*.csv"))
        assert len(csvs) == 1
        assert len(read_csv(csvs[0])) == 5

    def test_env_var_overrides_output_dir(self, tmp_path, monkeypatch):
        path, _ = self._write_config(tmp_path)
        envdir = tmp_path / "from-env"
        monkeypatch.setenv("SPECTRAL_SCREENER_OUT", str(envdir))
        assert main(["run", "--config", str(path)]) == 0
        assert list(envdir.glob("*.csv"))

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad)]) == 2

    def test_assert_failing_criterion_exits_three(self, tmp_path):
        # an impossible frequency target forces a criterion failure
        path, _ = self._write_config(
            tmp_path, options={"figures": False, "freq_slack": -1.0}
        )
        assert main(["run", "--config", str(path)]) == 0
        assert main(["run", "--config", str(path), "--assert"]) == 3

    def test_audit_subcommand(self, tmp_path, capsys):
        result = run(small_config(tmp_path))
        assert (
            main(["audit", "--csv", str(result.csv_path), "--summary", str(result.summary_path)])
            == 0
        )
        assert "audit clean" in capsys.readouterr().out

    def test_audit_assert_on_tampered_csv(self, tmp_path):
        result = run(small_config(tmp_path))
        lines = result.csv_path.read_text().splitlines()
        cols = lines[1].split(",")
        idx = cols.index("ok_trace")
        parts = lines[2].split(",")
        parts[idx] = "0" if parts[idx] == "1" else "1"
        lines[2] = ",".join(parts)
        result.csv_path.write_text("\n".join(lines) + "\n")
        args = ["audit", "--csv", str(result.csv_path), "--summary", str(result.summary_path)]
        assert main(args) == 0
        assert main(args + ["--assert"]) == 3

    def test_plot_subcommand(self, tmp_path):
        cfg = small_config(
            tmp_path,
            experiment="JumpMinimal",
            model={
                "kind": "factor",
                "p": 30,
                "r": 2,
                "strengths": [3.0, 1.5],
                "noise_var": 0.5,
                "loading_seed": 1,
            },
            n_list=(100,),
            reps=4,
            options={"figures": False, "target_s": 2},
        )
        result = run(cfg)
        outdir = tmp_path / "figs"
        assert main(["plot", "--summary", str(result.summary_path), "--out", str(outdir)]) == 0
        assert list(outdir.glob("*-scree.svg"))
        assert list(outdir.glob("*-scree.png"))

    def test_console_script_entrypoint(self):
        proc = subprocess.run(
            [sys.executable, "-m", "spectral_screener.harness.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "run" in proc.stdout and "calibrate" in proc.stdout


class TestFigures:
    def test_run_writes_figures_alongside_csv(self, tmp_path):
        cfg = small_config(
            tmp_path,
            experiment="JumpMinimal",
            model={
                "kind": "factor",
                "p": 30,
                "r": 2,
                "strengths": [3.0, 1.5],
                "noise_var": 0.5,
                "loading_seed": 1,
            },
            n_list=(100,),
            reps=4,
            options={"target_s": 2},
        )
        result = run(cfg)
        suffixes = {p.name.split("-")[-1] for p in result.figure_paths}
        assert "scree.svg" in suffixes and "scree.png" in suffixes
        for path in result.figure_paths:
            assert path.exists() and path.stat().st_size > 0


class TestSamplerOption:
    def test_rotated_subgaussian_sampler_drives_detection(self, tmp_path):
        config = small_config(
            tmp_path,
            experiment="JumpMinimal",
            model={
                "kind": "factor",
                "p": 60,
                "r": 2,
                "strengths": [4.0, 2.0],
                "noise_var": 0.5,
                "loading_seed": 2,
            },
            n_list=(300,),
            reps=10,
            constants={"C": 0.05, "c1": 0.2},
            options={"figures": False, "target_s": 2, "sampler": "rademacher"},
        )
        result = run(config)
        assert result.summary["frequencies"]["detect"] >= 0.9
        assert "class_membership" in result.summary

    def test_unknown_sampler_rejected(self, tmp_path):
        config = small_config(tmp_path, options={"figures": False, "sampler": "cauchy"})
        with pytest.raises(ValueError):
            run(config)


class TestCliCalibrate:
    def test_calibrate_with_config_writes_sidecar(self, tmp_path, capsys):
        cfg = {
            "model": {"kind": "explicit", "spectrum_rule": "poly", "beta": 2.0, "p": 30},
            "n": 200,
            "reps": 60,
            "quantile": 0.9,
            "base_seed": 3,
        }
        path = tmp_path / "cal.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "sidecars"
        assert main(["calibrate", "--config", str(path), "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "c1=" in printed
        loaded = load_constants(out, "explicit-200")
        assert loaded is not None and loaded.c1 > 0

    def test_calibrate_guard_maps_to_config_error(self, tmp_path):
        cfg = {
            "model": {"kind": "explicit", "eigenvalues": [1.0, 0.5]},
            "n": 4000,
            "reps": 100,
        }
        path = tmp_path / "cal.json"
        path.write_text(json.dumps(cfg))
        assert main(["calibrate", "--config", str(path)]) == 2


def test_unwritable_output_dir_is_config_error(tmp_path):
    blocker = tmp_path / "not-a-dir"
    blocker.write_text("file in the way")
    cfg = small_config(tmp_path, output_dir=str(blocker / "sub"))
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert main(["run", "--config", str(path)]) == 2


def test_effrank_experiment_chain_holds(tmp_path, calibration):
    config = small_config(
        tmp_path,
        experiment="EffRankBound",
        model={"kind": "explicit", "spectrum_rule": "poly", "beta": 2.0, "p": 50},
        n_list=(500,),
        reps=50,
        constants=calibration.constants.to_dict(),
    )
    result = run(config)
    # whenever both concentration events hold, the deterministic ratio chain must
    assert result.summary["frequencies"]["chain"] == 1.0
    assert result.summary["chain_applicable_trials"] > 0
    assert result.summary["ratio_error_median"] < 0.5
