from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from oracles import grid_scan_equilibrium

from qfmux.cli import main
from qfmux.sources import REFERENCE_PSNR_PARAMS, SourceParams

DEMO = Path(__file__).resolve().parents[1] / "demos" / "configs"


def _write(tmp_path, doc, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return str(path)


def _streams(params):
    return [{"model": p.model.value, "a1": p.a1, "a2": p.a2} for p in params]


def _yaml_out(capsys):
    return yaml.safe_load(capsys.readouterr().out)


@pytest.fixture
def delay_cfg(tmp_path):
    doc = yaml.safe_load((DEMO / "delay.yaml").read_text())
    doc["output"] = {"out_dir": str(tmp_path / "out")}
    return doc


class TestSimulate:
    def test_rows_and_bundle(self, tmp_path, delay_cfg):
        assert main(["simulate", "--config", _write(tmp_path, delay_cfg)]) == 0
        out = tmp_path / "out"
        with open(out / "timeseries.csv") as fh:
            assert sum(1 for _ in fh) == 300 * 6 + 1
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert summary["seed"] == 0 and "delta_P" in summary["metrics"]

    def test_missing_field(self, tmp_path, delay_cfg, capsys):
        del delay_cfg["channel"]
        assert main(["simulate", "--config", _write(tmp_path, delay_cfg)]) == 2
        assert "channel" in capsys.readouterr().err

    def test_seed_override(self, tmp_path):
        doc = yaml.safe_load((DEMO / "fairness.yaml").read_text())
        doc["horizon"] = 40
        path = _write(tmp_path, doc)

        def series(seed, tag):
            main(["simulate", "--config", path, "--seed", str(seed), "--out-dir", str(tmp_path / tag)])
            return (tmp_path / tag / "timeseries.csv").read_text()

        a, b, c = series(3, "a"), series(3, "b"), series(4, "c")
        assert a == b and a != c
        assert yaml.safe_load((tmp_path / "a" / "summary.yaml").read_text())["seed"] == 3

    def test_policy_override(self, tmp_path, delay_cfg):
        delay_cfg["horizon"] = 20
        path = _write(tmp_path, delay_cfg)
        assert main(["simulate", "--config", path, "--policy", "TRF"]) == 0
        summary = yaml.safe_load((tmp_path / "out" / "summary.yaml").read_text())
        assert summary["config"]["policy"] == "TRF"

    def test_unknown_key_line(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("version: 1\nchannel: 100\nstreams:\n  - {model: LogPSNR, a1: 1, a2: 0.1}\nextra: 1\n")
        assert main(["simulate", "--config", str(path)]) == 2
        assert "line 5" in capsys.readouterr().err


class TestEquilibrium:
    def test_symmetric(self, tmp_path, capsys):
        doc = {"version": 1, "channel": 3000.0, "streams": _streams([REFERENCE_PSNR_PARAMS[2]] * 4)}
        assert main(["equilibrium", "--config", _write(tmp_path, doc)]) == 0
        assert _yaml_out(capsys)["rates"] == pytest.approx([750.0] * 4, rel=1e-12)

    def test_reference_fits_match_grid_scan(self, tmp_path, capsys):
        doc = {"version": 1, "channel": 4000.0, "streams": _streams(REFERENCE_PSNR_PARAMS)}
        assert main(["equilibrium", "--config", _write(tmp_path, doc)]) == 0
        got = _yaml_out(capsys)
        u, r = grid_scan_equilibrium(REFERENCE_PSNR_PARAMS, 4000.0)
        assert np.abs(np.array(got["rates"]) - r).max() < 1e-6
        assert math.fsum(got["rates"]) == pytest.approx(4000.0, rel=1e-9)

    def test_infeasible_atan(self, capsys):
        assert main(["equilibrium", "--config", str(DEMO / "infeasible_ssim.yaml")]) == 3
        assert "cap" in capsys.readouterr().err


class TestStability:
    def test_eigen_csv(self, tmp_path, delay_cfg, capsys):
        assert main(["stability", "--config", _write(tmp_path, delay_cfg)]) == 0
        rep = _yaml_out(capsys)
        assert rep["stable"] and rep["decay_oracle"]
        assert rep["trace_residual"] < 1e-8 and rep["det_residual"] < 1e-8
        with open(tmp_path / "out" / "eigenvalues.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == rep["state_dim"] == 66
        assert sum(int(r["structural"]) for r in rows) == rep["structural_unit_count"]

    def test_zero_gains_not_stable(self, tmp_path, delay_cfg, capsys):
        delay_cfg["gains"] = {"kp_t": 0, "ki_t": 0, "kp_e": 0, "ki_e": 0, "mode": "BufferingDelay"}
        assert main(["stability", "--config", _write(tmp_path, delay_cfg)]) == 0
        assert not _yaml_out(capsys)["stable"]


class TestTuneGains:
    def test_reproducible_and_pipeline(self, tmp_path, delay_cfg, capsys):
        path = _write(tmp_path, delay_cfg)
        args = ["tune-gains", "--config", path, "--budget", "20", "--realizations", "3"]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "gains.yaml").read_text()
        assert a == (tmp_path / "b" / "gains.yaml").read_text()
        doc = yaml.safe_load(a)
        assert len(doc["realizations"]) == 3
        capsys.readouterr()
        # every realization must pass the stability command with the tuned gains
        for k, real in enumerate(doc["realizations"]):
            cfg = dict(delay_cfg, gains=doc["gains"], streams=real,
                       output={"out_dir": str(tmp_path / f"s{k}")})
            assert main(["stability", "--config", _write(tmp_path, cfg, f"s{k}.yaml")]) == 0
            assert _yaml_out(capsys)["stable"]

    def test_zero_budget(self, tmp_path, delay_cfg):
        assert main(["tune-gains", "--config", _write(tmp_path, delay_cfg), "--budget", "0"]) == 4


class TestFitModel:
    def _samples(self, tmp_path, rows):
        path = tmp_path / "s.csv"
        path.write_text("rate,utility\n" + "".join(f"{r!r},{u!r}\n" for r, u in rows))
        return str(path)

    def test_exact_recovery(self, tmp_path, capsys):
        p = SourceParams("LogPSNR", 1.2, 0.15)
        rows = [(r, p.a1 * math.log(p.a2 * r)) for r in (200.0, 500.0, 900.0, 1600.0)]
        assert main(["fit-model", self._samples(tmp_path, rows)]) == 0
        got = _yaml_out(capsys)
        assert got["a1"] == pytest.approx(1.2, rel=1e-10)
        assert got["a2"] == pytest.approx(0.15, rel=1e-10)
        assert got["r2"] == pytest.approx(1.0, abs=1e-12)

    def test_atan_family(self, tmp_path, capsys):
        rows = [(r, 0.6 * math.atan(0.004 * r)) for r in (100.0, 400.0, 800.0, 1500.0)]
        assert main(["fit-model", self._samples(tmp_path, rows), "--family", "AtanSSIM"]) == 0
        got = _yaml_out(capsys)
        assert got["a1"] == pytest.approx(0.6, rel=1e-6) and got["a2"] == pytest.approx(0.004, rel=1e-6)

    def test_too_few_rows(self, tmp_path, capsys):
        assert main(["fit-model", self._samples(tmp_path, [(100.0, 2.0)])]) == 2
        assert "two samples" in capsys.readouterr().err

    def test_bad_column(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("rate,quality\n1,2\n3,4\n")
        assert main(["fit-model", str(path)]) == 2


def test_demo_configs_parse():
    from qfmux.config import load_config

    for path in DEMO.glob("*.yaml"):
        load_config(path)
