"""End-to-end command tests: artifacts, exit codes, reproducibility."""

import json
from pathlib import Path

import pytest

from rsjd import cli
from rsjd.config import load, resolve
from rsjd.errors import ConfigError

APP1 = """
[run]
preset = "application1"
master_seed = 2024
n_paths = 1500

[grid]
horizon = 1.0
n_steps = 50

[chain]
rates = [[-1.0, 1.0], [1.0, -1.0]]
initial_state = 1

[application1]
c1 = [-1.0, 0.0]
c2 = [0.0, -0.5]
c3 = [0.0, 1.0]
c4 = [0.5, 1.0]
sigma = 1.0
"""

APP2 = """
[run]
preset = "application2"
master_seed = 99
n_paths = 400

[grid]
horizon = 1.0
n_steps = 50

[chain]
rates = [[0.0, 0.0], [0.0, 0.0]]
initial_state = 2

[application2]
x0 = 1.0
sigma = [0.2, 0.3]
c = 0.6931471805599453

[policy]
kind = "constant"
value = 0.0
"""


@pytest.fixture
def app1_config(tmp_path):
    path = tmp_path / "app1.toml"
    path.write_text(APP1)
    return path


@pytest.fixture
def app2_config(tmp_path):
    path = tmp_path / "app2.toml"
    path.write_text(APP2)
    return path


def _run(*argv):
    return cli.main(list(argv))


class TestCommands:
    def test_closed_form_benchmark_row(self, app1_config, tmp_path):
        out = tmp_path / "out"
        assert _run("closed-form", "--config", str(app1_config), "--out", str(out)) == 0
        lines = (out / "closed_form.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        assert lines[1] == "t,regime,gamma,u_star"
        t0_regime1 = lines[2].split(",")
        assert float(t0_regime1[0]) == 0.0
        assert int(t0_regime1[1]) == 1
        assert float(t0_regime1[2]) == pytest.approx(1.0, abs=1e-12)
        assert float(t0_regime1[3]) == pytest.approx(0.5, abs=1e-12)

    def test_evaluate_zero_policy_is_exactly_zero(self, tmp_path):
        config = tmp_path / "cfg.toml"
        config.write_text(APP1 + '\n[policy]\nkind = "constant"\nvalue = 0.0\n')
        out = tmp_path / "out"
        assert _run("evaluate", "--config", str(config), "--out", str(out)) == 0
        record = json.loads((out / "evaluate.json").read_text())
        assert record["mean"] == 0.0
        assert record["se"] == 0.0
        assert record["name"] == "J"
        assert record["n"] == 1500

    def test_verify_passes_at_optimal_control(self, app1_config, tmp_path):
        out = tmp_path / "out"
        assert _run("verify-stationarity", "--config", str(app1_config), "--out", str(out)) == 0
        payload = json.loads((out / "stationarity.json").read_text())
        assert payload["verdict"] == "PASS"
        assert all(b["ok"] for b in payload["buckets"])

    def test_verify_fails_at_distorted_control(self, tmp_path):
        config = tmp_path / "cfg.toml"
        config.write_text(APP1 + '\n[policy]\nkind = "scaled-optimal"\nscale = 1.5\n')
        out = tmp_path / "out"
        assert _run("verify-stationarity", "--config", str(config), "--out", str(out)) == 1
        payload = json.loads((out / "stationarity.json").read_text())
        assert payload["verdict"] == "FAIL"

    def test_sweep_artifact_schema(self, app1_config, tmp_path):
        out = tmp_path / "out"
        assert _run("sweep", "--config", str(app1_config), "--out", str(out)) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[1] == "delta,J,se"
        deltas = [float(line.split(",")[0]) for line in lines[2:]]
        assert deltas == [-0.2, -0.1, 0.0, 0.1, 0.2]

    def test_simulate_exports_trajectories(self, app1_config, tmp_path):
        out = tmp_path / "out"
        assert _run("simulate", "--config", str(app1_config), "--out", str(out),
                    "--paths", "20") == 0
        files = sorted(out.glob("trajectory_*.csv"))
        assert len(files) == 10
        lines = files[0].read_text().splitlines()
        assert lines[1] == "t,X,regime"
        first = lines[2].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 0.0
        assert int(first[2]) in (1, 2)
        assert len(lines) == 2 + 51

    def test_bsde_solve_matches_growth_closed_form(self, app2_config, tmp_path):
        out = tmp_path / "out"
        assert _run("bsde-solve", "--config", str(app2_config), "--out", str(out)) == 0
        record = json.loads((out / "bsde.json").read_text())
        assert record["mean"] == pytest.approx(2.0, rel=0.01)
        surface = (out / "y_surface.csv").read_text().splitlines()
        assert surface[1] == "t,X,regime,Y"

    def test_evaluate_app2_reports_recursive_utility(self, app2_config, tmp_path):
        out = tmp_path / "out"
        assert _run("evaluate", "--config", str(app2_config), "--out", str(out)) == 0
        record = json.loads((out / "evaluate.json").read_text())
        assert record["mean"] == pytest.approx(2.0, rel=0.01)


class TestExitCodes:
    def test_unknown_command_exits_2(self, app1_config):
        with pytest.raises(SystemExit) as err:
            cli._parser().parse_args(["frobnicate", "--config", str(app1_config)])
        assert err.value.code == 2

    def test_missing_config_file(self, tmp_path):
        assert _run("evaluate", "--config", str(tmp_path / "nope.toml")) == 2

    def test_unknown_key_named_in_error(self, tmp_path, capsys):
        config = tmp_path / "bad.toml"
        config.write_text(APP1 + "\n[application1x]\nfoo = 1\n")
        assert _run("evaluate", "--config", str(config)) == 2
        assert "application1x" in capsys.readouterr().err

    def test_unknown_key_within_section(self, tmp_path, capsys):
        config = tmp_path / "bad.toml"
        config.write_text(APP1.replace("sigma = 1.0", "sigma = 1.0\nsgima = 2.0"))
        assert _run("evaluate", "--config", str(config)) == 2
        assert "application1.sgima" in capsys.readouterr().err

    def test_closed_form_requires_app1(self, app2_config, tmp_path):
        assert _run("closed-form", "--config", str(app2_config), "--out", str(tmp_path)) == 2

    def test_missing_required_key(self, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text(APP1.replace('c4 = [0.5, 1.0]\n', ""))
        assert _run("evaluate", "--config", str(config)) == 2


class TestReproducibility:
    def _artifact_bytes(self, out: Path) -> dict:
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    def test_identical_config_identical_bytes(self, app1_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert _run("evaluate", "--config", str(app1_config), "--out", str(out)) == 0
            assert _run("sweep", "--config", str(app1_config), "--out", str(out)) == 0
        assert self._artifact_bytes(a) == self._artifact_bytes(b)

    def test_thread_count_does_not_change_bytes(self, app1_config, tmp_path):
        a, b = tmp_path / "t1", tmp_path / "t4"
        assert _run("evaluate", "--config", str(app1_config), "--out", str(a),
                    "--threads", "1") == 0
        assert _run("evaluate", "--config", str(app1_config), "--out", str(b),
                    "--threads", "4") == 0
        rec_a = json.loads((a / "evaluate.json").read_text())
        rec_b = json.loads((b / "evaluate.json").read_text())
        assert rec_a["mean"] == rec_b["mean"] and rec_a["se"] == rec_b["se"]

    def test_seed_override_changes_results_and_hash(self, app1_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run("evaluate", "--config", str(app1_config), "--out", str(a)) == 0
        assert _run("evaluate", "--config", str(app1_config), "--out", str(b),
                    "--seed", "777") == 0
        rec_a = json.loads((a / "evaluate.json").read_text())
        rec_b = json.loads((b / "evaluate.json").read_text())
        assert rec_a["config_hash"] != rec_b["config_hash"]
        assert rec_a["mean"] != rec_b["mean"]

    def test_hash_stamp_consistent_across_artifacts(self, app1_config, tmp_path):
        out = tmp_path / "out"
        assert _run("evaluate", "--config", str(app1_config), "--out", str(out)) == 0
        assert _run("closed-form", "--config", str(app1_config), "--out", str(out)) == 0
        rec = json.loads((out / "evaluate.json").read_text())
        csv_hash = (out / "closed_form.csv").read_text().splitlines()[0].split("=")[1]
        assert rec["config_hash"] == csv_hash


class TestConfigResolution:
    def test_defaults_filled(self, app1_config):
        cfg = load(app1_config)
        assert cfg.section("verify")["n_buckets"] == 16
        assert cfg.section("derivative")["bump"] == 1e-3

    def test_override_preserves_unrelated_fields(self, app1_config):
        from rsjd.config import override

        cfg = load(app1_config)
        cfg2 = override(cfg, n_paths=22, seed=5)
        assert cfg2.n_paths == 22 and cfg2.seed == 5
        assert cfg2.section("application1") == cfg.section("application1")

    def test_bad_preset_rejected(self):
        with pytest.raises(ConfigError):
            resolve({"run": {"preset": "application9", "master_seed": 1, "n_paths": 1},
                     "grid": {"horizon": 1.0, "n_steps": 2},
                     "chain": {"rates": [[0.0, 0.0], [0.0, 0.0]]}})
