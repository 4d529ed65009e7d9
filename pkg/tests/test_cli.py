"""CLI layer: config merging and validation, regime checks, dispatch,
output files, and the exit-code contract."""

import json
import math

import pytest

from sparse_bbp.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    ConfigError,
    build_parser,
    main,
    parse_config,
    validate_regime,
)


def parse(argv):
    return parse_config(build_parser().parse_args(argv))


def write_config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kw))
    return str(path)


class TestParseConfig:
    def test_minimal_file_fills_defaults(self, tmp_path):
        cfg_path = write_config(
            tmp_path, n=1000, p=0.5, q=0.05, r=1, thetas=[3],
            experiment="recover", trials=5, seed=1,
        )
        config = parse(["recover", "--config", cfg_path])
        assert config.model.n == 1000
        assert config.model.thetas == (3.0,)
        assert config.trials == 5
        assert config.solver.k == 2  # r + 1 for recovery runs
        assert config.solver.tol == 1e-8
        assert config.solver.max_iter == 500
        assert config.epsilon == 0.1
        assert config.workers == 1

    def test_rejects_increasing_thetas(self, tmp_path):
        cfg_path = write_config(
            tmp_path, n=100, p=0.5, q=0.05, r=2, thetas=[2, 3], trials=1
        )
        with pytest.raises(ConfigError, match="non-increasing"):
            parse(["recover", "--config", cfg_path])

    def test_flag_overrides_file(self, tmp_path):
        cfg_path = write_config(
            tmp_path, n=100, p=0.5, q=0.05, r=1, thetas=[3], trials=5
        )
        config = parse(["recover", "--config", cfg_path, "--trials", "10"])
        assert config.trials == 10

    def test_aggregated_error_lists_all_problems(self, tmp_path):
        cfg_path = write_config(tmp_path, bogus_key=1, trials="many", n=50, p=0.5)
        with pytest.raises(ConfigError) as err:
            parse(["recover", "--config", cfg_path])
        text = str(err.value)
        assert "bogus_key" in text
        assert "trials" in text
        assert "missing required field 'q'" in text

    def test_flags_only(self):
        config = parse(
            ["recover", "--n", "500", "--p", "0.5", "--q", "0.1",
             "--r", "1", "--thetas", "3", "--trials", "2", "--seed", "7"]
        )
        assert config.model.seed == 7
        assert config.model.p == 0.5

    def test_per_spike_p_flag(self):
        config = parse(
            ["recover", "--n", "500", "--p", "0.5,0.25", "--q", "0.1",
             "--r", "2", "--thetas", "3,2"]
        )
        assert config.model.p_list == (0.5, 0.25)

    def test_workers_env_default(self, monkeypatch):
        monkeypatch.setenv("SPARSE_BBP_WORKERS", "6")
        config = parse(["recover", "--n", "100", "--p", "0.5", "--q", "0.1",
                        "--r", "1", "--thetas", "3"])
        assert config.workers == 6

    def test_theory_needs_thetas(self):
        with pytest.raises(ConfigError, match="theta"):
            parse(["theory"])

    def test_sweep_needs_grid(self):
        with pytest.raises(ConfigError, match="theta_grid"):
            parse(["sweep", "--n", "100", "--p", "0.5", "--q", "0.1"])


class TestValidateRegime:
    def make(self, n, q, thetas=(3.0,), experiment="recover", epsilon=0.1, p=0.5):
        argv = [experiment, "--n", str(n), "--p", str(p), "--q", str(q),
                "--r", str(len(thetas)), "--epsilon", str(epsilon)]
        if thetas:
            argv += ["--thetas", ",".join(str(t) for t in thetas)]
        if experiment == "sweep":
            argv += ["--theta-grid", "1,2"]
        return parse(argv)

    def test_canonical_regime_no_warning(self):
        n = 4000
        q = math.log(n) ** 2 / n  # tau = log(n) ~ 8.29
        assert validate_regime(self.make(n, q)) == []

    def test_sparse_noise_warning(self):
        warnings = validate_regime(self.make(1000, 0.002))  # tau ~ 0.29
        assert any("tau" in w for w in warnings)

    def test_small_support_warning(self):
        config = self.make(1000, 0.1, p=0.01)  # np = 10
        warnings = validate_regime(config)
        assert any("np" in w for w in warnings)

    def test_detection_epsilon_fatal(self):
        config = self.make(4000, 0.02, thetas=(1.05,), experiment="detect", epsilon=0.1)
        # 2.1 >= 1.05 + 1/1.05 ~ 2.0024
        with pytest.raises(ConfigError, match="threshold"):
            validate_regime(config)

    def test_subcritical_detection_warns_not_fatal(self):
        config = self.make(4000, 0.02, thetas=(0.5,), experiment="detect")
        warnings = validate_regime(config)
        assert any("supercritical" in w for w in warnings)


class TestDispatch:
    def test_theory_prints_json(self, capsys):
        code = main(["theory", "--thetas", "3"])
        assert code == EXIT_OK
        out = capsys.readouterr().out.strip()
        payload = json.loads(out)
        assert payload["theta"] == 3.0
        assert payload["lambda"] == pytest.approx(10.0 / 3.0)
        assert payload["overlap"] == pytest.approx(8.0 / 9.0)

    def test_recover_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "camp"
        code = main(
            ["recover", "--n", "250", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "3", "--trials", "2", "--seed", "3", "--out", str(out)]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert manifest["schema_version"] == 1
        assert manifest["config"]["model"]["n"] == 250
        csv_lines = (out / "campaign.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "trial,quantity,index_i,index_j,observed,predicted,deviation"
        assert (out / "records" / "trial_00000.json").exists()
        err = capsys.readouterr().err
        assert "recover" in err

    def test_simulate_store_vectors(self, tmp_path):
        out = tmp_path / "sim"
        code = main(
            ["simulate", "--n", "200", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "3", "--trials", "1", "--out", str(out), "--store-vectors"]
        )
        assert code == EXIT_OK
        record = json.loads((out / "records" / "trial_00000.json").read_text())
        assert "eigenvectors" in record["record"]
        assert len(record["record"]["eigenvectors"][0]) == 200

    def test_esd_outputs(self, tmp_path):
        out = tmp_path / "esd"
        code = main(
            ["esd", "--n", "400", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "3", "--out", str(out), "--bins", "24", "--epsilon", "0.2"]
        )
        assert code == EXIT_OK
        hist = (out / "histogram.csv").read_text().strip().split("\n")
        assert hist[0] == "bin_left,bin_right,count,semicircle_density"
        assert len(hist) == 25
        manifest = json.loads((out / "manifest.json").read_text())
        assert "ks_statistic" in manifest["aggregates"]
        assert manifest["aggregates"]["outliers_predicted"] == [pytest.approx(10 / 3)]
        assert len(manifest["config_hash"]) == 16

    def test_locallaw_outputs(self, tmp_path):
        out = tmp_path / "ll"
        code = main(
            ["locallaw", "--n", "500", "--p", "0.5", "--q", "0.15", "--r", "0",
             "--out", str(out), "--z", "3.0", "--indices", "10"]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["aggregates"]["max_deviation"] < 0.2
        lines = (out / "campaign.csv").read_text().strip().split("\n")
        assert len(lines) == 11

    def test_support_and_norm(self, tmp_path):
        for sub in ("support", "norm"):
            out = tmp_path / sub
            code = main(
                [sub, "--n", "2000", "--p", "0.25", "--q", "0.01", "--r", "1",
                 "--thetas", "3", "--trials", "20", "--out", str(out)]
            )
            assert code == EXIT_OK
            manifest = json.loads((out / "manifest.json").read_text())
            assert manifest["status"] == "complete"

    def test_sweep_outputs(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(
            ["sweep", "--n", "250", "--p", "0.5", "--q", "0.1",
             "--theta-grid", "1.5,3", "--trials", "2", "--out", str(out)]
        )
        assert code == EXIT_OK
        lines = (out / "sweep.csv").read_text().strip().split("\n")
        assert lines[0] == "theta,mean_overlap_sq,std_overlap_sq,predicted_overlap_sq,trials"
        assert len(lines) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert len(manifest["aggregates"]["rows"]) == 2


class TestExitCodes:
    def test_config_error_is_1(self, capsys):
        assert main(["recover", "--n", "100"]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_subcommand_is_1(self, capsys):
        assert main(["frobnicate"]) == EXIT_CONFIG

    def test_solver_failure_is_2(self, tmp_path, capsys):
        code = main(
            ["recover", "--n", "300", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "3", "--trials", "1", "--max-iter", "1",
             "--tol", "1e-14", "--out", str(tmp_path / "x")]
        )
        assert code == EXIT_SOLVER
        assert "solver failure" in capsys.readouterr().err

    def test_unwritable_output_dir_is_3(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        code = main(
            ["recover", "--n", "200", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "3", "--trials", "1", "--out", str(blocker / "sub")]
        )
        assert code == EXIT_IO
        assert "i/o failure" in capsys.readouterr().err

    def test_detection_epsilon_fatal_is_1(self, capsys):
        code = main(
            ["detect", "--n", "500", "--p", "0.5", "--q", "0.1", "--r", "1",
             "--thetas", "1.05", "--epsilon", "0.1", "--out", "/tmp/unused"]
        )
        assert code == EXIT_CONFIG

    def test_help_is_0(self):
        assert main(["--help"]) == EXIT_OK
