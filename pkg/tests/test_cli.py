import numpy as np
import pytest

from ehsoc.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, ConfigError,
                       ExperimentConfig, main, parse_config)

SMALL = """
# compact configuration for tests
beta_nl = 1.5
e_max = 30
b_max = 12
arrival_mean = 5.0
channel_mean = 1.4
h_max = 4
lambda_snr = 0.1
iota_steps = 1
full_iota_steps = 3
sweep_emax = 20,30
seed = 7
sim_slots = 20000
trace_stride = 500
"""


@pytest.fixture()
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


class TestConfigParsing:
    def test_round_trip(self, small_cfg):
        cfg = parse_config(small_cfg)
        assert cfg.e_max == 30
        assert cfg.sweep_emax == (20, 30)
        assert cfg.seed == 7
        assert cfg.drain_mode == "split"

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("volts = 12\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(p)

    def test_bad_value(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("e_max = plenty\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(p)

    def test_missing_equals(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("e_max 30\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "nope.cfg")

    def test_validation_messages(self):
        cfg = ExperimentConfig(beta_nl=0.9)
        with pytest.raises(ConfigError, match="beta_nl"):
            cfg.validate()
        cfg = ExperimentConfig(arrival_mean=60.0)
        with pytest.raises(ConfigError, match="arrival_mean"):
            cfg.validate()
        cfg = ExperimentConfig(experiment="simulate", seed=None)
        with pytest.raises(ConfigError, match="seed"):
            cfg.validate()


class TestExitCodes:
    def test_config_error_exit(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("e_max = -1\n")
        assert main(["--config", str(p)]) == EXIT_CONFIG

    def test_simulate_without_seed_exit(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("e_max = 10\nb_max = 4\narrival_mean = 2\nbeta_nl = 2.0\n")
        rc = main(["--config", str(p), "--experiment", "simulate",
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_CONFIG

    def test_solver_failure_exit(self, small_cfg, tmp_path):
        cfg_text = small_cfg.read_text() + "solver_max_iter = 2\n"
        p = tmp_path / "hard.cfg"
        p.write_text(cfg_text)
        rc = main(["--config", str(p), "--experiment", "solve",
                   "--out", str(tmp_path / "o")])
        assert rc == EXIT_SOLVER


class TestSolveOutputs:
    def test_summary_and_policies(self, small_cfg, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["--config", str(small_cfg), "--experiment", "solve",
                   "--out", str(out)])
        assert rc == EXIT_OK
        lines = (out / "summary.csv").read_text().splitlines()
        assert lines[0] == "policy,gain,ratio_to_op"
        names = [l.split(",")[0] for l in lines[1:]]
        assert names == ["OP", "OP-IDEAL-on-real", "OP-IDEAL-on-ideal", "GP"]
        op_gain = float(lines[1].split(",")[1])
        gp_gain = float(lines[4].split(",")[1])
        assert 0 < gp_gain <= op_gain
        assert "ratio_to_op" in capsys.readouterr().out
        pol = (out / "op_policy.csv").read_text().splitlines()
        assert pol[0] == "e,h,rho,iota"
        assert len(pol) == 1 + 31 * 5

    def test_policy_idle_at_zero_gain(self, small_cfg, tmp_path):
        out = tmp_path / "out"
        main(["--config", str(small_cfg), "--experiment", "solve",
              "--out", str(out)])
        rows = [l.split(",") for l in
                (out / "op_policy.csv").read_text().splitlines()[1:]]
        for e, h, rho, iota in rows:
            if int(h) == 0 and int(e) < 30:
                assert rho == "0" and iota == "0.000000"


class TestEvaluateOutputs:
    def test_steady_state_columns_sum_to_one(self, small_cfg, tmp_path):
        out = tmp_path / "out"
        rc = main(["--config", str(small_cfg), "--experiment", "evaluate",
                   "--out", str(out)])
        assert rc == EXIT_OK
        rows = np.loadtxt(out / "steady_state.csv", delimiter=",", skiprows=1)
        assert rows.shape == (31, 4)
        np.testing.assert_allclose(rows[:, 1:].sum(axis=0), 1.0, atol=1e-6)
        ev = np.loadtxt(out / "eval_op.csv", delimiter=",", skiprows=1)
        assert ev[:, 1].sum() == pytest.approx(1.0, abs=1e-6)


class TestSweep:
    def test_workers_do_not_change_bytes(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        assert main(["--config", str(small_cfg), "--experiment", "sweep-emax",
                     "--out", str(out1), "--workers", "1"]) == EXIT_OK
        assert main(["--config", str(small_cfg), "--experiment", "sweep-emax",
                     "--out", str(out2), "--workers", "2"]) == EXIT_OK
        a = (out1 / "throughput_sweep.csv").read_bytes()
        b = (out2 / "throughput_sweep.csv").read_bytes()
        assert a == b
        header = a.decode().splitlines()[0]
        assert header == "e_max,g_op,g_opideal_real,g_opideal_ideal,variant"


class TestFiguresData:
    def test_outputs_and_round_trip(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "f1", tmp_path / "f2"
        assert main(["--config", str(small_cfg),
                     "--experiment", "figures-data",
                     "--out", str(out1)]) == EXIT_OK
        assert main(["--config", str(small_cfg),
                     "--experiment", "figures-data",
                     "--out", str(out2)]) == EXIT_OK
        expected = ["policy_surface.csv", "steady_state.csv",
                    "throughput_sweep.csv", "splitting_surface.csv",
                    "summary.csv"]
        for name in expected:
            assert (out1 / name).exists(), name
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        head = (out1 / "splitting_surface.csv").read_text().splitlines()[0]
        assert head == "e,h,iota"
        sweep = (out1 / "throughput_sweep.csv").read_text().splitlines()
        variants = {l.rsplit(",", 1)[1] for l in sweep[1:]}
        assert variants == {"iota0", "full"}


class TestSimulateExperiment:
    def test_outputs(self, small_cfg, tmp_path):
        out = tmp_path / "out"
        rc = main(["--config", str(small_cfg), "--experiment", "simulate",
                   "--out", str(out)])
        assert rc == EXIT_OK
        lines = (out / "sim_summary.csv").read_text().splitlines()
        assert lines[0] == "policy,analytic_g,empirical_g,slots,seed,occupancy_tv"
        assert len(lines) == 3
        trace = (out / "sim_op_trace.csv").read_text().splitlines()
        assert trace[0] == "slot,e,h,rho,iota,reward"
        assert len(trace) == 1 + 20000 // 500

    def test_seed_override_changes_trace(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["--config", str(small_cfg), "--experiment", "simulate",
              "--out", str(out1)])
        main(["--config", str(small_cfg), "--experiment", "simulate",
              "--out", str(out2), "--seed", "99"])
        assert (out1 / "sim_op_trace.csv").read_bytes() != \
            (out2 / "sim_op_trace.csv").read_bytes()
