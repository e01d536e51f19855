import json

import numpy as np
import pytest

from minimax_gda import cli
from minimax_gda import dynamics as dyn
from minimax_gda import problems as prob


def run_cli(capsys, *args):
    code = cli.main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def instance_file(tmp_path):
    seed = 0
    while True:
        p = prob.sample_instance(4, 4, 100.0, 1.0, seed)
        if prob.derive_constants(p).mu_x > 0.5:
            break
        seed += 1
    path = tmp_path / "inst.json"
    prob.save_instance(p, path)
    return str(path)


@pytest.fixture
def hard_file(tmp_path):
    path = tmp_path / "hard.json"
    prob.save_instance(prob.hard_ratio_instance(2.0, 1.0), path)
    return str(path)


class TestGenerate:
    def test_writes_instance_and_prints_constants(self, tmp_path, capsys):
        out = tmp_path / "a.json"
        code, stdout, _ = run_cli(
            capsys, "generate", "-n", "4", "-m", "4", "-L", "100",
            "--mu", "1", "--seed", "7", "-o", str(out),
        )
        assert code == 0
        assert out.exists()
        assert "kappa=100" in stdout
        loaded = prob.load_instance(out)
        assert prob.validate(loaded).ok

    def test_same_seed_identical_bytes(self, tmp_path, capsys):
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        for p in paths:
            run_cli(capsys, "generate", "-n", "3", "-m", "2", "-L", "10",
                    "--mu", "1", "--seed", "3", "-o", str(p))
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_mu_x_zero_option(self, tmp_path, capsys):
        out = tmp_path / "flat.json"
        code, stdout, _ = run_cli(
            capsys, "generate", "-n", "3", "-m", "3", "-L", "10",
            "--mu", "1", "--seed", "0", "--mu-x-zero", "-o", str(out),
        )
        assert code == 0
        assert "mu_x=0 " in stdout
        loaded = prob.load_instance(out)
        assert abs(prob.derive_constants(loaded).schur_min) <= 1e-9 * loaded.L


class TestInspect:
    def test_below_threshold_flagged(self, hard_file, capsys):
        code, stdout, _ = run_cli(capsys, "inspect", hard_file, "-r", "2")
        assert code == 0
        payload = json.loads(stdout)
        assert payload["rho1"] > 1.0
        assert payload["ratio_class"] == "below_threshold"

    def test_proved_convergent(self, hard_file, capsys):
        code, stdout, _ = run_cli(capsys, "inspect", hard_file, "-r", "4")
        payload = json.loads(stdout)
        assert payload["ratio_class"] == "proved_convergent"
        assert payload["rho1"] <= payload["rho_bound"]
        assert all(c["passed"] for c in payload["lemma_checks"])

    def test_malformed_instance_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{oops")
        code, _, err = run_cli(capsys, "inspect", str(bad), "-r", "2")
        assert code == 1
        assert "error" in err.lower() or "cannot parse" in err

    def test_invalid_instance_names_clauses(self, tmp_path, capsys):
        p = prob.QuadraticProblem(
            A=np.diag([0.5, 2.0]), B=np.zeros((2, 2)), C=np.zeros((2, 2)),
            x_star=np.zeros(2), y_star=np.zeros(2), L=2.0, mu=1.0,
        )
        path = tmp_path / "invalid.json"
        prob.save_instance(p, path)
        code, _, err = run_cli(capsys, "inspect", str(path), "-r", "4")
        assert code == 1
        assert "A_lower" in err


class TestRun:
    def test_converges_at_proved_ratio(self, instance_file, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code, stdout, _ = run_cli(
            capsys, "run", instance_file, "-r", "200", "-T", "2000000",
            "--eps", "1e-6", "-o", str(out),
        )
        assert code == 0
        assert stdout.startswith("converged ")
        lines = out.read_text().splitlines()
        assert lines[0] == "iter,distance,primal_gap"

    def test_expected_divergence_exits_zero(self, hard_file, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code, stdout, _ = run_cli(
            capsys, "run", hard_file, "-r", "1", "-T", "100000", "-o", str(out),
        )
        assert code == 0
        assert stdout.startswith("diverged")

    def test_sgda_sigma_zero_matches_gda(self, instance_file, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(capsys, "run", instance_file, "-r", "200", "-T", "500",
                "--eps", "1e-12", "--seed", "5", "-o", str(a))
        run_cli(capsys, "run", instance_file, "--algorithm", "sgda",
                "--sigma", "0", "--batch", "4", "-r", "200", "-T", "500",
                "--eps", "1e-12", "--seed", "5", "-o", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_eg_converges(self, instance_file, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        code, stdout, _ = run_cli(
            capsys, "run", instance_file, "--algorithm", "eg", "-r", "200",
            "-T", "2000000", "--eps", "1e-6", "-o", str(out),
        )
        assert code == 0
        assert stdout.startswith("converged ")

    def test_sgda_without_sigma_usage_error(self, instance_file, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "run", instance_file, "--algorithm", "sgda", "-r", "200",
            "-o", str(tmp_path / "x.csv"),
        )
        assert code == 1
        assert "sigma" in err


class TestSweep:
    def test_csv_schema_and_determinism(self, instance_file, tmp_path, capsys):
        outs = []
        for name in ("s1.csv", "s2.csv"):
            out = tmp_path / name
            code, _, _ = run_cli(
                capsys, "sweep", instance_file, "--ratios", "200", "400",
                "-T", "20000", "--eps", "1e-4", "--jobs", "2", "-o", str(out),
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        header = outs[0].decode().splitlines()[0]
        assert header.startswith("ratio,seed,algorithm,status")


class TestVerify:
    def test_mux_zero_suite_passes(self, capsys):
        code, stdout, _ = run_cli(
            capsys, "verify", "mux-zero", "--seed", "0", "--budget", "0.2",
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["passed"] is True
        assert payload["suites"][0]["suite"] == "mux-zero"

    def test_corrupted_rate_constant_fails_spectral(self, capsys, monkeypatch):
        # mutation check: corrupting the proved constant tightens the bound
        # past the actual radii, and the suite must catch it
        monkeypatch.setattr(
            dyn.Scheme, "rate_constant",
            property(lambda self: 1e-4), raising=True,
        )
        code, stdout, _ = run_cli(
            capsys, "verify", "spectral", "--budget", "0.1",
        )
        assert code == 2
        payload = json.loads(stdout)
        assert payload["passed"] is False

    def test_unknown_suite_usage_error(self, capsys):
        code, _, _ = run_cli(capsys, "verify", "everything")
        assert code == 1


class TestOutDir:
    def test_relative_paths_resolve_against_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path))
        code, _, _ = run_cli(
            capsys, "generate", "-n", "2", "-m", "2", "-L", "4", "--mu", "1",
            "--seed", "1", "-o", "sub/inst.json",
        )
        assert code == 0
        assert (tmp_path / "sub" / "inst.json").exists()
