import csv
import json

import numpy as np
import pytest

from parisgibbs.cli import main
from parisgibbs.bench import read_iterations_csv, read_records_csv
from parisgibbs.models import DiscreteHmm, Lgssm, StochVol, simulate, write_observations
from parisgibbs.oracles import discrete_enumerated_smoothing, kalman_rts, exact_one_lag_expectation

SEED = 112233


def write_config(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh)
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1]) if out else None


@pytest.fixture
def obs_csv(tmp_path, lgssm):
    _, zs = simulate(lgssm, 12, np.random.default_rng(SEED))
    path = tmp_path / "observations.csv"
    write_observations(path, zs)
    return path


def base_run_config(obs_csv, **overrides):
    payload = {
        "schema": 1,
        "model": "lgssm",
        "params": {},
        "observations": str(obs_csv),
        "n": 10,
        "estimator": "paris",
        "N": 32,
        "replicates": 1,
        "base_seed": SEED,
    }
    payload.update(overrides)
    return payload


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_zero_horizon_single_row(self, tmp_path, capsys):
        config = write_config(
            tmp_path / "sim.json",
            {"schema": 1, "model": "lgssm", "params": {}, "n": 0, "seed": 5},
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "simulate", "--config", config)
        assert code == 0 and out["rows"] == 1
        rows = read_rows(tmp_path / "observations.csv")
        assert rows[0] == ["m", "z"] and len(rows) == 2

    def test_replay_is_bit_identical(self, tmp_path, capsys):
        config = write_config(
            tmp_path / "sim.json",
            {"schema": 1, "model": "stochvol", "params": {}, "n": 25, "seed": 9,
             "output": "record.csv"},
        )
        code, _ = run_cli(capsys, "--outdir", str(tmp_path), "simulate", "--config", config)
        assert code == 0
        first = (tmp_path / "record.csv").read_bytes()
        code, _ = run_cli(capsys, "--outdir", str(tmp_path), "simulate", "--config", config)
        assert code == 0
        assert (tmp_path / "record.csv").read_bytes() == first

    def test_row_count_is_horizon_plus_one(self, tmp_path, capsys):
        config = write_config(
            tmp_path / "sim.json",
            {"schema": 1, "model": "lgssm", "params": {}, "n": 7, "seed": 1},
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "simulate", "--config", config)
        assert code == 0 and out["rows"] == 8
        assert len(read_rows(tmp_path / "observations.csv")) == 9

    def test_unknown_keys_rejected(self, tmp_path, capsys):
        config = write_config(
            tmp_path / "sim.json",
            {"schema": 1, "model": "lgssm", "params": {}, "n": 1, "seed": 1, "horizon": 2},
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "simulate", "--config", config)
        assert code == 2 and "horizon" in out["error"]["message"]


class TestRun:
    def test_single_replicate_single_record(self, tmp_path, capsys, obs_csv):
        config = write_config(tmp_path / "run.json", base_run_config(obs_csv))
        code, out = run_cli(
            capsys, "--outdir", str(tmp_path / "out"), "--threads", "1",
            "run", "--config", config,
        )
        assert code == 0
        digest = out["runs"][0]["config_hash"]
        rows = read_records_csv(tmp_path / "out" / f"{digest}.records.csv")
        assert len(rows) == 1
        assert (tmp_path / "out" / f"{digest}.manifest.json").exists()

    def test_invalid_estimator_is_usage_error(self, tmp_path, capsys, obs_csv):
        config = write_config(
            tmp_path / "run.json", base_run_config(obs_csv, estimator="smoother")
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "run", "--config", config)
        assert code == 2
        assert "estimator" in out["error"]["message"]

    def test_ppg_emits_iteration_companion(self, tmp_path, capsys, obs_csv):
        config = write_config(
            tmp_path / "run.json",
            base_run_config(obs_csv, estimator="ppg", N=8, k=3, k0=1, replicates=2),
        )
        code, out = run_cli(
            capsys, "--outdir", str(tmp_path / "out"), "--threads", "1",
            "run", "--config", config,
        )
        assert code == 0
        digest = out["runs"][0]["config_hash"]
        iterations = read_iterations_csv(tmp_path / "out" / f"{digest}.iterations.csv")
        assert len(iterations) == 6

    def test_rerun_is_idempotent_up_to_runtimes(self, tmp_path, capsys, obs_csv):
        config = write_config(tmp_path / "run.json", base_run_config(obs_csv, replicates=2))
        outdir = tmp_path / "out"

        def strip_runtime(path):
            rows = read_rows(path)
            return [row[:-1] for row in rows]

        code, out = run_cli(capsys, "--outdir", str(outdir), "run", "--config", config)
        assert code == 0
        digest = out["runs"][0]["config_hash"]
        records_path = outdir / f"{digest}.records.csv"
        manifest_path = outdir / f"{digest}.manifest.json"
        first_records = strip_runtime(records_path)
        first_manifest = manifest_path.read_bytes()
        code, _ = run_cli(capsys, "--outdir", str(outdir), "run", "--config", config)
        assert code == 0
        assert strip_runtime(records_path) == first_records
        assert manifest_path.read_bytes() == first_manifest

    def test_seed_override_changes_results(self, tmp_path, capsys, obs_csv):
        config = write_config(tmp_path / "run.json", base_run_config(obs_csv))
        code, out_a = run_cli(capsys, "--outdir", str(tmp_path / "a"), "run", "--config", config)
        assert code == 0
        code, out_b = run_cli(
            capsys, "--outdir", str(tmp_path / "b"), "--seed", "42", "run", "--config", config
        )
        assert code == 0
        assert out_a["runs"][0]["config_hash"] != out_b["runs"][0]["config_hash"]


class TestSweep:
    def test_degenerate_grid_equals_run(self, tmp_path, capsys, obs_csv):
        payload = base_run_config(obs_csv, replicates=2)
        run_config = write_config(tmp_path / "run.json", payload)
        sweep_config = write_config(tmp_path / "sweep.json", dict(payload, N=[32]))
        code, run_out = run_cli(capsys, "--outdir", str(tmp_path / "a"), "run", "--config", run_config)
        assert code == 0
        code, sweep_out = run_cli(capsys, "--outdir", str(tmp_path / "b"), "sweep", "--config", sweep_config)
        assert code == 0
        assert run_out["runs"] == sweep_out["runs"]
        digest = run_out["runs"][0]["config_hash"]
        a = read_records_csv(tmp_path / "a" / f"{digest}.records.csv")
        b = read_records_csv(tmp_path / "b" / f"{digest}.records.csv")
        assert [r["estimate"] for r in a] == [r["estimate"] for r in b]

    def test_grid_cross_product(self, tmp_path, capsys, obs_csv):
        config = write_config(
            tmp_path / "sweep.json",
            base_run_config(
                obs_csv, estimator="ppg", N=[8, 16], k=[2, 4], k0=1, replicates=1
            ),
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path / "out"), "sweep", "--config", config)
        assert code == 0
        hashes = {run["config_hash"] for run in out["runs"]}
        assert len(hashes) == 4

    def test_budget_pinned_sweep(self, tmp_path, capsys, obs_csv):
        config = write_config(
            tmp_path / "sweep.json",
            base_run_config(
                obs_csv, estimator="ppg", N=[10, 20], k0=0, replicates=1, budget=40
            ),
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path / "out"), "sweep", "--config", config)
        assert code == 0
        assert len(out["runs"]) == 2
        for run in out["runs"]:
            manifest = json.loads(
                (tmp_path / "out" / f"{run['config_hash']}.manifest.json").read_text()
            )
            cell = manifest["config"]
            assert cell["N"] * cell["k"] == 40

    def test_indivisible_budget_rejected(self, tmp_path, capsys, obs_csv):
        config = write_config(
            tmp_path / "sweep.json",
            base_run_config(obs_csv, estimator="ppg", N=[15], k0=0, replicates=1, budget=40),
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "sweep", "--config", config)
        assert code == 2 and "divisible" in out["error"]["message"]


class TestOracle:
    def test_lgssm_single_observation(self, tmp_path, capsys, lgssm):
        # Horizon 1 conditions on the first observation only; check the
        # conjugate-update value by hand.
        _, zs = simulate(lgssm, 1, np.random.default_rng(SEED))
        obs = tmp_path / "observations.csv"
        write_observations(obs, zs)
        config = write_config(
            tmp_path / "oracle.json",
            {"schema": 1, "model": "lgssm", "params": {}, "observations": str(obs), "n": 1},
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "oracle", "--config", config)
        assert code == 0
        hand = exact_one_lag_expectation(
            kalman_rts(lgssm, np.array([zs[0], np.nan]))
        )
        assert out["exact"] == pytest.approx(hand)
        assert json.loads((tmp_path / "oracle.json").read_text())["exact"] == out["exact"]

    def test_discrete_matches_enumeration(self, tmp_path, capsys, small_hmm):
        _, zs = simulate(small_hmm, 3, np.random.default_rng(SEED))
        obs = tmp_path / "observations.csv"
        write_observations(obs, zs)
        config = write_config(
            tmp_path / "oracle_config.json",
            {
                "schema": 1,
                "model": "discrete_hmm",
                "params": {
                    "transition": small_hmm.transition.tolist(),
                    "emission": small_hmm.emission.tolist(),
                    "values": small_hmm.values.tolist(),
                },
                "observations": str(obs),
                "n": 3,
            },
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "oracle", "--config", config)
        assert code == 0
        expected = discrete_enumerated_smoothing(
            small_hmm, zs, small_hmm.one_lag_functional(3), 3
        )
        assert out["exact"] == pytest.approx(expected, abs=1e-10)

    def test_stochvol_has_no_oracle(self, tmp_path, capsys):
        _, zs = simulate(StochVol(), 3, np.random.default_rng(SEED))
        obs = tmp_path / "observations.csv"
        write_observations(obs, zs)
        config = write_config(
            tmp_path / "oracle.json",
            {"schema": 1, "model": "stochvol", "params": {}, "observations": str(obs), "n": 3},
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path), "oracle", "--config", config)
        assert code == 2
        assert "no exact oracle" in out["error"]["message"]


class TestBounds:
    def test_bounds_json(self, tmp_path, capsys):
        hmm = DiscreteHmm(
            transition=np.full((2, 2), 0.5),
            emission=np.full((2, 2), 0.5),
            values=np.array([1.0, -1.0]),
        )
        _, zs = simulate(hmm, 2, np.random.default_rng(SEED))
        obs = tmp_path / "observations.csv"
        write_observations(obs, zs)
        config = write_config(
            tmp_path / "bounds.json",
            {
                "schema": 1,
                "model": "discrete_hmm",
                "params": {
                    "transition": hmm.transition.tolist(),
                    "emission": hmm.emission.tolist(),
                    "values": hmm.values.tolist(),
                },
                "observations": str(obs),
                "n": 1,
                "N": 100,
                "ell": [1, 3],
            },
        )
        code, out = run_cli(capsys, "--outdir", str(tmp_path / "out"), "bounds", "--config", config)
        assert code == 0
        assert out["bounds"][0]["kappa"] == pytest.approx(0.138393, abs=1e-6)
        assert out["bounds"][1]["bias_bound"] < out["bounds"][0]["bias_bound"]


class TestOutdirPrecedence:
    def test_env_var_used_when_no_flag(self, tmp_path, capsys, monkeypatch):
        config = write_config(
            tmp_path / "sim.json",
            {"schema": 1, "model": "lgssm", "params": {}, "n": 0, "seed": 5},
        )
        target = tmp_path / "envout"
        monkeypatch.setenv("PARISGIBBS_OUTDIR", str(target))
        code, _ = run_cli(capsys, "simulate", "--config", config)
        assert code == 0
        assert (target / "observations.csv").exists()
