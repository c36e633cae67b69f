import numpy as np
import pytest

from parisgibbs.bench import (
    ExperimentConfig,
    ExperimentRecord,
    aggregate,
    config_digest,
    evaluate_bounds,
    exact_value,
    fit_exponential_decay,
    fit_exponential_decay_detail,
    measure_ffbsm_update_times,
    measure_paris_step_times,
    read_iterations_csv,
    read_records_csv,
    run_experiment,
    write_iterations_csv,
    write_records_csv,
)
from parisgibbs.core import UnsupportedModelError, kappa_from_rho
from parisgibbs.models import DiscreteHmm, Lgssm, one_lag_functional
from parisgibbs.oracles import discrete_exact_smoothing

SEED = 6061842


def lgssm_config(**overrides):
    model = Lgssm()
    _, zs = model.simulate(10, np.random.default_rng(SEED))
    defaults = dict(
        model="lgssm",
        model_params={},
        observations=zs,
        n=10,
        estimator="paris",
        N=64,
        replicates=3,
        base_seed=SEED,
        M=2,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            lgssm_config(estimator="bogus")

    def test_ppg_requires_chain_lengths(self):
        with pytest.raises(ValueError):
            lgssm_config(estimator="ppg")

    def test_chain_lengths_only_for_ppg(self):
        with pytest.raises(ValueError):
            lgssm_config(k=4, k0=2)

    def test_budget_must_match(self):
        with pytest.raises(ValueError):
            lgssm_config(estimator="ppg", k=4, k0=2, budget=100)
        config = lgssm_config(estimator="ppg", k=4, k0=2, budget=256)
        assert config.budget == config.N * config.k

    def test_alternative_budget_convention(self):
        config = lgssm_config(
            estimator="ppg", k=4, k0=2, budget=252, budget_convention="(N-1)k"
        )
        assert config.budget == (config.N - 1) * config.k

    def test_record_must_cover_horizon(self):
        with pytest.raises(ValueError):
            lgssm_config(n=30)


class TestRunExperiment:
    def test_single_replicate(self):
        records = run_experiment(lgssm_config(replicates=1))
        assert len(records) == 1
        assert records[0].per_iteration is None
        assert np.isfinite(records[0].estimate)

    def test_deterministic_estimates(self):
        config = lgssm_config()
        first = run_experiment(config)
        second = run_experiment(config)
        assert [r.estimate for r in first] == [r.estimate for r in second]
        assert [r.seed for r in first] == [r.seed for r in second]

    def test_worker_count_does_not_change_results(self):
        config = lgssm_config()
        sequential = run_experiment(config, n_jobs=1)
        parallel = run_experiment(config, n_jobs=2)
        assert [r.estimate for r in sequential] == [r.estimate for r in parallel]

    def test_ppg_records_iterations(self):
        config = lgssm_config(estimator="ppg", N=16, k=3, k0=1)
        records = run_experiment(config)
        for record in records:
            assert len(record.per_iteration) == 3
            assert record.estimate == pytest.approx(np.mean(record.per_iteration[1:]))

    def test_stochvol_needs_pinned_reference(self):
        from parisgibbs.models import StochVol

        _, zs = StochVol().simulate(10, np.random.default_rng(SEED))
        with pytest.raises(UnsupportedModelError):
            exact_value(lgssm_config(model="stochvol", observations=zs))
        config = lgssm_config(model="stochvol", observations=zs, exact_override=1.25)
        assert exact_value(config) == 1.25

    def test_discrete_exact_dispatch(self, small_hmm):
        _, zs = small_hmm.simulate(8, np.random.default_rng(SEED))
        config = ExperimentConfig(
            model="discrete_hmm",
            model_params=dict(
                transition=small_hmm.transition,
                emission=small_hmm.emission,
                values=small_hmm.values,
            ),
            observations=zs,
            n=8,
            estimator="paris",
            N=32,
            replicates=1,
            base_seed=SEED,
        )
        expected = discrete_exact_smoothing(
            small_hmm, zs, small_hmm.one_lag_functional(8), 8
        )
        assert exact_value(config) == pytest.approx(expected)
        assert len(config_digest(config)) == 12  # array params must hash fine

    def test_config_digest_tracks_content(self):
        a = lgssm_config()
        b = lgssm_config(N=65)
        assert config_digest(a) != config_digest(b)
        assert config_digest(a) == config_digest(lgssm_config())


class TestAggregate:
    def make_records(self, estimates, exact):
        return [
            ExperimentRecord("abc", i, i, float(e), exact, 1.0)
            for i, e in enumerate(estimates)
        ]

    def test_two_point_example(self):
        stats = aggregate(self.make_records([1.0, 3.0], 2.0))
        assert stats["bias"] == pytest.approx(0.0)
        assert stats["mse"] == pytest.approx(1.0)

    def test_exact_estimates_are_all_zero(self):
        stats = aggregate(self.make_records([2.0, 2.0, 2.0], 2.0))
        assert stats["bias"] == 0.0 and stats["variance"] == 0.0 and stats["mse"] == 0.0

    def test_matches_independent_computation(self):
        rng = np.random.default_rng(SEED)
        estimates = rng.normal(size=101)
        exact = 0.3
        stats = aggregate(self.make_records(estimates, exact))
        # Independent re-computation with plain loops.
        total = 0.0
        for e in estimates:
            total += e
        mean = total / len(estimates)
        sq_err = 0.0
        var = 0.0
        for e in estimates:
            sq_err += (e - exact) ** 2
            var += (e - mean) ** 2
        assert stats["bias"] == pytest.approx(mean - exact, abs=1e-12)
        assert stats["mse"] == pytest.approx(sq_err / len(estimates), abs=1e-12)
        assert stats["variance"] == pytest.approx(var / len(estimates), abs=1e-12)
        sample_sd = np.sqrt(var / (len(estimates) - 1))
        assert stats["stderr"] == pytest.approx(sample_sd / np.sqrt(len(estimates)), abs=1e-12)


class TestDecayFit:
    def test_exact_exponential(self):
        a, b = fit_exponential_decay([(1, np.exp(-1)), (2, np.exp(-2))])
        assert a == pytest.approx(-1.0, abs=1e-10)
        assert b == pytest.approx(0.0, abs=1e-10)

    def test_constant_bias_has_zero_slope(self):
        a, _ = fit_exponential_decay([(k, 0.5) for k in range(1, 6)])
        assert a == pytest.approx(0.0, abs=1e-12)

    def test_recovers_slope_from_noisy_synthetic_decay(self):
        rng = np.random.default_rng(SEED)
        true_a, true_b = -0.35, 1.1
        ks = np.arange(1, 21)
        bias = np.exp(true_a * ks + true_b) * np.exp(rng.normal(0, 0.05, size=20))
        fit = fit_exponential_decay_detail(list(zip(ks, bias)))
        lo, hi = fit.slope_confidence()
        assert lo < true_a < hi
        assert hi < 0.0

    def test_signs_are_ignored(self):
        a, _ = fit_exponential_decay([(1, -np.exp(-1)), (2, np.exp(-2))])
        assert a == pytest.approx(-1.0, abs=1e-10)

    def test_needs_two_informative_points(self):
        with pytest.raises(ValueError):
            fit_exponential_decay([(1, 0.0), (2, 0.0)])


class TestEvaluateBounds:
    def degenerate_hmm(self):
        # Uniform transition and emission: the mixing ratio is exactly 1.
        return DiscreteHmm(
            transition=np.full((2, 2), 0.5),
            emission=np.full((2, 2), 0.5),
            values=np.array([1.0, -1.0]),
        )

    def test_hand_evaluated_shape(self):
        hmm = self.degenerate_hmm()
        fk = hmm.feynman_kac(np.array([0, 1]))
        out = evaluate_bounds(fk, hmm.one_lag_functional(1), 1, 100, 3)
        assert out["rho"] == pytest.approx(1.0)
        assert out["kappa"] == pytest.approx(0.138393, abs=1e-6)
        assert out["bias_bound"] == pytest.approx(out["kappa"] ** 3 / 100)
        assert out["mse_bound"] == pytest.approx(1.0 / 100)

    def test_bias_bound_vanishes_in_iterations(self):
        hmm = self.degenerate_hmm()
        fk = hmm.feynman_kac(np.array([0, 1]))
        functional = hmm.one_lag_functional(1)
        values = [evaluate_bounds(fk, functional, 1, 100, ell)["bias_bound"]
                  for ell in (1, 10, 100)]
        assert values[0] > values[1] > values[2]
        assert values[-1] < 1e-80

    def test_doubling_particles_more_than_halves_bias(self):
        hmm = self.degenerate_hmm()
        fk = hmm.feynman_kac(np.array([0, 1]))
        functional = hmm.one_lag_functional(1)
        small = evaluate_bounds(fk, functional, 1, 100, 3)["bias_bound"]
        large = evaluate_bounds(fk, functional, 1, 200, 3)["bias_bound"]
        assert large < small / 2


class TestRecordFiles:
    def test_records_roundtrip(self, tmp_path):
        config = lgssm_config(replicates=2)
        records = run_experiment(config)
        path = tmp_path / "records.csv"
        write_records_csv(path, config, records)
        rows = read_records_csv(path)
        assert len(rows) == 2
        assert rows[0]["estimator"] == "paris"
        assert rows[0]["k"] is None
        assert rows[0]["estimate"] == records[0].estimate
        assert rows[0]["seed"] == records[0].seed

    def test_iterations_roundtrip(self, tmp_path):
        config = lgssm_config(estimator="ppg", N=8, k=3, k0=0, replicates=2)
        records = run_experiment(config)
        path = tmp_path / "iterations.csv"
        write_iterations_csv(path, records)
        rows = read_iterations_csv(path)
        assert len(rows) == 6
        assert {row["ell"] for row in rows} == {1, 2, 3}
        first = [row for row in rows if row["replicate"] == 0]
        assert [row["estimate"] for row in first] == list(records[0].per_iteration)


class TestTimingProbes:
    def test_probes_return_positive_times(self, lgssm):
        rng = np.random.default_rng(SEED)
        _, zs = lgssm.simulate(12, rng)
        fk = lgssm.feynman_kac(zs)
        functional = one_lag_functional(12)
        paris_times = measure_paris_step_times(fk, functional, 100, 5, rng)
        ffbsm_times = measure_ffbsm_update_times(fk, functional, 100, 5, rng)
        assert paris_times.shape == (5,) and np.all(paris_times > 0)
        assert ffbsm_times.shape == (5,) and np.all(ffbsm_times > 0)
